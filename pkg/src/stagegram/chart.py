"""Per-sentence dynamic programming over a binarized grammar: inside and
outside scores in the log domain, expected rule counts, Viterbi parsing, and
an exhaustive parse enumerator used as a test oracle.

All scores are natural-log; an absent chart cell is -inf.  Out-of-vocabulary
tokens mark the sentence unparsed instead of raising: downstream consumers
(training, likelihood evaluation) skip unparsed sentences by contract.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ._backend import kernels
from .errors import ChartError
from .grammar import BinarizedGrammar, Grammar
from .treebank import Tree

NEG_INF = float("-inf")

DEFAULT_ENUMERATION_CAP = 100_000


@dataclass
class Chart:
    """Inside/outside tables for one sentence under one grammar."""

    grammar: BinarizedGrammar
    tokens: tuple[str, ...]
    inside: np.ndarray | None
    outside: np.ndarray | None
    marginal: float
    parsed: bool
    oov: tuple[tuple[int, str], ...] = ()
    _lex: tuple | None = None

    def inside_score(self, start: int, end: int, symbol: str) -> float:
        if self.inside is None:
            return NEG_INF
        sym = self._chart_sym(symbol)
        return NEG_INF if sym is None else float(self.inside[start, end, sym])

    def outside_score(self, start: int, end: int, symbol: str) -> float:
        if self.outside is None:
            return NEG_INF
        sym = self._chart_sym(symbol)
        return NEG_INF if sym is None else float(self.outside[start, end, sym])

    def _chart_sym(self, symbol: str) -> int | None:
        base = self.grammar.base.table.get(symbol)
        if base is not None:
            cid = self.grammar.chart_id(base)
            if cid is not None:
                return cid
        return self.grammar.intermediates.get(symbol)


@dataclass
class CountVector:
    """Expected rule counts plus the number of sentences that produced them."""

    counts: np.ndarray
    n_sentences: int = 0

    @staticmethod
    def zeros(g: Grammar) -> "CountVector":
        return CountVector(np.zeros(len(g.rules), dtype=np.float64), 0)

    def merge(self, other: "CountVector") -> "CountVector":
        if self.counts.shape != other.counts.shape:
            raise ChartError("cannot merge count vectors over different rule sets")
        return CountVector(self.counts + other.counts, self.n_sentences + other.n_sentences)

    def __add__(self, other: "CountVector") -> "CountVector":
        return self.merge(other)

    def as_dict(self, g: Grammar) -> dict:
        return {g.rules[i].rule: float(c) for i, c in enumerate(self.counts)}


def _sentence_lexical(bg: BinarizedGrammar, sentence: Sequence[str]):
    """Per-position lexical entries, or the positions of OOV tokens."""
    offs = [0]
    syms: list[int] = []
    logws: list[float] = []
    origs: list[int] = []
    oov: list[tuple[int, str]] = []
    table = bg.base.table
    for pos, token in enumerate(sentence):
        base = table.get(token)
        entry = None if base is None else bg.lexical_for(base)
        if entry is None:
            oov.append((pos, token))
        else:
            pts, lw, orig = entry
            syms.extend(int(x) for x in pts)
            logws.extend(float(x) for x in lw)
            origs.extend(int(x) for x in orig)
        offs.append(len(syms))
    if oov:
        return None, tuple(oov)
    return (
        np.array(offs, dtype=np.int32),
        np.array(syms, dtype=np.int32),
        np.array(logws, dtype=np.float64),
        np.array(origs, dtype=np.int32),
    ), ()


def inside(bg: BinarizedGrammar, sentence: Sequence[str]) -> Chart:
    """CYK inside pass with log-sum-exp; unaries applied in topological order."""
    tokens = tuple(sentence)
    if not tokens:
        raise ChartError("cannot build a chart for an empty sentence")
    lex, oov = _sentence_lexical(bg, tokens)
    if lex is None:
        return Chart(bg, tokens, None, None, NEG_INF, False, oov)
    n = len(tokens)
    table = np.full((n, n + 1, bg.n_symbols), NEG_INF, dtype=np.float64)
    kernels.inside_fill(
        n,
        bg.b_lhs,
        bg.b_left,
        bg.b_right,
        bg.b_logw,
        bg.u_lhs,
        bg.u_child,
        bg.u_logw,
        lex[0],
        lex[1],
        lex[2],
        table,
    )
    marginal = float(table[0, n, bg.start])
    return Chart(bg, tokens, table, None, marginal, marginal > NEG_INF, (), lex)


def outside(bg: BinarizedGrammar, chart: Chart) -> Chart:
    """Standard top-down outside pass; requires a parsed inside chart."""
    if not chart.parsed or chart.inside is None:
        raise ChartError("outside pass requires a parsed chart")
    n = len(chart.tokens)
    table = np.full_like(chart.inside, NEG_INF)
    kernels.outside_fill(
        n,
        bg.start,
        bg.b_lhs,
        bg.b_left,
        bg.b_right,
        bg.b_logw,
        bg.u_lhs,
        bg.u_child,
        bg.u_logw,
        chart.inside,
        table,
    )
    return Chart(
        bg,
        chart.tokens,
        chart.inside,
        table,
        chart.marginal,
        chart.parsed,
        chart.oov,
        chart._lex,
    )


def expected_counts(bg: BinarizedGrammar, chart: Chart) -> CountVector:
    """Posterior expected counts per original rule; intermediate chain rules
    fold onto the rule that spawned them (the chain head carries the count)."""
    if not chart.parsed or chart.inside is None or chart.outside is None:
        raise ChartError("expected counts require completed inside and outside passes")
    lex = chart._lex
    assert lex is not None
    counts = np.zeros(len(bg.base.rules), dtype=np.float64)
    kernels.count_fill(
        len(chart.tokens),
        chart.marginal,
        bg.b_lhs,
        bg.b_left,
        bg.b_right,
        bg.b_logw,
        bg.b_orig,
        bg.u_lhs,
        bg.u_child,
        bg.u_logw,
        bg.u_orig,
        lex[0],
        lex[1],
        lex[2],
        lex[3],
        chart.inside,
        chart.outside,
        counts,
    )
    return CountVector(counts, 1)


def sentence_counts(bg: BinarizedGrammar, sentence: Sequence[str]):
    """(CountVector | None, log-marginal) convenience for estimation loops."""
    chart = inside(bg, sentence)
    if not chart.parsed:
        return None, NEG_INF
    chart = outside(bg, chart)
    return expected_counts(bg, chart), chart.marginal


@dataclass(frozen=True)
class ViterbiParse:
    tree: Tree
    log_prob: float


def viterbi_parse(
    bg: BinarizedGrammar, sentence: Sequence[str]
) -> ViterbiParse | None:
    """Best parse with deterministic tie-breaking, or None when unparseable.

    Ties break toward the lowest rule index, then the leftmost split point;
    intermediate binarization symbols are spliced out of the returned tree
    and the returned log probability is the product of the tree's rule
    weights.
    """
    tokens = tuple(sentence)
    if not tokens:
        raise ChartError("cannot parse an empty sentence")
    lex, _oov = _sentence_lexical(bg, tokens)
    if lex is None:
        return None
    n = len(tokens)
    score = np.full((n, n + 1, bg.n_symbols), NEG_INF, dtype=np.float64)
    bp_kind = np.full((n, n + 1, bg.n_symbols), -1, dtype=np.int8)
    bp_rule = np.zeros((n, n + 1, bg.n_symbols), dtype=np.int32)
    bp_split = np.zeros((n, n + 1, bg.n_symbols), dtype=np.int32)
    kernels.viterbi_fill(
        n,
        bg.b_lhs,
        bg.b_left,
        bg.b_right,
        bg.b_logw,
        bg.u_lhs,
        bg.u_child,
        bg.u_logw,
        lex[0],
        lex[1],
        lex[2],
        score,
        bp_kind,
        bp_rule,
        bp_split,
    )
    best = float(score[0, n, bg.start])
    if best == NEG_INF:
        return None

    def build(i: int, j: int, sym: int) -> list[Tree]:
        kind = int(bp_kind[i, j, sym])
        if kind == kernels.KIND_LEX:
            return [Tree.preterminal(bg.chart_symbol_name(sym), tokens[i])]
        if kind == kernels.KIND_UNARY:
            t = int(bp_rule[i, j, sym])
            children = build(i, j, int(bg.u_child[t]))
            return [Tree.node(bg.chart_symbol_name(sym), children)]
        if kind == kernels.KIND_BINARY:
            r = int(bp_rule[i, j, sym])
            k = int(bp_split[i, j, sym])
            children = build(i, k, int(bg.b_left[r])) + build(k, j, int(bg.b_right[r]))
            if bg.is_intermediate(sym):
                return children
            return [Tree.node(bg.chart_symbol_name(sym), children)]
        raise ChartError(f"dangling backpointer at ({i}, {j})")

    trees = build(0, n, bg.start)
    assert len(trees) == 1
    return ViterbiParse(trees[0], best)


# ---------------------------------------------------------------------------
# brute-force oracle


def enumerate_parses(
    g: Grammar, sentence: Sequence[str], cap: int = DEFAULT_ENUMERATION_CAP
) -> list[tuple[Tree, float]]:
    """Exhaustively enumerate parse trees of the sentence under the original
    (un-binarized) grammar by recursive span splitting.

    Test oracle only: the sum of the returned probabilities equals the
    exponentiated inside marginal, and their maximum the Viterbi score.
    Raises when a span's parse list would exceed `cap`.
    """
    tokens = tuple(sentence)
    if not tokens:
        raise ChartError("cannot enumerate parses of an empty sentence")
    name = g.table.name_of
    memo: dict[tuple[int, int, int], list[tuple[Tree, float]]] = {}

    def parses(sym: int, i: int, j: int) -> list[tuple[Tree, float]]:
        key = (sym, i, j)
        if key in memo:
            return memo[key]
        results: list[tuple[Tree, float]] = []
        for idx in g.rule_indices_for(sym):
            wr = g.rules[idx]
            if wr.weight <= 0.0:
                continue
            rule = wr.rule
            if rule.is_lexicalisation:
                if j - i == 1 and tokens[i] == name(rule.rhs[0]):
                    results.append(
                        (Tree.preterminal(name(sym), tokens[i]), wr.weight)
                    )
                continue
            for parts in _compositions(i, j, len(rule.rhs)):
                options = [
                    parses(child, a, b) for child, (a, b) in zip(rule.rhs, parts)
                ]
                if any(not opt for opt in options):
                    continue
                for combo in itertools.product(*options):
                    prob = wr.weight
                    for _, p in combo:
                        prob *= p
                    results.append(
                        (Tree.node(name(sym), [t for t, _ in combo]), prob)
                    )
                    if len(results) > cap:
                        raise ChartError(
                            f"parse enumeration exceeded cap of {cap} trees"
                        )
        memo[key] = results
        return results

    return list(parses(g.start, 0, len(tokens)))


def _compositions(i: int, j: int, k: int) -> Iterator[tuple[tuple[int, int], ...]]:
    """All splits of span [i, j) into k consecutive nonempty parts."""
    if k == 1:
        yield ((i, j),)
        return
    for mid in range(i + 1, j - k + 2):
        for rest in _compositions(mid, j, k - 1):
            yield ((i, mid),) + rest
