"""Core PCFG machinery: symbol interning, weighted rules, the rule-line file
format, per-LHS normalization, right-branching binarization, and diagnostics.

A grammar is a set of weighted, pseudocount-carrying rules over interned
symbols.  A symbol is a nonterminal iff it occurs on the left-hand side of at
least one rule (an explicit nonterminal set may widen this when a grammar is
a rule-subset of a larger one); every other symbol is a terminal.  Rules
expanding to a single terminal are lexicalisations, all other rules are
productions and may only contain nonterminals on their right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import GrammarError

PRODUCTION = "production"
LEXICALISATION = "lexicalisation"

ARROW = "-->"
START_DIRECTIVE = "%start"

# 17 significant digits round-trip any IEEE-754 double exactly.
FLOAT_FORMAT = "{:.17g}"

_NORMALIZE_TOL = 1e-9


class SymbolTable:
    """Bidirectional mapping between symbol strings and dense 0-based ids."""

    def __init__(self) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, name: str) -> int:
        sym = self._ids.get(name)
        if sym is None:
            sym = len(self._names)
            self._names.append(name)
            self._ids[name] = sym
        return sym

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def get(self, name: str) -> int | None:
        return self._ids.get(name)

    def name_of(self, sym: int) -> str:
        return self._names[sym]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def names(self) -> tuple[str, ...]:
        return tuple(self._names)


@dataclass(frozen=True)
class Rule:
    """A context-free rule over interned symbol ids."""

    lhs: int
    rhs: tuple[int, ...]
    kind: str

    def __post_init__(self) -> None:
        if not self.rhs:
            raise GrammarError("rule right-hand side must be nonempty")
        if self.kind not in (PRODUCTION, LEXICALISATION):
            raise GrammarError(f"unknown rule kind: {self.kind!r}")

    @property
    def is_lexicalisation(self) -> bool:
        return self.kind == LEXICALISATION


@dataclass(frozen=True)
class WeightedRule:
    """Rule plus its current weight and Dirichlet pseudocount."""

    rule: Rule
    weight: float
    pseudocount: float

    def __post_init__(self) -> None:
        if not (self.weight >= 0.0):
            raise GrammarError(f"rule weight must be nonnegative, got {self.weight}")
        if not (self.pseudocount > 0.0):
            raise GrammarError(
                f"rule pseudocount must be positive, got {self.pseudocount}"
            )


class Grammar:
    """Immutable PCFG: symbol table, ordered weighted rules, start symbol."""

    def __init__(
        self,
        table: SymbolTable,
        rules: Sequence[WeightedRule],
        start: int,
        nonterminals: frozenset[int],
    ) -> None:
        self.table = table
        self.rules: tuple[WeightedRule, ...] = tuple(rules)
        self.start = start
        self.nonterminals = nonterminals
        if start not in nonterminals:
            raise GrammarError(
                f"start symbol {table.name_of(start)!r} is not a nonterminal"
            )
        self._rules_by_lhs: dict[int, list[int]] = {}
        seen: set[tuple[int, tuple[int, ...]]] = set()
        for idx, wr in enumerate(self.rules):
            key = (wr.rule.lhs, wr.rule.rhs)
            if key in seen:
                raise GrammarError(f"duplicate rule: {self.rule_string(idx)}")
            seen.add(key)
            self._rules_by_lhs.setdefault(wr.rule.lhs, []).append(idx)

    @classmethod
    def from_rules(
        cls,
        entries: Iterable[tuple[str, Sequence[str], float, float]],
        start: str | None = None,
        nonterminals: Iterable[str] | None = None,
    ) -> "Grammar":
        """Build a grammar from (lhs, rhs, weight, pseudocount) string entries.

        Symbols are interned in order of first appearance.  The start symbol
        defaults to the first entry's lhs.  `nonterminals`, when given, must be
        a superset of the lhs symbols and fixes the terminal/nonterminal split
        (used for rule-subset grammars whose full rule set lives elsewhere).
        """
        entries = list(entries)
        if not entries:
            raise GrammarError("grammar has no rules")
        table = SymbolTable()
        raw: list[tuple[int, tuple[int, ...], float, float]] = []
        for lhs, rhs, weight, pseudocount in entries:
            lhs_id = table.intern(lhs)
            rhs_ids = tuple(table.intern(s) for s in rhs)
            raw.append((lhs_id, rhs_ids, weight, pseudocount))
        lhs_set = {lhs_id for lhs_id, _, _, _ in raw}
        if nonterminals is None:
            nt_set = frozenset(lhs_set)
        else:
            nt_set = frozenset(table.intern(name) for name in nonterminals)
            missing = lhs_set - nt_set
            if missing:
                names = ", ".join(sorted(table.name_of(s) for s in missing))
                raise GrammarError(
                    f"explicit nonterminal set omits lhs symbols: {names}"
                )
        rules = []
        for lhs_id, rhs_ids, weight, pseudocount in raw:
            rules.append(
                WeightedRule(_classify(table, lhs_id, rhs_ids, nt_set), weight, pseudocount)
            )
        if start is None:
            start_id = raw[0][0]
        else:
            start_id = table.intern(start)
        return cls(table, rules, start_id, nt_set)

    # -- queries ---------------------------------------------------------

    def is_nonterminal(self, sym: int) -> bool:
        return sym in self.nonterminals

    def rule_indices_for(self, lhs: int) -> tuple[int, ...]:
        return tuple(self._rules_by_lhs.get(lhs, ()))

    def lhs_symbols(self) -> tuple[int, ...]:
        return tuple(self._rules_by_lhs)

    def vocabulary(self) -> set[str]:
        """Terminal strings (the grammar's lexicon)."""
        terms: set[str] = set()
        for wr in self.rules:
            if wr.rule.is_lexicalisation:
                terms.add(self.table.name_of(wr.rule.rhs[0]))
        return terms

    def productions(self) -> Iterator[WeightedRule]:
        return (wr for wr in self.rules if not wr.rule.is_lexicalisation)

    def lexicalisations(self) -> Iterator[WeightedRule]:
        return (wr for wr in self.rules if wr.rule.is_lexicalisation)

    def rule_string(self, idx: int) -> str:
        wr = self.rules[idx]
        rhs = " ".join(self.table.name_of(s) for s in wr.rule.rhs)
        return f"{self.table.name_of(wr.rule.lhs)} {ARROW} {rhs}"

    # -- array views used by the estimation loops -------------------------

    def weight_vector(self) -> np.ndarray:
        return np.array([wr.weight for wr in self.rules], dtype=np.float64)

    def pseudocount_vector(self) -> np.ndarray:
        return np.array([wr.pseudocount for wr in self.rules], dtype=np.float64)

    def lhs_vector(self) -> np.ndarray:
        return np.array([wr.rule.lhs for wr in self.rules], dtype=np.int64)

    def with_weights(self, weights: Sequence[float]) -> "Grammar":
        if len(weights) != len(self.rules):
            raise GrammarError("weight vector length does not match rule count")
        rules = tuple(
            WeightedRule(wr.rule, float(w), wr.pseudocount)
            for wr, w in zip(self.rules, weights)
        )
        return Grammar(self.table, rules, self.start, self.nonterminals)

    def with_pseudocounts(self, pseudocounts: Sequence[float]) -> "Grammar":
        if len(pseudocounts) != len(self.rules):
            raise GrammarError("pseudocount vector length does not match rule count")
        rules = tuple(
            WeightedRule(wr.rule, wr.weight, float(a))
            for wr, a in zip(self.rules, pseudocounts)
        )
        return Grammar(self.table, rules, self.start, self.nonterminals)

    # -- structural equality ----------------------------------------------

    def content(self) -> tuple:
        """Symbol-string view of the grammar, independent of interning order."""
        name = self.table.name_of
        return (
            name(self.start),
            tuple(
                (
                    name(wr.rule.lhs),
                    tuple(name(s) for s in wr.rule.rhs),
                    wr.weight,
                    wr.pseudocount,
                )
                for wr in self.rules
            ),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grammar):
            return NotImplemented
        return self.content() == other.content()

    def __repr__(self) -> str:
        n_prod = sum(1 for _ in self.productions())
        n_lex = len(self.rules) - n_prod
        return (
            f"Grammar(start={self.table.name_of(self.start)!r}, "
            f"productions={n_prod}, lexicalisations={n_lex})"
        )


def _classify(
    table: SymbolTable, lhs: int, rhs: tuple[int, ...], nonterminals: frozenset[int]
) -> Rule:
    nt_flags = [s in nonterminals for s in rhs]
    if all(nt_flags):
        return Rule(lhs, rhs, PRODUCTION)
    if len(rhs) == 1:
        return Rule(lhs, rhs, LEXICALISATION)
    bad = next(table.name_of(s) for s, f in zip(rhs, nt_flags) if not f)
    lhs_name = table.name_of(lhs)
    rhs_names = " ".join(table.name_of(s) for s in rhs)
    raise GrammarError(
        f"rule {lhs_name} {ARROW} {rhs_names} mixes terminal {bad!r} "
        "into a multi-symbol right-hand side"
    )


# ---------------------------------------------------------------------------
# file format


def parse_grammar_file(text: str) -> Grammar:
    """Parse the line-oriented grammar format.

    Each rule line reads `<pseudocount> <weight> <LHS> --> <RHS> [...]`.
    `#` starts a comment line; an optional `%start <symbol>` directive may
    precede the first rule.  The first rule's lhs is the start symbol unless
    the directive overrides it.
    """
    if not text:
        raise GrammarError("empty grammar text")
    entries: list[tuple[str, list[str], float, float]] = []
    start: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith(START_DIRECTIVE):
            if entries or start is not None:
                raise GrammarError(
                    f"line {lineno}: %start directive must precede all rules"
                )
            parts = stripped.split()
            if len(parts) != 2:
                raise GrammarError(f"line {lineno}: malformed %start directive")
            start = parts[1]
            continue
        fields = stripped.split()
        if len(fields) < 5 or fields[3] != ARROW:
            raise GrammarError(
                f"line {lineno}: expected '<pseudocount> <weight> <LHS> {ARROW} <RHS...>'"
            )
        try:
            pseudocount = float(fields[0])
            weight = float(fields[1])
        except ValueError:
            raise GrammarError(f"line {lineno}: non-numeric pseudocount or weight")
        if pseudocount <= 0.0:
            raise GrammarError(f"line {lineno}: nonpositive pseudocount {fields[0]}")
        if weight < 0.0:
            raise GrammarError(f"line {lineno}: negative weight {fields[1]}")
        lhs = fields[2]
        rhs = fields[4:]
        if lhs == ARROW or any(s == ARROW for s in rhs):
            raise GrammarError(f"line {lineno}: '{ARROW}' is not a valid symbol")
        entries.append((lhs, rhs, weight, pseudocount))
    if not entries:
        raise GrammarError("grammar file contains zero rules")
    try:
        return Grammar.from_rules(entries, start=start)
    except GrammarError as exc:
        raise GrammarError(str(exc)) from None


def write_grammar_file(g: Grammar) -> str:
    """Serialize a grammar so that parse_grammar_file reproduces it exactly."""
    if not g.rules:
        raise GrammarError("cannot write an empty grammar")
    name = g.table.name_of
    lines: list[str] = []
    if g.start != g.rules[0].rule.lhs:
        lines.append(f"{START_DIRECTIVE} {name(g.start)}")
    for wr in g.rules:
        rhs = " ".join(name(s) for s in wr.rule.rhs)
        lines.append(
            f"{FLOAT_FORMAT.format(wr.pseudocount)} {FLOAT_FORMAT.format(wr.weight)} "
            f"{name(wr.rule.lhs)} {ARROW} {rhs}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# normalization


def normalize(g: Grammar) -> Grammar:
    """Rescale weights so each lhs distribution sums to exactly 1.0.

    Division is repeated until the per-lhs sums hit 1.0 bit-exactly, which
    makes normalize idempotent under `==`.  Proportions within an lhs are
    preserved (every step divides the whole group by one scalar).
    """
    weights = [wr.weight for wr in g.rules]
    for lhs in g.lhs_symbols():
        idxs = g.rule_indices_for(lhs)
        total = math.fsum(weights[i] for i in idxs)
        if total <= 0.0:
            raise GrammarError(
                f"lhs {g.table.name_of(lhs)!r} has zero total weight; cannot normalize"
            )
        for _ in range(32):
            if total == 1.0:
                break
            for i in idxs:
                weights[i] /= total
            total = math.fsum(weights[i] for i in idxs)
    return g.with_weights(weights)


def is_normalized(g: Grammar, tol: float = _NORMALIZE_TOL) -> bool:
    for lhs in g.lhs_symbols():
        total = math.fsum(g.rules[i].weight for i in g.rule_indices_for(lhs))
        if abs(total - 1.0) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# binarization


@dataclass(frozen=True)
class BinarizedRuleRef:
    """Provenance entry: which original rule a binarized rule came from."""

    original_index: int
    carries_weight: bool


class BinarizedGrammar:
    """CYK-ready form of a grammar.

    n-ary productions become right-branching chains through deterministic
    intermediate symbols named `LHS|RHSi.RHSj...`; the weight (and the
    expected-count contribution) attaches to the first rule of each chain,
    the continuation rules carry weight 1.  Chart symbols are densely
    renumbered over nonterminals plus intermediates; terminals are reached
    only through per-token lexical rules.
    """

    def __init__(self, base: Grammar) -> None:
        self.base = base
        table = base.table
        nts = sorted(base.nonterminals)
        self._chart_id: dict[int, int] = {sym: i for i, sym in enumerate(nts)}
        self._chart_names: list[str] = [table.name_of(s) for s in nts]
        self.intermediates: dict[str, int] = {}

        b_lhs: list[int] = []
        b_left: list[int] = []
        b_right: list[int] = []
        b_logw: list[float] = []
        b_orig: list[int] = []
        b_prov: list[BinarizedRuleRef] = []
        u_lhs: list[int] = []
        u_child: list[int] = []
        u_logw: list[float] = []
        u_orig: list[int] = []
        unary_edges: list[tuple[int, int]] = []
        lex: dict[int, list[tuple[int, float, int]]] = {}
        seen_binary: dict[tuple[int, int, int], int] = {}

        def chart(sym: int) -> int:
            return self._chart_id[sym]

        def intermediate(name: str) -> int:
            cid = self.intermediates.get(name)
            if cid is None:
                cid = len(self._chart_names)
                self._chart_names.append(name)
                self.intermediates[name] = cid
            return cid

        for idx, wr in enumerate(base.rules):
            rule = wr.rule
            logw = math.log(wr.weight) if wr.weight > 0.0 else -math.inf
            if rule.is_lexicalisation:
                lex.setdefault(rule.rhs[0], []).append((chart(rule.lhs), logw, idx))
                continue
            rhs = rule.rhs
            if len(rhs) == 1:
                u_lhs.append(chart(rule.lhs))
                u_child.append(chart(rhs[0]))
                u_logw.append(logw)
                u_orig.append(idx)
                unary_edges.append((rule.lhs, rhs[0]))
                continue
            # Right-branching chain; continuation rules shared across
            # originals with a common lhs+suffix (content-based names).
            lhs_name = table.name_of(rule.lhs)
            parent = chart(rule.lhs)
            for pos in range(len(rhs) - 1):
                left_sym = chart(rhs[pos])
                last = pos == len(rhs) - 2
                if last:
                    right_sym = chart(rhs[pos + 1])
                else:
                    suffix = ".".join(table.name_of(s) for s in rhs[pos + 1 :])
                    right_sym = intermediate(f"{lhs_name}|{suffix}")
                first = pos == 0
                key = (parent, left_sym, right_sym)
                if first or key not in seen_binary:
                    seen_binary[key] = len(b_lhs)
                    b_lhs.append(parent)
                    b_left.append(left_sym)
                    b_right.append(right_sym)
                    b_logw.append(logw if first else 0.0)
                    b_orig.append(idx if first else -1)
                    b_prov.append(BinarizedRuleRef(idx, carries_weight=first))
                parent = right_sym

        cycle = _find_unary_cycle(unary_edges)
        if cycle:
            names = ", ".join(sorted(table.name_of(s) for s in cycle))
            raise GrammarError(f"unary production cycle among {{{names}}}")

        order = _unary_topological_order(u_lhs, u_child, len(u_lhs))
        self.n_symbols = len(self._chart_names)
        self.start = self._chart_id[base.start]
        self.b_lhs = np.array(b_lhs, dtype=np.int32)
        self.b_left = np.array(b_left, dtype=np.int32)
        self.b_right = np.array(b_right, dtype=np.int32)
        self.b_logw = np.array(b_logw, dtype=np.float64)
        self.b_orig = np.array(b_orig, dtype=np.int32)
        self.binary_provenance = tuple(b_prov)
        self.u_lhs = np.array([u_lhs[t] for t in order], dtype=np.int32)
        self.u_child = np.array([u_child[t] for t in order], dtype=np.int32)
        self.u_logw = np.array([u_logw[t] for t in order], dtype=np.float64)
        self.u_orig = np.array([u_orig[t] for t in order], dtype=np.int32)
        self.unary_provenance = tuple(
            BinarizedRuleRef(u_orig[t], carries_weight=True) for t in order
        )
        self._lex = {
            term: (
                np.array([p for p, _, _ in rules], dtype=np.int32),
                np.array([w for _, w, _ in rules], dtype=np.float64),
                np.array([i for _, _, i in rules], dtype=np.int32),
            )
            for term, rules in lex.items()
        }

    # -- views -------------------------------------------------------------

    def chart_symbol_name(self, chart_sym: int) -> str:
        return self._chart_names[chart_sym]

    def chart_id(self, base_sym: int) -> int | None:
        return self._chart_id.get(base_sym)

    def is_intermediate(self, chart_sym: int) -> bool:
        return chart_sym >= len(self._chart_id)

    def lexical_for(self, terminal: int):
        """(preterminal chart ids, log weights, original rule indices) or None."""
        return self._lex.get(terminal)

    @property
    def n_binary(self) -> int:
        return len(self.b_lhs)

    @property
    def n_unary(self) -> int:
        return len(self.u_lhs)

    def reweighted(self, weights: Sequence[float]) -> "BinarizedGrammar":
        """Same structure with new per-original-rule weights.

        Bypasses reconstruction: only the log-weight arrays are replaced.
        Used by the estimation loops, whose intermediate weight vectors need
        not be normalized.
        """
        if len(weights) != len(self.base.rules):
            raise GrammarError("weight vector length does not match rule count")
        logw = np.array(
            [math.log(w) if w > 0.0 else -math.inf for w in weights], dtype=np.float64
        )
        clone = object.__new__(BinarizedGrammar)
        clone.__dict__.update(self.__dict__)
        b_logw = self.b_logw.copy()
        for i, ref in enumerate(self.binary_provenance):
            if ref.carries_weight:
                b_logw[i] = logw[ref.original_index]
        clone.b_logw = b_logw
        clone.u_logw = logw[self.u_orig]
        clone._lex = {
            term: (pts, logw[orig], orig) for term, (pts, _, orig) in self._lex.items()
        }
        return clone


def binarize(g: Grammar) -> BinarizedGrammar:
    """Binarize a (normalized) grammar; rejects unary production cycles."""
    return BinarizedGrammar(g)


def _find_unary_cycle(edges: list[tuple[int, int]]) -> list[int]:
    graph: dict[int, list[int]] = {}
    for a, b in edges:
        graph.setdefault(a, []).append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[int, int] = {}
    stack: list[int] = []

    def visit(node: int) -> list[int]:
        color[node] = GREY
        stack.append(node)
        for succ in graph.get(node, ()):
            c = color.get(succ, WHITE)
            if c == GREY:
                return stack[stack.index(succ) :]
            if c == WHITE:
                cyc = visit(succ)
                if cyc:
                    return cyc
        stack.pop()
        color[node] = BLACK
        return []

    for node in graph:
        if color.get(node, WHITE) == WHITE:
            cyc = visit(node)
            if cyc:
                return cyc
    return []


def _unary_topological_order(
    u_lhs: list[int], u_child: list[int], n: int
) -> list[int]:
    """Order unary rule indices children-first (rank of lhs ascending).

    rank(X) = 1 + max rank over X's unary children, 0 for symbols with no
    outgoing unary edge; ties keep original rule order for determinism.
    """
    children: dict[int, list[int]] = {}
    for lhs, child in zip(u_lhs, u_child):
        children.setdefault(lhs, []).append(child)
    rank: dict[int, int] = {}

    def rank_of(sym: int) -> int:
        r = rank.get(sym)
        if r is not None:
            return r
        rank[sym] = 0  # placeholder; acyclicity is checked beforehand
        r = 1 + max((rank_of(c) for c in children.get(sym, ())), default=-1)
        rank[sym] = r
        return r

    return sorted(range(n), key=lambda t: (rank_of(u_lhs[t]), t))


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class GrammarDiagnostics:
    """Non-fatal findings from `validate`."""

    unreachable: tuple[str, ...]
    no_lexical_yield: tuple[str, ...]
    unary_cycles: tuple[tuple[str, ...], ...]
    weight_sum_violations: tuple[tuple[str, float], ...]

    @property
    def ok(self) -> bool:
        return not (
            self.unreachable
            or self.no_lexical_yield
            or self.unary_cycles
            or self.weight_sum_violations
        )


def validate(g: Grammar) -> GrammarDiagnostics:
    """Report unreachable nonterminals, vocabulary-less nonterminals, unary
    cycles, and per-lhs weight sums outside 1 +- 1e-9.  Never raises."""
    name = g.table.name_of

    reachable = {g.start}
    frontier = [g.start]
    while frontier:
        sym = frontier.pop()
        for idx in g.rule_indices_for(sym):
            for s in g.rules[idx].rule.rhs:
                if s in g.nonterminals and s not in reachable:
                    reachable.add(s)
                    frontier.append(s)
    unreachable = tuple(sorted(name(s) for s in g.nonterminals - reachable))

    productive: set[int] = set()
    changed = True
    while changed:
        changed = False
        for wr in g.rules:
            if wr.rule.lhs in productive:
                continue
            if wr.rule.is_lexicalisation or all(
                s in productive for s in wr.rule.rhs
            ):
                productive.add(wr.rule.lhs)
                changed = True
    no_yield = tuple(sorted(name(s) for s in g.nonterminals - productive))

    edges = [
        (wr.rule.lhs, wr.rule.rhs[0])
        for wr in g.rules
        if not wr.rule.is_lexicalisation and len(wr.rule.rhs) == 1
    ]
    cycles: list[tuple[str, ...]] = []
    cyc = _find_unary_cycle(edges)
    if cyc:
        cycles.append(tuple(sorted(name(s) for s in cyc)))

    violations: list[tuple[str, float]] = []
    for lhs in g.lhs_symbols():
        total = math.fsum(g.rules[i].weight for i in g.rule_indices_for(lhs))
        if abs(total - 1.0) > _NORMALIZE_TOL:
            violations.append((name(lhs), total))

    return GrammarDiagnostics(
        unreachable=unreachable,
        no_lexical_yield=no_yield,
        unary_cycles=tuple(cycles),
        weight_sum_violations=tuple(violations),
    )
