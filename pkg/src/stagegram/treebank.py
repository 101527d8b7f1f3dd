"""Bracketed-tree ingestion, oracle PCFG extraction with frequency
thresholding and coverage sweeps, and bracket-set derivation for scoring.

Input is one balanced bracketed tree per line, e.g.
`(ROOT (S (NP (PRP you)) (VP (VB go))))`.  Every internal node has either
subtree children or exactly one bare token (making it a preterminal);
mixing the two, or stacking several tokens under one label, is rejected.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import TreebankError
from .grammar import Grammar

_TOKENIZER = re.compile(r"[()]|[^\s()]+")

DEFAULT_PSEUDOCOUNT = 0.1


@dataclass(frozen=True)
class Tree:
    """Labeled ordered tree; leaves carry the terminal token."""

    label: str
    children: tuple["Tree", ...] = ()
    token: str | None = None

    @staticmethod
    def leaf(token: str) -> "Tree":
        return Tree(label=token, token=token)

    @staticmethod
    def node(label: str, children: Sequence["Tree"]) -> "Tree":
        return Tree(label=label, children=tuple(children))

    @staticmethod
    def preterminal(label: str, token: str) -> "Tree":
        return Tree(label=label, children=(Tree.leaf(token),))

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and self.children[0].is_leaf

    def leaves(self) -> list[str]:
        """Left-to-right terminal tokens."""
        if self.is_leaf:
            assert self.token is not None
            return [self.token]
        out: list[str] = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def to_bracketed(self) -> str:
        if self.is_leaf:
            return self.token or ""
        inner = " ".join(c.to_bracketed() for c in self.children)
        return f"({self.label} {inner})"

    def __str__(self) -> str:
        return self.to_bracketed()


@dataclass
class BracketSet:
    """Constituent spans of one tree, with multiplicities.

    Only internal non-preterminal nodes contribute, and only spans of width
    >= 2 are kept (PARSEVAL-style: preterminals and single-token
    constituents are not scored).
    """

    counts: Counter
    n_tokens: int

    def unlabelled(self) -> Counter:
        out: Counter = Counter()
        for (start, end, _label), n in self.counts.items():
            out[(start, end)] += n
        return out

    def total(self) -> int:
        return sum(self.counts.values())


# ---------------------------------------------------------------------------
# parsing


def parse_trees(text: str) -> list[Tree]:
    """Parse one bracketed tree per non-blank line, in order."""
    trees: list[Tree] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        trees.append(_parse_line(line, lineno))
    return trees


def _parse_line(line: str, lineno: int) -> Tree:
    tokens = _TOKENIZER.findall(line)
    pos = 0

    def fail(msg: str) -> TreebankError:
        return TreebankError(f"line {lineno}: {msg}")

    def parse_node() -> Tree:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            raise fail("expected '('")
        pos += 1
        if pos >= len(tokens) or tokens[pos] in "()":
            raise fail("node is missing a label")
        label = tokens[pos]
        pos += 1
        subtrees: list[Tree] = []
        bare: list[str] = []
        while True:
            if pos >= len(tokens):
                raise fail("unbalanced parentheses")
            tok = tokens[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                subtrees.append(parse_node())
            else:
                bare.append(tok)
                pos += 1
        if subtrees and bare:
            raise fail(f"node {label!r} mixes subtrees and bare tokens")
        if bare:
            if len(bare) > 1:
                raise fail(f"node {label!r} dominates {len(bare)} bare tokens")
            return Tree.preterminal(label, bare[0])
        if not subtrees:
            raise fail(f"node {label!r} has no children")
        return Tree.node(label, subtrees)

    tree = parse_node()
    if pos != len(tokens):
        raise fail("trailing material after the closing bracket")
    return tree


# ---------------------------------------------------------------------------
# bracket extraction


def tree_to_brackets(t: Tree, include_root: bool = True) -> BracketSet:
    """Spans of internal non-preterminal nodes over the tree's yield."""
    counts: Counter = Counter()

    def walk(node: Tree, start: int, is_root: bool) -> int:
        if node.is_leaf:
            return start + 1
        end = start
        for child in node.children:
            end = walk(child, end, False)
        if not node.is_preterminal and end - start >= 2:
            if include_root or not is_root:
                counts[(start, end, node.label)] += 1
        return end

    n = walk(t, 0, True)
    return BracketSet(counts=counts, n_tokens=n)


# ---------------------------------------------------------------------------
# oracle grammar extraction


def tree_expansions(t: Tree) -> Iterator[tuple[str, tuple[str, ...], bool]]:
    """(lhs, rhs, is_lexicalisation) for every internal node, pre-order."""
    if t.is_leaf:
        return
    if t.is_preterminal:
        yield (t.label, (t.children[0].token,), True)  # type: ignore[arg-type]
        return
    yield (t.label, tuple(c.label for c in t.children), False)
    for child in t.children:
        yield from tree_expansions(child)


def extract_pcfg(trees: Sequence[Tree], f_m: int = 1) -> Grammar:
    """Relative-frequency PCFG with productions below count f_m discarded.

    Lexicalisations are never frequency-pruned (pruning them would shrink
    the lexicon and break coverage); weights are recomputed over the
    surviving rules so each lhs still sums to 1.  Rules that reference a
    nonterminal left with no expansions are dropped as well (they can never
    take part in a complete parse), repeating until stable.
    """
    if not trees:
        raise TreebankError("cannot extract a grammar from an empty treebank")
    if f_m < 1:
        raise TreebankError(f"minimum frequency must be >= 1, got {f_m}")
    roots = {t.label for t in trees}
    if len(roots) > 1:
        raise TreebankError(
            "trees have inconsistent root labels: " + ", ".join(sorted(roots))
        )

    counts: dict[tuple[str, tuple[str, ...], bool], int] = {}
    for tree in trees:
        for key in tree_expansions(tree):
            counts[key] = counts.get(key, 0) + 1

    kept = {
        key: n
        for key, n in counts.items()
        if key[2] or n >= f_m  # lexicalisations exempt from the threshold
    }
    preterminals = {lhs for (lhs, _, is_lex) in kept if is_lex}
    while True:
        lhs_alive = {lhs for (lhs, _, _) in kept}
        dead = [
            key
            for key in kept
            if not key[2] and any(s not in lhs_alive for s in key[1])
        ]
        if not dead:
            break
        for key in dead:
            del kept[key]
    if not kept or (trees[0].label not in {lhs for (lhs, _, _) in kept}):
        raise TreebankError(
            f"frequency threshold {f_m} leaves no usable grammar"
        )

    lhs_totals: dict[str, int] = {}
    for (lhs, _, _), n in kept.items():
        lhs_totals[lhs] = lhs_totals.get(lhs, 0) + n

    entries = []
    for key, n in counts.items():  # original first-occurrence order
        if key not in kept:
            continue
        lhs, rhs, is_lex = key
        if not is_lex:
            entries.append((lhs, rhs, n / lhs_totals[lhs], DEFAULT_PSEUDOCOUNT))
    for key, n in counts.items():
        if key not in kept:
            continue
        lhs, rhs, is_lex = key
        if is_lex:
            entries.append((lhs, rhs, n / lhs_totals[lhs], DEFAULT_PSEUDOCOUNT))
    nonterminals = {lhs for (lhs, _, _) in kept} | preterminals
    return Grammar.from_rules(entries, start=trees[0].label, nonterminals=nonterminals)


@dataclass
class CoverageRow:
    f_m: int
    productions: int
    lexicalisations: int
    coverage: float


def coverage_sweep(
    trees: Sequence[Tree], f_values: Sequence[int]
) -> list[CoverageRow]:
    """Fraction of treebank sentences parseable under each pruned grammar.

    Coverage is CYK parseability of the sentence string, not derivability of
    the gold tree; it is non-increasing in f_m.
    """
    from .chart import inside  # local import: chart depends on grammar only
    from .grammar import binarize, normalize

    if list(f_values) != sorted(f_values):
        raise TreebankError("f_values must be sorted ascending")
    rows: list[CoverageRow] = []
    sentences = [t.leaves() for t in trees]
    for f_m in f_values:
        g = extract_pcfg(trees, f_m)
        bg = binarize(normalize(g))
        parsed = sum(1 for sent in sentences if inside(bg, sent).parsed)
        n_prod = sum(1 for _ in g.productions())
        rows.append(
            CoverageRow(
                f_m=f_m,
                productions=n_prod,
                lexicalisations=len(g.rules) - n_prod,
                coverage=parsed / len(sentences),
            )
        )
    return rows


def coverage_csv(rows: Iterable[CoverageRow]) -> str:
    lines = ["f_m,productions,lexicalisations,coverage"]
    for row in rows:
        lines.append(
            f"{row.f_m},{row.productions},{row.lexicalisations},{row.coverage:.17g}"
        )
    return "\n".join(lines) + "\n"


def filter_sentences(trees: Sequence[Tree], min_len: int) -> list[Tree]:
    """Keep trees whose yield is strictly longer than min_len, in order."""
    return [t for t in trees if len(t.leaves()) > min_len]
