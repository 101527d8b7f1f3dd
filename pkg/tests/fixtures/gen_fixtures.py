#!/usr/bin/env python3
"""Regenerate the bundled synthetic fixtures.

Samples a small child-directed-speech-flavoured treebank from a hand-built
PCFG whose tags are drawn from the staged category sets, so that all five
stages of both the growing and inward plans introduce rules and have
parseable input.  Deterministic: fixed seeds, fixed output.

Usage: python tests/fixtures/gen_fixtures.py
"""

from __future__ import annotations

import random
from pathlib import Path

from stagegram.curriculum import assign_rules, load_plan
from stagegram.chart import inside
from stagegram.grammar import Grammar, binarize, normalize
from stagegram.treebank import Tree, extract_pcfg, filter_sentences, parse_trees

HERE = Path(__file__).parent

TREEBANK_SEED = 20240613
CHILD_SPEECH_SEED = 977201
N_TREES = 520
N_CHILD_SPEECH = 300
MIN_TOKENS = 2
MAX_TOKENS = 10
MAX_DEPTH = 40

RULES = [
    # productions
    ("ROOT", ["S"], 0.55),
    ("ROOT", ["FRAG"], 0.10),
    ("ROOT", ["INTJ"], 0.20),
    ("ROOT", ["SQ"], 0.07),
    ("ROOT", ["SBARQ"], 0.08),
    ("S", ["NP", "VP"], 0.92),
    ("S", ["S", "CC", "S"], 0.08),
    ("NP", ["PRP"], 0.28),
    ("NP", ["NN"], 0.20),
    ("NP", ["NNP"], 0.12),
    ("NP", ["DT", "NN"], 0.18),
    ("NP", ["PRP$", "NN"], 0.09),
    ("NP", ["JJ", "NN"], 0.06),
    ("NP", ["NP", "PP"], 0.04),
    ("NP", ["ADJP", "NN"], 0.03),
    ("VP", ["VB"], 0.24),
    ("VP", ["VB", "NP"], 0.36),
    ("VP", ["VP", "PP"], 0.07),
    ("VP", ["MD", "VB"], 0.08),
    ("VP", ["VBZ", "NP"], 0.07),
    ("VP", ["VBZ"], 0.07),
    ("VP", ["VB", "SBAR"], 0.06),
    ("VP", ["VB", "ADVP"], 0.05),
    ("PP", ["IN", "NP"], 1.0),
    ("FRAG", ["NP"], 0.55),
    ("FRAG", ["ADVP"], 0.30),
    ("FRAG", ["ADJP"], 0.15),
    ("ADVP", ["RB"], 1.0),
    ("ADJP", ["JJ"], 1.0),
    ("INTJ", ["UH"], 0.58),
    ("INTJ", ["UH", "INTJ"], 0.42),
    ("SQ", ["AUX", "NP", "VP"], 1.0),
    ("SBARQ", ["WHNP", "SQ"], 0.4),
    ("SBARQ", ["WHNP", "S"], 0.6),
    ("SBAR", ["COMP", "S"], 1.0),
    ("WHNP", ["WP"], 1.0),
    # lexicalisations
    ("NN", ["dog"], 0.30),
    ("NN", ["ball"], 0.25),
    ("NN", ["juice"], 0.20),
    ("NN", ["bear"], 0.15),
    ("NN", ["car"], 0.10),
    ("NNP", ["mommy"], 0.6),
    ("NNP", ["daddy"], 0.4),
    ("PRP", ["you"], 0.5),
    ("PRP", ["it"], 0.3),
    ("PRP", ["he"], 0.2),
    ("PRP$", ["your"], 0.6),
    ("PRP$", ["my"], 0.4),
    ("VB", ["go"], 0.30),
    ("VB", ["see"], 0.30),
    ("VB", ["want"], 0.25),
    ("VB", ["push"], 0.15),
    ("UH", ["uh"], 0.40),
    ("UH", ["oh"], 0.35),
    ("UH", ["yes"], 0.25),
    ("DT", ["the"], 0.6),
    ("DT", ["a"], 0.3),
    ("DT", ["that"], 0.1),
    ("JJ", ["big"], 0.6),
    ("JJ", ["red"], 0.4),
    ("IN", ["in"], 0.55),
    ("IN", ["on"], 0.45),
    ("RB", ["now"], 0.5),
    ("RB", ["there"], 0.5),
    ("MD", ["can"], 0.6),
    ("MD", ["will"], 0.4),
    ("AUX", ["do"], 0.55),
    ("AUX", ["does"], 0.45),
    ("VBZ", ["goes"], 0.5),
    ("VBZ", ["sees"], 0.5),
    ("WP", ["what"], 0.6),
    ("WP", ["who"], 0.4),
    ("COMP", ["because"], 0.5),
    ("COMP", ["if"], 0.5),
    ("CC", ["and"], 1.0),
]


def true_grammar() -> Grammar:
    return normalize(
        Grammar.from_rules([(lhs, rhs, w, 0.1) for lhs, rhs, w in RULES], start="ROOT")
    )


def sample_tree(g: Grammar, rng: random.Random, max_depth: int = MAX_DEPTH) -> Tree | None:
    name = g.table.name_of

    def expand(sym: int, depth: int) -> Tree | None:
        if depth > max_depth:
            return None
        idxs = g.rule_indices_for(sym)
        weights = [g.rules[i].weight for i in idxs]
        idx = rng.choices(idxs, weights=weights)[0]
        wr = g.rules[idx]
        if wr.rule.is_lexicalisation:
            return Tree.preterminal(name(sym), name(wr.rule.rhs[0]))
        children = []
        for child in wr.rule.rhs:
            sub = expand(child, depth + 1)
            if sub is None:
                return None
            children.append(sub)
        return Tree.node(name(sym), children)

    return expand(g.start, 0)


def sample_corpus(g: Grammar, n: int, seed: int) -> list[Tree]:
    rng = random.Random(seed)
    trees: list[Tree] = []
    while len(trees) < n:
        tree = sample_tree(g, rng)
        if tree is None:
            continue
        if MIN_TOKENS <= len(tree.leaves()) <= MAX_TOKENS:
            trees.append(tree)
    return trees


def check_fixture(trees: list[Tree]) -> None:
    filtered = filter_sentences(trees, min_len=1)
    oracle = extract_pcfg(filtered, f_m=1)
    for plan_name in ("growing", "inward"):
        plan = load_plan(plan_name)
        assignment = assign_rules(oracle, plan)
        sizes = [len(c) for c in assignment.cumulative]
        assert sizes[-1] == len(oracle.rules), plan_name
        for k in range(1, len(sizes)):
            assert sizes[k] > sizes[k - 1], f"{plan_name} stage {k + 1} adds no rules"
        from stagegram.curriculum import stage_grammar
        import numpy as np

        alphas = np.full(sizes[0], 0.1)
        g1 = stage_grammar(oracle, assignment.cumulative[0], alphas)
        bg1 = binarize(g1)
        parsed = sum(1 for t in filtered if inside(bg1, t.leaves()).parsed)
        assert parsed >= 20, f"{plan_name} stage 1 parses only {parsed} sentences"
        print(f"{plan_name}: cumulative rule counts {sizes}, stage-1 parses {parsed}")


def main() -> None:
    g = true_grammar()
    trees = sample_corpus(g, N_TREES, TREEBANK_SEED)
    treebank_text = "\n".join(t.to_bracketed() for t in trees) + "\n"
    (HERE / "synthetic_treebank.mrg").write_text(treebank_text, encoding="utf-8")

    speech = sample_corpus(g, N_CHILD_SPEECH, CHILD_SPEECH_SEED)
    speech_text = "\n".join(" ".join(t.leaves()) for t in speech) + "\n"
    (HERE / "child_speech.txt").write_text(speech_text, encoding="utf-8")

    reread = parse_trees(treebank_text)
    assert [t.to_bracketed() for t in reread] == [t.to_bracketed() for t in trees]
    check_fixture(reread)
    lengths = [len(t.leaves()) for t in trees]
    print(
        f"wrote {len(trees)} trees (mean length {sum(lengths) / len(lengths):.2f}) "
        f"and {len(speech)} child-speech sentences"
    )


if __name__ == "__main__":
    main()
