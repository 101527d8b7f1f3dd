"""Quantitative evaluation: unlabelled bracketing F1, per-nonterminal
Jensen-Shannon divergence against the oracle grammar, mean length-normalized
sentence log-likelihood, and the paired one-sided Wilcoxon signed-rank test.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .chart import inside
from .errors import EvalError
from .grammar import FLOAT_FORMAT, Grammar, binarize
from .treebank import Tree, tree_to_brackets

_SUM_TOL = 1e-9


# ---------------------------------------------------------------------------
# unlabelled F1


@dataclass
class F1Result:
    matched: int
    gold: int
    predicted: int

    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def unlabelled_f1(
    gold: Sequence[Tree],
    predicted: Sequence[Tree | None],
    include_root: bool = True,
) -> F1Result:
    """Micro-averaged unlabelled span F1 over aligned tree pairs.

    A None prediction (no parse) contributes its gold brackets but nothing
    matched or predicted.  Span matching is multiset-based and ignores
    labels.
    """
    if len(gold) != len(predicted):
        raise EvalError("gold and predicted sequences differ in length")
    matched = gold_total = predicted_total = 0
    for idx, (g_tree, p_tree) in enumerate(zip(gold, predicted)):
        g_spans = tree_to_brackets(g_tree, include_root=include_root).unlabelled()
        gold_total += sum(g_spans.values())
        if p_tree is None:
            continue
        if p_tree.leaves() != g_tree.leaves():
            raise EvalError(f"yield mismatch between gold and prediction at index {idx}")
        p_spans = tree_to_brackets(p_tree, include_root=include_root).unlabelled()
        predicted_total += sum(p_spans.values())
        matched += sum(min(n, g_spans[span]) for span, n in p_spans.items())
    return F1Result(matched=matched, gold=gold_total, predicted=predicted_total)


# ---------------------------------------------------------------------------
# Jensen-Shannon divergence


def jsd(p: Sequence[float], q: Sequence[float], base: float = 2.0) -> float:
    """(KL(p||m) + KL(q||m)) / 2 with m the midpoint, 0*log(0/x) = 0.

    Base-2 logs by default, bounding the result to [0, 1].
    """
    pv = np.asarray(p, dtype=np.float64)
    qv = np.asarray(q, dtype=np.float64)
    if pv.shape != qv.shape:
        raise EvalError("p and q must share an index space")
    if np.any(pv < 0) or np.any(qv < 0):
        raise EvalError("probability vectors must be nonnegative")
    for label, vec in (("p", pv), ("q", qv)):
        if abs(float(vec.sum()) - 1.0) > _SUM_TOL:
            raise EvalError(f"{label} does not sum to 1 (got {float(vec.sum())!r})")
    m = 0.5 * (pv + qv)
    log_base = math.log(base)
    div = 0.0
    for x, mid in ((pv, m), (qv, m)):
        mask = x > 0
        div += 0.5 * float(np.sum(x[mask] * np.log(x[mask] / mid[mask]))) / log_base
    return div


@dataclass
class JsdReport:
    per_nt: dict[str, float]
    mean: float
    base: float
    unavailable: frozenset[str] = frozenset()


def per_nt_jsd(
    oracle: Grammar,
    induced: Grammar,
    nts: Sequence[str] | None = None,
    base: float = 2.0,
    include_unavailable: bool = False,
) -> JsdReport:
    """Divergence between oracle and induced expansion distributions per NT.

    Distributions align over the union of the two grammars' expansions of
    each nonterminal, absent rules at probability 0.  A nonterminal with no
    expansion mass in the induced grammar (not yet available at this stage)
    is reported at the maximal divergence 1.0 and flagged; by default such
    NTs are left out of the mean.
    """
    oracle_dists = _expansion_distributions(oracle)
    induced_dists = _expansion_distributions(induced)
    if nts is None:
        targets = list(oracle_dists)
    else:
        missing = [nt for nt in nts if nt not in oracle_dists]
        if missing:
            raise EvalError(
                "nonterminals absent from the oracle: " + ", ".join(missing)
            )
        targets = list(nts)
    per_nt: dict[str, float] = {}
    unavailable: set[str] = set()
    for nt in targets:
        o_dist = oracle_dists[nt]
        i_dist = induced_dists.get(nt, {})
        if not i_dist:
            per_nt[nt] = 1.0
            unavailable.add(nt)
            continue
        keys = list(o_dist)
        keys.extend(k for k in i_dist if k not in o_dist)
        p = [o_dist.get(k, 0.0) for k in keys]
        q = [i_dist.get(k, 0.0) for k in keys]
        per_nt[nt] = jsd(p, q, base=base)
    scored = [
        v
        for nt, v in per_nt.items()
        if include_unavailable or nt not in unavailable
    ]
    mean = float(np.mean(scored)) if scored else float("nan")
    return JsdReport(
        per_nt=per_nt, mean=mean, base=base, unavailable=frozenset(unavailable)
    )


def _expansion_distributions(g: Grammar) -> dict[str, dict[tuple[str, ...], float]]:
    """Per-lhs normalized expansion distributions keyed by rhs strings."""
    name = g.table.name_of
    dists: dict[str, dict[tuple[str, ...], float]] = {}
    totals: dict[str, float] = {}
    for wr in g.rules:
        lhs = name(wr.rule.lhs)
        rhs = tuple(name(s) for s in wr.rule.rhs)
        dists.setdefault(lhs, {})[rhs] = dists.get(lhs, {}).get(rhs, 0.0) + wr.weight
        totals[lhs] = totals.get(lhs, 0.0) + wr.weight
    out: dict[str, dict[tuple[str, ...], float]] = {}
    for lhs, dist in dists.items():
        total = totals[lhs]
        if total <= 0.0:
            continue  # no mass: treated as unavailable by the caller
        out[lhs] = {rhs: w / total for rhs, w in dist.items()}
    return out


# ---------------------------------------------------------------------------
# mean length-normalized log-likelihood


@dataclass
class LoglikReport:
    mean: float
    scored: int
    skipped: int
    records: list[tuple[int, float]] = field(default_factory=list)


def mean_sentence_loglik(
    g: Grammar, sentences: Sequence[Sequence[str]]
) -> LoglikReport:
    """Mean over parseable sentences of (natural-log marginal) / length.

    Sentences with out-of-lexicon tokens or without a complete parse are
    skipped and counted.
    """
    bg = binarize(g)
    records: list[tuple[int, float]] = []
    skipped = 0
    for sentence in sentences:
        if not sentence:
            raise EvalError("empty sentence in log-likelihood input")
        chart = inside(bg, sentence)
        if not chart.parsed:
            skipped += 1
            continue
        records.append((len(sentence), chart.marginal))
    if records:
        mean = math.fsum(ll / t for t, ll in records) / len(records)
    else:
        mean = float("nan")
    return LoglikReport(mean=mean, scored=len(records), skipped=skipped, records=records)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass
class WilcoxonResult:
    n: int
    statistic: float
    p_value: float
    rank_biserial: float
    median_difference: float


_EXACT_LIMIT = 25


def wilcoxon_signed_rank(
    pairs: Sequence[tuple[float, float]], alternative: str = "a_greater"
) -> WilcoxonResult:
    """Paired one-sided test on differences a - b.

    Zero differences are dropped; |d| ranks use average ranks on ties.  The
    statistic is W+ (rank sum of positive differences).  The p-value is
    exact (full sign-assignment distribution) up to n = 25 and a normal
    approximation with tie and continuity corrections beyond.
    """
    if alternative not in ("a_greater", "b_greater"):
        raise EvalError(f"unknown alternative {alternative!r}")
    diffs = [float(a) - float(b) for a, b in pairs]
    nonzero = [d for d in diffs if d != 0.0]
    if not nonzero:
        raise EvalError("all pairs are tied; the test is undefined")
    if len(nonzero) < 5:
        raise EvalError("need at least 5 non-tied pairs")
    n = len(nonzero)
    double_ranks, tie_sizes = _double_ranks(nonzero)
    w_plus2 = sum(r for r, d in zip(double_ranks, nonzero) if d > 0)
    w_plus = w_plus2 / 2.0
    w_minus = n * (n + 1) / 2.0 - w_plus

    if n <= _EXACT_LIMIT:
        right_tail = _exact_right_tail(double_ranks, w_plus2)
        if alternative == "a_greater":
            p = right_tail
        else:
            # left tail: P(W+ <= w) via the complement of the strict right tail
            p = 1.0 - _exact_right_tail(double_ranks, w_plus2 + 1)
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(
            t**3 - t for t in tie_sizes
        ) / 48.0
        sd = math.sqrt(var)
        if alternative == "a_greater":
            z = (w_plus - mean - 0.5) / sd
            p = 0.5 * math.erfc(z / math.sqrt(2.0))
        else:
            z = (w_plus - mean + 0.5) / sd
            p = 0.5 * math.erfc(-z / math.sqrt(2.0))
    p = min(max(p, 0.0), 1.0)
    return WilcoxonResult(
        n=n,
        statistic=w_plus,
        p_value=p,
        rank_biserial=(w_plus - w_minus) / (w_plus + w_minus),
        median_difference=float(np.median(diffs)),
    )


def _double_ranks(values: Sequence[float]) -> tuple[list[int], list[int]]:
    """Integer doubled average-ranks of |values| plus tie-group sizes."""
    order = sorted(range(len(values)), key=lambda i: abs(values[i]))
    doubled = [0] * len(values)
    tie_sizes: list[int] = []
    pos = 0
    while pos < len(order):
        end = pos
        while (
            end + 1 < len(order)
            and abs(values[order[end + 1]]) == abs(values[order[pos]])
        ):
            end += 1
        size = end - pos + 1
        tie_sizes.append(size)
        # average of ranks pos+1 .. end+1, doubled: (pos+1 + end+1)
        avg2 = pos + end + 2
        for t in range(pos, end + 1):
            doubled[order[t]] = avg2
        pos = end + 1
    return doubled, tie_sizes


def _exact_right_tail(double_ranks: Sequence[int], threshold2: float) -> float:
    """P(W+ >= threshold2/2) under the null, by subset-sum counting."""
    total = sum(double_ranks)
    table = np.zeros(total + 1, dtype=np.float64)
    table[0] = 1.0
    for r in double_ranks:
        shifted = np.zeros_like(table)
        shifted[r:] = table[:-r]
        table += shifted
    start = max(0, math.ceil(threshold2 - 1e-9))
    if start > total:
        return 0.0
    return float(table[start:].sum()) / float(2 ** len(double_ranks))


# ---------------------------------------------------------------------------
# report files


@dataclass
class StageMetrics:
    """One stage's evaluation bundle, as written to the report files."""

    stage: int
    f1: float | None
    mean_jsd: float | None
    mean_loglik: float | None
    n_parsed: int
    per_nt_jsd: dict[str, float] = field(default_factory=dict)


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return FLOAT_FORMAT.format(value)


def write_report(results: Sequence[StageMetrics], out_dir: Path) -> list[Path]:
    """metrics.csv / jsd_per_nt.csv plus their JSON twins and a summary."""
    if not results:
        raise EvalError("no stage results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    metrics_rows = [
        {
            "stage": res.stage,
            "f1": res.f1,
            "mean_jsd": res.mean_jsd,
            "mean_loglik": res.mean_loglik,
            "N_parsed": res.n_parsed,
        }
        for res in results
    ]
    lines = ["stage,f1,mean_jsd,mean_loglik,N_parsed"]
    for row in metrics_rows:
        lines.append(
            f"{row['stage']},{_fmt(row['f1'])},{_fmt(row['mean_jsd'])},"
            f"{_fmt(row['mean_loglik'])},{row['N_parsed']}"
        )
    path = out_dir / "metrics.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    path = out_dir / "metrics.json"
    path.write_text(json.dumps(metrics_rows, indent=2) + "\n", encoding="utf-8")
    written.append(path)

    jsd_rows = [
        {"stage": res.stage, "nt": nt, "jsd": value}
        for res in results
        for nt, value in sorted(res.per_nt_jsd.items())
    ]
    lines = ["stage,nt,jsd"]
    for row in jsd_rows:
        lines.append(f"{row['stage']},{row['nt']},{_fmt(row['jsd'])}")
    path = out_dir / "jsd_per_nt.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    path = out_dir / "jsd_per_nt.json"
    path.write_text(json.dumps(jsd_rows, indent=2) + "\n", encoding="utf-8")
    written.append(path)

    summary = {
        "stages": len(results),
        "final": metrics_rows[-1],
    }
    path = out_dir / "summary.json"
    path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    written.append(path)
    return written


def read_metrics_csv(path: Path) -> list[dict]:
    """Re-ingest metrics.csv; numeric fields come back as floats/ints."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "stage": int(row["stage"]),
                    "f1": float(row["f1"]) if row["f1"] else None,
                    "mean_jsd": float(row["mean_jsd"]) if row["mean_jsd"] else None,
                    "mean_loglik": float(row["mean_loglik"])
                    if row["mean_loglik"]
                    else None,
                    "N_parsed": int(row["N_parsed"]),
                }
            )
    return rows
