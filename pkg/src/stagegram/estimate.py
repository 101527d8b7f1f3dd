"""EM and Variational Bayes re-estimation of rule probabilities from raw
sentence corpora.

Both loops share the E-step (expected counts from inside-outside charts,
unparsed sentences contribute nothing).  The EM M-step is the count ratio
per lhs; the VB M-step uses the mean-field exp-digamma weights
w_r = exp(psi(alpha_r + c_r) - psi(sum over the lhs of (alpha + c))), and the
reported probabilities are the Dirichlet posterior means
(alpha_r + c_r) / sum(alpha + c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chart import sentence_counts
from .errors import EstimationError
from .grammar import BinarizedGrammar, Grammar, binarize

_EULER_MASCHERONI = 0.5772156649015328606065120900824024

# Asymptotic tail of psi(x) for x >= _DIGAMMA_LIFT; coefficients are
# -B_{2n}/(2n) for the series psi(x) ~ ln x - 1/(2x) - sum B_{2n}/(2n x^{2n}).
_DIGAMMA_LIFT = 6.0
_DIGAMMA_COEFFS = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)


def digamma(x: float) -> float:
    """psi(x) for x > 0: recurrence lift to x >= 6, then asymptotic series.

    Absolute error <= 1e-12 over [1e-3, 1e6] (checked against mpmath in the
    test suite).
    """
    if not x > 0.0:
        raise EstimationError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < _DIGAMMA_LIFT:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = 0.0
    power = inv2
    for coeff in _DIGAMMA_COEFFS:
        tail += coeff * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x + tail


def _digamma_array(values: np.ndarray) -> np.ndarray:
    return np.array([digamma(float(v)) for v in values], dtype=np.float64)


@dataclass
class EstimatorConfig:
    """Shared settings for the re-estimation loops.

    `tolerance` > 0 enables early stopping once the relative corpus
    log-likelihood change drops below it.  The E-step reduction is always
    performed in sentence order, so results are deterministic regardless of
    `reproducible`; the flag is recorded for the CLI's run metadata.
    """

    iterations: int = 20
    tolerance: float = 0.0
    reproducible: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise EstimationError("iterations must be >= 1")
        if self.tolerance < 0.0:
            raise EstimationError("tolerance must be >= 0")


@dataclass
class PosteriorSummary:
    """Result of a VB run: counts, priors, posterior means, and trace."""

    grammar: Grammar
    counts: np.ndarray
    alphas: np.ndarray
    posterior_means: np.ndarray
    variational_weights: np.ndarray
    n_parsed: int
    trace: list[float] = field(default_factory=list)
    parsed_trace: list[int] = field(default_factory=list)

    def posterior_grammar(self) -> Grammar:
        """Grammar weighted by the posterior means (per-lhs normalized)."""
        return self.grammar.with_weights(self.posterior_means)


def _lhs_groups(g: Grammar) -> tuple[np.ndarray, int]:
    """Map each rule to a dense lhs-group index."""
    group_of: dict[int, int] = {}
    idx = np.empty(len(g.rules), dtype=np.int64)
    for i, wr in enumerate(g.rules):
        idx[i] = group_of.setdefault(wr.rule.lhs, len(group_of))
    return idx, len(group_of)


def _group_sums(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    sums = np.zeros(n_groups, dtype=np.float64)
    np.add.at(sums, groups, values)
    return sums


def posterior_mean(
    alphas: Sequence[float], counts: Sequence[float], lhs_groups: Sequence[int]
) -> np.ndarray:
    """p_r = (alpha_r + c_r) / sum over r' with the same lhs of (alpha + c)."""
    a = np.asarray(alphas, dtype=np.float64)
    c = np.asarray(counts, dtype=np.float64)
    gidx = np.asarray(lhs_groups, dtype=np.int64)
    if not (a.shape == c.shape == gidx.shape):
        raise EstimationError("alphas, counts, and lhs groups must share one index space")
    if np.any(a <= 0.0):
        raise EstimationError("alphas must be positive")
    post = a + c
    denom = _group_sums(post, gidx, int(gidx.max()) + 1 if len(gidx) else 0)
    return post / denom[gidx]


def _corpus_estep(
    bg: BinarizedGrammar, corpus: Sequence[Sequence[str]]
) -> tuple[np.ndarray, float, int]:
    """Expected counts, corpus log-likelihood, and parsed-sentence count."""
    counts = np.zeros(len(bg.base.rules), dtype=np.float64)
    loglik = 0.0
    parsed = 0
    for sentence in corpus:
        vec, marginal = sentence_counts(bg, sentence)
        if vec is None:
            continue
        counts += vec.counts
        loglik += marginal
        parsed += 1
    return counts, loglik, parsed


def run_em(
    g: Grammar, corpus: Sequence[Sequence[str]], cfg: EstimatorConfig | None = None
) -> tuple[Grammar, list[float]]:
    """Inside-outside EM; returns the re-weighted grammar and the
    per-iteration corpus log-likelihood trace (non-decreasing)."""
    cfg = cfg or EstimatorConfig()
    if not corpus:
        raise EstimationError("corpus is empty")
    bg = binarize(g)
    groups, n_groups = _lhs_groups(g)
    weights = g.weight_vector()
    trace: list[float] = []
    for iteration in range(1, cfg.iterations + 1):
        counts, loglik, parsed = _corpus_estep(bg.reweighted(weights), corpus)
        if parsed == 0:
            raise EstimationError(
                f"no corpus sentence parses at iteration {iteration}"
            )
        trace.append(loglik)
        totals = _group_sums(counts, groups, n_groups)
        ratio = np.divide(
            counts,
            totals[groups],
            out=weights.copy(),  # an lhs never seen keeps its old weights
            where=totals[groups] > 0.0,
        )
        weights = ratio
        if (
            cfg.tolerance > 0.0
            and len(trace) >= 2
            and abs(trace[-1] - trace[-2]) < cfg.tolerance * abs(trace[-2])
        ):
            break
    return g.with_weights(weights), trace


def run_vb(
    g: Grammar,
    corpus: Sequence[Sequence[str]],
    cfg: EstimatorConfig | None = None,
    alphas: Sequence[float] | None = None,
) -> PosteriorSummary:
    """Mean-field VB with per-rule Dirichlet pseudocounts.

    Parsing weights during training are the exp-digamma weights; the
    summary's posterior means are what downstream evaluation and stage
    transfer consume.  `alphas` defaults to the grammar's pseudocounts.
    """
    cfg = cfg or EstimatorConfig()
    if not corpus:
        raise EstimationError("corpus is empty")
    alpha = (
        g.pseudocount_vector()
        if alphas is None
        else np.asarray(alphas, dtype=np.float64)
    )
    if alpha.shape != (len(g.rules),):
        raise EstimationError("alpha vector length does not match rule count")
    if np.any(alpha <= 0.0):
        raise EstimationError("alphas must be positive")
    bg = binarize(g)
    groups, n_groups = _lhs_groups(g)
    weights = g.weight_vector()
    counts = np.zeros_like(alpha)
    trace: list[float] = []
    parsed_trace: list[int] = []
    n_parsed = 0
    for iteration in range(1, cfg.iterations + 1):
        counts, loglik, n_parsed = _corpus_estep(bg.reweighted(weights), corpus)
        if n_parsed == 0:
            raise EstimationError(
                f"no corpus sentence parses at iteration {iteration}"
            )
        trace.append(loglik)
        parsed_trace.append(n_parsed)
        post = alpha + counts
        denom_dg = _digamma_array(_group_sums(post, groups, n_groups))
        weights = np.exp(_digamma_array(post) - denom_dg[groups])
        if (
            cfg.tolerance > 0.0
            and len(trace) >= 2
            and abs(trace[-1] - trace[-2]) < cfg.tolerance * abs(trace[-2])
        ):
            break
    means = posterior_mean(alpha, counts, groups)
    return PosteriorSummary(
        grammar=g,
        counts=counts,
        alphas=alpha,
        posterior_means=means,
        variational_weights=weights,
        n_parsed=n_parsed,
        trace=trace,
        parsed_trace=parsed_trace,
    )


def uniform_weights(g: Grammar) -> Grammar:
    """Grammar with weight 1/k for each of an lhs's k rules."""
    groups, n_groups = _lhs_groups(g)
    sizes = _group_sums(np.ones(len(g.rules)), groups, n_groups)
    return g.with_weights(1.0 / sizes[groups])


def jitter_weights(g: Grammar, seed: int, scale: float = 0.1) -> Grammar:
    """Multiplicative +-scale noise on the weights, then renormalized.
    For initialization-robustness studies."""
    from .grammar import normalize

    rng = np.random.default_rng(seed)
    noise = 1.0 + scale * rng.uniform(-1.0, 1.0, size=len(g.rules))
    return normalize(g.with_weights(g.weight_vector() * noise))


def trace_csv(trace: Sequence[float], parsed: Sequence[int]) -> str:
    lines = ["iteration,log_likelihood,parsed_sentences"]
    for i, (ll, n) in enumerate(zip(trace, parsed), start=1):
        lines.append(f"{i},{ll:.17g},{n}")
    return "\n".join(lines) + "\n"
