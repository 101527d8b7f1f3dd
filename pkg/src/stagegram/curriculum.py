"""Staged rule availability: stage plans over category sets, rule-to-stage
assignment, cross-stage Dirichlet prior construction, and the multi-stage
training loop.

A plan is an ordered sequence of named category sets (cumulative: stage k
makes available the union of stages 1..k).  A rule belongs to the earliest
stage at which its lhs and every nonterminal on its rhs are available;
terminals impose no constraint.  After stage k finishes, the posterior mean
of each already-available rule seeds its stage-(k+1) pseudocount as
N * s * p + 0.1 (s = s_p for productions, s_l for lexicalisations, N = the
number of sentences parsed at stage k), while each newly available rule
receives N * s * eta split evenly across the new rules sharing its lhs,
plus the same 0.1 floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CurriculumError, EstimationError
from .estimate import EstimatorConfig, PosteriorSummary, run_vb
from .grammar import FLOAT_FORMAT, Grammar, write_grammar_file

BASE_PSEUDOCOUNT = 0.1

BUILTIN_PLANS = ("growing", "inward", "continuity")


@dataclass(frozen=True)
class Stage:
    name: str
    categories: frozenset[str]

    def __post_init__(self) -> None:
        if not self.categories:
            raise CurriculumError(f"stage {self.name!r} has an empty category set")


@dataclass(frozen=True)
class CurriculumPlan:
    stages: tuple[Stage, ...]
    s_p: float = 0.0
    s_l: float = 0.0
    eta: float = 0.0

    def __post_init__(self) -> None:
        if not self.stages:
            raise CurriculumError("a plan needs at least one stage")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CurriculumError(f"duplicate stage names: {', '.join(dupes)}")
        if self.s_p < 0 or self.s_l < 0 or self.eta < 0:
            raise CurriculumError("s_p, s_l, and eta must be nonnegative")

    def with_scales(
        self,
        s_p: float | None = None,
        s_l: float | None = None,
        eta: float | None = None,
    ) -> "CurriculumPlan":
        return CurriculumPlan(
            self.stages,
            self.s_p if s_p is None else s_p,
            self.s_l if s_l is None else s_l,
            self.eta if eta is None else eta,
        )

    def cumulative_categories(self) -> list[frozenset[str]]:
        out: list[frozenset[str]] = []
        acc: frozenset[str] = frozenset()
        for stage in self.stages:
            acc = acc | stage.categories
            out.append(acc)
        return out


@dataclass
class StageAssignment:
    """Earliest stage of every rule, plus the cumulative index sets."""

    grammar: Grammar
    plan: CurriculumPlan
    rule_stage: np.ndarray  # 1-based stage index per rule
    cumulative: tuple[tuple[int, ...], ...]  # rule indices, original order


@dataclass
class StageResult:
    stage: int
    name: str
    grammar: Grammar  # posterior means over the cumulative rule set
    summary: PosteriorSummary
    alphas: np.ndarray
    n_parsed: int


# ---------------------------------------------------------------------------
# plan loading


def load_stage_config(text: str) -> CurriculumPlan:
    """Parse a stage-plan config, or resolve a bare built-in plan name.

    Config format: optional scalar lines (`s_p = ...`, `s_l = ...`,
    `eta = ...`) followed by ordered `[stage]` blocks carrying `name` and a
    whitespace-separated `categories` list.
    """
    bare = text.strip()
    if bare.lower() in BUILTIN_PLANS:
        return _load_builtin(bare.lower())
    if "\n" not in bare and "[" not in bare and "=" not in bare:
        raise CurriculumError(f"unknown built-in plan name: {bare!r}")

    scalars = {"s_p": 0.0, "s_l": 0.0, "eta": 0.0}
    stages: list[Stage] = []
    current: dict[str, str] | None = None

    def close_block() -> None:
        nonlocal current
        if current is None:
            return
        if "name" not in current:
            raise CurriculumError("[stage] block is missing a name")
        if "categories" not in current:
            raise CurriculumError(
                f"stage {current['name']!r} is missing a categories list"
            )
        stages.append(
            Stage(current["name"], frozenset(current["categories"].split()))
        )
        current = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "[stage]":
            close_block()
            current = {}
            continue
        if "=" not in stripped:
            raise CurriculumError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if current is not None:
            current[key] = value
        elif key in scalars:
            try:
                scalars[key] = float(value)
            except ValueError:
                raise CurriculumError(f"line {lineno}: non-numeric {key}")
        else:
            raise CurriculumError(f"line {lineno}: unknown top-level key {key!r}")
    close_block()
    if not stages:
        raise CurriculumError("config defines no [stage] blocks")
    return CurriculumPlan(tuple(stages), **scalars)


def load_plan(name_or_path: str) -> CurriculumPlan:
    """Built-in plan name, or path to a stage-plan config file."""
    if name_or_path.lower() in BUILTIN_PLANS:
        return _load_builtin(name_or_path.lower())
    path = Path(name_or_path)
    if not path.exists():
        raise CurriculumError(
            f"{name_or_path!r} is neither a built-in plan nor an existing file"
        )
    return load_stage_config(path.read_text(encoding="utf-8"))


def _load_builtin(name: str) -> CurriculumPlan:
    data = resources.files("stagegram.data").joinpath(f"{name}.stages")
    return load_stage_config(data.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# rule assignment and prior transfer


def assign_rules(g: Grammar, plan: CurriculumPlan) -> StageAssignment:
    """Assign every rule its earliest stage; unassignable rules are an error."""
    cumulative_cats = plan.cumulative_categories()
    name = g.table.name_of
    rule_stage = np.zeros(len(g.rules), dtype=np.int64)
    unassignable: list[str] = []
    for idx, wr in enumerate(g.rules):
        needed = {name(wr.rule.lhs)}
        if not wr.rule.is_lexicalisation:
            needed.update(name(s) for s in wr.rule.rhs)
        stage = next(
            (
                k
                for k, cats in enumerate(cumulative_cats, start=1)
                if needed <= cats
            ),
            0,
        )
        if stage == 0:
            unassignable.append(g.rule_string(idx))
        rule_stage[idx] = stage
    if unassignable:
        raise CurriculumError(
            "rules not assignable under the plan: " + "; ".join(unassignable)
        )
    cumulative = tuple(
        tuple(int(i) for i in np.flatnonzero(rule_stage <= k))
        for k in range(1, len(plan.stages) + 1)
    )
    return StageAssignment(g, plan, rule_stage, cumulative)


def transfer_pseudocounts(
    prev: PosteriorSummary, assignment: StageAssignment, k: int, plan: CurriculumPlan
) -> np.ndarray:
    """Dirichlet prior for stage k+1 from the stage-k posterior.

    Returned alphas align with the stage-(k+1) cumulative rule list.  Every
    alpha is >= 0.1 by construction; s = 0 resets learning entirely.
    """
    if not 1 <= k < len(plan.stages):
        raise CurriculumError(f"no stage follows stage {k} in this plan")
    g = assignment.grammar
    old = assignment.cumulative[k - 1]
    new_cum = assignment.cumulative[k]
    if len(prev.posterior_means) != len(old):
        raise CurriculumError(
            "stage summary does not cover the cumulative stage rule set"
        )
    mean_of = {orig: prev.posterior_means[i] for i, orig in enumerate(old)}
    n_parsed = prev.n_parsed
    old_set = set(old)
    new_rules = [i for i in new_cum if i not in old_set]
    new_per_lhs: dict[int, int] = {}
    for i in new_rules:
        lhs = g.rules[i].rule.lhs
        new_per_lhs[lhs] = new_per_lhs.get(lhs, 0) + 1

    alphas = np.empty(len(new_cum), dtype=np.float64)
    for pos, orig in enumerate(new_cum):
        wr = g.rules[orig]
        scale = plan.s_l if wr.rule.is_lexicalisation else plan.s_p
        if orig in old_set:
            alphas[pos] = n_parsed * scale * mean_of[orig] + BASE_PSEUDOCOUNT
        else:
            share = new_per_lhs[wr.rule.lhs]
            alphas[pos] = n_parsed * scale * plan.eta / share + BASE_PSEUDOCOUNT
    return alphas


# ---------------------------------------------------------------------------
# stage grammars and the training loop


def prior_mean_weights(alphas: np.ndarray, lhs_groups: np.ndarray) -> np.ndarray:
    """alpha / per-lhs alpha sum; an all-equal group is exactly 1/k."""
    n_groups = int(lhs_groups.max()) + 1 if len(lhs_groups) else 0
    weights = np.empty_like(alphas)
    for gidx in range(n_groups):
        members = np.flatnonzero(lhs_groups == gidx)
        group = alphas[members]
        if np.all(group == group[0]):
            weights[members] = 1.0 / len(members)
        else:
            weights[members] = group / group.sum()
    return weights


def stage_grammar(
    g: Grammar, rule_indices: Sequence[int], alphas: np.ndarray
) -> Grammar:
    """Rule-subset grammar initialized at the prior mean of `alphas`.

    The full grammar's nonterminal set is carried over so that symbols whose
    expansions arrive at a later stage keep their nonterminal status.
    """
    name = g.table.name_of
    lhs_ids = [g.rules[i].rule.lhs for i in rule_indices]
    group_of: dict[int, int] = {}
    groups = np.array(
        [group_of.setdefault(lhs, len(group_of)) for lhs in lhs_ids], dtype=np.int64
    )
    weights = prior_mean_weights(np.asarray(alphas, dtype=np.float64), groups)
    entries = []
    for pos, orig in enumerate(rule_indices):
        wr = g.rules[orig]
        entries.append(
            (
                name(wr.rule.lhs),
                [name(s) for s in wr.rule.rhs],
                float(weights[pos]),
                float(alphas[pos]),
            )
        )
    return Grammar.from_rules(
        entries,
        start=name(g.start),
        nonterminals=[name(s) for s in sorted(g.nonterminals)],
    )


def run_curriculum(
    g: Grammar,
    corpus: Sequence[Sequence[str]],
    plan: CurriculumPlan,
    cfg: EstimatorConfig | None = None,
) -> list[StageResult]:
    """Train through the plan's stages with cross-stage pseudocount transfer.

    Stage 1 uses the constant 0.1 prior; each later stage adds its newly
    available rules, builds its prior via `transfer_pseudocounts`, and
    re-runs VB.  A single-stage plan is exactly one `run_vb` call with the
    constant prior.
    """
    cfg = cfg or EstimatorConfig()
    assignment = assign_rules(g, plan)
    alphas = np.full(len(assignment.cumulative[0]), BASE_PSEUDOCOUNT)
    results: list[StageResult] = []
    for k, stage in enumerate(plan.stages, start=1):
        indices = assignment.cumulative[k - 1]
        current = stage_grammar(g, indices, alphas)
        try:
            summary = run_vb(current, corpus, cfg, alphas=alphas)
        except EstimationError as exc:
            raise CurriculumError(f"stage {k} ({stage.name}) aborted: {exc}") from exc
        results.append(
            StageResult(
                stage=k,
                name=stage.name,
                grammar=summary.posterior_grammar(),
                summary=summary,
                alphas=alphas,
                n_parsed=summary.n_parsed,
            )
        )
        if k < len(plan.stages):
            alphas = transfer_pseudocounts(summary, assignment, k, plan)
    return results


def write_stage_files(results: Sequence[StageResult], out_dir: Path) -> None:
    """G_<k>.gr per stage plus the stages.csv trace."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["stage,rules_available,N_parsed,final_loglik"]
    for res in results:
        (out_dir / f"G_{res.stage}.gr").write_text(
            write_grammar_file(res.grammar), encoding="utf-8"
        )
        final_ll = res.summary.trace[-1] if res.summary.trace else float("nan")
        lines.append(
            f"{res.stage},{len(res.grammar.rules)},{res.n_parsed},"
            + FLOAT_FORMAT.format(final_ll)
        )
    (out_dir / "stages.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
