"""Command-line pipeline: oracle extraction, staged training, parsing,
evaluation, and hyperparameter sweeps.

Exit codes: 0 success, 1 usage or I/O error, 2 pipeline abort (e.g. a stage
in which nothing parses).
"""

from __future__ import annotations

import argparse
import itertools
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import curriculum as curriculum_mod
from . import evaluation
from .chart import viterbi_parse
from .curriculum import CurriculumPlan, load_plan, run_curriculum, write_stage_files
from .errors import CurriculumError, StagegramError
from .estimate import EstimatorConfig, trace_csv
from .evaluation import (
    StageMetrics,
    mean_sentence_loglik,
    per_nt_jsd,
    unlabelled_f1,
    wilcoxon_signed_rank,
    write_report,
)
from .grammar import (
    Grammar,
    binarize,
    normalize,
    parse_grammar_file,
    write_grammar_file,
)
from .treebank import (
    Tree,
    coverage_csv,
    coverage_sweep,
    extract_pcfg,
    filter_sentences,
    parse_trees,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2

NOPARSE_LABEL = "NOPARSE"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


@dataclass
class RunConfig:
    """Settings shared by the train and sweep pipelines."""

    treebank: Path
    out: Path
    curriculum: str = "continuity"
    sentences: Path | None = None
    child_speech: Path | None = None
    s_p: float | None = None
    s_l: float | None = None
    eta: float | None = None
    f_m: int | None = None
    iterations: int = 20
    eval_sample: int = 1000
    seed: int | None = None
    reproducible: bool = True
    include_root: bool = True
    jsd_base: float = 2.0
    force: bool = False


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stagegram", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="flat key = value config file; flags win")
        p.add_argument("--treebank", type=Path, help="bracketed trees, one per line")
        p.add_argument("--sentences", type=Path, help="training sentences (default: treebank yields)")
        p.add_argument("--child-speech", type=Path, help="held-out sentences for log-likelihood")
        p.add_argument("--curriculum", help="built-in plan name or stage-config path")
        p.add_argument("--s-p", type=float, help="production prior scale")
        p.add_argument("--s-l", type=float, help="lexicalisation prior scale")
        p.add_argument("--eta", type=float, help="new-rule mass dial")
        p.add_argument("--f-m", type=int, help="force the production frequency threshold")
        p.add_argument("--iterations", type=int, help="VB iterations per stage (default 20)")
        p.add_argument("--eval-sample", type=int, help="F1 sample size (default 1000)")
        p.add_argument("--seed", type=int, help="random seed (required when sampling)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--reproducible", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--include-root", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--jsd-base", type=float, help="JSD log base (default 2)")
        p.add_argument("--force", action="store_true", help="allow writing into a non-empty --out")

    p_extract = sub.add_parser("extract", help="extract the oracle grammar and coverage table")
    add_common(p_extract)

    p_train = sub.add_parser("train", help="staged VB training plus per-stage evaluation")
    add_common(p_train)

    p_parse = sub.add_parser("parse", help="Viterbi-parse sentences with a grammar file")
    p_parse.add_argument("grammar", type=Path)
    p_parse.add_argument("sentences", type=Path)
    p_parse.add_argument("--out", type=Path, help="write trees here instead of stdout")

    p_eval = sub.add_parser("eval", help="score predicted trees / grammars")
    p_eval.add_argument("--gold", type=Path, required=True)
    p_eval.add_argument("--predicted", type=Path, required=True)
    p_eval.add_argument("--grammar", type=Path, help="induced grammar for JSD / log-likelihood")
    p_eval.add_argument("--oracle", type=Path, help="oracle grammar for JSD")
    p_eval.add_argument("--child-speech", type=Path)
    p_eval.add_argument("--out", type=Path, required=True)
    p_eval.add_argument("--include-root", action=argparse.BooleanOptionalAction, default=True)
    p_eval.add_argument("--jsd-base", type=float, default=2.0)
    p_eval.add_argument("--force", action="store_true")

    p_sweep = sub.add_parser("sweep", help="cross curricula with a hyperparameter grid")
    add_common(p_sweep)
    p_sweep.add_argument("--grid", type=Path, required=True, help="grid file (see README)")

    return parser


# ---------------------------------------------------------------------------
# config assembly


_CONFIG_KEYS = {
    "treebank": Path,
    "sentences": Path,
    "child_speech": Path,
    "curriculum": str,
    "s_p": float,
    "s_l": float,
    "eta": float,
    "f_m": int,
    "iterations": int,
    "eval_sample": int,
    "seed": int,
    "out": Path,
    "reproducible": bool,
    "include_root": bool,
    "jsd_base": float,
    "force": bool,
}


def _read_flat_config(path: Path) -> dict:
    values: dict = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise _UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise _UsageError(f"{path}:{lineno}: unknown key {key!r}")
        caster = _CONFIG_KEYS[key]
        if caster is bool:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            values[key] = caster(value)
    return values


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config is not None:
        values.update(_read_flat_config(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.force:
        values["force"] = True
    if "treebank" not in values:
        raise _UsageError("--treebank is required")
    if "out" not in values:
        raise _UsageError("--out is required")
    defaults = dict(
        curriculum="continuity",
        iterations=20,
        eval_sample=1000,
        reproducible=True,
        include_root=True,
        jsd_base=2.0,
        force=False,
    )
    for key, val in defaults.items():
        values.setdefault(key, val)
    if isinstance(values.get("curriculum"), Path):
        values["curriculum"] = str(values["curriculum"])
    return RunConfig(**values)


def _prepare_out_dir(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise _UsageError(
            f"output directory {out} is not empty; pass --force to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)


def _load_treebank(path: Path) -> list[Tree]:
    trees = filter_sentences(parse_trees(path.read_text(encoding="utf-8")), min_len=1)
    if not trees:
        raise StagegramError(f"no trees of length > 1 in {path}")
    return trees


def _load_sentences(path: Path) -> list[list[str]]:
    sentences = []
    for line in path.read_text(encoding="utf-8").splitlines():
        tokens = line.split()
        if tokens:
            sentences.append(tokens)
    return sentences


# ---------------------------------------------------------------------------
# extract


def _auto_coverage(trees: Sequence[Tree], forced_f: int | None):
    """Coverage rows, plus the selected f_m (largest with full coverage)."""
    if forced_f is not None:
        rows = coverage_sweep(trees, [forced_f])
        return rows, forced_f
    rows = []
    best = None
    f_m = 1
    while True:
        try:
            rows.extend(coverage_sweep(trees, [f_m]))
        except StagegramError:
            break
        if rows[-1].coverage >= 1.0:
            best = f_m
        else:
            break
        if rows[-1].productions == 0:
            break
        f_m += 1
    if best is None:
        achieved = max((r.coverage for r in rows), default=0.0)
        raise StagegramError(
            f"no frequency threshold reaches full coverage (best {achieved:.4f})"
        )
    return rows, best


def cmd_extract(cfg: RunConfig) -> int:
    _prepare_out_dir(cfg.out, cfg.force)
    trees = _load_treebank(cfg.treebank)
    rows, selected = _auto_coverage(trees, cfg.f_m)
    grammar = extract_pcfg(trees, selected)
    (cfg.out / "oracle.gr").write_text(write_grammar_file(grammar), encoding="utf-8")
    (cfg.out / "coverage.csv").write_text(coverage_csv(rows), encoding="utf-8")
    n_prod = sum(1 for _ in grammar.productions())
    print(
        f"oracle at f_m={selected}: {n_prod} productions, "
        f"{len(grammar.rules) - n_prod} lexicalisations, "
        f"{len(grammar.vocabulary())} terminals"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _sample_indices(n_total: int, size: int, seed: int | None) -> list[int]:
    if size >= n_total:
        return list(range(n_total))
    if seed is None:
        raise _UsageError("--seed is required when the evaluation set is sampled")
    return sorted(random.Random(seed).sample(range(n_total), size))


def _evaluate_stage(
    result, oracle: Grammar, gold: Sequence[Tree], cfg: RunConfig,
    child_speech: Sequence[Sequence[str]] | None,
) -> StageMetrics:
    bg = binarize(result.grammar)
    predictions = []
    for tree in gold:
        parse = viterbi_parse(bg, tree.leaves())
        predictions.append(parse.tree if parse else None)
    f1 = unlabelled_f1(gold, predictions, include_root=cfg.include_root)
    report = per_nt_jsd(oracle, result.grammar, base=cfg.jsd_base)
    loglik = None
    if child_speech is not None:
        loglik = mean_sentence_loglik(result.grammar, child_speech).mean
    return StageMetrics(
        stage=result.stage,
        f1=f1.f1,
        mean_jsd=report.mean,
        mean_loglik=loglik,
        n_parsed=result.n_parsed,
        per_nt_jsd=dict(report.per_nt),
    )


def _resolve_plan(cfg: RunConfig) -> CurriculumPlan:
    plan = load_plan(cfg.curriculum)
    return plan.with_scales(cfg.s_p, cfg.s_l, cfg.eta)


def _train_run(
    cfg: RunConfig,
    trees: Sequence[Tree],
    oracle: Grammar,
    corpus: Sequence[Sequence[str]],
    plan: CurriculumPlan,
    gold_sample: Sequence[Tree],
    child_speech,
    out_dir: Path,
) -> list[StageMetrics]:
    est_cfg = EstimatorConfig(iterations=cfg.iterations, reproducible=cfg.reproducible)
    results = run_curriculum(oracle, corpus, plan, est_cfg)
    write_stage_files(results, out_dir)
    for res in results:
        (out_dir / f"trace_stage_{res.stage}.csv").write_text(
            trace_csv(res.summary.trace, res.summary.parsed_trace), encoding="utf-8"
        )
    metrics = [
        _evaluate_stage(res, oracle, gold_sample, cfg, child_speech)
        for res in results
    ]
    write_report(metrics, out_dir)
    return metrics


def cmd_train(cfg: RunConfig) -> int:
    _prepare_out_dir(cfg.out, cfg.force)
    trees = _load_treebank(cfg.treebank)
    rows, selected = _auto_coverage(trees, cfg.f_m)
    oracle = extract_pcfg(trees, selected)
    (cfg.out / "oracle.gr").write_text(write_grammar_file(oracle), encoding="utf-8")
    (cfg.out / "coverage.csv").write_text(coverage_csv(rows), encoding="utf-8")
    corpus = (
        _load_sentences(cfg.sentences)
        if cfg.sentences is not None
        else [t.leaves() for t in trees]
    )
    child_speech = (
        _load_sentences(cfg.child_speech) if cfg.child_speech is not None else None
    )
    plan = _resolve_plan(cfg)
    sample = [trees[i] for i in _sample_indices(len(trees), cfg.eval_sample, cfg.seed)]
    metrics = _train_run(
        cfg, trees, oracle, corpus, plan, sample, child_speech, cfg.out
    )
    final = metrics[-1]
    print(
        f"{len(metrics)} stages; final F1={final.f1:.4f} "
        f"mean_jsd={final.mean_jsd:.4f}"
        + (f" mean_loglik={final.mean_loglik:.4f}" if final.mean_loglik is not None else "")
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parse


def cmd_parse(args: argparse.Namespace) -> int:
    grammar = normalize(parse_grammar_file(args.grammar.read_text(encoding="utf-8")))
    bg = binarize(grammar)
    sentences = _load_sentences(args.sentences)
    lines = []
    failures = 0
    for sentence in sentences:
        parse = viterbi_parse(bg, sentence)
        if parse is None:
            failures += 1
            lines.append(f"({NOPARSE_LABEL} {' '.join(sentence)})")
        else:
            lines.append(parse.tree.to_bracketed())
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not sentences:
        print("warning: no sentences in input", file=sys.stderr)
    print(f"parsed {len(sentences) - failures}/{len(sentences)} sentences", file=sys.stderr)
    return EXIT_OK


def read_predictions(text: str) -> list[Tree | None]:
    """Parse a predictions file; NOPARSE sentinels come back as None."""
    out: list[Tree | None] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith(f"({NOPARSE_LABEL} ") or stripped == f"({NOPARSE_LABEL})":
            out.append(None)
        else:
            out.append(parse_trees(stripped)[0])
    return out


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    _prepare_out_dir(args.out, args.force)
    gold = parse_trees(args.gold.read_text(encoding="utf-8"))
    predicted = read_predictions(args.predicted.read_text(encoding="utf-8"))
    f1 = unlabelled_f1(gold, predicted, include_root=args.include_root)
    payload: dict = {
        "f1": f1.f1,
        "precision": f1.precision,
        "recall": f1.recall,
        "matched": f1.matched,
        "gold_brackets": f1.gold,
        "predicted_brackets": f1.predicted,
    }
    induced = None
    if args.grammar is not None:
        induced = parse_grammar_file(args.grammar.read_text(encoding="utf-8"))
    if induced is not None and args.oracle is not None:
        oracle = parse_grammar_file(args.oracle.read_text(encoding="utf-8"))
        report = per_nt_jsd(oracle, induced, base=args.jsd_base)
        payload["mean_jsd"] = report.mean
        payload["jsd_per_nt"] = dict(sorted(report.per_nt.items()))
    if induced is not None and args.child_speech is not None:
        loglik = mean_sentence_loglik(
            normalize(induced), _load_sentences(args.child_speech)
        )
        payload["mean_loglik"] = loglik.mean
        payload["loglik_scored"] = loglik.scored
        payload["loglik_skipped"] = loglik.skipped
    import json

    (args.out / "eval.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"F1={f1.f1:.4f} (P={f1.precision:.4f} R={f1.recall:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _read_grid(path: Path) -> dict:
    grid = {"curricula": ["continuity"], "s_p": [0.0], "s_l": [0.0], "eta": [0.0]}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise _UsageError(f"{path}:{lineno}: expected 'key = values'")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        items = value.split()
        if not items:
            raise _UsageError(f"{path}:{lineno}: empty value list")
        if key == "curricula":
            grid["curricula"] = items
        elif key in ("s_p", "s_l", "eta"):
            grid[key] = [float(v) for v in items]
        else:
            raise _UsageError(f"{path}:{lineno}: unknown grid key {key!r}")
    return grid


def _slug(value: float) -> str:
    return repr(value).replace(".", "p").replace("-", "m")


def cmd_sweep(cfg: RunConfig, grid_path: Path) -> int:
    _prepare_out_dir(cfg.out, cfg.force)
    grid = _read_grid(grid_path)
    trees = _load_treebank(cfg.treebank)
    rows, selected = _auto_coverage(trees, cfg.f_m)
    oracle = extract_pcfg(trees, selected)
    (cfg.out / "oracle.gr").write_text(write_grammar_file(oracle), encoding="utf-8")
    corpus = (
        _load_sentences(cfg.sentences)
        if cfg.sentences is not None
        else [t.leaves() for t in trees]
    )
    child_speech = (
        _load_sentences(cfg.child_speech) if cfg.child_speech is not None else None
    )
    sample = [trees[i] for i in _sample_indices(len(trees), cfg.eval_sample, cfg.seed)]

    combos = list(itertools.product(grid["s_l"], grid["s_p"], grid["eta"]))
    results: dict[tuple, dict] = {}
    failures: list[str] = []
    sweep_lines = ["curriculum,s_l,s_p,eta,f1,loglik,mean_jsd"]
    for name in grid["curricula"]:
        base_plan = load_plan(name)
        for s_l, s_p, eta in combos:
            cell = f"{name}__sl{_slug(s_l)}_sp{_slug(s_p)}_eta{_slug(eta)}"
            cell_dir = cfg.out / cell
            plan = base_plan.with_scales(s_p=s_p, s_l=s_l, eta=eta)
            try:
                metrics = _train_run(
                    cfg, trees, oracle, corpus, plan, sample, child_speech, cell_dir
                )
            except StagegramError as exc:
                failures.append(f"{cell}: {exc}")
                continue
            final = metrics[-1]
            results[(name, s_l, s_p, eta)] = {
                "f1": final.f1,
                "loglik": final.mean_loglik,
                "jsd": final.mean_jsd,
            }
            loglik_txt = (
                f"{final.mean_loglik:.17g}" if final.mean_loglik is not None else ""
            )
            sweep_lines.append(
                f"{name},{s_l:.17g},{s_p:.17g},{eta:.17g},"
                f"{final.f1:.17g},{loglik_txt},{final.mean_jsd:.17g}"
            )
    (cfg.out / "sweep.csv").write_text("\n".join(sweep_lines) + "\n", encoding="utf-8")

    if len(grid["curricula"]) == 2:
        first, second = grid["curricula"]
        wilcoxon_lines = ["metric,n,statistic,p_value,rank_biserial,median_diff,alternative"]
        for metric, alternative in (
            ("f1", "a_greater"),
            ("loglik", "a_greater"),
            ("jsd", "b_greater"),
        ):
            pairs = []
            for combo in combos:
                a = results.get((first, *combo))
                b = results.get((second, *combo))
                if a is None or b is None or a[metric] is None or b[metric] is None:
                    continue
                pairs.append((a[metric], b[metric]))
            if len(pairs) < 5:
                continue
            try:
                res = wilcoxon_signed_rank(pairs, alternative=alternative)
            except StagegramError as exc:
                failures.append(f"wilcoxon[{metric}]: {exc}")
                continue
            wilcoxon_lines.append(
                f"{metric},{res.n},{res.statistic:.17g},{res.p_value:.17g},"
                f"{res.rank_biserial:.17g},{res.median_difference:.17g},{alternative}"
            )
        (cfg.out / "wilcoxon.csv").write_text(
            "\n".join(wilcoxon_lines) + "\n", encoding="utf-8"
        )

    if failures:
        (cfg.out / "failures.txt").write_text("\n".join(failures) + "\n", encoding="utf-8")
        print(f"{len(failures)} grid cell(s) failed; see failures.txt", file=sys.stderr)
    print(f"swept {len(results)} configurations over {len(grid['curricula'])} curricula")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "extract":
            return cmd_extract(_build_run_config(args))
        if args.command == "train":
            return cmd_train(_build_run_config(args))
        if args.command == "parse":
            return cmd_parse(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "sweep":
            return cmd_sweep(_build_run_config(args), args.grid)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CurriculumError as exc:
        print(f"pipeline abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StagegramError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
