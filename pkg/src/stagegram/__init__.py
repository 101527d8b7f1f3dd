"""stagegram: staged (curriculum-driven) PCFG induction toolkit.

Extract an oracle grammar from a bracketed treebank, re-estimate its rule
probabilities from raw sentences with inside-outside Variational Bayes,
schedule rule availability through developmental stage plans with
cross-stage pseudocount transfer, and score the induced grammars with
unlabelled bracketing F1, per-nonterminal Jensen-Shannon divergence, and
mean length-normalized sentence log-likelihood.
"""

from ._backend import backend_name
from .chart import (
    Chart,
    CountVector,
    ViterbiParse,
    enumerate_parses,
    expected_counts,
    inside,
    outside,
    viterbi_parse,
)
from .curriculum import (
    CurriculumPlan,
    Stage,
    StageAssignment,
    StageResult,
    assign_rules,
    load_plan,
    load_stage_config,
    run_curriculum,
    transfer_pseudocounts,
)
from .errors import (
    ChartError,
    CurriculumError,
    EstimationError,
    EvalError,
    GrammarError,
    StagegramError,
    TreebankError,
)
from .estimate import (
    EstimatorConfig,
    PosteriorSummary,
    digamma,
    posterior_mean,
    run_em,
    run_vb,
    uniform_weights,
)
from .evaluation import (
    F1Result,
    JsdReport,
    LoglikReport,
    StageMetrics,
    WilcoxonResult,
    jsd,
    mean_sentence_loglik,
    per_nt_jsd,
    unlabelled_f1,
    wilcoxon_signed_rank,
    write_report,
)
from .grammar import (
    BinarizedGrammar,
    Grammar,
    GrammarDiagnostics,
    Rule,
    SymbolTable,
    WeightedRule,
    binarize,
    normalize,
    parse_grammar_file,
    validate,
    write_grammar_file,
)
from .treebank import (
    BracketSet,
    Tree,
    coverage_sweep,
    extract_pcfg,
    filter_sentences,
    parse_trees,
    tree_to_brackets,
)

__version__ = "0.1.0"
