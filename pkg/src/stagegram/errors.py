"""Exception hierarchy shared across the toolkit."""


class StagegramError(Exception):
    """Base class for all toolkit errors."""


class GrammarError(StagegramError):
    """Malformed grammar content or grammar file."""


class TreebankError(StagegramError):
    """Malformed bracketed-tree input or inconsistent treebank."""


class ChartError(StagegramError):
    """Chart operation called outside its contract (e.g. on an unparsed chart)."""


class EstimationError(StagegramError):
    """Estimation cannot proceed (e.g. no sentence in the corpus parses)."""


class CurriculumError(StagegramError):
    """Invalid stage plan, unassignable rules, or an aborted stage."""


class EvalError(StagegramError):
    """Invalid evaluation input (mismatched yields, bad probability vectors, ...)."""
