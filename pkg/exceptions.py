"""
Error types shared across the search engine
"""


class SearchError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(SearchError):
    """Configuration document is malformed or names unknown keys"""


class ParseError(SearchError):
    """Genotype document is not well-formed"""


class InvalidGenotype(SearchError):
    """Genotype is well-formed but violates its invariants"""

    def __init__(self, report):
        self.report = report
        details = "; ".join(str(v) for v in report.violations)
        super().__init__(f"invalid genotype: {details}")


class DegenerateArchitecture(SearchError):
    """Flattened architecture has no source-to-sink path"""


class EvaluationFailure(SearchError):
    """Fitness evaluation could not produce a value"""


class NumericFailure(EvaluationFailure):
    """Non-finite values appeared during execution"""


class SpatialUnderflow(SearchError):
    """Stride-2 reductions would shrink feature maps below one pixel"""


class IncompatibleCheckpoint(SearchError):
    """Checkpoint cannot be resumed by this version or configuration"""
