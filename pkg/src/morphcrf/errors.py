"""Exception hierarchy shared across the package.

ConfigError maps to CLI exit code 2 (usage / configuration problems); every
other TaggerError maps to exit code 1 (runtime failure).
"""


class TaggerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TaggerError):
    """A run was requested with invalid or missing configuration."""


class DimensionError(TaggerError):
    """Operand shapes are incompatible with the requested primitive."""


class GraphError(TaggerError):
    """The autodiff graph was used outside its contract."""


class NonFiniteGradient(TaggerError):
    """A gradient contained NaN or Inf; training must abort."""

    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient in parameter '{param_name}'")
        self.param_name = param_name


class LookupIndexError(TaggerError):
    """An embedding index fell outside the vocabulary range."""


class SchemaError(TaggerError):
    """Feature schema construction or use failed."""


class DictionaryError(TaggerError):
    """The value-to-dimension dictionary file is malformed."""


class ConlluParseError(TaggerError):
    """A CoNLL-U file violated the 10-column format."""


class ClusterError(TaggerError):
    """A language cluster definition or its corpora are unusable."""


class AlignmentError(TaggerError):
    """Gold and predicted corpora do not align token by token."""


class CheckpointError(TaggerError):
    """A checkpoint could not be written, read, or matched to its data."""
