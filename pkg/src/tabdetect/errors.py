"""Exception hierarchy shared across the package.

Everything user-facing derives from TabDetectError so the CLI can map
data problems to a single exit code.
"""


class TabDetectError(Exception):
    """Base class for all package errors."""


class IoError(TabDetectError):
    """File could not be read or written."""


class IngestError(TabDetectError):
    """Malformed input: ragged rows, empty files, missing headers."""


class ShapeError(TabDetectError):
    """Row length or tensor shape mismatch."""


class KindError(TabDetectError):
    """Cell value conflicts with the declared column kind."""


class SchemaMismatch(TabDetectError):
    """A synthetic table's schema differs from its real counterpart."""


class ConfigError(TabDetectError):
    """Experiment config rejected; message names the offending key."""


class MissingCellError(TabDetectError):
    """A missing cell reached a stage that requires complete rows."""


class EmptyTableError(TabDetectError):
    """Operation needs at least a minimum number of rows."""


class VocabError(TabDetectError):
    """Vocabulary construction failed (e.g. empty corpus)."""


class CodecMismatch(TabDetectError):
    """Row encoded with a codec fitted on a different table."""


class SingleClassError(TabDetectError):
    """Training or metric computation requires both classes present."""


class FeatureSpaceMismatch(TabDetectError):
    """Input features do not match the space the model was trained on."""


class GraphError(TabDetectError):
    """Autodiff graph misuse (e.g. backward called twice)."""


class UnknownGenerator(TabDetectError):
    """Setup references a generator id absent from the pool."""


class TooFewGroups(TabDetectError):
    """Grouped folding needs at least k distinct table ids."""
