"""Exception types shared across the engine.

The CLI maps these onto distinct exit codes, so raising the right class is
part of the external contract.
"""


class LsmeError(Exception):
    """Base class for engine errors."""


class ConfigurationError(LsmeError):
    """A request that cannot be satisfied: empty instance list, too few
    categories or scenes for the requested episode shape, bad flag values."""


class PlacementInfeasibleError(LsmeError):
    """Rejection sampling could not place objects under the margin constraint
    within the attempt cap."""


class DataIntegrityError(LsmeError):
    """Inputs are present but inconsistent: missing embedding keys, blob size
    mismatches, low-shot objects inside base scenes."""


class ObjectNotVisibleError(DataIntegrityError):
    """An object has no view passing the visibility threshold where one is
    required."""


class UndefinedMetricError(LsmeError):
    """A metric has no defined value for an episode (e.g. zero eligible
    query predictions)."""
