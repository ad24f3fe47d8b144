"""Exception hierarchy shared by the library, the service and the CLI.

Process exit codes (and HTTP mapping in the service) follow one table:
format/IO problems exit 2, shape/parameter/validation problems exit 3,
internal assertion failures exit 1.
"""


class LogitGraphError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class FormatError(LogitGraphError):
    """Malformed tensor file: bad magic, bad header fields, wrong payload size."""

    exit_code = 2


class IoError(LogitGraphError):
    """Filesystem problem: unreadable or unwritable path."""

    exit_code = 2


class ValidationError(LogitGraphError):
    """Semantically invalid values: NaN/Inf entries, non-row-stochastic input."""

    exit_code = 3


class ParameterError(LogitGraphError):
    """Invalid scalar parameter: k = 0, empty rows, out-of-range sample index."""

    exit_code = 3


class ShapeError(LogitGraphError):
    """Incompatible array shapes between operands."""

    exit_code = 3


class EmptySelectionError(LogitGraphError):
    """Sparse selection ended up with zero retained dimensions."""

    exit_code = 3


class SweepFailure(LogitGraphError):
    """A verification sweep found a violated invariant (internal assertion)."""

    exit_code = 1
