"""Exception hierarchy shared across the package.

Each class maps to one process exit status so batch runs can be triaged
from CI logs without parsing tracebacks: usage/configuration problems
exit 1, numerical or physicality failures exit 2, and verification
failures (closed-form checks not met by simulation) exit 3.
"""


class DuallinkError(Exception):
    """Base class; never raised directly."""

    exit_status = 1


class UsageError(DuallinkError):
    """Bad arguments, malformed configuration, or violated preconditions."""

    exit_status = 1


class NumericalError(DuallinkError):
    """Quadrature non-convergence, aliasing guards, or grid misconfiguration."""

    exit_status = 2


class PhysicalityError(NumericalError):
    """A computed state violates physical constraints (uncertainty, eta > 1)."""

    exit_status = 2


class VerificationError(DuallinkError):
    """Simulation disagrees with closed forms beyond the allowed deviation."""

    exit_status = 3


class DataIntegrityError(DuallinkError):
    """Persisted ensemble data fails checksum, schema, or range validation."""

    exit_status = 1
