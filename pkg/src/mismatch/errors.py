"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about
"bad input or unattainable request" can catch a single type.
"""


class ChannelError(ValueError):
    """Malformed channel, metric or input distribution."""


class ConfigError(ValueError):
    """A configuration file could not be parsed."""


class DegenerateStatisticError(ValueError):
    """The information density has zero variance under the tilted law."""


class SingularTripleError(ValueError):
    """The triple violates the nonsingularity or regularity assumption."""


class StateSpaceTooLarge(ValueError):
    """An exact computation would exceed its state budget."""


class DivergentPrefactorError(ValueError):
    """An asymptotic prefactor diverges at the requested rate."""


class TargetUnreachable(ValueError):
    """No rate in the search interval meets the target error probability."""


class RejectionRateTooHigh(ValueError):
    """Rejection sampling of constrained codewords accepts too rarely."""


class InfeasibleEnsemble(ValueError):
    """A cost-constrained ensemble has an empty or invalid constraint set."""
