"""Exception hierarchy. Every error raised on purpose by the package derives
from :class:`CnsflowError` so the CLI can report it and exit nonzero."""


class CnsflowError(Exception):
    pass


class ConfigError(CnsflowError, ValueError):
    pass


class DomainTooSmallError(CnsflowError):
    """Vorticity reaches the edge of the truncated plane."""

    def __init__(self, ratio: float, limit: float, fraction: float):
        self.ratio = ratio
        self.limit = limit
        self.fraction = fraction
        super().__init__(
            f"domain too small: largest boundary cell is {ratio:.3e} of the peak "
            f"(limit {limit:.1e}), boundary mass fraction {fraction:.3e}; increase L"
        )


class DegenerateStateError(CnsflowError):
    """Cauchy-Schwarz near-equality: the multiplier system is singular."""


class StepSizeError(CnsflowError):
    pass


class ConvergenceError(CnsflowError):
    pass


class ParticleDomainError(CnsflowError):
    pass
