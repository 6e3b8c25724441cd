"""
Exception hierarchy for the simulation engine.
"""
from typing import Optional


class SimulationError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(SimulationError, ValueError):
    """Unsupported geometry, operator power or model specification."""


class DomainError(SimulationError, ValueError):
    """A spatial point lies outside the closed domain."""


class PreconditionError(SimulationError, ValueError):
    """A diagnostic was called outside its documented preconditions."""


class HistoryUnderflowError(SimulationError):
    """Interpolation requested below the stored history coverage."""

    def __init__(self, t: float, earliest: float):
        self.t = t
        self.earliest = earliest
        super().__init__(f"history underflow: t={t:.12g} < earliest={earliest:.12g}")


class ContractViolationError(SimulationError):
    """A delay law produced a value outside [0, h]."""

    def __init__(self, t: float, term: int, value: float, horizon: float):
        self.t = t
        self.term = term
        self.value = value
        self.horizon = horizon
        super().__init__(
            f"delay term {term} returned tau={value:.12g} outside [0, {horizon:.12g}] at t={t:.12g}"
        )


class BlowUpError(SimulationError):
    """The state stopped being finite."""

    def __init__(self, t: Optional[float] = None, step: Optional[int] = None, detail: str = ''):
        self.t = t
        self.step = step
        message = 'non-finite state'
        if t is not None:
            message += f' at t={t:.12g}'
        if step is not None:
            message += f' (step {step})'
        if detail:
            message += f': {detail}'
        super().__init__(message)


class InsufficientDataError(SimulationError):
    """Too few samples for a statistical estimate."""


class RootFindingError(SimulationError):
    """Newton iteration failed to converge."""

    def __init__(self, seed: complex, iterations: int, residual: float):
        self.seed = seed
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Newton did not converge from seed {seed!r} after {iterations} iterations "
            f"(|residual|={residual:.3e})"
        )
