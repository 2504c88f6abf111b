"""Exception types shared across the toolkit."""


class SimulationError(Exception):
    """Base class for all critsense failures."""


class EigensolveError(SimulationError):
    """Iterative eigensolver failed to converge; message carries the residual."""


class DegenerateGroundStateError(SimulationError):
    """Ground state is (numerically) degenerate, derivative quantities undefined."""


class ScheduleError(SimulationError):
    """Schedule synthesis failed (vanishing gap or invalid range)."""


class EvolutionError(SimulationError):
    """Time evolution violated a conservation guard (norm/trace/positivity)."""


class ProbabilityError(SimulationError):
    """Measurement probabilities failed a sanity check (sum rule)."""
