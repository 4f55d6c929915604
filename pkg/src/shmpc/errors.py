"""Exception types shared across the toolkit."""


class ShmpcError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(ShmpcError):
    """Operands live in incompatible spaces."""


class EmptySetError(ShmpcError):
    """A constructed set has no points."""


class UnboundedSetError(ShmpcError):
    """An operation required a bounded set (or bounded support) and got none."""


class NotCertified(ShmpcError):
    """A containment certificate LP was infeasible.

    The encodings used here are sufficient conditions only, so this means
    "not certified", not "proved disjoint".
    """


class ConvergenceError(ShmpcError):
    """An iterative computation hit its cap before meeting tolerance."""


class DegenerateDisturbance(ShmpcError):
    """The disturbance zonotope is not full-dimensional, so the scaled-sum
    RPI criterion can never hold; use the reduced construction instead."""


class InvalidSplit(ShmpcError):
    """split() was asked to split a unit interval or with an out-of-range cut."""


class NoSplittable(ShmpcError):
    """All blocking intervals have length one; nothing can be split."""


class HorizonExhausted(ShmpcError):
    """advance() called with one step (or less) of horizon remaining."""


class MissingStage(ShmpcError):
    """The stage cache lacks a block length required by the current blocking."""


class InfeasibleProblem(ShmpcError):
    """A QP or LP reported primal infeasibility."""


class RecursiveFeasibilityViolation(ShmpcError):
    """The QP became infeasible at k > 0.

    Under the blocking update and warm start this is impossible by theory, so
    it indicates a bug or a numerically broken problem; abort loudly.
    """


class SolverNotConverged(ShmpcError):
    """The QP solver hit its iteration cap."""


class SamplingExhausted(ShmpcError):
    """Rejection sampling failed to find a feasible point within the attempt cap."""
