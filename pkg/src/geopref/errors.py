"""Exception hierarchy for geopref.

Every error raised by the package derives from GeoprefError so callers can
catch the whole family with one clause.  Input-validation problems and
numerical failures get distinct classes because the command line maps them
to different exit codes.
"""


class GeoprefError(Exception):
    """Base class for all geopref errors."""


class DimensionMismatch(GeoprefError):
    """Array shapes are inconsistent (weights vs. kernel rows, etc.)."""


class NotAProbabilityVector(GeoprefError):
    """A weight vector has negative entries or does not sum to one."""


class NegativeKernelEntry(GeoprefError):
    """An attractiveness matrix contains a negative entry."""


class ZeroKernelRow(GeoprefError):
    """An attractiveness matrix has a non-positive entry where positivity
    is required for the equilibrium solve."""


class DegenerateMass(GeoprefError):
    """A location carries zero newcomer mass where positive mass is required."""


class ParameterOutOfRange(GeoprefError):
    """A scalar parameter lies outside its admissible range."""


class BoundaryPoint(GeoprefError):
    """A simplex point has a zero or negative coordinate where interior
    points are required (logarithms would diverge)."""


class NonConvergence(GeoprefError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class NoSignChange(GeoprefError):
    """A bracketing root finder found no sign change over its interval."""


class QuadratureFailure(GeoprefError):
    """Numerical integration did not reach the requested tolerance."""


class DensitySamplingFailure(GeoprefError):
    """A density could not be turned into a usable sampler (non-finite
    values, vanishing total mass, ...)."""


class ZeroAttractiveness(GeoprefError):
    """Total attachment weight at a newcomer location is zero, so no
    target can be drawn."""


class EmptyGraph(GeoprefError):
    """An operation that needs at least one vertex saw an empty graph."""


class EmptyHistogram(GeoprefError):
    """A degree histogram with no counts was passed where data is required."""


class DegreeBelowM(GeoprefError):
    """A degree below the out-degree m was passed to the limiting law,
    which has no mass there."""


class WrongPhase(GeoprefError):
    """A fitness-model operation was invoked in the phase where it is
    undefined."""


class IntervalOutOfRange(GeoprefError):
    """An interval is not contained in the support of the fitness
    distribution."""


class CouplingViolation(GeoprefError):
    """The coarse process overtook the fine process: some cell's coarse
    edge-end count exceeded the fine count.  Records where it happened."""

    def __init__(self, step: int, cell: int, coarse: int, fine: int):
        self.step = step
        self.cell = cell
        self.coarse = coarse
        self.fine = fine
        super().__init__(
            f"domination failed at step {step}, cell {cell}: "
            f"coarse edge-ends {coarse} > fine edge-ends {fine}"
        )


class ConfigError(GeoprefError):
    """An experiment configuration file is malformed.  The message names
    the offending key path."""
