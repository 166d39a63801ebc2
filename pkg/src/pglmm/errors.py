"""Exception hierarchy shared across the package."""


class PglmmError(Exception):
    """Base class for every error raised by pglmm."""


# -- model specification / data --------------------------------------------

class SpecError(PglmmError, ValueError):
    """Invalid model specification or input table."""


class MissingColumn(SpecError):
    def __init__(self, name):
        super().__init__(f"column {name!r} not found in data")
        self.name = name


class NonBinaryOutcome(SpecError):
    pass


class EmptyClusteringBlock(SpecError):
    pass


class DanglingRandomEffect(SpecError):
    pass


class NonFiniteValue(SpecError):
    def __init__(self, row, col):
        super().__init__(f"non-finite value at row {row}, column {col!r}")
        self.row = row
        self.col = col


# -- numerics ---------------------------------------------------------------

class NumericalError(PglmmError, ArithmeticError):
    """A sampler or linear-algebra step failed."""


class NotPositiveDefinite(NumericalError):
    pass


class RankDeficientBlock(NumericalError):
    pass


class AllZeroWeights(NumericalError):
    pass


class EigSolverFailure(NumericalError):
    pass


class DofTooSmall(PglmmError, ValueError):
    pass


class NonPositiveAlpha(PglmmError, ValueError):
    pass


class SamplerError(NumericalError):
    """A Gibbs block failed; carries the sweep index where it happened."""

    def __init__(self, iteration, cause):
        super().__init__(f"sampler failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


# -- post-processing / prediction / artifacts ------------------------------

class EmptyRepresentativeCluster(PglmmError, RuntimeError):
    pass


class DimensionMismatch(PglmmError, ValueError):
    pass


class UnknownCategory(PglmmError, ValueError):
    pass


class ArtifactMismatch(PglmmError):
    """A stored artifact does not match the model spec or priors it is used with."""
