"""Exception hierarchy shared by all facetsep modules.

Two families matter to callers: ``InputError`` (bad files, bad parameters,
exit code 2 on the CLI) and ``AlgorithmError`` (the separation itself failed,
exit code 3).  ``AlgorithmError.step`` is filled in by the pipeline driver so
the failing stage can be named.
"""


class FacetsepError(Exception):
    """Base class for every error raised by this package."""


class InputError(FacetsepError):
    """Invalid user input: malformed files, out-of-range parameters."""


class MatrixFormatError(InputError):
    """CSV matrix is ragged or contains a non-numeric field."""


class ParameterError(InputError):
    """A configuration value is out of its admissible range."""


class UnsupportedDimensionError(InputError):
    """Operation only defined for a specific ambient dimension."""


class AlgorithmError(FacetsepError):
    """A pipeline stage failed on admissible input."""

    def __init__(self, *args):
        super().__init__(*args)
        self.step: str | None = None


class AllColumnsFilteredError(AlgorithmError):
    """Preprocessing removed every column; the norm threshold is too large."""


class GeometryError(AlgorithmError):
    """The point configuration violates the geometric assumptions."""


class DegenerateInputError(GeometryError):
    """Points are affinely dependent; carries the achieved affine rank."""

    def __init__(self, message, affine_rank: int):
        super().__init__(message)
        self.affine_rank = affine_rank


class UnderdeterminedFacetError(AlgorithmError):
    """A facet group does not span enough directions to fit a plane."""


class InsufficientFacetsError(AlgorithmError):
    """Fewer planes than mixtures survived selection; carries the count."""

    def __init__(self, message, accepted: int):
        super().__init__(message)
        self.accepted = accepted


class DegenerateIntersectionError(AlgorithmError):
    """Selected planes are numerically coplanar; no unique intersection."""


class NonConicSolutionError(AlgorithmError):
    """A recovered vertex lies outside the nonnegative orthant."""


class ConvergenceError(AlgorithmError):
    """An iterative solver hit its iteration cap; carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DenoiseTooAggressiveError(AlgorithmError):
    """Level-set extraction returned no points; the threshold is too small."""
