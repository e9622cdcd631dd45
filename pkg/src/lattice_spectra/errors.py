"""Exception hierarchy.

Every error records the module and operation that raised it so the CLI can
report failures as ``module.operation: message``.
"""

from __future__ import annotations


class LatticeSpectraError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for this failure."""

    exit_code = 2

    def __init__(self, message: str, *, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class InputError(LatticeSpectraError):
    """Bad user input (geometry, configuration); CLI exit code 1."""

    exit_code = 1


class NumericalError(LatticeSpectraError):
    """A computation failed to meet its contract; CLI exit code 2."""

    exit_code = 2


# geometry
class DegenerateLattice(InputError):
    pass


class Unsupported(InputError):
    pass


class OverlapError(InputError):
    pass


# lattice_sums
class AlphaZero(InputError):
    pass


class NoConvergence(NumericalError):
    pass


# capacitance
class SingularPotential(NumericalError):
    pass


class QuadratureResidue(NumericalError):
    pass


class CoverageError(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


# spectra
class NotSymmetric(NumericalError):
    pass


class EmptySpectrum(InputError):
    pass


class ResolutionError(InputError):
    pass


class BandEdge(NumericalError):
    pass


class BinMismatch(InputError):
    pass


class SizeMismatch(InputError):
    pass


# cli
class ParseError(InputError):
    def __init__(self, message: str, *, line: int | None = None, where: str = "cli.parse_config"):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, where=where)


class ValidationError(InputError):
    def __init__(self, key: str, message: str, *, where: str = "cli.parse_config"):
        self.key = key
        super().__init__(f"{key}: {message}", where=where)
