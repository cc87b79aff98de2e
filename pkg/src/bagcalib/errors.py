"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BagcalibError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BagcalibError):
    """Array shapes or lengths are inconsistent."""


class ZeroVarianceColumn(BagcalibError):
    """A data column is constant and cannot be standardized."""

    def __init__(self, index: int, name: str | None = None):
        self.index = index
        self.name = name
        label = f"{index}" if name is None else f"{index} ({name})"
        super().__init__(f"column {label} has zero variance")


class NotSymmetric(BagcalibError):
    """Matrix asymmetry exceeds the tolerance of the symmetric eigensolver."""


class NoConvergence(BagcalibError):
    """An iterative solver failed to converge."""


class DegenerateWeights(BagcalibError):
    """Weight vector has fewer than two positive entries or negative entries."""


class OutOfRange(BagcalibError):
    """A scalar argument is outside its valid range."""


class InfeasibleSize(BagcalibError):
    """Requested sample size exceeds the number of eligible items."""


class SingularSystem(BagcalibError):
    """Calibration system is rank deficient under the error policy."""


class AllIterationsFailed(BagcalibError):
    """Every bagging iteration produced a singular calibration system."""


class ZeroMean(BagcalibError):
    """Coefficient of variation is undefined for a zero mean."""


class ZeroTotal(BagcalibError):
    """Relative metrics are undefined for a zero true total."""


class InsufficientRuns(BagcalibError):
    """Monte Carlo dispersion metrics need at least two runs."""


class InfeasibleSpec(BagcalibError):
    """Synthetic population spec cannot meet its declared targets."""


class ParseError(BagcalibError):
    """CSV input is malformed."""

    def __init__(self, line: int, column: str | int | None, message: str):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class NonNumericCell(ParseError):
    """A data cell could not be parsed as a number."""


class DuplicateUnitId(BagcalibError):
    """Two rows share the same unit identifier."""

    def __init__(self, unit_id: str):
        self.unit_id = unit_id
        super().__init__(f"duplicate unit id {unit_id!r}")
