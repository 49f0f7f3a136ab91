from typing import Any, Dict


class SpeclocError(RuntimeError):
    """Raised when a spectral computation can't be completed."""

    module = "specloc"
    exit_code = 2

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details: Dict[str, Any] = details

    def describe(self) -> str:
        parts = [f"error={type(self).__name__}", f"module={self.module}", f"message={self}"]
        for key in sorted(self.details):
            parts.append(f"{key}={self.details[key]}")
        return " ".join(parts)


class ArgumentError(SpeclocError, ValueError):
    """Raised when the caller asked for something ill-posed."""

    exit_code = 1


class ConfigError(ArgumentError):
    """Raised when an environment override can't be interpreted"""

    module = "config"


# ---------- polyalg ----------

class NonConvergence(SpeclocError):
    module = "polyalg"


class RootNotSimple(SpeclocError):
    module = "polyalg"


class RadiusTooLarge(SpeclocError):
    module = "polyalg"


class NoSolution(SpeclocError):
    """The C-identity system is inconsistent: p is off the QES locus."""

    module = "polyalg"


# ---------- oscillator ----------

class InvalidParams(ArgumentError):
    module = "oscillator"


class AdjacentSectors(ArgumentError):
    module = "oscillator"


class NotNormalized(ArgumentError):
    module = "oscillator"


class RayNotRecessive(ArgumentError):
    module = "oscillator"


# ---------- shooting ----------

class BranchAmbiguous(SpeclocError):
    module = "shooting"


class StepFailure(SpeclocError):
    module = "shooting"


class NotSymmetric(SpeclocError):
    module = "shooting"


# ---------- spectrum ----------

class ContourThroughZero(SpeclocError):
    module = "spectrum"


class SubdivisionLimit(SpeclocError):
    module = "spectrum"


class BoundaryZero(SpeclocError):
    module = "spectrum"


class PhaseNotReal(SpeclocError):
    """The eigenfunction can't be rotated to a real function on the real axis."""

    module = "spectrum"


# ---------- locus ----------

class SingularPoint(SpeclocError):
    module = "locus"


class CorrectorDiverged(SpeclocError):
    module = "locus"


# ---------- qes ----------

class DegenerateEigenvalue(SpeclocError):
    module = "qes"


class WronskianNotConstant(SpeclocError):
    module = "qes"


class Collision(SpeclocError):
    module = "qes"


class BranchTrackingLost(SpeclocError):
    module = "qes"


# ---------- tables ----------

class TableFormatError(ArgumentError):
    """Raised when we can't interpret an emitted table"""

    module = "tables"
