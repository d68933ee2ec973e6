"""Exception hierarchy shared by the numerical modules and the CLI."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple


class CatAmpError(Exception):
    """Base class; `exit_code` is what the CLI returns for an uncaught instance."""

    exit_code: int = 3


class InvalidDimensionError(CatAmpError, ValueError):
    pass


class ShapeError(CatAmpError, ValueError):
    pass


class TruncationError(CatAmpError, ValueError):
    """The truncated Fock space is too small for the requested state or operation."""

    def __init__(self, message: str, required_dim: Optional[int] = None):
        if required_dim is not None:
            message = f"{message} (hint: cavity_dim >= {required_dim})"
        super().__init__(message)
        self.required_dim = required_dim


class UnitarityError(TruncationError):
    pass


class UndefinedStateError(CatAmpError, ValueError):
    pass


class BracketError(CatAmpError, RuntimeError):
    """Fidelity maximum sits on the edge of the search interval."""

    def __init__(self, message: str, curve: Sequence[Tuple[float, float]] = ()):
        dump = ", ".join(f"({g:.3f}, {f:.6f})" for g, f in list(curve)[:: max(1, len(curve) // 12)])
        super().__init__(f"{message}; curve sample: [{dump}]" if curve else message)
        self.curve = list(curve)


class ContractError(CatAmpError, ValueError):
    pass


class ScheduleError(CatAmpError, ValueError):
    pass


class StiffnessError(CatAmpError, RuntimeError):
    pass


class IntegrationDivergedError(CatAmpError, RuntimeError):
    pass


class ScenarioConfigError(CatAmpError, ValueError):
    exit_code = 2
