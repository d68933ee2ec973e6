"""
Wigner functions of cavity states by displaced parity.

W(beta) = (2/pi) Tr[rho D(beta) P D(beta)^dagger] with beta = x + i p, so a
coherent state |alpha> peaks at x = Re(alpha), p = Im(alpha) and the grid
integral of W over dx dp is one.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import expm

from .config_loader import get_reference_defaults, get_worker_count
from .errors import ShapeError, UnitarityError
from .hilbert import CAVITY_ONLY, DensityOp, FockKet, OpMatrix, as_density

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-8
MAX_PADDED_DIM = 400


def _wigner_defaults() -> dict:
    return get_reference_defaults().get("wigner", {})


class WignerGridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    x_min: float = Field(default_factory=lambda: float(_wigner_defaults().get("x_min", -4.0)))
    x_max: float = Field(default_factory=lambda: float(_wigner_defaults().get("x_max", 4.0)))
    points: int = Field(default_factory=lambda: int(_wigner_defaults().get("points", 81)), ge=2)

    @model_validator(mode="after")
    def _check_range(self) -> "WignerGridSpec":
        if self.x_max <= self.x_min:
            raise ValueError(f"empty Wigner range [{self.x_min}, {self.x_max}]")
        return self

    def axis(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)


@dataclass(frozen=True)
class WignerGrid:
    """values[i, j] = W(x_axis[j], p_axis[i])."""

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray
    convention: str = "beta = x + i p; W = (2/pi) Tr[rho D P D^dagger]"

    def integral(self) -> float:
        dx = self.x_axis[1] - self.x_axis[0]
        dp = self.p_axis[1] - self.p_axis[0]
        return float(self.values.sum() * dx * dp)

    def value_at(self, x: float, p: float) -> float:
        j = int(np.argmin(np.abs(self.x_axis - x)))
        i = int(np.argmin(np.abs(self.p_axis - p)))
        return float(self.values[i, j])


def _generator(beta: complex, cavity_dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, cavity_dim)), k=1).astype(complex)
    return beta * a.conj().T - np.conj(beta) * a


def displacement_op(beta: complex, cavity_dim: int, support: int = 0, tol: float = UNITARITY_TOL) -> OpMatrix:
    """
    expm(beta a^dagger - beta* a) on the truncated space.

    The truncated generator is anti-Hermitian, so the exponential is exactly unitary;
    the defect that matters is the weight D pushes from Fock levels 0..support into the
    top two levels, which must stay below tol.
    """
    if support >= cavity_dim:
        raise ShapeError(f"support {support} must be below cavity_dim {cavity_dim}")
    d = expm(_generator(beta, cavity_dim))
    cols = d[:, : support + 1]
    defect = float(np.max(np.sum(np.abs(cols[-2:, :]) ** 2, axis=0)))
    if defect > tol:
        needed = cavity_dim
        while needed < MAX_PADDED_DIM and _edge_weight(beta, needed, support) > tol:
            needed += max(4, needed // 4)
        raise UnitarityError(
            f"displacement beta={beta:.3f} leaks {defect:.2e} into the top levels of cavity_dim={cavity_dim}",
            required_dim=needed,
        )
    return OpMatrix(d)


def _edge_weight(beta: complex, cavity_dim: int, support: int) -> float:
    d = expm(_generator(beta, cavity_dim))
    return float(np.max(np.sum(np.abs(d[-2:, : support + 1]) ** 2, axis=0)))


def _support(rho: np.ndarray, floor: float = 1e-14) -> int:
    populated = np.nonzero(np.real(np.diag(rho)) > floor)[0]
    return int(populated[-1]) if populated.size else 0


def padded_dim(beta_max: float, support: int) -> int:
    """Working dimension large enough to displace Fock levels up to `support` by |beta_max|."""
    reach = beta_max + math.sqrt(support + 1)
    return int(support + 1 + math.ceil(reach * reach + 8.0 * reach + 12.0))


def wigner(
    rho_cavity: Union[DensityOp, FockKet],
    grid_spec: Optional[WignerGridSpec] = None,
    workers: Optional[int] = None,
) -> WignerGrid:
    grid_spec = grid_spec or WignerGridSpec()
    rho = as_density(rho_cavity)
    if rho.subsystems != CAVITY_ONLY:
        raise ShapeError(
            f"wigner expects a cavity state, got subsystems {rho.subsystems} with basis_dims {rho.basis_dims}"
        )
    axis = grid_spec.axis()
    n_c = rho.dim
    support = _support(rho.matrix)
    beta_max = float(np.hypot(np.max(np.abs(axis)), np.max(np.abs(axis))))
    dim = max(n_c, padded_dim(beta_max, support))
    # Validate the padding once at the corner of the grid; all other points displace less.
    while True:
        try:
            displacement_op(complex(axis[-1], axis[-1]), dim, support)
            displacement_op(complex(axis[0], axis[0]), dim, support)
            break
        except UnitarityError as e:
            if e.required_dim is None or e.required_dim <= dim or e.required_dim > MAX_PADDED_DIM:
                raise
            dim = e.required_dim

    rho_block = np.asarray(rho.matrix)[: support + 1, : support + 1]
    levels = np.arange(dim)
    parity = (-1.0) ** levels
    # D(r e^{i phi}) = R(phi) V exp(-i r L) V^dagger R(phi)^dagger, with i(a^dagger - a) = V L V^dagger
    # and R(phi) = exp(i phi n): one eigendecomposition serves the whole grid.
    a = np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)
    eigenvalues, vectors = np.linalg.eigh(1j * (a.conj().T - a))
    head = vectors[: support + 1, :]
    tail = vectors.conj().T

    def point(x: float, p: float) -> float:
        beta = complex(x, p)
        phase = np.exp(1j * np.angle(beta) * levels)
        scaled = (phase[: support + 1, None] * head) * np.exp(-1j * abs(beta) * eigenvalues)[None, :]
        d = scaled @ (tail * phase.conj()[None, :])
        y = rho_block @ d
        diag = np.sum(np.conj(d) * y, axis=0)
        return float((2.0 / math.pi) * np.real(np.dot(parity, diag)))

    def row(p: float) -> np.ndarray:
        return np.array([point(x, p) for x in axis])

    workers = workers if workers is not None else get_worker_count()
    logger.debug("Wigner.evaluate: grid=%dx%d support=%d padded_dim=%d workers=%d", axis.size, axis.size, support, dim, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, axis))
    else:
        rows = [row(p) for p in axis]
    return WignerGrid(axis.copy(), axis.copy(), np.vstack(rows))
