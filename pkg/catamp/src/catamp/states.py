"""
Coherent and cat states, the k-photon shift operator, fidelities and the
ideal-shift gain analysis.

All functions are pure; grid evaluations can be split across workers freely.
"""

from __future__ import annotations

import logging
import math
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize_scalar
from scipy.special import gammainc

from .config_loader import get_reference_defaults
from .errors import BracketError, InvalidDimensionError, ShapeError, TruncationError, UndefinedStateError
from .hilbert import CAVITY_ONLY, DensityOp, FockKet, OpMatrix, State

logger = logging.getLogger(__name__)

Parity = Literal["even", "odd"]

COHERENT_TAIL_TOL = 1e-8


class CatSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: complex
    parity: Parity = "even"

    def normalization(self) -> float:
        """N^{+-}_alpha = [2(1 +- exp(-2|alpha|^2))]^{-1/2}."""
        sign = 1.0 if self.parity == "even" else -1.0
        denom = 2.0 * (1.0 + sign * math.exp(-2.0 * abs(self.alpha) ** 2))
        if denom <= 0.0:
            raise UndefinedStateError("odd cat state is undefined at alpha = 0")
        return denom ** -0.5

    def with_alpha(self, alpha: complex) -> "CatSpec":
        return CatSpec(alpha=alpha, parity=self.parity)

    def flipped(self) -> "CatSpec":
        return CatSpec(alpha=self.alpha, parity="odd" if self.parity == "even" else "even")


class GainResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    gain: float = Field(ge=1.0)
    fidelity: float = Field(ge=0.0, le=1.0)
    alpha_prime: float
    alpha: float
    k: int
    parity: Parity
    target_parity: Parity


def coherent_tail(alpha: complex, cavity_dim: int) -> float:
    """Population of |alpha> on Fock levels n >= cavity_dim (Poisson survival)."""
    mean = abs(alpha) ** 2
    if mean == 0.0:
        return 0.0
    return float(gammainc(cavity_dim, mean))


def required_cavity_dim(alpha: complex, tail_tol: float = COHERENT_TAIL_TOL, minimum: int = 2) -> int:
    """Smallest truncation whose coherent tail for |alpha| is below tail_tol."""
    dim = max(minimum, int(abs(alpha) ** 2) + 1)
    while coherent_tail(alpha, dim) >= tail_tol:
        dim += 1
    return dim


def _coherent_amplitudes(alpha: complex, cavity_dim: int) -> np.ndarray:
    amps = np.zeros(cavity_dim, dtype=complex)
    amps[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, cavity_dim):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return amps


def coherent_ket(alpha: complex, cavity_dim: int, tail_tol: float = COHERENT_TAIL_TOL) -> FockKet:
    if cavity_dim < 1:
        raise InvalidDimensionError(f"cavity_dim must be >= 1, got {cavity_dim}")
    tail = coherent_tail(alpha, cavity_dim)
    if tail >= tail_tol:
        raise TruncationError(
            f"coherent state alpha={alpha} loses {tail:.2e} population above n={cavity_dim - 1}",
            required_dim=required_cavity_dim(alpha, tail_tol),
        )
    return FockKet(_coherent_amplitudes(alpha, cavity_dim), (cavity_dim,)).normalized()


def cat_ket(spec: CatSpec, cavity_dim: int, tail_tol: float = COHERENT_TAIL_TOL) -> FockKet:
    """N(|alpha> +- |-alpha>) with exact zeros on the wrong-parity Fock levels."""
    if spec.parity == "odd" and spec.alpha == 0:
        raise UndefinedStateError("odd cat state is undefined at alpha = 0")
    tail = coherent_tail(spec.alpha, cavity_dim)
    if tail >= tail_tol:
        raise TruncationError(
            f"cat state alpha={spec.alpha} loses {tail:.2e} population above n={cavity_dim - 1}",
            required_dim=required_cavity_dim(spec.alpha, tail_tol),
        )
    amps = _coherent_amplitudes(spec.alpha, cavity_dim)
    keep = 0 if spec.parity == "even" else 1
    amps[np.arange(cavity_dim) % 2 != keep] = 0.0
    return FockKet(amps, (cavity_dim,)).normalized()


def shift_op(cavity_dim: int, k: int) -> OpMatrix:
    """sum_m |m+k><m| on the truncated range."""
    if k < 1:
        raise InvalidDimensionError(f"shift power k must be positive, got {k}")
    if k >= cavity_dim:
        raise InvalidDimensionError(f"shift power k={k} must be smaller than cavity_dim={cavity_dim}")
    return OpMatrix(np.eye(cavity_dim, k=-k))


def fidelity(a: State, b: FockKet) -> float:
    """|<b|a>|^2 for kets, <b|rho|b> for a density operator against a pure target."""
    if a.dim != b.dim:
        raise ShapeError(f"fidelity: dimensions {a.dim} and {b.dim} differ")
    if isinstance(a, FockKet):
        return float(abs(np.vdot(b.amplitudes, a.amplitudes)) ** 2)
    return float(np.real(np.vdot(b.amplitudes, a.matrix @ b.amplitudes)))


def photon_distribution(state: State) -> np.ndarray:
    """Fock-level populations of a cavity ket or density operator."""
    if isinstance(state, FockKet):
        return np.abs(state.amplitudes) ** 2
    return np.real(np.diag(state.matrix)).copy()


def target_parity(parity: Parity, k: int) -> Parity:
    if k % 2 == 0:
        return parity
    return "odd" if parity == "even" else "even"


def _theory_defaults() -> dict:
    return get_reference_defaults().get("theory", {})


def _theory_dim(spec: CatSpec, k: int, alpha_prime_max: float, cavity_dim: Optional[int], tail_tol: float) -> int:
    needed = max(
        required_cavity_dim(alpha_prime_max, tail_tol),
        required_cavity_dim(spec.alpha, tail_tol) + k,
    )
    if cavity_dim is None:
        return max(needed, int(_theory_defaults().get("cavity_dim", 40)))
    if cavity_dim < needed:
        raise TruncationError(
            f"theory evaluation up to alpha'={alpha_prime_max:.3f} does not fit cavity_dim={cavity_dim}",
            required_dim=needed,
        )
    return cavity_dim


class _ShiftedCatOverlap:
    """F(alpha') = |<SC_{alpha'}| E^k |SC_alpha>|^2 evaluated with a cached shifted vector."""

    def __init__(self, spec: CatSpec, k: int, cavity_dim: int, tail_tol: float):
        self.spec = spec
        self.k = k
        self.cavity_dim = cavity_dim
        self.tail_tol = tail_tol
        self.target_parity = target_parity(spec.parity, k)
        shifted = shift_op(cavity_dim, k).apply(cat_ket(spec, cavity_dim, tail_tol))
        self.shifted: FockKet = shifted

    def __call__(self, alpha_prime: float) -> float:
        target = cat_ket(CatSpec(alpha=alpha_prime, parity=self.target_parity), self.cavity_dim, self.tail_tol)
        return fidelity(self.shifted, target)


def theory_curve(
    spec: CatSpec,
    k: int,
    alpha_prime_grid: Sequence[float],
    cavity_dim: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """Pointwise fidelity between the k-shifted cat and cats of amplitude alpha'."""
    grid = [float(a) for a in alpha_prime_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("theory_curve: alpha_prime_grid must be sorted ascending")
    if not grid:
        return []
    tail_tol = float(_theory_defaults().get("tail_tolerance", 1e-10))
    dim = _theory_dim(spec, k, max(abs(grid[0]), abs(grid[-1])), cavity_dim, tail_tol)
    overlap = _ShiftedCatOverlap(spec, k, dim, tail_tol)
    return [(a, overlap(a)) for a in grid]


def optimal_gain(
    spec: CatSpec,
    k: int = 2,
    cavity_dim: Optional[int] = None,
    gain_bounds: Optional[Tuple[float, float]] = None,
) -> GainResult:
    """
    Maximize the shifted-cat fidelity over G' in gain_bounds: a coarse grid brackets
    the peak, golden-section search refines it to the configured absolute tolerance.
    """
    theory = _theory_defaults()
    lo, hi = gain_bounds or tuple(theory.get("gain_bounds", (1.0, 3.0)))
    step = float(theory.get("coarse_step", 0.01))
    tol = float(theory.get("gain_tolerance", 1e-4))
    tail_tol = float(theory.get("tail_tolerance", 1e-10))
    alpha = abs(spec.alpha)
    if alpha == 0.0:
        raise UndefinedStateError("optimal_gain needs a non-zero amplitude")

    dim = _theory_dim(spec, k, hi * alpha, cavity_dim, tail_tol)
    overlap = _ShiftedCatOverlap(spec, k, dim, tail_tol)

    gains = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    values = np.array([overlap(g * alpha) for g in gains])
    i = int(np.argmax(values))
    curve = list(zip(gains.tolist(), values.tolist()))
    if i == 0 or i == len(gains) - 1:
        raise BracketError(
            f"fidelity maximum for alpha={alpha}, parity={spec.parity}, k={k} lies on the bound G'={gains[i]:.3f}",
            curve,
        )

    result = minimize_scalar(
        lambda g: -overlap(g * alpha),
        bracket=(gains[i - 1], gains[i], gains[i + 1]),
        method="golden",
        options={"xtol": tol / max(gains[i], 1.0)},
    )
    gain = float(result.x)
    best = float(-result.fun)
    if best < values[i]:
        gain, best = float(gains[i]), float(values[i])
    logger.debug(
        "Theory.optimal_gain: alpha=%.3f parity=%s k=%d dim=%d G=%.5f F=%.6f",
        alpha, spec.parity, k, dim, gain, best,
    )
    return GainResult(
        gain=gain,
        fidelity=min(max(best, 0.0), 1.0),
        alpha_prime=gain * alpha,
        alpha=alpha,
        k=k,
        parity=spec.parity,
        target_parity=overlap.target_parity,
    )


def as_cavity_state(state: Union[FockKet, DensityOp]) -> DensityOp:
    if state.subsystems != CAVITY_ONLY:
        raise ShapeError(
            f"expected a cavity-only state, got subsystems {state.subsystems} with basis_dims {state.basis_dims}"
        )
    return state.projector() if isinstance(state, FockKet) else state
