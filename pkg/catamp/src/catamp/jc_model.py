"""
Two-level Jaynes-Cummings model in the frame rotating at the cavity frequency.

Detuning is delta = omega_q - omega_r. The static Hamiltonian is
(delta/2) sigma_z + lambda (a^dagger sigma^- + a sigma^+); the lab-frame offset
omega_r (n + 1) of each excitation manifold is removed by the frame.
"""

from __future__ import annotations

import logging
import math
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config_loader import get_reference_defaults
from .errors import ScheduleError, TruncationError
from .hilbert import E, G, FockKet, OpMatrix, jc_operators
from .units import GHZ, KHZ, US

logger = logging.getLogger(__name__)

TransitionKind = Literal["minus_minus", "plus_minus"]


def _device_defaults() -> dict:
    return get_reference_defaults().get("device", {})


def _sweep_defaults() -> dict:
    return get_reference_defaults().get("sweep", {})


def _decay_ratio() -> float:
    return float(get_reference_defaults().get("decoherence", {}).get("qubit_to_cavity_ratio", 10.0))


class DeviceParams(BaseModel):
    """Qubit-cavity device; rates and couplings in rad/ns."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    coupling: float = Field(
        default_factory=lambda: float(_device_defaults().get("coupling_ghz", 0.1)) * GHZ,
        alias="lambda",
        gt=0.0,
    )
    omega_r: float = Field(default_factory=lambda: float(_device_defaults().get("cavity_ghz", 6.0)) * GHZ, gt=0.0)
    kappa: float = Field(default=0.0, ge=0.0)
    gamma_minus: float = Field(default=0.0, ge=0.0)
    gamma_phi: float = Field(default=0.0, ge=0.0)
    cavity_dim: int = Field(default_factory=lambda: int(_device_defaults().get("cavity_dim", 25)), ge=2)

    @property
    def decoherence_free(self) -> bool:
        return self.kappa == 0.0 and self.gamma_minus == 0.0 and self.gamma_phi == 0.0

    def with_cavity_decay(self, kappa: float, ratio: float | None = None) -> "DeviceParams":
        """Set kappa and tie gamma_minus = gamma_phi = ratio * kappa."""
        ratio = _decay_ratio() if ratio is None else ratio
        return self.model_copy(update={"kappa": kappa, "gamma_minus": ratio * kappa, "gamma_phi": ratio * kappa})

    def without_decoherence(self) -> "DeviceParams":
        return self.model_copy(update={"kappa": 0.0, "gamma_minus": 0.0, "gamma_phi": 0.0})

    def with_cavity_dim(self, cavity_dim: int) -> "DeviceParams":
        return DeviceParams.model_validate({**self.model_dump(), "cavity_dim": cavity_dim})

    def describe(self) -> str:
        return (
            f"lambda/2pi={self.coupling / GHZ:.4f}GHz omega_r/2pi={self.omega_r / GHZ:.4f}GHz "
            f"kappa/2pi={self.kappa / KHZ:.3f}kHz gamma-/2pi={self.gamma_minus / KHZ:.3f}kHz "
            f"gamma_phi/2pi={self.gamma_phi / KHZ:.3f}kHz N_c={self.cavity_dim}"
        )


class SweepSchedule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta_start: float = Field(default_factory=lambda: float(_sweep_defaults().get("detuning_start_ghz", 1.0)) * GHZ)
    delta_end: float = Field(default_factory=lambda: float(_sweep_defaults().get("detuning_end_ghz", 0.0)) * GHZ)
    duration: float = Field(default_factory=lambda: float(_sweep_defaults().get("duration_us", 6.2)) * US, gt=0.0)
    profile: Literal["linear", "smoothstep"] = Field(
        default_factory=lambda: _sweep_defaults().get("profile", "linear")
    )

    def reversed(self) -> "SweepSchedule":
        return self.model_copy(update={"delta_start": self.delta_end, "delta_end": self.delta_start})


class DressedPair(NamedTuple):
    plus: FockKet
    minus: FockKet
    energy_plus: float
    energy_minus: float


def static_hamiltonian(params: DeviceParams, delta: float) -> OpMatrix:
    ops = jc_operators(params.cavity_dim)
    return OpMatrix((0.5 * delta * ops.sz + params.coupling * ops.coupling).toarray(), True)


def mixing_angle(n: int, delta: float, coupling: float) -> float:
    """theta_n = atan2(2 lambda sqrt(n+1), delta) / 2, in (0, pi/2)."""
    return 0.5 * math.atan2(2.0 * coupling * math.sqrt(n + 1), delta)


def dressed_energies(n: int, delta: float, coupling: float) -> tuple[float, float]:
    half = 0.5 * math.sqrt(delta * delta + 4.0 * coupling * coupling * (n + 1))
    return half, -half


def _check_manifold(n: int, cavity_dim: int, top: int) -> None:
    if n < 0:
        raise ValueError(f"manifold index must be >= 0, got {n}")
    if n + top >= cavity_dim:
        raise TruncationError(
            f"manifold n={n} needs Fock level {n + top} but cavity_dim={cavity_dim}",
            required_dim=n + top + 1,
        )


def dressed_pair(n: int, delta: float, coupling: float, cavity_dim: int) -> DressedPair:
    """|+,n> = cos|e,n> + sin|g,n+1>, |-,n> = -sin|e,n> + cos|g,n+1>."""
    _check_manifold(n, cavity_dim, 1)
    theta = mixing_angle(n, delta, coupling)
    c, s = math.cos(theta), math.sin(theta)
    e_n = E * cavity_dim + n
    g_n1 = G * cavity_dim + n + 1
    plus = np.zeros(2 * cavity_dim, dtype=complex)
    minus = np.zeros(2 * cavity_dim, dtype=complex)
    plus[e_n], plus[g_n1] = c, s
    minus[e_n], minus[g_n1] = -s, c
    e_plus, e_minus = dressed_energies(n, delta, coupling)
    dims = (2, cavity_dim)
    return DressedPair(FockKet(plus, dims), FockKet(minus, dims), e_plus, e_minus)


def transition_frequency(kind: TransitionKind, n: int, params: DeviceParams, delta: float = 0.0) -> float:
    """Lab-frame frequency of |-,n> <-> |-,n+1> (minus_minus) or |+,n> <-> |-,n+1> (plus_minus)."""
    _check_manifold(n, params.cavity_dim, 2)
    upper = dressed_energies(n + 1, delta, params.coupling)[1]
    e_plus, e_minus = dressed_energies(n, delta, params.coupling)
    if kind == "minus_minus":
        return params.omega_r + upper - e_minus
    if kind == "plus_minus":
        return params.omega_r + upper - e_plus
    raise ValueError(f"unknown transition kind {kind!r}")


def sweep_delta(schedule: SweepSchedule, t: float) -> float:
    if t < 0.0 or t > schedule.duration:
        raise ScheduleError(f"sweep time {t} outside [0, {schedule.duration}]")
    s = t / schedule.duration
    if schedule.profile == "smoothstep":
        s = s * s * (3.0 - 2.0 * s)
    return (1.0 - s) * schedule.delta_start + s * schedule.delta_end


def adiabatic_plus_population(n: int, params: DeviceParams, schedule: SweepSchedule) -> float:
    """Population of |+,n> reached by adiabatically following |e,n> from delta_start: cos^2 theta_n."""
    return math.cos(mixing_angle(n, schedule.delta_start, params.coupling)) ** 2
