"""
Gaussian bichromatic STIRAP tones and the tabulated transfer schedules.

Each transfer set drives |+,n> -> |-,n> through |-,n+1>: tone1 sits on the
|-,n> <-> |-,n+1> leg, tone2 on |+,n> <-> |-,n+1>, both detuned by Delta_n
below the bare transition. Envelopes are |eps| exp[-(t - center)^2 / T^2].
"""

from __future__ import annotations

import cmath
import logging
import math
from typing import List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config_loader import get_table1
from .errors import ScheduleError, TruncationError
from .hilbert import OpMatrix, jc_operators
from .jc_model import DeviceParams, transition_frequency
from .log_once import log_once_warning
from .units import GHZ, MHZ, US, to_mhz

logger = logging.getLogger(__name__)

TWO_PHOTON_TOLERANCE = 2.5 * MHZ
ADMISSIBLE_OFFSET = math.sqrt(2.0) - 1.0

FrequencyMode = Literal["verbatim", "derived"]
WindowMode = Literal["table", "full"]

COVERAGE_SIGMAS = 5.0


class GaussianTone(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float = Field(ge=0.0)
    center: float
    width: float = Field(gt=0.0)
    frequency: float

    @property
    def sigma(self) -> float:
        """Standard deviation of the envelope, T / sqrt(2)."""
        return self.width / math.sqrt(2.0)


class TransferSet(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    manifold_n: int = Field(ge=0)
    tone1: GaussianTone
    tone2: GaussianTone
    detuning: float

    def two_photon_residual(self, coupling: float) -> float:
        """|(omega1 - omega2) - 2 lambda sqrt(n+1)|."""
        return abs((self.tone1.frequency - self.tone2.frequency) - 2.0 * coupling * math.sqrt(self.manifold_n + 1))


class PulseSchedule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    transfer_sets: List[TransferSet]
    t_start: float
    t_end: float
    shared_tone1: bool = True
    label: str = ""
    truncated: bool = False

    @model_validator(mode="after")
    def _check_window(self) -> "PulseSchedule":
        if self.t_end <= self.t_start:
            raise ValueError(f"schedule window [{self.t_start}, {self.t_end}] is empty")
        if not self.truncated and not self.covers_envelopes(COVERAGE_SIGMAS):
            raise ValueError(
                f"schedule window [{self.t_start / US:.3f}, {self.t_end / US:.3f}]us cuts an envelope inside "
                f"{COVERAGE_SIGMAS:g} sigma; pass truncated=True to keep it"
            )
        return self

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def manifolds(self) -> List[int]:
        return [ts.manifold_n for ts in self.transfer_sets]

    def tones(self) -> List[GaussianTone]:
        """Active tones, a shared first tone counted once."""
        out: List[GaussianTone] = []
        for i, ts in enumerate(self.transfer_sets):
            if not self.shared_tone1 or i == 0:
                out.append(ts.tone1)
            out.append(ts.tone2)
        return out

    def covers_envelopes(self, n_sigma: float = COVERAGE_SIGMAS) -> bool:
        slack = 1e-9 * max(1.0, abs(self.t_start), abs(self.t_end))
        return all(
            tone.center - n_sigma * tone.sigma >= self.t_start - slack
            and tone.center + n_sigma * tone.sigma <= self.t_end + slack
            for tone in self.tones()
        )

    def max_amplitude(self) -> float:
        return max((tone.amplitude for tone in self.tones()), default=0.0)


def envelope(tone: GaussianTone, t: float) -> float:
    x = (t - tone.center) / tone.width
    return tone.amplitude * math.exp(-x * x)


def tone_frequencies(n: int, delta_n: float, params: DeviceParams) -> Tuple[float, float]:
    """omega1 = T_minus_minus(n) - Delta_n, omega2 = omega1 - 2 lambda sqrt(n+1), at delta = 0."""
    omega1 = transition_frequency("minus_minus", n, params, 0.0) - delta_n
    return omega1, omega1 - 2.0 * params.coupling * math.sqrt(n + 1)


def check_admissible(tau: float, width: float) -> None:
    if abs(tau) <= ADMISSIBLE_OFFSET * width:
        raise ScheduleError(
            f"pulse offset tau={tau / US:.3f}us does not exceed (sqrt(2)-1)T={ADMISSIBLE_OFFSET * width / US:.3f}us"
        )


def table1_schedule(
    which: str,
    params: DeviceParams,
    mode: FrequencyMode = "derived",
    reverse_order: bool = False,
    window: WindowMode = "full",
) -> PulseSchedule:
    """
    Four simultaneous transfer sets sharing tone1.

    `verbatim` keeps the tabulated frequencies and detunings; `derived` keeps the
    shared omega1, recomputes Delta_n from the dressed transition at delta = 0 and
    places omega2 exactly on the two-photon condition. Tone1 peaks at -tau and
    tone2 at +tau unless `reverse_order` is set. The `full` window covers every
    envelope to 5 sigma; `table` is the tabulated [-T, T], which cuts the envelopes
    and yields a schedule marked `truncated`.
    """
    block = get_table1(which)
    tau = float(block["tau_us"]) * US
    width = float(block["width_us"]) * US
    check_admissible(tau, width)
    omega1 = float(block["omega1_ghz"]) * GHZ
    eps1 = float(block["eps1_mhz"]) * MHZ
    c1, c2 = (tau, -tau) if reverse_order else (-tau, tau)

    rows = block.get("rows", [])
    top = max(int(r["n"]) for r in rows)
    if top + 2 >= params.cavity_dim:
        raise TruncationError(
            f"{which} schedule reaches manifold n={top} but cavity_dim={params.cavity_dim}",
            required_dim=top + 3,
        )

    tone1 = GaussianTone(amplitude=eps1, center=c1, width=width, frequency=omega1)
    sets: List[TransferSet] = []
    for row in rows:
        n = int(row["n"])
        if mode == "verbatim":
            omega2 = float(row["omega2_ghz"]) * GHZ
            detuning = float(row["delta_mhz"]) * MHZ
        elif mode == "derived":
            detuning = transition_frequency("minus_minus", n, params, 0.0) - omega1
            omega2 = omega1 - 2.0 * params.coupling * math.sqrt(n + 1)
        else:
            raise ValueError(f"unknown frequency mode {mode!r}")
        tone2 = GaussianTone(amplitude=float(row["eps2_mhz"]) * MHZ, center=c2, width=width, frequency=omega2)
        ts = TransferSet(manifold_n=n, tone1=tone1, tone2=tone2, detuning=detuning)
        residual = ts.two_photon_residual(params.coupling)
        if residual > TWO_PHOTON_TOLERANCE:
            log_once_warning(
                logger,
                f"two_photon_residual:{which}:{mode}:{n}",
                "Pulses.table1: %s row n=%d misses the two-photon condition by %.2f MHz",
                which, n, to_mhz(residual),
            )
        sets.append(ts)

    if window == "table":
        t_start, t_end = -width, width
        log_once_warning(
            logger,
            f"table_window:{which}",
            "Pulses.table1: %s uses the tabulated window [-T, T]; envelopes are cut at %.2f sigma",
            which, (width - abs(tau)) / (width / math.sqrt(2.0)),
        )
    elif window == "full":
        sigma = width / math.sqrt(2.0)
        t_start, t_end = min(c1, c2) - COVERAGE_SIGMAS * sigma, max(c1, c2) + COVERAGE_SIGMAS * sigma
    else:
        raise ValueError(f"unknown window mode {window!r}")

    schedule = PulseSchedule(
        transfer_sets=sets, t_start=t_start, t_end=t_end, shared_tone1=True, label=which, truncated=window == "table",
    )
    logger.debug(
        "Pulses.table1: %s mode=%s reverse=%s window=[%.2f, %.2f]us manifolds=%s",
        which, mode, reverse_order, t_start / US, t_end / US, schedule.manifolds,
    )
    return schedule


def single_transfer_schedule(
    n: int,
    delta_n: float,
    params: DeviceParams,
    eps1: float,
    eps2: float,
    tau: float,
    width: float,
    window_half_width: Optional[float] = None,
) -> PulseSchedule:
    """
    One tone pair on manifold n at offset tau (negative tau swaps the envelope order).

    The default window reaches 5 sigma past both envelopes; a narrower
    `window_half_width` marks the schedule truncated.
    """
    omega1, omega2 = tone_frequencies(n, delta_n, params)
    tone1 = GaussianTone(amplitude=eps1, center=-tau, width=width, frequency=omega1)
    tone2 = GaussianTone(amplitude=eps2, center=tau, width=width, frequency=omega2)
    full_half = abs(tau) + COVERAGE_SIGMAS * tone1.sigma
    half = window_half_width if window_half_width is not None else full_half
    return PulseSchedule(
        transfer_sets=[TransferSet(manifold_n=n, tone1=tone1, tone2=tone2, detuning=delta_n)],
        t_start=-half,
        t_end=half,
        shared_tone1=False,
        label=f"single_n{n}",
        truncated=half < full_half,
    )


def split_sequential(schedule: PulseSchedule) -> List[PulseSchedule]:
    """One schedule per transfer set, highest manifold first, each on the original window."""
    ordered = sorted(schedule.transfer_sets, key=lambda ts: ts.manifold_n, reverse=True)
    return [
        PulseSchedule(
            transfer_sets=[ts],
            t_start=schedule.t_start,
            t_end=schedule.t_end,
            shared_tone1=False,
            label=f"{schedule.label}:n{ts.manifold_n}",
            truncated=schedule.truncated,
        )
        for ts in ordered
    ]


def drive_coefficient(schedule: PulseSchedule, t: float, params: DeviceParams) -> complex:
    """c(t) = sum_j eps_j(t) exp(+i (omega_r - omega_j) t), the a^dagger coefficient; zero outside the window."""
    if t < schedule.t_start or t > schedule.t_end:
        return 0j
    total = 0j
    for tone in schedule.tones():
        amp = envelope(tone, t)
        if amp != 0.0:
            total += amp * cmath.exp(1j * (params.omega_r - tone.frequency) * t)
    return total


def drive_operator(schedule: PulseSchedule, t: float, params: DeviceParams) -> sp.csr_matrix:
    """Sparse c(t) a^dagger + conj(c(t)) a on the joint space."""
    ops = jc_operators(params.cavity_dim)
    c = drive_coefficient(schedule, t, params)
    return (c * ops.adag + np.conj(c) * ops.a).tocsr()


def drive_hamiltonian(schedule: PulseSchedule, t: float, params: DeviceParams) -> OpMatrix:
    return OpMatrix(drive_operator(schedule, t, params).toarray(), True)
