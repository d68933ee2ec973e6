"""
Numerical tuning of the tone2 settings in a simultaneous transfer schedule.

The shared tone1 and the tone2s of the other manifolds light-shift every
two-photon resonance, so the bare condition omega1 - omega2 = 2 lambda sqrt(n+1)
leaves most manifolds off resonance. Calibration propagates |+,n> for all
manifolds under many candidate (frequency offset, amplitude scale) settings in a
single batched integration and keeps, per manifold, the setting with the largest
|<-,n|U|+,n>|^2.
"""

from __future__ import annotations

import cmath
import logging
import time
from dataclasses import dataclass
from threading import Lock
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.integrate import DOP853

from .config_loader import get_reference_defaults
from .errors import IntegrationDivergedError, ShapeError, StiffnessError
from .hilbert import jc_operators
from .jc_model import DeviceParams, DressedPair, dressed_pair
from .log_once import log_once_warning
from .metrics import CALIBRATIONS_TOTAL, RHS_EVALUATIONS_TOTAL
from .pulses import PulseSchedule, envelope
from .units import MHZ, US, to_mhz

logger = logging.getLogger(__name__)


def _defaults() -> dict:
    return get_reference_defaults().get("calibration", {})


def _symmetric_grid(span: float, points: int) -> np.ndarray:
    grid = np.linspace(-span, span, points)
    grid[np.abs(grid) < 1e-9 * span] = 0.0
    return grid


class CalibrationConfig(BaseModel):
    """Search grids (offsets in rad/ns) and the batched integrator tolerances."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    offset_span: float = Field(default_factory=lambda: float(_defaults().get("offset_span_mhz", 4.0)) * MHZ, gt=0.0)
    offset_points: int = Field(default_factory=lambda: int(_defaults().get("offset_points", 17)), ge=3)
    refine_span: float = Field(default_factory=lambda: float(_defaults().get("refine_span_mhz", 0.5)) * MHZ, gt=0.0)
    refine_points: int = Field(default_factory=lambda: int(_defaults().get("refine_points", 9)), ge=3)
    amplitude_scales: Tuple[float, ...] = Field(
        default_factory=lambda: tuple(float(s) for s in _defaults().get("amplitude_scales", [1.0]))
    )
    extra_levels: int = Field(default_factory=lambda: int(_defaults().get("extra_levels", 3)), ge=1)
    rel_tol: float = Field(default_factory=lambda: float(_defaults().get("rel_tol", 1e-8)), gt=0.0)
    abs_tol: float = Field(default_factory=lambda: float(_defaults().get("abs_tol", 1e-10)), gt=0.0)
    target_efficiency: float = Field(
        default_factory=lambda: float(_defaults().get("target_efficiency", 0.95)), gt=0.0, le=1.0
    )

    @field_validator("amplitude_scales")
    @classmethod
    def _positive_scales(cls, scales: Tuple[float, ...]) -> Tuple[float, ...]:
        if not scales or any(s <= 0.0 for s in scales):
            raise ValueError(f"amplitude_scales must hold positive factors, got {scales}")
        return tuple(scales)

    def coarse_grid(self) -> np.ndarray:
        return _symmetric_grid(self.offset_span, self.offset_points)

    def fine_grid(self) -> np.ndarray:
        return _symmetric_grid(self.refine_span, self.refine_points)


@dataclass(frozen=True)
class CalibrationReport:
    schedule: PulseSchedule
    offsets: Dict[int, float]
    scales: Dict[int, float]
    baseline: Dict[int, float]
    efficiencies: Dict[int, float]
    cavity_dim: int
    target_efficiency: float

    @property
    def worst_efficiency(self) -> float:
        return min(self.efficiencies.values(), default=1.0)

    @property
    def passed(self) -> bool:
        return self.worst_efficiency >= self.target_efficiency


class _BatchedDrive:
    """Drive coefficient c(t) for every column: fixed tones plus each tone2 shifted and scaled per column."""

    def __init__(self, schedule: PulseSchedule, params: DeviceParams, offsets: np.ndarray, scales: np.ndarray):
        sets = schedule.transfer_sets
        fixed = [sets[0].tone1] if schedule.shared_tone1 else [ts.tone1 for ts in sets]
        self._fixed = [(tone, params.omega_r - tone.frequency) for tone in fixed]
        self._tone2 = [ts.tone2 for ts in sets]
        self._nu2 = np.array([params.omega_r - tone.frequency for tone in self._tone2])
        self._offsets = offsets
        self._scales = scales
        self._t_start, self._t_end = schedule.t_start, schedule.t_end

    def __call__(self, t: float) -> np.ndarray:
        if t < self._t_start or t > self._t_end:
            return np.zeros(self._offsets.shape[0], dtype=complex)
        base = sum(envelope(tone, t) * cmath.exp(1j * nu * t) for tone, nu in self._fixed)
        env2 = np.array([envelope(tone, t) for tone in self._tone2])
        return base + (self._scales * env2 * np.exp(1j * (self._nu2 - self._offsets) * t)).sum(axis=1)


def propagate_batch(
    schedule: PulseSchedule,
    params: DeviceParams,
    initial: np.ndarray,
    offsets: np.ndarray,
    scales: np.ndarray,
    delta: float = 0.0,
    span: Optional[Tuple[float, float]] = None,
    config: Optional[CalibrationConfig] = None,
) -> np.ndarray:
    """
    Evolve each column of `initial` (d x m) under the driven JC Hamiltonian.

    Column j sees tone2 of transfer set i at frequency omega2_i + offsets[j, i]
    with amplitude scales[j, i] * eps2_i. Returns the final columns.
    """
    config = config or CalibrationConfig()
    ops = jc_operators(params.cavity_dim)
    d = 2 * params.cavity_dim
    y0 = np.asarray(initial, dtype=complex)
    if y0.ndim != 2 or y0.shape[0] != d:
        raise ShapeError(f"propagate_batch: initial columns have shape {y0.shape}, expected ({d}, m)")
    m, k = y0.shape[1], len(schedule.transfer_sets)
    offsets = np.broadcast_to(np.asarray(offsets, dtype=float), (m, k))
    scales = np.broadcast_to(np.asarray(scales, dtype=float), (m, k))
    t0, t1 = span if span is not None else (schedule.t_start, schedule.t_end)
    if t1 <= t0:
        return y0.copy()

    h0 = (0.5 * delta * ops.sz + params.coupling * ops.coupling).tocsr()
    a, adag = ops.a, ops.adag
    drive = _BatchedDrive(schedule, params, offsets, scales)
    calls = [0]

    def fun(t, y):
        calls[0] += 1
        cols = y.reshape(d, m)
        c = drive(t)
        return (-1j * (h0 @ cols + (adag @ cols) * c + (a @ cols) * np.conj(c))).reshape(-1)

    solver = DOP853(fun, t0, y0.reshape(-1), t1, rtol=config.rel_tol, atol=config.abs_tol)
    try:
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise StiffnessError(
                    f"calibration integrator stopped near t={solver.t / US:.3f}us: {message} "
                    f"(rel_tol={config.rel_tol:.1e}, abs_tol={config.abs_tol:.1e})"
                )
    finally:
        RHS_EVALUATIONS_TOTAL.labels(kind="calibration").inc(calls[0])
    final = solver.y.reshape(d, m)
    if not np.all(np.isfinite(final)):
        raise IntegrationDivergedError(f"calibration integrator produced a non-finite state at t={solver.t:.3f} ns")
    return final


def apply_tone2_corrections(schedule: PulseSchedule, offsets: Sequence[float], scales: Sequence[float]) -> PulseSchedule:
    """Shift each tone2 frequency by offsets[i] and scale its amplitude by scales[i]."""
    sets = []
    for ts, offset, scale in zip(schedule.transfer_sets, offsets, scales):
        tone2 = ts.tone2.model_copy(update={
            "frequency": ts.tone2.frequency + float(offset),
            "amplitude": ts.tone2.amplitude * float(scale),
        })
        sets.append(ts.model_copy(update={"tone2": tone2}))
    return schedule.model_copy(update={"transfer_sets": sets})


class _Efficiency:
    """|<-,n|U|+,n>|^2 for batches of (manifold, tone2 setting) columns."""

    def __init__(self, schedule: PulseSchedule, params: DeviceParams, delta: float, config: CalibrationConfig):
        self.schedule, self.params, self.delta, self.config = schedule, params, delta, config
        self.pairs: List[DressedPair] = [
            dressed_pair(n, delta, params.coupling, params.cavity_dim) for n in schedule.manifolds
        ]

    def __call__(self, which: np.ndarray, offsets: np.ndarray, scales: np.ndarray) -> np.ndarray:
        initial = np.stack([self.pairs[i].plus.amplitudes for i in which], axis=1)
        targets = np.stack([self.pairs[i].minus.amplitudes for i in which], axis=1)
        final = propagate_batch(self.schedule, self.params, initial, offsets, scales, self.delta, config=self.config)
        return np.abs(np.einsum("dj,dj->j", targets.conj(), final)) ** 2


def transfer_efficiencies(
    schedule: PulseSchedule,
    params: DeviceParams,
    delta: float = 0.0,
    config: Optional[CalibrationConfig] = None,
) -> Dict[int, float]:
    """Per-manifold |<-,n|U|+,n>|^2 of the schedule as given, on the full cavity truncation."""
    config = config or CalibrationConfig()
    k = len(schedule.transfer_sets)
    values = _Efficiency(schedule, params.without_decoherence(), delta, config)(
        np.arange(k), np.zeros((k, k)), np.ones((k, k))
    )
    return {n: float(v) for n, v in zip(schedule.manifolds, values)}


def _calibrate(schedule: PulseSchedule, params: DeviceParams, delta: float, config: CalibrationConfig) -> CalibrationReport:
    started = time.perf_counter()
    manifolds = schedule.manifolds
    k = len(manifolds)
    efficiency = _Efficiency(schedule, params, delta, config)
    # ties resolve to the scale closest to 1
    factors = sorted(config.amplitude_scales, key=lambda s: abs(s - 1.0))

    # one common offset and scale on every tone2
    coarse = [(float(o), float(s)) for s in factors for o in config.coarse_grid()]
    if (0.0, 1.0) not in coarse:
        coarse.append((0.0, 1.0))
    shift = np.tile([o for o, _ in coarse], k)
    factor = np.tile([s for _, s in coarse], k)
    values = efficiency(
        np.repeat(np.arange(k), len(coarse)),
        np.repeat(shift[:, None], k, axis=1),
        np.repeat(factor[:, None], k, axis=1),
    ).reshape(k, len(coarse))
    baseline = values[:, coarse.index((0.0, 1.0))]
    picked = values.argmax(axis=1)
    offsets = np.array([coarse[j][0] for j in picked])
    scales = np.array([coarse[j][1] for j in picked])
    logger.info(
        "Calibration.coarse: %s columns=%d best=%s elapsed=%.1fs",
        schedule.label, k * len(coarse), np.round(values.max(axis=1), 4).tolist(), time.perf_counter() - started,
    )

    # each tone2 on its own, the others held at their coarse choice
    fine = [(float(o), float(s)) for s in factors for o in config.fine_grid()]
    which, cols_offsets, cols_scales = [], [], []
    for i in range(k):
        for o, s in fine:
            row_offsets, row_scales = offsets.copy(), scales.copy()
            row_offsets[i] += o
            row_scales[i] = s
            which.append(i)
            cols_offsets.append(row_offsets)
            cols_scales.append(row_scales)
    values = efficiency(np.array(which), np.array(cols_offsets), np.array(cols_scales)).reshape(k, len(fine))
    picked = values.argmax(axis=1)
    offsets = offsets + np.array([fine[j][0] for j in picked])
    scales = np.array([fine[j][1] for j in picked])

    final = efficiency(np.arange(k), np.tile(offsets, (k, 1)), np.tile(scales, (k, 1)))
    calibrated = apply_tone2_corrections(schedule, offsets, scales)
    report = CalibrationReport(
        schedule=calibrated,
        offsets=dict(zip(manifolds, offsets.tolist())),
        scales=dict(zip(manifolds, scales.tolist())),
        baseline=dict(zip(manifolds, baseline.tolist())),
        efficiencies=dict(zip(manifolds, final.tolist())),
        cavity_dim=params.cavity_dim,
        target_efficiency=config.target_efficiency,
    )
    for n in manifolds:
        logger.info(
            "Calibration.done: %s n=%d offset=%+.3fMHz scale=%.2f efficiency %.4f -> %.4f",
            schedule.label, n, to_mhz(report.offsets[n]), report.scales[n], report.baseline[n], report.efficiencies[n],
        )
    CALIBRATIONS_TOTAL.labels(outcome="passed" if report.passed else "below_target").inc()
    if not report.passed:
        log_once_warning(
            logger,
            f"calibration_below_target:{schedule.label}",
            "Calibration: %s worst transfer efficiency %.4f is below the target %.2f",
            schedule.label, report.worst_efficiency, config.target_efficiency,
        )
    logger.info("Calibration: %s finished in %.1fs", schedule.label, time.perf_counter() - started)
    return report


_cache: Dict[str, CalibrationReport] = {}
_cache_lock = Lock()


def calibrate_schedule(
    schedule: PulseSchedule,
    params: DeviceParams,
    delta: float = 0.0,
    config: Optional[CalibrationConfig] = None,
) -> CalibrationReport:
    """
    Tone2 offsets and amplitude scales maximizing each manifold's transfer.

    A coarse pass moves every tone2 together over the offset grid and each
    amplitude scale; a fine pass then moves each tone2 on its own around its
    coarse choice. Decoherence is ignored and the cavity is cut to the levels the
    schedule reaches plus `extra_levels`. Results are cached per process.
    """
    config = config or CalibrationConfig()
    dim = min(params.cavity_dim, max(schedule.manifolds) + 3 + config.extra_levels)
    params = params.without_decoherence().with_cavity_dim(dim)
    key = "|".join((schedule.model_dump_json(), params.model_dump_json(), repr(float(delta)), config.model_dump_json()))
    with _cache_lock:
        cached = _cache.get(key)
    if cached is not None:
        return cached
    report = _calibrate(schedule, params, float(delta), config)
    with _cache_lock:
        _cache[key] = report
    return report


def clear_calibration_cache() -> None:
    with _cache_lock:
        _cache.clear()
