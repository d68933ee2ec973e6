"""
Time-dependent Lindblad integration and the decoherence-free Schrodinger fast path.

Generator: -i[H(t), rho] + kappa D[a] + gamma_minus D[sigma^-] + (gamma_phi / 2) D[sigma_z],
with D[b] rho = b rho b^dagger - {b^dagger b, rho} / 2.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import solve_ivp

from .errors import ContractError, IntegrationDivergedError, ShapeError, StiffnessError
from .hilbert import (
    CAVITY_ONLY,
    JOINT,
    QUBIT_ONLY,
    Subsystem,
    DensityOp,
    FockKet,
    OpMatrix,
    annihilation_op,
    number_op,
    on_cavity,
    on_qubit,
    parity_op,
    partial_trace_qubit,
    sigma_minus,
    sigma_z,
    subsystem_tags,
)
from .jc_model import DeviceParams
from .metrics import INTEGRATION_SECONDS, INTEGRATIONS_TOTAL, RHS_EVALUATIONS_TOTAL

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class HamiltonianTerms:
    """H = static + sum_j coef_j op_j, applied term by term in the hot loop."""

    static: sp.csr_matrix
    terms: Tuple[Tuple[complex, sp.csr_matrix], ...] = ()

    @property
    def shape(self) -> Tuple[int, int]:
        return self.static.shape

    def apply(self, y: np.ndarray) -> np.ndarray:
        out = self.static @ y
        for coef, op in self.terms:
            if coef != 0:
                out = out + coef * (op @ y)
        return out

    def to_sparse(self) -> sp.csr_matrix:
        total = self.static
        for coef, op in self.terms:
            total = total + coef * op
        return total.tocsr()


Operator = Union[sp.spmatrix, np.ndarray, OpMatrix, HamiltonianTerms]
HamiltonianFn = Callable[[float], Operator]

TRACE_TOL = 1e-6
HERMITIAN_TOL = 1e-8
EIGENVALUE_FLOOR = -1e-7
NORM_TOL = 1e-6


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["adaptive_dop853", "adaptive_rk45", "fixed_rk4"] = "adaptive_dop853"
    dt: float = Field(default=0.05, gt=0.0)
    rel_tol: float = Field(default=1e-10, gt=0.0)
    abs_tol: float = Field(default=1e-12, gt=0.0)
    sample_stride: int = Field(default=2000, ge=1)
    max_step: Optional[float] = Field(default=None, gt=0.0)
    check_invariants: bool = True
    progress: bool = True

    @property
    def sample_interval(self) -> float:
        return self.dt * self.sample_stride


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: List[Union[DensityOp, FockKet]]
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    kind: str = "lindblad"

    @property
    def final_state(self) -> Union[DensityOp, FockKet]:
        return self.states[-1]

    def observable_table(self) -> Tuple[List[str], List[List[float]]]:
        """Header and rows `t, observable...` for CSV export."""
        names = sorted(self.observables)
        rows = [[float(t)] + [float(self.observables[n][i]) for n in names] for i, t in enumerate(self.times)]
        return ["t"] + names, rows


def _as_sparse(op: Operator) -> sp.csr_matrix:
    if isinstance(op, HamiltonianTerms):
        return op.to_sparse()
    if isinstance(op, OpMatrix):
        return op.sparse
    if sp.issparse(op):
        return op.tocsr()
    return sp.csr_matrix(np.asarray(op, dtype=complex))


def collapse_operators(
    params: DeviceParams,
    basis_dims: Tuple[int, ...],
    subsystems: Optional[Tuple[Subsystem, ...]] = None,
) -> List[Tuple[float, sp.csr_matrix]]:
    """(rate, jump operator) pairs for the tagged factors; untagged layouts follow FockKet's defaults."""
    jumps: List[Tuple[float, sp.csr_matrix]] = []
    dims = tuple(int(d) for d in basis_dims)
    tags = subsystem_tags(dims, tuple(subsystems or ()))
    if tags not in (QUBIT_ONLY, CAVITY_ONLY, JOINT):
        raise ShapeError(f"unsupported layout {tags} with basis_dims {dims}")
    has_qubit = "qubit" in tags
    cavity_dim = dims[-1] if "cavity" in tags else None

    if params.kappa > 0.0:
        if cavity_dim is None:
            raise ShapeError("cavity decay requested on a qubit-only state")
        a = annihilation_op(cavity_dim)
        jumps.append((params.kappa, (on_cavity(a) if has_qubit else a).sparse))
    if params.gamma_minus > 0.0 or params.gamma_phi > 0.0:
        if not has_qubit:
            raise ShapeError("qubit decay requested on a cavity-only state")
        sm, sz = sigma_minus(), sigma_z()
        if cavity_dim is not None:
            sm, sz = on_qubit(sm, cavity_dim), on_qubit(sz, cavity_dim)
        if params.gamma_minus > 0.0:
            jumps.append((params.gamma_minus, sm.sparse))
        if params.gamma_phi > 0.0:
            jumps.append((0.5 * params.gamma_phi, sz.sparse))
    return jumps


class LindbladGenerator:
    """
    Right-hand side on dense rho with sparse operators.

    Uses the non-Hermitian effective Hamiltonian H - (i/2) sum L^dagger L, so each
    call costs one sparse product per jump plus one for H_eff. rho is assumed Hermitian.
    """

    def __init__(self, hamiltonian_fn: HamiltonianFn, params: DeviceParams, basis_dims: Tuple[int, ...],
                 subsystems: Optional[Tuple[Subsystem, ...]] = None):
        self.hamiltonian_fn = hamiltonian_fn
        self.basis_dims = tuple(basis_dims)
        self.dim = int(np.prod(self.basis_dims))
        self.jumps = [
            (math.sqrt(rate) * op).tocsr() for rate, op in collapse_operators(params, self.basis_dims, subsystems)
        ]
        damping = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for op in self.jumps:
            damping = damping + op.conj().T @ op
        self.damping = (0.5 * damping).tocsr()
        self.evaluations = 0

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        self.evaluations += 1
        h = self.hamiltonian_fn(t)
        if not isinstance(h, HamiltonianTerms):
            h = _as_sparse(h)
        if h.shape != (self.dim, self.dim):
            raise ShapeError(f"Hamiltonian shape {h.shape} does not match state dimension {self.dim}")
        if isinstance(h, HamiltonianTerms):
            x = h.apply(rho) - 1j * (self.damping @ rho)
        else:
            x = (h - 1j * self.damping) @ rho
        drho = -1j * x + 1j * x.conj().T
        for op in self.jumps:
            y = op @ rho
            drho += op @ y.conj().T
        return drho


def lindblad_rhs(rho: DensityOp, t: float, hamiltonian_fn: HamiltonianFn, params: DeviceParams) -> np.ndarray:
    return LindbladGenerator(hamiltonian_fn, params, rho.basis_dims, rho.subsystems)(t, np.asarray(rho.matrix))


class _Progress:
    """Logs integration progress at 5 % increments."""

    def __init__(self, label: str, t0: float, t1: float, enabled: bool):
        self.label = label
        self.t0 = t0
        self.span = t1 - t0
        self.enabled = enabled and self.span > 0
        self.next_mark = 5

    def update(self, t: float) -> None:
        if not self.enabled:
            return
        pct = 100.0 * (t - self.t0) / self.span
        if pct >= self.next_mark:
            reached = min(100, int(pct // 5) * 5)
            logger.info("Integrator.progress: %s %d%% (t=%.1f ns)", self.label, reached, t)
            self.next_mark = reached + 5


class _Observables:
    """Named expectation values for one basis layout."""

    def __init__(self, basis_dims: Tuple[int, ...], target: Optional[FockKet],
                 subsystems: Tuple[Subsystem, ...] = ()):
        self.target = target
        tags = subsystem_tags(tuple(basis_dims), tuple(subsystems))
        self.joint = tags == JOINT
        ops: Dict[str, sp.csr_matrix] = {}
        if tags == QUBIT_ONLY:
            ops["qubit_excited"] = OpMatrix(np.diag([0.0, 1.0]), True).sparse
        else:
            cavity_dim = basis_dims[-1]
            num, par = number_op(cavity_dim), parity_op(cavity_dim)
            ops["photon_number"] = (on_cavity(num) if self.joint else num).sparse
            ops["parity"] = (on_cavity(par) if self.joint else par).sparse
            if self.joint:
                ops["qubit_excited"] = on_qubit(OpMatrix(np.diag([0.0, 1.0]), True), cavity_dim).sparse
        self.ops = ops

    def evaluate(self, state: Union[DensityOp, FockKet]) -> Dict[str, float]:
        out: Dict[str, float] = {}
        if isinstance(state, FockKet):
            psi = state.amplitudes
            out["trace"] = float(np.vdot(psi, psi).real)
            for name, op in self.ops.items():
                out[name] = float(np.vdot(psi, op @ psi).real)
        else:
            rho = state.matrix
            out["trace"] = float(np.trace(rho).real)
            for name, op in self.ops.items():
                out[name] = float(np.trace(op @ rho).real)
        if self.target is not None:
            cavity = partial_trace_qubit(state) if self.joint else state
            if isinstance(cavity, FockKet):
                value = abs(np.vdot(self.target.amplitudes, cavity.amplitudes)) ** 2
            else:
                value = np.vdot(self.target.amplitudes, cavity.matrix @ self.target.amplitudes).real
            out["target_fidelity"] = float(value)
        return out


def _sample_times(t0: float, t1: float, interval: float) -> np.ndarray:
    samples = np.arange(t0, t1, interval)
    if samples.size == 0 or t1 - samples[-1] > 1e-9 * max(1.0, abs(t1)):
        samples = np.append(samples, t1)
    else:
        samples[-1] = t1
    return samples


Projection = Callable[[np.ndarray, float], np.ndarray]


def _rk4(fun: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t0: float, t1: float,
         config: IntegratorConfig, progress: _Progress,
         project: Optional[Projection] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    steps = max(1, int(math.ceil((t1 - t0) / config.dt - 1e-9)))
    h = (t1 - t0) / steps
    y = y0.copy()
    times, ys = [t0], [y.copy()]
    for i in range(1, steps + 1):
        t = t0 + (i - 1) * h
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergedError(f"non-finite state at t={t + h:.3f} ns (fixed_rk4, dt={h:.3e})")
        if i % config.sample_stride == 0 or i == steps:
            if project is not None:
                y = project(y, t0 + i * h)
            times.append(t0 + i * h)
            ys.append(y.copy())
        progress.update(t + h)
    return np.array(times), ys


_SCIPY_METHODS = {"adaptive_dop853": "DOP853", "adaptive_rk45": "RK45"}


def _adaptive(fun: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t0: float, t1: float,
              config: IntegratorConfig, progress: _Progress,
              project: Optional[Projection] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    """solve_ivp between consecutive sample times; `project` runs on the state at every sample."""
    def tracked(t, y):
        progress.update(t)
        return fun(t, y)

    samples = _sample_times(t0, t1, config.sample_interval)
    y = y0.copy()
    times, ys = [t0], [y.copy()]
    t, step = t0, min(config.dt, t1 - t0)
    for t_next in samples:
        if t_next <= t:
            continue
        soln = solve_ivp(
            tracked,
            (t, t_next),
            y,
            method=_SCIPY_METHODS[config.method],
            rtol=config.rel_tol,
            atol=config.abs_tol,
            first_step=min(step, t_next - t),
            max_step=config.max_step if config.max_step is not None else np.inf,
        )
        if soln.status == -1:
            if "step size" in soln.message.lower():
                raise StiffnessError(
                    f"adaptive integrator step underflow near t={soln.t[-1] if soln.t.size else t:.3f} ns: "
                    f"{soln.message} (rel_tol={config.rel_tol:.1e}, abs_tol={config.abs_tol:.1e}); "
                    "try fixed_rk4 with a smaller dt"
                )
            raise IntegrationDivergedError(f"adaptive integrator failed: {soln.message}")
        y = soln.y[:, -1]
        if soln.t.size > 2:
            step = float(np.max(np.diff(soln.t[-3:])))
        if project is not None:
            y = project(y, t_next)
        t = t_next
        times.append(t)
        ys.append(y.copy())
    return np.array(times), ys


def _run(
    kind: str,
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    to_state: Callable[[np.ndarray], Union[DensityOp, FockKet]],
    check: Callable[[Union[DensityOp, FockKet]], List[str]],
    t_span: Sequence[float],
    config: IntegratorConfig,
    observables: _Observables,
    counter: Callable[[], int],
    project: Optional[Projection] = None,
) -> Trajectory:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError(f"t_span must be finite, got {t_span}")
    if t1 < t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")

    if t1 == t0:
        state = to_state(y0)
        obs = {k: np.array([v]) for k, v in observables.evaluate(state).items()}
        return Trajectory(np.array([t0]), [state], obs, kind)

    started = time.perf_counter()
    progress = _Progress(kind, t0, t1, config.progress)
    logger.debug("Integrator.start: kind=%s method=%s span=[%.2f, %.2f] ns", kind, config.method, t0, t1)
    try:
        if config.method == "fixed_rk4":
            times, ys = _rk4(fun, y0, t0, t1, config, progress, project)
        else:
            times, ys = _adaptive(fun, y0, t0, t1, config, progress, project)

        states = []
        series: Dict[str, List[float]] = {}
        for t, y in zip(times, ys):
            state = to_state(y)
            if config.check_invariants:
                problems = check(state)
                if problems:
                    raise IntegrationDivergedError(f"invariant breach at t={t:.3f} ns: " + "; ".join(problems))
            states.append(state)
            for name, value in observables.evaluate(state).items():
                series.setdefault(name, []).append(value)
    except (StiffnessError, IntegrationDivergedError):
        INTEGRATIONS_TOTAL.labels(kind=kind, outcome="failed").inc()
        raise
    finally:
        RHS_EVALUATIONS_TOTAL.labels(kind=kind).inc(counter())
        INTEGRATION_SECONDS.labels(kind=kind).observe(time.perf_counter() - started)

    INTEGRATIONS_TOTAL.labels(kind=kind, outcome="ok").inc()
    logger.debug(
        "Integrator.done: kind=%s samples=%d rhs_calls=%d elapsed=%.2fs",
        kind, len(states), counter(), time.perf_counter() - started,
    )
    return Trajectory(np.asarray(times, dtype=float), states, {k: np.array(v) for k, v in series.items()}, kind)


def _density_check(state: DensityOp) -> List[str]:
    return state.violations(hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, eigenvalue_floor=EIGENVALUE_FLOOR)


def _ket_check(state: FockKet) -> List[str]:
    norm = state.norm()
    if abs(norm - 1.0) > NORM_TOL:
        return [f"norm {norm:.10f} deviates from 1 by more than {NORM_TOL:.1e}"]
    return []


def _renormalizer(strict: bool) -> Projection:
    """Rescale a ket to unit norm at each sample; with `strict`, drift above NORM_TOL since the last sample raises."""
    def project(y: np.ndarray, t: float) -> np.ndarray:
        norm = float(np.linalg.norm(y))
        if not math.isfinite(norm) or norm == 0.0:
            raise IntegrationDivergedError(f"state norm is {norm} at t={t:.3f} ns")
        if strict and abs(norm - 1.0) > NORM_TOL:
            raise IntegrationDivergedError(
                f"invariant breach at t={t:.3f} ns: norm {norm:.10f} drifted by more than {NORM_TOL:.1e} "
                "over one sample interval"
            )
        return y / norm

    return project


def evolve(
    rho0: Union[DensityOp, FockKet],
    hamiltonian_fn: HamiltonianFn,
    params: DeviceParams,
    t_span: Sequence[float],
    config: Optional[IntegratorConfig] = None,
    target: Optional[FockKet] = None,
) -> Trajectory:
    """Integrate the master equation; every sampled state is checked for trace, Hermiticity and positivity."""
    config = config or IntegratorConfig()
    rho0 = rho0.projector() if isinstance(rho0, FockKet) else rho0
    problems = _density_check(rho0)
    if problems:
        raise ValueError("evolve: invalid initial state: " + "; ".join(problems))
    dims, tags = rho0.basis_dims, rho0.subsystems
    d = rho0.dim
    generator = LindbladGenerator(hamiltonian_fn, params, dims, tags)

    def fun(t, y):
        return generator(t, y.reshape(d, d)).reshape(-1)

    return _run(
        "lindblad",
        fun,
        np.array(rho0.matrix, dtype=complex).reshape(-1),
        lambda y: DensityOp(y.reshape(d, d), dims, tags),
        _density_check,
        t_span,
        config,
        _Observables(dims, target, tags),
        lambda: generator.evaluations,
    )


def evolve_pure(
    ket0: FockKet,
    hamiltonian_fn: HamiltonianFn,
    t_span: Sequence[float],
    config: Optional[IntegratorConfig] = None,
    params: Optional[DeviceParams] = None,
    target: Optional[FockKet] = None,
) -> Trajectory:
    """
    Schrodinger evolution; only valid when every decoherence rate is zero.

    The ket is rescaled to unit norm at each sample, so the norm check bounds the
    drift per sample interval rather than over the whole span.
    """
    if params is not None and not params.decoherence_free:
        raise ContractError(
            f"evolve_pure requires zero decoherence rates, got kappa={params.kappa}, "
            f"gamma_minus={params.gamma_minus}, gamma_phi={params.gamma_phi}"
        )
    config = config or IntegratorConfig()
    dims, tags = ket0.basis_dims, ket0.subsystems
    d = ket0.dim
    calls = [0]

    def fun(t, y):
        calls[0] += 1
        h = hamiltonian_fn(t)
        if not isinstance(h, HamiltonianTerms):
            h = _as_sparse(h)
        if h.shape != (d, d):
            raise ShapeError(f"Hamiltonian shape {h.shape} does not match state dimension {d}")
        return -1j * (h.apply(y) if isinstance(h, HamiltonianTerms) else h @ y)

    return _run(
        "schrodinger",
        fun,
        np.array(ket0.amplitudes, dtype=complex),
        lambda y: FockKet(y, dims, tags),
        _ket_check,
        t_span,
        config,
        _Observables(dims, target, tags),
        lambda: calls[0],
        _renormalizer(config.check_invariants),
    )


def zero_hamiltonian(dim: int) -> HamiltonianFn:
    zero = sp.csr_matrix((dim, dim), dtype=complex)
    return lambda t: zero


def static(op: Operator) -> HamiltonianFn:
    h = _as_sparse(op)
    return lambda t: h
