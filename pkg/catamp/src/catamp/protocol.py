"""
E^dagger and (E^dagger)^2 amplification of cat states.

One E^dagger round is: adiabatic sweep-in (delta_start -> delta_end), the
simultaneous STIRAP transfer sets at delta_end, and the reversed sweep. A
(E^dagger)^2 run inserts an ideal qubit flip between two rounds. SNAP phases
correct the Fock-number dependent phases left by the rounds.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import minimize, minimize_scalar

from .calibration import CalibrationConfig, calibrate_schedule
from .config_loader import get_reference_defaults, get_snap_table, get_table1, get_worker_count
from .errors import ContractError, InvalidDimensionError, ScenarioConfigError, ShapeError, TruncationError
from .hilbert import (
    CAVITY_ONLY,
    E,
    JOINT,
    DensityOp,
    FockKet,
    OpMatrix,
    State,
    embed_cavity_state,
    expectation,
    jc_operators,
    on_cavity,
    on_qubit,
    parity_op,
    partial_trace_cavity,
    partial_trace_qubit,
    qubit_ket,
    sigma_x,
)
from .jc_model import DeviceParams, SweepSchedule, dressed_pair, sweep_delta
from .lindblad import HamiltonianTerms, IntegratorConfig, evolve, evolve_pure
from .log_once import log_once_warning
from .pulses import (
    PulseSchedule,
    WindowMode,
    drive_coefficient,
    single_transfer_schedule,
    split_sequential,
    table1_schedule,
)
from .states import (
    CatSpec,
    Parity,
    cat_ket,
    fidelity,
    photon_distribution,
    required_cavity_dim,
    shift_op,
    target_parity,
)
from .units import KHZ, MHZ, US

logger = logging.getLogger(__name__)

Round = Literal["first", "second"]
ScheduleMode = Literal["verbatim", "derived", "calibrated"]
_ROUND_TABLE = {"first": "first_edag", "second": "second_edag"}


def _table2_phases() -> List[float]:
    return get_snap_table()


class ProtocolConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    device: DeviceParams = Field(default_factory=DeviceParams)
    sweep: SweepSchedule = Field(default_factory=SweepSchedule)
    schedule_first: Optional[PulseSchedule] = None
    schedule_second: Optional[PulseSchedule] = None
    frequency_mode: ScheduleMode = "calibrated"
    reverse_order: bool = False
    window: WindowMode = "full"
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    snap_phases: List[float] = Field(default_factory=_table2_phases)
    snap_mode: Literal["fitted", "table2", "none"] = "fitted"
    snap_placement: Literal["after_each", "after_last"] = "after_each"
    reset_mode: Literal["ideal", "skip"] = "ideal"
    decoherence_on: bool = True
    sequential_transfers: bool = False
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    truncation_alarm: float = Field(default=1e-4, gt=0.0)
    qubit_overlap_min: float = Field(default=0.99, gt=0.0, le=1.0)

    @field_validator("snap_phases")
    @classmethod
    def _phase_convention(cls, phases: List[float]) -> List[float]:
        if phases and phases[0] != 0.0:
            raise ValueError(f"snap_phases[0] must be 0 by convention, got {phases[0]}")
        return phases

    @classmethod
    def reference_defaults(cls, kappa: Optional[float] = None, cavity_dim: Optional[int] = None, **overrides) -> "ProtocolConfig":
        """Reference device, sweep and transfer-table schedules; kappa ties gamma_minus = gamma_phi = 10 kappa."""
        device = DeviceParams()
        if cavity_dim is not None:
            device = device.with_cavity_dim(cavity_dim)
        if kappa is not None:
            device = device.with_cavity_decay(kappa)
        return cls(device=device, **overrides)

    def effective_device(self) -> DeviceParams:
        return self.device if self.decoherence_on else self.device.without_decoherence()

    def with_device(self, device: DeviceParams) -> "ProtocolConfig":
        return self.model_copy(update={"device": device})

    def with_cavity_dim(self, cavity_dim: int) -> "ProtocolConfig":
        return self.with_device(self.device.with_cavity_dim(cavity_dim))

    def schedule(self, which: Round) -> PulseSchedule:
        """
        The explicit schedule for `which`, else the transfer-table block.

        `calibrated` starts from the derived frequencies and tunes every tone2
        against the light shifts of the other tones (cached per process).
        """
        explicit = self.schedule_first if which == "first" else self.schedule_second
        if explicit is not None:
            return explicit
        schedule = table1_schedule(
            _ROUND_TABLE[which],
            self.device,
            mode="derived" if self.frequency_mode == "calibrated" else self.frequency_mode,
            reverse_order=self.reverse_order,
            window=self.window,
        )
        if self.frequency_mode != "calibrated":
            return schedule
        return calibrate_schedule(schedule, self.device, self.sweep.delta_end, self.calibration).schedule


class AmplificationReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: float
    parity: Parity
    k: int
    target_parity: Parity
    fidelity_vs_target: float = Field(ge=0.0, le=1.0)
    fidelity_before_snap: float = Field(ge=0.0, le=1.0)
    best_alpha_prime: float
    gain: float
    parity_expectation: float
    photon_number: float
    runtime_seconds: float
    snap_phases: List[float] = Field(default_factory=list)
    snap_fit_converged: bool = True
    max_truncation_population: float = 0.0
    kappa: float = 0.0
    cavity_dim: int
    warnings: List[str] = Field(default_factory=list)
    final_cavity_state: Optional[DensityOp] = Field(default=None, exclude=True)


@dataclass(frozen=True)
class SnapFit:
    phases: List[float]
    fidelity_before: float
    fidelity_after: float
    converged: bool


@dataclass(frozen=True)
class ShiftEvidence:
    residual: float
    leakage: float
    compared_entries: int
    mode: str


@dataclass(frozen=True)
class TruncationConvergence:
    cavity_dims: Tuple[int, int]
    fidelities: Tuple[float, float]
    gains: Tuple[float, float]

    @property
    def fidelity_change(self) -> float:
        return abs(self.fidelities[1] - self.fidelities[0])


@dataclass
class RoundDiagnostics:
    qubit_excited_before: float = 1.0
    max_truncation_population: float = 0.0
    warnings: List[str] = field(default_factory=list)


class JCHamiltonian:
    """Sparse rotating-frame Hamiltonians for the sweep and the driven stage."""

    def __init__(self, params: DeviceParams):
        self.params = params
        ops = jc_operators(params.cavity_dim)
        self._half_sz = (0.5 * ops.sz).tocsr()
        self._coupling = (params.coupling * ops.coupling).tocsr()
        self._a = ops.a
        self._adag = ops.adag

    def static(self, delta: float) -> sp.csr_matrix:
        return (delta * self._half_sz + self._coupling).tocsr()

    def sweep(self, schedule: SweepSchedule):
        def h(t: float) -> HamiltonianTerms:
            delta = sweep_delta(schedule, min(max(t, 0.0), schedule.duration))
            return HamiltonianTerms(self._coupling, ((delta, self._half_sz),))

        return h

    def driven(self, schedule: PulseSchedule, delta: float):
        static = self.static(delta)

        def h(t: float) -> HamiltonianTerms:
            c = drive_coefficient(schedule, t, self.params)
            return HamiltonianTerms(static, ((c, self._adag), (np.conj(c), self._a)))

        return h


def prepare_initial(alpha: complex, parity: Parity, config: ProtocolConfig) -> FockKet:
    """|e> (x) |SC^{+-}_alpha>."""
    cat = cat_ket(CatSpec(alpha=alpha, parity=parity), config.device.cavity_dim)
    return embed_cavity_state(qubit_ket("e"), cat)


def _qubit_excited(state: State) -> float:
    return float(np.real(partial_trace_cavity(state).matrix[E, E]))


def _top_population(state: State) -> float:
    pops = photon_distribution(partial_trace_qubit(state))
    return float(pops[-2:].sum())


def _propagate(state: State, hamiltonian, span: Tuple[float, float], params: DeviceParams,
               config: ProtocolConfig) -> State:
    if isinstance(state, FockKet) and params.decoherence_free:
        return evolve_pure(state, hamiltonian, span, config.integrator, params=params).final_state
    return evolve(state, hamiltonian, params, span, config.integrator).final_state


def _run_round(state: State, config: ProtocolConfig, which: Round) -> Tuple[State, RoundDiagnostics]:
    diag = RoundDiagnostics()
    params = config.effective_device()
    if not params.decoherence_free and isinstance(state, FockKet):
        state = state.projector()

    diag.qubit_excited_before = _qubit_excited(state)
    if diag.qubit_excited_before < config.qubit_overlap_min:
        message = f"qubit overlap with |e> is {diag.qubit_excited_before:.4f} before the {which} round"
        diag.warnings.append(message)
        log_once_warning(logger, f"qubit_overlap:{which}", "Protocol.run_edag: %s", message)

    hamiltonian = JCHamiltonian(params)
    pulses = config.schedule(which)
    stages: List[Tuple[str, object, Tuple[float, float]]] = [
        ("sweep_in", hamiltonian.sweep(config.sweep), (0.0, config.sweep.duration)),
    ]
    for schedule in (split_sequential(pulses) if config.sequential_transfers else [pulses]):
        stages.append(
            (f"pulses[{schedule.label}]", hamiltonian.driven(schedule, config.sweep.delta_end),
             (schedule.t_start, schedule.t_end))
        )
    sweep_out = config.sweep.reversed()
    stages.append(("sweep_out", hamiltonian.sweep(sweep_out), (0.0, sweep_out.duration)))

    for name, h, span in stages:
        started = time.perf_counter()
        state = _propagate(state, h, span, params, config)
        top = _top_population(state)
        diag.max_truncation_population = max(diag.max_truncation_population, top)
        logger.info(
            "Protocol.run_edag: round=%s stage=%s span=%.2fus top_levels=%.2e elapsed=%.1fs",
            which, name, (span[1] - span[0]) / US, top, time.perf_counter() - started,
        )
        if top > config.truncation_alarm:
            raise TruncationError(
                f"{which} round, stage {name}: top two Fock levels hold {top:.2e} > {config.truncation_alarm:.1e}",
                required_dim=params.cavity_dim + 5,
            )
    return state, diag


def run_edag(state: State, config: ProtocolConfig, which: Round = "first") -> State:
    """One E^dagger round on the joint state."""
    return _run_round(state, config, which)[0]


def qubit_reset(state: State, config: ProtocolConfig) -> State:
    """Ideal instantaneous sigma_x on the qubit factor; `skip` leaves the state untouched."""
    if config.reset_mode == "skip":
        return state
    if state.subsystems != JOINT:
        raise ShapeError(f"qubit_reset expects a joint state, got basis_dims {state.basis_dims}")
    return on_qubit(sigma_x(), state.basis_dims[1]).apply(state)


def _snap_diagonal(phases: Sequence[float], cavity_dim: int) -> np.ndarray:
    if len(phases) > cavity_dim:
        raise InvalidDimensionError(f"{len(phases)} SNAP phases exceed cavity_dim={cavity_dim}")
    padded = np.zeros(cavity_dim)
    padded[: len(phases)] = phases
    return np.exp(1j * padded)


def snap_gate(state: State, phases: Sequence[float]) -> State:
    """Apply sum_m exp(i Phi_m)|m><m| to the cavity factor."""
    cavity_dim = state.basis_dims[-1]
    snap = OpMatrix(np.diag(_snap_diagonal(phases, cavity_dim)))
    op = on_cavity(snap) if state.subsystems == JOINT else snap
    return op.apply(state)


def _wrap(phases: np.ndarray) -> np.ndarray:
    return -((-phases + np.pi) % (2.0 * np.pi) - np.pi)


def fit_snap_phases(rho_cavity: State, target: FockKet, tol: float = 1e-10) -> SnapFit:
    """
    Phases maximizing <t| S rho S^dagger |t>, with Phi_0 = 0.

    Starts from the zero phases and from the principal-eigenvector phases; keeps the
    better BFGS result and falls back to zeros when neither improves on them.
    """
    rho = rho_cavity.projector() if isinstance(rho_cavity, FockKet) else rho_cavity
    if rho.subsystems != CAVITY_ONLY or rho.dim != target.dim:
        raise ShapeError(f"fit_snap_phases: state dims {rho.basis_dims} vs target dim {target.dim}")
    m = np.asarray(rho.matrix)
    t = np.asarray(target.amplitudes)
    n = t.size
    active = np.nonzero(np.abs(t) > 1e-12)[0]
    pinned = {0}
    if t[0] == 0 and active.size:
        pinned.add(int(active[0]))
    free = np.array([i for i in active if i not in pinned], dtype=int)

    def full(x: np.ndarray) -> np.ndarray:
        phases = np.zeros(n)
        phases[free] = x
        return phases

    def objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
        u = np.exp(-1j * full(x)) * t
        ru = m @ u
        value = float(np.real(np.vdot(u, ru)))
        grad = -2.0 * np.imag(np.conj(u) * ru)
        return -value, grad[free]

    before = -objective(np.zeros(free.size))[0]
    if free.size == 0:
        return SnapFit([0.0] * n, before, before, True)

    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    v = vecs[:, -1]
    guess = np.angle(t) - np.angle(v)
    ref = max(pinned, key=lambda i: abs(t[i]))
    guess = guess - guess[ref]

    best_x, best_value, converged = np.zeros(free.size), before, True
    for x0 in (np.zeros(free.size), guess[free]):
        result = minimize(objective, x0, jac=True, method="BFGS", options={"gtol": tol, "maxiter": 2000})
        value = -float(result.fun)
        if value > best_value:
            best_x, best_value, converged = result.x, value, bool(result.success)
    if not converged:
        logger.warning("Protocol.fit_snap_phases: optimizer did not converge; returning best found (F=%.6f)", best_value)
    phases = _wrap(full(best_x))
    phases[0] = 0.0
    return SnapFit([float(p) for p in phases], before, best_value, converged)


def _target_dim(alpha_prime_max: float, cavity_dim: int) -> int:
    return max(cavity_dim, required_cavity_dim(alpha_prime_max, 1e-12))


def cropped_cat(alpha_prime: float, parity: Parity, cavity_dim: int) -> FockKet:
    """Cat built at an auto-sized dimension and cut to cavity_dim without renormalizing."""
    big = cat_ket(CatSpec(alpha=alpha_prime, parity=parity), _target_dim(alpha_prime, cavity_dim))
    return FockKet(big.amplitudes[:cavity_dim], (cavity_dim,))


def scan_target_fidelity(
    rho_cavity: State,
    alpha: float,
    parity: Parity,
    grid_step: float = 0.005,
    upper_factor: float = 2.5,
) -> Tuple[float, float]:
    """Best (alpha', fidelity) against |SC^parity_alpha'> on [alpha, upper_factor alpha]."""
    rho = rho_cavity.projector() if isinstance(rho_cavity, FockKet) else rho_cavity
    n = rho.dim
    lo, hi = alpha, upper_factor * alpha
    grid = np.linspace(lo, hi, int(round((hi - lo) / grid_step)) + 1)

    def f(a: float) -> float:
        return fidelity(rho, cropped_cat(a, parity, n))

    values = np.array([f(a) for a in grid])
    i = int(np.argmax(values))
    if i == 0 or i == grid.size - 1:
        logger.debug("Protocol.scan_target_fidelity: maximum on the grid edge alpha'=%.3f", grid[i])
        return float(grid[i]), float(values[i])
    result = minimize_scalar(lambda a: -f(a), bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                             options={"xtol": 1e-5})
    if -result.fun > values[i]:
        return float(result.x), float(min(1.0, -result.fun))
    return float(grid[i]), float(values[i])


def target_fidelity_curve(rho_cavity: State, parity: Parity, alpha_primes: Sequence[float]) -> List[Tuple[float, float]]:
    rho = rho_cavity.projector() if isinstance(rho_cavity, FockKet) else rho_cavity
    return [(float(a), fidelity(rho, cropped_cat(float(a), parity, rho.dim))) for a in alpha_primes]


def _snap_correct(
    state: State, config: ProtocolConfig, alpha: float, parity: Parity
) -> Tuple[State, List[float], Optional[SnapFit]]:
    if config.snap_mode == "none":
        return state, [], None
    if config.snap_mode == "table2":
        phases = list(config.snap_phases)[: state.basis_dims[-1]]
        return snap_gate(state, phases), phases, None
    cavity = partial_trace_qubit(state)
    best_alpha, _ = scan_target_fidelity(cavity, alpha, parity)
    fit = fit_snap_phases(cavity, cropped_cat(best_alpha, parity, cavity.dim))
    return snap_gate(state, fit.phases), fit.phases, fit


def amplify(alpha: float, parity: Parity, k: int, config: ProtocolConfig) -> AmplificationReport:
    """prepare -> E^dagger [-> reset -> E^dagger] -> SNAP -> trace out the qubit -> alpha' scan."""
    if not (isinstance(alpha, (int, float)) and alpha > 0.0 and np.isfinite(alpha)):
        raise ScenarioConfigError(f"alpha must be a positive real amplitude, got {alpha!r}")
    if k not in (1, 2):
        raise ValueError(f"k must be 1 or 2, got {k}")
    if k == 2 and config.reset_mode == "skip":
        raise ContractError("a two-photon shift needs a qubit reset between rounds (reset_mode != 'skip')")
    started = time.perf_counter()
    params = config.effective_device()
    warnings: List[str] = []
    top = 0.0
    converged = True
    phases: List[float] = []
    fidelity_before = None

    state: State = prepare_initial(alpha, parity, config)
    rounds: List[Round] = ["first"] if k == 1 else ["first", "second"]
    current_parity = parity
    for i, which in enumerate(rounds):
        if i > 0:
            state = qubit_reset(state, config)
        state, diag = _run_round(state, config, which)
        warnings.extend(diag.warnings)
        top = max(top, diag.max_truncation_population)
        current_parity = target_parity(current_parity, 1)
        last = i == len(rounds) - 1
        if last:
            fidelity_before = scan_target_fidelity(partial_trace_qubit(state), alpha, current_parity)[1]
        if config.snap_placement == "after_each" or last:
            state, phases, fit = _snap_correct(state, config, alpha, current_parity)
            if fit is not None:
                converged = converged and fit.converged

    cavity = partial_trace_qubit(state)
    best_alpha, best_fidelity = scan_target_fidelity(cavity, alpha, current_parity)
    report = AmplificationReport(
        alpha=alpha,
        parity=parity,
        k=k,
        target_parity=current_parity,
        fidelity_vs_target=min(max(best_fidelity, 0.0), 1.0),
        fidelity_before_snap=min(max(fidelity_before or 0.0, 0.0), 1.0),
        best_alpha_prime=best_alpha,
        gain=best_alpha / alpha,
        parity_expectation=float(np.real(expectation(cavity, parity_op(cavity.dim)))),
        photon_number=float(np.dot(np.arange(cavity.dim), photon_distribution(cavity))),
        runtime_seconds=time.perf_counter() - started,
        snap_phases=phases,
        snap_fit_converged=converged,
        max_truncation_population=top,
        kappa=params.kappa,
        cavity_dim=params.cavity_dim,
        warnings=warnings,
        final_cavity_state=cavity,
    )
    logger.info(
        "Protocol.amplify: alpha=%.3f parity=%s k=%d kappa/2pi=%.3fkHz F=%.4f (before SNAP %.4f) G=%.4f elapsed=%.1fs",
        alpha, parity, k, params.kappa / KHZ, report.fidelity_vs_target, report.fidelity_before_snap,
        report.gain, report.runtime_seconds,
    )
    return report


def _stirap_defaults() -> dict:
    return get_reference_defaults().get("stirap_scan", {})


def stirap_efficiency(
    tau: float,
    delta0: float,
    params: DeviceParams,
    integrator: Optional[IntegratorConfig] = None,
) -> float:
    """|<-,0|psi>|^2 after one tone pair (transfer-table n = 0 amplitudes) acting on |+,0> at delta = 0."""
    block = get_table1("first_edag")
    row = next(r for r in block["rows"] if int(r["n"]) == 0)
    width = float(block["width_us"]) * US
    schedule = single_transfer_schedule(
        0, delta0, params, float(block["eps1_mhz"]) * MHZ, float(row["eps2_mhz"]) * MHZ, tau, width,
    )
    pair = dressed_pair(0, 0.0, params.coupling, params.cavity_dim)
    hamiltonian = JCHamiltonian(params).driven(schedule, 0.0)
    final = evolve_pure(
        pair.plus, hamiltonian, (schedule.t_start, schedule.t_end),
        integrator or IntegratorConfig(progress=False), params=params,
    ).final_state
    return float(abs(np.vdot(pair.minus.amplitudes, final.amplitudes)) ** 2)


def stirap_scan(
    tau_values: Optional[Sequence[float]] = None,
    delta0: Optional[float] = None,
    config: Optional[ProtocolConfig] = None,
    workers: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """Transfer efficiency on manifold n = 0 against the envelope offset tau (ns); negative tau reverses the order."""
    defaults = _stirap_defaults()
    if tau_values is None:
        tau_values = [float(v) * US for v in defaults.get("tau_us", [])]
    if delta0 is None:
        delta0 = float(defaults.get("delta0_mhz", 10.0)) * MHZ
    if config is None:
        params = DeviceParams(cavity_dim=int(defaults.get("cavity_dim", 6)))
        integrator = IntegratorConfig(progress=False)
    else:
        params = config.device
        integrator = config.integrator
    params = params.without_decoherence()
    taus = [float(t) for t in tau_values]
    workers = workers if workers is not None else get_worker_count()

    def run(tau: float) -> float:
        eff = stirap_efficiency(tau, delta0, params, integrator)
        logger.info("Protocol.stirap_scan: tau=%.3fus efficiency=%.4f", tau / US, eff)
        return eff

    if workers > 1 and len(taus) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            effs = list(pool.map(run, taus))
    else:
        effs = [run(t) for t in taus]
    return list(zip(taus, effs))


def shift_evidence(
    rho_in: State,
    rho_out: State,
    k: int,
    mode: Literal["magnitude", "complex"] = "magnitude",
    threshold: float = 1e-3,
) -> ShiftEvidence:
    """
    Compare <m+k|rho_out|n+k> with <m|rho_in|n> over input entries above threshold,
    and measure the output population on the parity sector the shift should leave empty.
    """
    a = np.asarray((rho_in.projector() if isinstance(rho_in, FockKet) else rho_in).matrix)
    b = np.asarray((rho_out.projector() if isinstance(rho_out, FockKet) else rho_out).matrix)
    if a.shape != b.shape:
        raise ShapeError(f"shift_evidence: shapes {a.shape} and {b.shape} differ")
    n = a.shape[0]
    residual, count = 0.0, 0
    for i, j in zip(*np.nonzero(np.abs(a) > threshold)):
        if i + k >= n or j + k >= n:
            continue
        out, ref = b[i + k, j + k], a[i, j]
        diff = abs(abs(out) - abs(ref)) if mode == "magnitude" else abs(out - ref)
        residual = max(residual, float(diff))
        count += 1
    input_parity = float(np.real(np.sum(np.diag(a) * (-1.0) ** np.arange(n))))
    expected = (1.0 if input_parity >= 0 else -1.0) * (-1.0) ** k
    wrong = (-1.0) ** np.arange(n) != expected
    leakage = float(np.real(np.diag(b))[wrong].sum())
    return ShiftEvidence(residual=residual, leakage=leakage, compared_entries=count, mode=mode)


def decoherence_sweep(
    alpha: float,
    parity: Parity,
    k: int,
    config: ProtocolConfig,
    kappas: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> List[Tuple[float, AmplificationReport]]:
    """amplify at each cavity decay rate, with gamma_minus = gamma_phi = 10 kappa."""
    if kappas is None:
        levels = get_reference_defaults().get("decoherence", {}).get("kappa_khz_levels", [0.0, 0.25, 0.5])
        kappas = [float(v) * KHZ for v in levels]
    configs = [
        config.model_copy(update={"device": config.device.with_cavity_decay(kp), "decoherence_on": True})
        for kp in kappas
    ]
    workers = workers if workers is not None else get_worker_count()
    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            reports = list(pool.map(lambda c: amplify(alpha, parity, k, c), configs))
    else:
        reports = [amplify(alpha, parity, k, c) for c in configs]
    return list(zip([float(kp) for kp in kappas], reports))


def truncation_convergence(
    alpha: float,
    parity: Parity,
    k: int,
    config: ProtocolConfig,
    extra_levels: int = 5,
) -> TruncationConvergence:
    """Rerun amplify at cavity_dim + extra_levels and report both fidelities and gains."""
    small = config.device.cavity_dim
    large = small + extra_levels
    first = amplify(alpha, parity, k, config)
    second = amplify(alpha, parity, k, config.with_cavity_dim(large))
    result = TruncationConvergence(
        cavity_dims=(small, large),
        fidelities=(first.fidelity_vs_target, second.fidelity_vs_target),
        gains=(first.gain, second.gain),
    )
    logger.info(
        "Protocol.truncation_convergence: N_c=%d F=%.5f, N_c=%d F=%.5f, change=%.2e",
        small, result.fidelities[0], large, result.fidelities[1], result.fidelity_change,
    )
    return result


def ideal_shift(state: State, k: int) -> DensityOp:
    """E^dagger^k rho E^k on a cavity state, the exact-operator reference for shift_evidence."""
    rho = state.projector() if isinstance(state, FockKet) else state
    return shift_op(rho.dim, k).apply(rho)
