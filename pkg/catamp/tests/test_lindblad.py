"""Unit tests for the master-equation and Schrodinger integrators"""
import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from prometheus_client import REGISTRY
from scipy.linalg import expm

from catamp import lindblad
from catamp.errors import ContractError, IntegrationDivergedError, ShapeError, StiffnessError
from catamp.hilbert import CAVITY_ONLY, QUBIT_ONLY, FockKet, annihilation_op, basis_ket, joint_ket, qubit_ket
from catamp.jc_model import DeviceParams, dressed_pair
from catamp.lindblad import (
    NORM_TOL,
    HamiltonianTerms,
    IntegratorConfig,
    collapse_operators,
    evolve,
    evolve_pure,
    lindblad_rhs,
    static,
    zero_hamiltonian,
)
from catamp.protocol import JCHamiltonian
from catamp.pulses import single_transfer_schedule
from catamp.states import coherent_ket, fidelity
from catamp.units import KHZ, MHZ, US


def _random_hermitian(dim, seed=7):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (m + m.conj().T)


def _random_ket(dim, seed=11):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return FockKet(v / np.linalg.norm(v), (dim,))


class TestGenerator:

    def test_dephasing_rate_on_coherence(self):
        params = DeviceParams(gamma_phi=0.3)
        plus_x = FockKet(np.array([1.0, 1.0]) / math.sqrt(2), (2,), QUBIT_ONLY).projector()
        drho = lindblad_rhs(plus_x, 0.0, zero_hamiltonian(2), params)
        assert np.isclose(drho[0, 1], -0.3 * 0.5)
        assert np.isclose(drho[0, 0], 0.0)

    def test_amplitude_damping_moves_population_down(self):
        params = DeviceParams(gamma_minus=0.2)
        excited = qubit_ket("e").projector()
        drho = lindblad_rhs(excited, 0.0, zero_hamiltonian(2), params)
        assert np.isclose(drho[1, 1], -0.2)
        assert np.isclose(drho[0, 0], 0.2)

    def test_generator_is_traceless_and_hermitian(self):
        params = DeviceParams(kappa=0.01, gamma_minus=0.02, gamma_phi=0.03, cavity_dim=4)
        h = _random_hermitian(8)
        rho = _random_ket(8).amplitudes
        state = FockKet(rho, (2, 4)).projector()
        drho = lindblad_rhs(state, 0.0, static(h), params)
        assert abs(np.trace(drho)) < 1e-12
        assert np.allclose(drho, drho.conj().T)

    def test_collapse_operators_for_each_layout(self):
        params = DeviceParams(kappa=1.0, gamma_minus=2.0, gamma_phi=4.0)
        assert [rate for rate, _ in collapse_operators(params, (2, 3))] == [1.0, 2.0, 2.0]
        with pytest.raises(ShapeError):
            collapse_operators(params, (5,))
        with pytest.raises(ShapeError):
            collapse_operators(params.model_copy(update={"gamma_minus": 0.0, "gamma_phi": 0.0}), (2,), QUBIT_ONLY)

    def test_two_level_cavity_is_not_a_qubit(self):
        params = DeviceParams(kappa=1.0)
        jumps = collapse_operators(params, (2,), CAVITY_ONLY)
        assert len(jumps) == 1
        assert np.allclose(jumps[0][1].toarray(), annihilation_op(2).matrix)
        one_photon = basis_ket(2, 1).projector()
        assert one_photon.subsystems == CAVITY_ONLY
        drho = lindblad_rhs(one_photon, 0.0, zero_hamiltonian(2), params)
        assert np.isclose(drho[1, 1], -1.0)
        assert np.isclose(drho[0, 0], 1.0)
        with pytest.raises(ShapeError):
            lindblad_rhs(one_photon, 0.0, zero_hamiltonian(2), DeviceParams(gamma_minus=1.0))

    def test_observables_follow_subsystem_tags(self, quiet_integrator):
        cavity = evolve_pure(basis_ket(2, 1), zero_hamiltonian(2), (0.0, 1.0), quiet_integrator)
        assert set(cavity.observables) == {"photon_number", "parity", "trace"}
        assert cavity.observables["photon_number"][-1] == pytest.approx(1.0)
        assert cavity.observables["parity"][-1] == pytest.approx(-1.0)
        qubit = evolve_pure(qubit_ket("e"), zero_hamiltonian(2), (0.0, 1.0), quiet_integrator)
        assert set(qubit.observables) == {"qubit_excited", "trace"}
        assert qubit.final_state.subsystems == QUBIT_ONLY

    def test_two_level_cavity_decays_under_evolve(self, quiet_integrator):
        kappa, t = 1e-3, 300.0
        trajectory = evolve(basis_ket(2, 1), zero_hamiltonian(2), DeviceParams(kappa=kappa, cavity_dim=2), (0.0, t),
                            quiet_integrator)
        assert trajectory.observables["photon_number"][-1] == pytest.approx(math.exp(-kappa * t), abs=1e-8)

    def test_hamiltonian_terms_apply_matches_dense(self):
        a = sp.csr_matrix(np.diag([1.0, 2.0, 3.0]))
        b = sp.csr_matrix(np.eye(3, k=1))
        terms = HamiltonianTerms(a, ((0.5j, b), (-0.5j, b.T.tocsr())))
        y = np.arange(9, dtype=complex).reshape(3, 3)
        assert np.allclose(terms.apply(y), terms.to_sparse().toarray() @ y)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lindblad_rhs(basis_ket(3, 0).projector(), 0.0, zero_hamiltonian(4), DeviceParams())


class TestClosedForms:

    def test_static_evolution_matches_matrix_exponential(self, quiet_integrator):
        h = 0.3 * _random_hermitian(6)
        ket = _random_ket(6)
        config = quiet_integrator.model_copy(update={"rel_tol": 1e-10, "abs_tol": 1e-12})
        trajectory = evolve_pure(ket, static(h), (0.0, 5.0), config)
        exact = FockKet(expm(-1j * h * 5.0) @ ket.amplitudes, (6,))
        assert fidelity(trajectory.final_state, exact) > 1 - 1e-8

    def test_free_cavity_decay_stays_coherent(self, quiet_integrator):
        dim, kappa, t = 15, 1e-3, 500.0
        params = DeviceParams(kappa=kappa, cavity_dim=dim)
        trajectory = evolve(coherent_ket(1.0, dim), zero_hamiltonian(dim), params, (0.0, t), quiet_integrator)
        expected = coherent_ket(math.exp(-kappa * t / 2), dim)
        assert fidelity(trajectory.final_state, expected) > 1 - 1e-6
        assert np.isclose(trajectory.observables["photon_number"][-1], math.exp(-kappa * t), atol=1e-6)

    def test_vacuum_rabi_period(self, quiet_integrator):
        params = DeviceParams(cavity_dim=3)
        period = math.pi / params.coupling
        h = JCHamiltonian(params).static(0.0)
        config = quiet_integrator.model_copy(update={"sample_stride": 1, "dt": period / 40})
        trajectory = evolve_pure(joint_ket("e", 0, 3), static(h), (0.0, period), config)
        excited = trajectory.observables["qubit_excited"]
        expected = np.cos(params.coupling * trajectory.times) ** 2
        assert np.allclose(excited, expected, atol=1e-6)
        assert excited[-1] > 1 - 1e-6

    def test_rk4_matches_adaptive(self, quiet_integrator):
        h = 0.5 * _random_hermitian(5, seed=3)
        ket = _random_ket(5, seed=4)
        adaptive = evolve_pure(ket, static(h), (0.0, 2.0), quiet_integrator)
        fixed = evolve_pure(ket, static(h), (0.0, 2.0), quiet_integrator.model_copy(update={"method": "fixed_rk4", "dt": 0.005}))
        assert np.allclose(adaptive.final_state.amplitudes, fixed.final_state.amplitudes, atol=1e-6)

    def test_rk4_convergence_order(self, quiet_integrator):
        h = 0.5 * _random_hermitian(4, seed=5)
        ket = _random_ket(4, seed=6)
        exact = expm(-1j * h * 2.0) @ ket.amplitudes
        errors = []
        for dt in (0.1, 0.05):
            config = quiet_integrator.model_copy(update={"method": "fixed_rk4", "dt": dt, "check_invariants": False})
            final = evolve_pure(ket, static(h), (0.0, 2.0), config).final_state
            errors.append(np.linalg.norm(final.amplitudes - exact))
        assert math.log2(errors[0] / errors[1]) >= 3.8


class TestInvariants:

    def test_lindblad_snapshots_stay_physical(self, quiet_integrator):
        params = DeviceParams(cavity_dim=4).with_cavity_decay(50 * KHZ)
        h = JCHamiltonian(params).static(5 * MHZ)
        config = quiet_integrator.model_copy(update={"sample_stride": 50})
        trajectory = evolve(joint_ket("e", 1, 4), static(h), params, (0.0, 200.0), config)
        assert len(trajectory.states) > 3
        for state in trajectory.states:
            assert state.violations(hermitian_tol=1e-8, trace_tol=1e-6, eigenvalue_floor=-1e-7) == []
        assert np.allclose(trajectory.observables["trace"], 1.0, atol=1e-6)

    def test_pure_path_refuses_decoherence(self):
        params = DeviceParams(kappa=1e-6)
        with pytest.raises(ContractError):
            evolve_pure(basis_ket(2, 0), zero_hamiltonian(2), (0.0, 1.0), params=params)

    def test_zero_length_span(self, quiet_integrator):
        trajectory = evolve_pure(basis_ket(3, 1), zero_hamiltonian(3), (4.0, 4.0), quiet_integrator)
        assert trajectory.times.tolist() == [4.0]
        assert trajectory.final_state.norm() == pytest.approx(1.0)

    def test_rejects_backward_span(self):
        with pytest.raises(ValueError):
            evolve_pure(basis_ket(3, 1), zero_hamiltonian(3), (1.0, 0.0))

    def test_rejects_invalid_initial_state(self):
        bad = FockKet(np.array([1.0, 1.0]), (2,)).projector()
        with pytest.raises(ValueError):
            evolve(bad, zero_hamiltonian(2), DeviceParams(), (0.0, 1.0))

    def test_norm_drift_is_reported(self, quiet_integrator):
        leaky = sp.csr_matrix(-0.5j * np.eye(2))
        with pytest.raises(IntegrationDivergedError):
            evolve_pure(basis_ket(2, 0), static(leaky), (0.0, 1.0), quiet_integrator)


def _inflating_solver(factor):
    """solve_ivp whose end state is scaled by `factor` on every call."""
    real = lindblad.solve_ivp

    def solve(fun, span, y0, **kwargs):
        soln = real(fun, span, y0, **kwargs)
        soln.y[:, -1] *= factor
        return soln

    return solve


class TestNormControl:

    def test_default_integrator_is_tight_dop853(self):
        config = IntegratorConfig()
        assert config.method == "adaptive_dop853"
        assert config.rel_tol <= 1e-10
        assert config.abs_tol <= 1e-12

    def test_small_per_interval_drift_is_renormalized(self, monkeypatch, quiet_integrator):
        monkeypatch.setattr(lindblad, "solve_ivp", _inflating_solver(1.0 + 0.4 * NORM_TOL))
        config = quiet_integrator.model_copy(update={"dt": 0.1, "sample_stride": 10})
        trajectory = evolve_pure(basis_ket(3, 1), zero_hamiltonian(3), (0.0, 40.0), config)
        assert len(trajectory.times) == 41
        assert np.allclose(trajectory.observables["trace"], 1.0, atol=1e-12)
        assert trajectory.final_state.norm() == pytest.approx(1.0, abs=1e-12)

    def test_large_per_interval_drift_raises(self, monkeypatch, quiet_integrator):
        monkeypatch.setattr(lindblad, "solve_ivp", _inflating_solver(1.0 + 5 * NORM_TOL))
        config = quiet_integrator.model_copy(update={"dt": 0.1, "sample_stride": 10})
        with pytest.raises(IntegrationDivergedError, match="sample interval"):
            evolve_pure(basis_ket(3, 1), zero_hamiltonian(3), (0.0, 40.0), config)

    def test_pure_and_density_paths_agree_under_drive(self, quiet_integrator):
        params = DeviceParams(cavity_dim=4)
        schedule = single_transfer_schedule(0, 10 * MHZ, params, 10 * MHZ, 35 * MHZ, 3.58 * US, 6.28 * US)
        h = JCHamiltonian(params).driven(schedule, 0.0)
        psi = dressed_pair(0, 0.0, params.coupling, params.cavity_dim).plus
        span = (-150.0, 150.0)
        config = quiet_integrator.model_copy(update={"sample_stride": 500})
        pure = evolve_pure(psi, h, span, config, params=params).final_state
        mixed = evolve(psi.projector(), h, params, span, config).final_state
        assert np.allclose(mixed.matrix, pure.projector().matrix, atol=1e-8)
        assert np.allclose(mixed.matrix, mixed.matrix.conj().T, atol=1e-12)


@pytest.mark.slow
def test_fifty_microsecond_drive_keeps_unit_norm():
    params = DeviceParams(cavity_dim=6)
    schedule = single_transfer_schedule(0, 10 * MHZ, params, 10 * MHZ, 35 * MHZ, 3.58 * US, 6.28 * US)
    assert schedule.duration > 50 * US
    pair = dressed_pair(0, 0.0, params.coupling, params.cavity_dim)
    h = JCHamiltonian(params).driven(schedule, 0.0)
    config = IntegratorConfig(progress=False)
    trajectory = evolve_pure(pair.plus, h, (schedule.t_start, schedule.t_end), config, params=params)
    assert len(trajectory.times) > 200
    assert abs(trajectory.final_state.norm() - 1.0) < NORM_TOL
    assert abs(np.vdot(pair.minus.amplitudes, trajectory.final_state.amplitudes)) ** 2 > 0.95


def test_step_underflow_becomes_stiffness_error(monkeypatch, quiet_integrator):
    def fake_solve_ivp(fun, span, y0, **kwargs):
        return SimpleNamespace(status=-1, message="Required step size is less than spacing between numbers.",
                               t=np.array([span[0]]), y=y0[:, None])

    monkeypatch.setattr(lindblad, "solve_ivp", fake_solve_ivp)
    with pytest.raises(StiffnessError):
        evolve_pure(basis_ket(2, 0), zero_hamiltonian(2), (0.0, 1.0), quiet_integrator)


def test_sampling_and_metrics(quiet_integrator):
    before = REGISTRY.get_sample_value("catamp_integrations_total", {"kind": "schrodinger", "outcome": "ok"}) or 0.0
    config = quiet_integrator.model_copy(update={"dt": 0.1, "sample_stride": 10})
    trajectory = evolve_pure(basis_ket(2, 0), zero_hamiltonian(2), (0.0, 3.5), config)
    assert np.allclose(trajectory.times, [0.0, 1.0, 2.0, 3.0, 3.5])
    header, rows = trajectory.observable_table()
    assert header == ["t", "qubit_excited", "trace"]
    assert len(rows) == 5
    after = REGISTRY.get_sample_value("catamp_integrations_total", {"kind": "schrodinger", "outcome": "ok"})
    assert after == before + 1
