"""Tests for the tone2 calibration of the simultaneous transfer schedules"""
import logging

import numpy as np
import pytest
from prometheus_client import REGISTRY
from pydantic import ValidationError

from catamp import calibration
from catamp.calibration import (
    CalibrationConfig,
    apply_tone2_corrections,
    calibrate_schedule,
    clear_calibration_cache,
    propagate_batch,
    transfer_efficiencies,
)
from catamp.jc_model import DeviceParams, dressed_pair
from catamp.lindblad import IntegratorConfig, evolve_pure
from catamp.protocol import JCHamiltonian
from catamp.pulses import single_transfer_schedule, table1_schedule
from catamp.units import KHZ, MHZ, US


@pytest.fixture(autouse=True)
def _fresh_cache():
    clear_calibration_cache()
    yield
    clear_calibration_cache()


@pytest.fixture
def params():
    return DeviceParams(cavity_dim=12)


def _scripted_propagator(preferred):
    """Stand-in for propagate_batch: transfer falls off as a Gaussian in (offset - preferred[n]) / MHz."""
    calls = []

    def propagate(schedule, params, initial, offsets, scales, delta=0.0, span=None, config=None):
        calls.append(initial.shape[1])
        offsets = np.broadcast_to(offsets, (initial.shape[1], len(schedule.transfer_sets)))
        out = np.zeros_like(initial)
        for j in range(initial.shape[1]):
            n = int(np.nonzero(np.abs(initial[:, j]) > 1e-12)[0][0]) - 1
            i = schedule.manifolds.index(n)
            miss = (offsets[j, i] - preferred[n]) / MHZ
            pair = dressed_pair(n, delta, params.coupling, params.cavity_dim)
            w = np.exp(-miss ** 2)
            out[:, j] = np.sqrt(w) * pair.minus.amplitudes + np.sqrt(1.0 - w) * pair.plus.amplitudes
        return out

    return propagate, calls


class TestCalibrationConfig:

    def test_defaults_come_from_reference_tables(self):
        config = CalibrationConfig()
        assert config.offset_span == pytest.approx(4.0 * MHZ)
        assert config.offset_points == 17
        assert 1.0 in config.amplitude_scales
        assert config.target_efficiency == 0.95

    def test_grids_are_symmetric_and_hold_zero(self):
        config = CalibrationConfig()
        for grid in (config.coarse_grid(), config.fine_grid()):
            assert 0.0 in grid
            assert np.allclose(grid, -grid[::-1])

    def test_rejects_non_positive_scales(self):
        with pytest.raises(ValidationError):
            CalibrationConfig(amplitude_scales=(1.0, 0.0))
        with pytest.raises(ValidationError):
            CalibrationConfig(amplitude_scales=())


class TestCorrections:

    def test_only_tone2_moves(self, params):
        schedule = table1_schedule("first_edag", params, window="table")
        offsets = [0.5 * MHZ, -1.0 * MHZ, 0.0, 2.0 * MHZ]
        tuned = apply_tone2_corrections(schedule, offsets, [1.0, 1.2, 1.0, 0.85])
        for before, after, offset in zip(schedule.transfer_sets, tuned.transfer_sets, offsets):
            assert after.tone1 == before.tone1
            assert after.tone2.frequency == pytest.approx(before.tone2.frequency + offset)
        assert tuned.transfer_sets[1].tone2.amplitude == pytest.approx(1.2 * 38 * MHZ)
        assert tuned.truncated and tuned.label == schedule.label


class TestPropagateBatch:

    def test_columns_match_the_schrodinger_solver(self):
        params = DeviceParams(cavity_dim=5)
        schedule = single_transfer_schedule(0, 10 * MHZ, params, 10 * MHZ, 35 * MHZ, 3.58 * US, 6.28 * US)
        pair = dressed_pair(0, 0.0, params.coupling, params.cavity_dim)
        offset, scale = 0.7 * MHZ, 1.3
        span = (-2.5 * US, -1.5 * US)
        initial = np.stack([pair.plus.amplitudes, pair.plus.amplitudes], axis=1)
        batch = propagate_batch(
            schedule, params, initial, np.array([[0.0], [offset]]), np.array([[1.0], [scale]]), span=span,
        )
        integrator = IntegratorConfig(progress=False, sample_stride=10**6)
        for column, tuned in ((0, schedule), (1, apply_tone2_corrections(schedule, [offset], [scale]))):
            h = JCHamiltonian(params).driven(tuned, 0.0)
            reference = evolve_pure(pair.plus, h, span, integrator, params=params).final_state
            assert np.allclose(batch[:, column], reference.amplitudes, atol=1e-5)
        assert not np.allclose(batch[:, 0], batch[:, 1], atol=1e-3)

    def test_empty_span_returns_the_input(self, params):
        schedule = table1_schedule("first_edag", params)
        initial = np.eye(2 * params.cavity_dim, 2, dtype=complex)
        out = propagate_batch(schedule, params, initial, 0.0, 1.0, span=(5.0, 5.0))
        assert np.array_equal(out, initial)


class TestCalibrateSchedule:

    def test_finds_each_preferred_offset(self, params, monkeypatch):
        preferred = {0: 1.3 * MHZ, 2: -2.1 * MHZ, 4: 0.0, 6: 3.4 * MHZ}
        fake, _ = _scripted_propagator(preferred)
        monkeypatch.setattr(calibration, "propagate_batch", fake)
        schedule = table1_schedule("first_edag", params)
        report = calibrate_schedule(schedule, params)
        for n, want in preferred.items():
            assert abs(report.offsets[n] - want) <= 0.07 * MHZ
            assert report.scales[n] == 1.0
            assert report.baseline[n] == pytest.approx(np.exp(-(want / MHZ) ** 2))
            assert report.efficiencies[n] > 0.99
        assert report.passed
        for before, after in zip(schedule.transfer_sets, report.schedule.transfer_sets):
            n = before.manifold_n
            assert after.tone2.frequency == pytest.approx(before.tone2.frequency + report.offsets[n])

    def test_results_are_cached_per_setting(self, params, monkeypatch):
        fake, calls = _scripted_propagator({0: 0.0, 2: 0.0, 4: 0.0, 6: 0.0})
        monkeypatch.setattr(calibration, "propagate_batch", fake)
        schedule = table1_schedule("first_edag", params)
        first = calibrate_schedule(schedule, params)
        runs = len(calls)
        assert calibrate_schedule(schedule, params.with_cavity_decay(0.25 * KHZ)) is first
        assert calibrate_schedule(schedule, params.with_cavity_dim(20)) is first
        assert len(calls) == runs
        calibrate_schedule(schedule, params, delta=1.0 * MHZ)
        assert len(calls) == 2 * runs

    def test_cavity_is_cut_to_the_reached_levels(self, params, monkeypatch):
        fake, _ = _scripted_propagator({1: 0.0, 3: 0.0, 5: 0.0, 7: 0.0})
        monkeypatch.setattr(calibration, "propagate_batch", fake)
        big = DeviceParams(cavity_dim=25)
        report = calibrate_schedule(table1_schedule("second_edag", big), big, config=CalibrationConfig(extra_levels=2))
        assert report.cavity_dim == 7 + 3 + 2

    def test_unreachable_target_is_reported(self, params, monkeypatch, caplog):
        fake, _ = _scripted_propagator({0: 0.0, 2: 0.0, 4: 0.0, 6: 10.0 * MHZ})
        monkeypatch.setattr(calibration, "propagate_batch", fake)
        before = REGISTRY.get_sample_value("catamp_calibrations_total", {"outcome": "below_target"}) or 0.0
        with caplog.at_level(logging.WARNING, logger="catamp"):
            report = calibrate_schedule(table1_schedule("first_edag", params), params)
        assert not report.passed
        assert report.worst_efficiency == pytest.approx(report.efficiencies[6])
        assert report.efficiencies[0] > 0.99
        assert any("below the target" in r.getMessage() for r in caplog.records)
        after = REGISTRY.get_sample_value("catamp_calibrations_total", {"outcome": "below_target"})
        assert after == before + 1


@pytest.mark.slow
class TestTransferTable:

    @pytest.mark.parametrize("which", ["first_edag", "second_edag"])
    def test_every_row_transfers(self, params, which):
        report = calibrate_schedule(table1_schedule(which, params), params)
        assert report.passed, report.efficiencies
        efficiencies = transfer_efficiencies(report.schedule, params)
        assert sorted(efficiencies) == table1_schedule(which, params).manifolds
        for n, value in efficiencies.items():
            assert value >= 0.95, f"{which} n={n}: |<-,n|U|+,n>|^2 = {value:.4f}"

    def test_calibrated_row_holds_under_the_schrodinger_solver(self, params):
        schedule = calibrate_schedule(table1_schedule("first_edag", params), params).schedule
        pair = dressed_pair(2, 0.0, params.coupling, params.cavity_dim)
        h = JCHamiltonian(params).driven(schedule, 0.0)
        final = evolve_pure(
            pair.plus, h, (schedule.t_start, schedule.t_end), IntegratorConfig(progress=False), params=params,
        ).final_state
        assert abs(np.vdot(pair.minus.amplitudes, final.amplitudes)) ** 2 >= 0.95
