"""Unit tests for the STIRAP tone schedules and drive operators"""
import logging
import math

import numpy as np
import pytest

import pydantic

from catamp.config_loader import get_table1
from catamp.errors import ScheduleError, TruncationError
from catamp.jc_model import DeviceParams
from catamp.pulses import (
    ADMISSIBLE_OFFSET,
    GaussianTone,
    PulseSchedule,
    TransferSet,
    check_admissible,
    drive_coefficient,
    drive_hamiltonian,
    drive_operator,
    envelope,
    single_transfer_schedule,
    split_sequential,
    table1_schedule,
    tone_frequencies,
)
from catamp.units import GHZ, MHZ, US


@pytest.fixture
def params():
    return DeviceParams(cavity_dim=12)


class TestToneFrequencies:

    def test_ground_manifold(self, params):
        omega1, omega2 = tone_frequencies(0, 10 * MHZ, params)
        assert abs(omega1 / GHZ - 5.9486) < 1e-3
        assert abs(omega2 / GHZ - 5.7486) < 1e-3

    def test_two_photon_condition_holds_exactly(self, params):
        omega1, omega2 = tone_frequencies(2, 24 * MHZ, params)
        assert np.isclose(omega1 - omega2, 2 * params.coupling * math.sqrt(3))
        assert abs(omega2 / GHZ - 5.603) < 2e-3


class TestTable1:

    def test_first_round_layout(self, params):
        schedule = table1_schedule("first_edag", params)
        assert schedule.manifolds == [0, 2, 4, 6]
        assert len(schedule.tones()) == 5
        assert all(ts.tone1 == schedule.transfer_sets[0].tone1 for ts in schedule.transfer_sets)
        amps = [ts.tone2.amplitude / MHZ for ts in schedule.transfer_sets]
        assert np.allclose(amps, [35, 38, 49, 70])
        sigma = 6.28 * US / math.sqrt(2)
        assert np.isclose(schedule.t_start, -3.58 * US - 5 * sigma)
        assert np.isclose(schedule.t_end, 3.58 * US + 5 * sigma)
        assert not schedule.truncated

    def test_second_round_layout(self, params):
        schedule = table1_schedule("second_edag", params)
        assert schedule.manifolds == [1, 3, 5, 7]
        assert np.isclose(schedule.transfer_sets[0].tone1.amplitude, 24 * MHZ)

    def test_counter_intuitive_order(self, params):
        schedule = table1_schedule("first_edag", params)
        ts = schedule.transfer_sets[0]
        assert ts.tone1.center < 0 < ts.tone2.center
        flipped = table1_schedule("first_edag", params, reverse_order=True).transfer_sets[0]
        assert flipped.tone1.center > 0 > flipped.tone2.center

    def test_pulse_area_is_large(self, params):
        for ts in table1_schedule("first_edag", params).transfer_sets:
            assert ts.tone2.amplitude * ts.tone2.width >= 10

    def test_full_window_covers_envelopes(self, params):
        schedule = table1_schedule("first_edag", params, window="full")
        assert schedule.covers_envelopes(5.0)
        assert schedule.duration > 2 * 6.28 * US

    def test_derived_mode_satisfies_two_photon_condition(self, params):
        schedule = table1_schedule("first_edag", params, mode="derived")
        for ts in schedule.transfer_sets:
            assert ts.two_photon_residual(params.coupling) < 1e-9
        assert np.isclose(schedule.transfer_sets[0].detuning / MHZ, 9.58, atol=0.05)

    def test_verbatim_rows_within_tolerance_are_silent(self, params, caplog):
        with caplog.at_level(logging.WARNING, logger="catamp"):
            table1_schedule("first_edag", params, mode="verbatim")
        assert not [r for r in caplog.records if "two-photon" in r.getMessage()]

    def test_second_round_verbatim_row_one_misses_two_photon(self, params, caplog):
        with caplog.at_level(logging.WARNING, logger="catamp"):
            schedule = table1_schedule("second_edag", params, mode="verbatim")
        warned = [r.getMessage() for r in caplog.records if "two-photon" in r.getMessage()]
        assert len(warned) == 1 and "n=1" in warned[0]
        residuals = {ts.manifold_n: ts.two_photon_residual(params.coupling) / MHZ for ts in schedule.transfer_sets}
        assert residuals[1] > 5.0
        assert all(residuals[n] < 2.5 for n in (3, 5, 7))

    @pytest.mark.parametrize("which", ["first_edag", "second_edag"])
    def test_derived_rows_match_table_detunings(self, params, which):
        schedule = table1_schedule(which, params, mode="derived")
        tabulated = {int(r["n"]): float(r["delta_mhz"]) for r in get_table1(which)["rows"]}
        omega1 = schedule.transfer_sets[0].tone1.frequency
        for ts in schedule.transfer_sets:
            n = ts.manifold_n
            assert ts.two_photon_residual(params.coupling) < 1e-9
            assert np.isclose(omega1 - ts.tone2.frequency, 2 * params.coupling * math.sqrt(n + 1))
            assert abs(ts.detuning / MHZ - tabulated[n]) < 1.5

    def test_derived_is_the_default(self, params):
        assert table1_schedule("second_edag", params) == table1_schedule("second_edag", params, mode="derived")

    def test_table_window_is_marked_truncated(self, params, caplog):
        with caplog.at_level(logging.WARNING, logger="catamp"):
            schedule = table1_schedule("first_edag", params, window="table")
        assert np.isclose(schedule.t_start, -6.28 * US)
        assert np.isclose(schedule.t_end, 6.28 * US)
        assert schedule.truncated
        assert not schedule.covers_envelopes()
        assert any("tabulated window" in r.getMessage() for r in caplog.records)

    def test_truncation_guard(self):
        with pytest.raises(TruncationError):
            table1_schedule("first_edag", DeviceParams(cavity_dim=8))

    def test_unknown_block(self, params):
        with pytest.raises(KeyError):
            table1_schedule("third_edag", params)


class TestAdmissibility:

    def test_rejects_small_offset(self):
        with pytest.raises(ScheduleError):
            check_admissible(0.3 * 6.28 * US, 6.28 * US)

    def test_accepts_reference_offsets(self):
        check_admissible(3.58 * US, 6.28 * US)
        check_admissible(-3.14 * US, 6.28 * US)
        assert 3.14 > ADMISSIBLE_OFFSET * 6.28


class TestDrive:

    def test_envelope_peak_and_width(self, params):
        tone = table1_schedule("first_edag", params).transfer_sets[0].tone1
        assert np.isclose(envelope(tone, tone.center), tone.amplitude)
        assert np.isclose(envelope(tone, tone.center + tone.width), tone.amplitude * math.exp(-1))

    def test_zero_outside_window(self, params):
        schedule = table1_schedule("first_edag", params)
        assert drive_coefficient(schedule, schedule.t_start - 1.0, params) == 0
        op = drive_operator(schedule, schedule.t_end + 5.0, params)
        assert op.nnz == 0 or np.max(np.abs(op.toarray())) <= 1e-12 * schedule.max_amplitude()

    def test_drive_is_hermitian(self, params):
        schedule = table1_schedule("first_edag", params)
        h = drive_hamiltonian(schedule, 0.3 * US, params)
        assert np.allclose(h.matrix, h.matrix.conj().T)

    def test_single_tone_phase(self, params):
        schedule = single_transfer_schedule(0, 10 * MHZ, params, 10 * MHZ, 0.0, 3.58 * US, 6.28 * US)
        tone = schedule.transfer_sets[0].tone1
        t = 17.0
        expected = envelope(tone, t) * np.exp(1j * (params.omega_r - tone.frequency) * t)
        assert np.isclose(drive_coefficient(schedule, t, params), expected)

    def test_single_transfer_window(self, params):
        schedule = single_transfer_schedule(0, 10 * MHZ, params, 10 * MHZ, 35 * MHZ, -2.0 * US, 6.28 * US)
        assert np.isclose(schedule.t_end, 2.0 * US + 5 * 6.28 * US / math.sqrt(2))
        assert schedule.transfer_sets[0].tone1.center > 0
        assert schedule.covers_envelopes() and not schedule.truncated

    def test_narrow_single_transfer_window_is_truncated(self, params):
        schedule = single_transfer_schedule(
            0, 10 * MHZ, params, 10 * MHZ, 35 * MHZ, 3.58 * US, 6.28 * US, window_half_width=6.28 * US,
        )
        assert schedule.truncated
        assert schedule.duration == pytest.approx(2 * 6.28 * US)


class TestScheduleWindow:

    def _sets(self):
        tone = GaussianTone(amplitude=10 * MHZ, center=0.0, width=1.0 * US, frequency=5.9 * GHZ)
        return [TransferSet(manifold_n=0, tone1=tone, tone2=tone, detuning=10 * MHZ)]

    def test_window_cutting_an_envelope_is_rejected(self):
        with pytest.raises(pydantic.ValidationError, match="sigma"):
            PulseSchedule(transfer_sets=self._sets(), t_start=-1.0 * US, t_end=1.0 * US)

    def test_truncated_flag_allows_a_cut_window(self):
        schedule = PulseSchedule(transfer_sets=self._sets(), t_start=-1.0 * US, t_end=1.0 * US, truncated=True)
        assert not schedule.covers_envelopes()

    def test_empty_window_is_rejected_even_when_truncated(self):
        with pytest.raises(pydantic.ValidationError, match="empty"):
            PulseSchedule(transfer_sets=self._sets(), t_start=1.0, t_end=1.0, truncated=True)


def test_split_sequential_orders_highest_first(params):
    parts = split_sequential(table1_schedule("first_edag", params))
    assert [p.manifolds for p in parts] == [[6], [4], [2], [0]]
    assert all(len(p.tones()) == 2 for p in parts)
    assert not any(p.truncated for p in parts)
    cut = split_sequential(table1_schedule("first_edag", params, window="table"))
    assert all(p.truncated for p in cut)
