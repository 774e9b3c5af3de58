import math

import numpy as np
import pytest

from src.cancel import (
    analytic_chi_zz_drive,
    chi_zz_driven,
    driven_energies,
    find_cancellation,
    operating_frequency,
    stark_compensation,
    stark_shift_two_level,
    zz_map,
)
from src.common.errors import NoSignChangeError


@pytest.mark.parametrize("detuning", [10.0, -10.0, 0.5])
def test_two_level_stark_shift(detuning):
    result = stark_shift_two_level(detuning, 1.0)
    magnitude = (math.hypot(detuning, 1.0) - abs(detuning)) / 2
    assert result.shift == pytest.approx(math.copysign(magnitude, detuning))
    assert result.e_plus - result.e_minus == pytest.approx(math.hypot(detuning, 1.0))


def test_stark_shift_vanishes_without_drive():
    assert stark_shift_two_level(3.0, 0.0).shift == 0.0
    assert stark_shift_two_level(-3.0, 0.0).shift == 0.0


def test_operating_frequency_sits_between_ee_and_eg(summary):
    expected = (summary.coupler_freq_ee + summary.coupler_freq_eg) / 2
    assert operating_frequency(summary) == pytest.approx(expected)


def test_analytic_estimate_opposes_static_zz(summary):
    freq = operating_frequency(summary)
    assert analytic_chi_zz_drive(summary, freq, 0.0) == 0.0
    assert analytic_chi_zz_drive(summary, freq, 0.3) > 0


def test_zero_drive_reproduces_static_zz(two_qubit, summary, operating_tone):
    energies = driven_energies(two_qubit, operating_tone)
    assert energies.steps == 0
    assert energies.chi_zz == pytest.approx(summary.chi_zz_static, abs=1e-3)


def test_drive_between_ee_and_eg_raises_zz(two_qubit, summary, operating_tone):
    assert chi_zz_driven(two_qubit, operating_tone.at(0.3)) - summary.chi_zz_static > 0


def test_cancellation_amplitude(two_qubit):
    point = find_cancellation(two_qubit, amp_bracket=(0.0, 2.0))
    assert point.drive_amp == pytest.approx(0.66, rel=0.15)
    assert abs(point.residual_chi_zz) < 0.1
    assert point.margin > 1
    assert point.detunings["ee"] > 0 > point.detunings["eg"]


def test_zz_nearly_vanishes_at_operating_point(two_qubit, operating_tone):
    assert abs(chi_zz_driven(two_qubit, operating_tone.at(0.66))) < 10.0


def test_no_sign_change(two_qubit):
    with pytest.raises(NoSignChangeError):
        find_cancellation(two_qubit, amp_bracket=(0.0, 0.1))


def test_stark_compensation_is_zero_without_drive(two_qubit, operating_tone):
    assert stark_compensation(two_qubit, operating_tone) == pytest.approx((0.0, 0.0), abs=1e-9)


def test_zz_map_zero_amplitude_column(two_qubit, summary):
    offset = operating_frequency(summary) - summary.coupler_freq_gg
    result = zz_map(two_qubit, [offset - 0.001, offset], [0.0, 0.66])
    assert result.chi_zz_grid.shape == (2, 2)
    assert result.valid.all()
    assert np.allclose(result.chi_zz_grid[:, 0], summary.chi_zz_static, atol=1e-3)
    assert abs(result.chi_zz_grid[1, 1]) < 10.0


def test_zz_map_requires_sorted_axes(two_qubit):
    with pytest.raises(ValueError):
        zz_map(two_qubit, [0.0, -0.001], [0.0])


def test_zz_map_csv(tmp_path, two_qubit):
    result = zz_map(two_qubit, [-0.005], [0.0, 0.5])
    path = result.to_csv(tmp_path / "zzmap.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "drive_freq_offset_GHz,drive_amp_MHz,chi_zz_kHz,valid"
    assert len(lines) == 3


@pytest.mark.parametrize("amplitude", [0.3, 0.66])
def test_net_zz_is_even_in_drive_amplitude(two_qubit, operating_tone, amplitude):
    positive = driven_energies(two_qubit, operating_tone, amplitude=amplitude).chi_zz
    negative = driven_energies(two_qubit, operating_tone, amplitude=-amplitude).chi_zz
    assert negative == pytest.approx(positive, abs=1e-6)


def test_weak_drive_matches_two_level_stark_sum(two_qubit, summary, operating_tone):
    freqs = summary.coupler_freqs
    smallest = min(abs(operating_tone.frequency - f) * 1e3 for f in freqs.values())
    amplitude = 0.15 * smallest
    induced = chi_zz_driven(two_qubit, operating_tone.at(amplitude)) - summary.chi_zz_static
    estimate = analytic_chi_zz_drive(summary, operating_tone.frequency, amplitude)
    assert induced == pytest.approx(estimate, rel=0.2)
