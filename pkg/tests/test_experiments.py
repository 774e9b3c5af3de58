import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.cancel import find_cancellation
from src.dynamics import dressed_state
from src.experiments.correlations import correlation_amplitude_sweep, simultaneous_ramsey
from src.experiments.ramsey import conditional_ramsey, echoed_zz_ramsey, fit_fringe, frequency_shifts
from src.experiments.readout import excited_population, pair_amplitudes, pair_populations
from src.experiments.tomography import (
    MEASUREMENTS,
    PLUS_PLUS,
    DensityMatrix,
    entangling_phase,
    forward_expectations,
    idle_tomography_suite,
    linear_inversion,
    local_phase_corrected,
    state_fidelity,
    tomography_mle,
    trace_fidelity,
)


def random_state(rng, rank):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return DensityMatrix(matrix=rho / np.trace(rho).real)


def test_fringe_fit_recovers_frequency():
    t = np.linspace(0.0, 30.0, 61)
    population = 0.5 - 0.45 * np.cos(2 * math.pi * 0.1 * t + 0.3)
    contrast, frequency, phase, offset, rms = fit_fringe(t, population)
    assert frequency == pytest.approx(0.1, abs=1e-4)
    assert contrast == pytest.approx(0.45, abs=1e-3)
    assert offset == pytest.approx(0.5, abs=1e-3)
    assert rms < 1e-4


def test_readout_of_computational_state(two_qubit):
    state = dressed_state(two_qubit, {two_qubit.label(Q2=1): 1.0})
    populations = pair_populations(two_qubit, ("Q1", "Q2"), state)
    assert populations["ge"] == pytest.approx(1.0)
    assert sum(populations.values()) == pytest.approx(1.0)
    assert excited_population(two_qubit, "Q2", state) == pytest.approx(1.0)
    assert excited_population(two_qubit, "Q1", state) == 0.0
    assert np.allclose(np.abs(pair_amplitudes(two_qubit, ("Q1", "Q2"), "C", state)), [0, 1, 0, 0])


def test_measurement_operators_are_projectors():
    assert len(MEASUREMENTS) == 16
    for m in MEASUREMENTS:
        assert np.allclose(m, m.conj().T)
        assert np.allclose(m @ m, m)
    assert np.allclose(MEASUREMENTS[0], np.diag([1, 0, 0, 0]))


def test_density_matrix_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(matrix=np.diag([1.0, 1.0, 0.0, 0.0]).astype(complex))
    with pytest.raises(ValidationError):
        DensityMatrix(matrix=np.array([[0.5, 0.5, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=complex))
    with pytest.raises(ValidationError):
        DensityMatrix(matrix=np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex))


def test_linear_inversion_is_exact_for_exact_data():
    rho = random_state(np.random.default_rng(3), 4)
    assert np.allclose(linear_inversion(forward_expectations(rho)), rho.matrix, atol=1e-9)


def test_mle_round_trip_on_random_states():
    rng = np.random.default_rng(7)
    for k in range(10):
        rho = random_state(rng, 1 + k % 4)
        reconstructed = tomography_mle(forward_expectations(rho))
        assert state_fidelity(reconstructed, rho) > 0.995


def test_mle_with_shot_noise_stays_physical():
    rho = DensityMatrix.pure(PLUS_PLUS)
    data = forward_expectations(rho, shots=2000, rng=np.random.default_rng(11))
    reconstructed = tomography_mle(data, shots=2000)
    assert np.linalg.eigvalsh(reconstructed.matrix).min() > -1e-9
    assert trace_fidelity(reconstructed, rho) > 0.97


def test_mle_rejects_wrong_length():
    with pytest.raises(ValueError):
        tomography_mle(np.zeros(15))


def test_entangling_phase_and_local_correction():
    assert entangling_phase(DensityMatrix.pure(PLUS_PLUS)) == pytest.approx(0.0, abs=1e-12)
    assert abs(entangling_phase(DensityMatrix.pure([1, 1, 1, -1]))) == pytest.approx(math.pi)
    rotated = DensityMatrix.pure([1, 1j, 1, 1j])
    assert trace_fidelity(rotated, DensityMatrix.pure(PLUS_PLUS)) == pytest.approx(0.5)
    assert trace_fidelity(local_phase_corrected(rotated), DensityMatrix.pure(PLUS_PLUS)) == pytest.approx(1.0)


def test_density_matrix_json(tmp_path):
    path = DensityMatrix.pure(PLUS_PLUS).to_json(tmp_path / "rho.json")
    text = path.read_text()
    assert '"basis"' in text and '"imag"' in text


def test_simultaneous_ramsey_without_delay(two_qubit):
    trace = simultaneous_ramsey(two_qubit, None, (-0.5, -0.1), [0.0])
    assert trace.sigma1[0] == pytest.approx(-1.0, abs=1e-9)
    assert trace.sigma2[0] == pytest.approx(-1.0, abs=1e-9)
    assert trace.c_zz[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.slow
def test_echoed_ramsey_measures_static_zz(two_qubit):
    (trace,) = echoed_zz_ramsey(two_qubit, [0.0], np.linspace(0.0, 30.0, 61))
    assert abs(trace.frequency) == pytest.approx(103.0, abs=5.0)
    assert not trace.below_resolution


@pytest.mark.slow
def test_echoed_ramsey_at_cancellation(two_qubit):
    amplitude = find_cancellation(two_qubit).drive_amp
    (trace,) = echoed_zz_ramsey(two_qubit, [amplitude], np.linspace(0.0, 30.0, 61))
    assert abs(trace.frequency) < 8.0


@pytest.mark.slow
def test_conditional_ramsey_difference_is_static_zz(two_qubit, summary):
    ground = conditional_ramsey(two_qubit, "g", "Q2")
    excited = conditional_ramsey(two_qubit, "e", "Q2")
    assert excited.frequency - ground.frequency == pytest.approx(summary.chi_zz_static, abs=5.0)
    shifts = frequency_shifts(two_qubit, None, [0.0])
    assert shifts.chi_zz[0] == pytest.approx(summary.chi_zz_static, abs=5.0)
    assert shifts.chi_zz_cross[0] == pytest.approx(summary.chi_zz_static, abs=5.0)


@pytest.mark.slow
def test_entangling_phase_without_cancellation(two_qubit):
    (point,) = idle_tomography_suite(two_qubit, None, [4.8])
    assert abs(point.entangling_phase) == pytest.approx(math.pi, abs=0.1)


@pytest.mark.slow
def test_entangling_phase_with_cancellation(two_qubit, operating_tone):
    amplitude = find_cancellation(two_qubit).drive_amp
    points = idle_tomography_suite(two_qubit, operating_tone.at(amplitude), [1.2, 4.8, 9.6])
    assert all(abs(point.entangling_phase) < 0.15 for point in points)
    assert all(point.fidelity > 0.95 for point in points)


@pytest.mark.slow
def test_correlations_suppressed_at_cancellation(two_qubit):
    amplitude = find_cancellation(two_qubit).drive_amp
    delays = np.linspace(0.0, 10.0, 41)
    off, on = correlation_amplitude_sweep(two_qubit, [0.0, amplitude], delays)
    assert off.max_abs_czz >= 5 * on.max_abs_czz


def test_entangling_phase_ignores_local_z_rotations():
    state = np.array([1, 1, 1, np.exp(0.7j)]) / 2
    for phi_1, phi_2 in [(0.3, -1.2), (2.0, 0.5)]:
        local = np.exp(1j * np.array([0.0, phi_2, phi_1, phi_1 + phi_2]))
        assert entangling_phase(DensityMatrix.pure(local * state)) == pytest.approx(0.7, abs=1e-12)


def test_local_correction_keeps_entangling_phase():
    rho = DensityMatrix.pure([1, 1, 1, -1])
    corrected = local_phase_corrected(rho)
    assert trace_fidelity(corrected, DensityMatrix.pure(PLUS_PLUS)) == pytest.approx(0.25)
    assert abs(entangling_phase(corrected)) == pytest.approx(math.pi)


@pytest.mark.slow
def test_correlation_sweep_is_quietest_near_cancellation(two_qubit):
    delays = np.linspace(0.0, 10.0, 51)
    traces = correlation_amplitude_sweep(two_qubit, [0.0, 0.36, 0.66, 0.96], delays)
    quiet = traces[2].max_abs_czz
    assert all(quiet < 0.5 * trace.max_abs_czz for i, trace in enumerate(traces) if i != 2)


@pytest.mark.slow
def test_undriven_correlations_close_after_one_zz_period(two_qubit, summary):
    period = 1e3 / abs(summary.chi_zz_static)
    delays = np.linspace(0.0, 10.0, 101)
    trace = simultaneous_ramsey(two_qubit, None, (-0.5, -0.1), delays)
    nearest = int(np.argmin(np.abs(delays - period)))
    assert abs(trace.c_zz[nearest]) < 0.05
    assert trace.max_abs_czz > 0.3
