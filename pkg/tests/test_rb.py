import numpy as np
import pytest

from src.common.errors import FitError
from src.rb import (
    NoiseChannel,
    RBResult,
    clifford_table,
    coherence_limit_slope,
    error_vs_idle_duration,
    fit_decay,
    gate_unitary,
    interleaved_error,
    run_rb,
    same_up_to_phase,
)
from src.rb import _inverse_lookup

SHORT_M = (1, 2, 4, 8, 16, 32)


def test_clifford_table_is_a_group():
    table = clifford_table()
    assert len(table) == 24
    for i, first in enumerate(table):
        for second in table[i + 1:]:
            assert not same_up_to_phase(first.unitary, second.unitary)
    for first in table:
        for second in table:
            composite = second.unitary @ first.unitary
            assert any(same_up_to_phase(g.unitary, composite) for g in table)


def test_clifford_unitaries():
    for gate in clifford_table():
        assert np.allclose(gate.unitary.conj().T @ gate.unitary, np.eye(2))
    assert same_up_to_phase(gate_unitary("X/2") @ gate_unitary("X/2"), gate_unitary("X"))
    assert same_up_to_phase(gate_unitary("-Y/2") @ gate_unitary("Y/2"), np.eye(2))


def test_inverse_lookup():
    table = clifford_table()
    product, inverse = _inverse_lookup()
    for i, gate in enumerate(table):
        assert same_up_to_phase(table[inverse[i]].unitary @ gate.unitary, np.eye(2))
        assert product[i, inverse[i]] == 0


def test_noise_channel_is_trace_preserving():
    channel = NoiseChannel(t1=(20.0, 24.0), t_phi=(30.0, 40.0), chi_zz=-103.0, duration=2.0)
    assert channel.trace_preservation_error() < 1e-10
    assert len(channel.kraus()) == 16


def test_zero_duration_channel_is_identity():
    channel = NoiseChannel(t1=(20.0, 24.0), t_phi=(30.0, 40.0), chi_zz=-103.0)
    assert np.allclose(channel.superoperator(), np.eye(16))


def test_coherent_zz_phase():
    channel = NoiseChannel(chi_zz=250.0, duration=1.0)
    (kraus,) = [k for k in channel.kraus() if np.abs(k).max() > 0.5]
    assert np.angle(kraus[3, 3]) == pytest.approx(-np.pi / 2)
    assert kraus[0, 0] == pytest.approx(1.0)


def test_noise_from_device_coherence(two_qubit):
    channel = NoiseChannel.from_coherence(two_qubit, chi_zz=-103.0)
    assert channel.t1 == pytest.approx((20.0, 24.0))
    assert channel.t_phi[0] == pytest.approx(1 / (1 / 28.5 - 1 / 40.0))
    assert channel.t_phi[1] == pytest.approx(1 / (1 / 37.0 - 1 / 48.0))
    assert NoiseChannel.from_coherence(two_qubit, 0.0, dephasing="none").t_phi == (None, None)


def test_long_t2_means_no_pure_dephasing(two_qubit):
    data = two_qubit.model_dump(mode="json")
    data["coherence"] = {"Q1": {"t1": [10.0], "t2_star": [30.0]}, "Q2": {"t1": [10.0]}}
    spec = type(two_qubit).model_validate(data)
    assert NoiseChannel.from_coherence(spec, 0.0).t_phi == (None, None)


def test_coherence_limit_slope():
    noise = NoiseChannel(t1=(20.0, 24.0), t_phi=(100.0, None))
    assert coherence_limit_slope(noise) == pytest.approx((1 / 20 + 1 / 24) / 3)
    assert coherence_limit_slope(noise, include_dephasing=True) == pytest.approx((1 / 20 + 1 / 24 + 1 / 100) / 3)


def test_interleaved_error():
    epsilon, spread = interleaved_error(0.99, 0.98, 0.001, 0.002)
    assert epsilon == pytest.approx(0.75 * (1 - 0.98 / 0.99))
    assert spread > 0


def test_fit_decay_recovers_parameters():
    m = np.array([1, 2, 4, 8, 16, 32, 64])
    a, p, b, spread = fit_decay(m, 0.7 * 0.97**m + 0.25)
    assert p == pytest.approx(0.97, abs=1e-6)
    assert a == pytest.approx(0.7, abs=1e-5)
    assert b == pytest.approx(0.25, abs=1e-5)


def test_constant_data_fits_to_unit_decay():
    a, p, b, spread = fit_decay([1, 2, 4], [1.0, 1.0, 1.0])
    assert p == 1.0
    assert a + b == pytest.approx(1.0)


def test_noiseless_rb_has_no_error():
    reference, interleaved, epsilon = run_rb(NoiseChannel(), 1.0, SHORT_M, n_random=5, seed=3)
    assert reference.fidelity_mean == pytest.approx([1.0] * len(SHORT_M))
    assert interleaved.p == 1.0
    assert epsilon == pytest.approx(0.0)


def test_rb_is_deterministic(tmp_path):
    noise = NoiseChannel(t1=(20.0, 24.0), chi_zz=-103.0)
    first = run_rb(noise, 0.8, SHORT_M, n_random=6, seed=42)[1].to_csv(tmp_path / "a.csv")
    second = run_rb(noise, 0.8, SHORT_M, n_random=6, seed=42)[1].to_csv(tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    other = run_rb(noise, 0.8, SHORT_M, n_random=6, seed=43)[1].to_csv(tmp_path / "c.csv")
    assert other.read_bytes() != first.read_bytes()


def test_rb_fit_record(tmp_path):
    noise = NoiseChannel(t1=(20.0, 24.0))
    _, interleaved, epsilon = run_rb(noise, 0.8, SHORT_M, n_random=6, seed=1)
    assert interleaved.epsilon == epsilon
    assert epsilon > 0
    text = interleaved.write_fit(tmp_path / "fit.json").read_text()
    assert '"epsilon"' in text


def test_fully_decayed_fit_is_representable():
    result = RBResult(
        m_axis=[1, 2], fidelity_mean=[0.25, 0.25], fidelity_std=[0.0, 0.0], a=0.0, p=0.0, b=0.25, p_ci=0.0
    )
    assert result.p == 0.0
    with pytest.raises(FitError):
        interleaved_error(result.p, 0.5)


@pytest.mark.slow
def test_amplitude_damping_matches_coherence_limit():
    noise = NoiseChannel(t1=(20.0, 24.0))
    sweep = error_vs_idle_duration(noise, [0.4, 0.8, 1.2, 1.6, 2.0], cancellation=False, n_random=40, seed=5)
    assert sweep.slope == pytest.approx(coherence_limit_slope(noise), rel=0.10)


@pytest.mark.slow
def test_idle_error_slopes_with_and_without_cancellation(two_qubit, summary):
    noise = NoiseChannel.from_coherence(two_qubit, summary.chi_zz_static)
    taus = [0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8]
    off = error_vs_idle_duration(noise, taus, cancellation=False, n_random=80, seed=5)
    on = error_vs_idle_duration(noise, taus, cancellation=True, residual_chi_zz=0.0, n_random=80, seed=5)
    assert off.slope == pytest.approx(1 / 7.6, rel=0.35)
    assert on.slope == pytest.approx(1 / 39.7, rel=0.35)
    assert off.slope > 3 * on.slope
