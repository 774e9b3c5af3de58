import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.common.errors import ScheduleError
from src.common.utils import wrap_phase
from src.device import DriveTone
from src.dynamics import (
    Envelope,
    PulseSchedule,
    QubitPulse,
    ToneSegment,
    coupler_leakage_vs_edges,
    dressed_state,
    evolve,
    get_engine,
    propagator,
    rotation_matrix,
)
from src.qops import basis_index


def ground(spec):
    return dressed_state(spec, {spec.label(): 1.0})


def test_flat_top_envelope_shape():
    envelope = Envelope.flat_top(1.0, 0.3)
    assert envelope.duration == pytest.approx(1.0)
    assert envelope.plateau == pytest.approx(0.4)
    assert envelope.shape(0.0) == pytest.approx(0.0)
    assert envelope.shape(0.15) == pytest.approx(0.5)
    assert envelope.shape(0.5) == pytest.approx(1.0)
    assert envelope.shape(0.85) == pytest.approx(0.5)
    assert envelope.shape(1.2) == 0.0


def test_short_flat_top_shrinks_edges():
    envelope = Envelope.flat_top(0.4, 0.3)
    assert envelope.rise == pytest.approx(0.2)
    assert envelope.plateau == 0.0
    assert Envelope.flat_top(0.4, 0.0).kind == "square"


def test_square_envelope_has_no_edges():
    with pytest.raises(ValidationError):
        Envelope(kind="square", rise=0.1, fall=0.0, plateau=1.0)


def test_schedule_window_checks(operating_tone):
    with pytest.raises(ValidationError):
        PulseSchedule(tones=[ToneSegment(tone=operating_tone, envelope=Envelope.flat_top(2.0))], duration=1.0)
    with pytest.raises(ValidationError):
        PulseSchedule(
            tones=[
                ToneSegment(tone=operating_tone, envelope=Envelope.flat_top(1.0)),
                ToneSegment(tone=operating_tone, envelope=Envelope.flat_top(1.0), start=0.5),
            ],
            duration=2.0,
        )
    with pytest.raises(ValidationError):
        PulseSchedule(pulses=[QubitPulse(target="Q1", angle=math.pi, start=1.5)], duration=1.0)


def test_rotation_matrix():
    for angle, phase in [(math.pi, 0.0), (math.pi / 2, math.pi / 2), (0.3, 1.1)]:
        r = rotation_matrix(angle, phase)
        assert np.allclose(r.conj().T @ r, np.eye(2))
    assert abs(rotation_matrix(math.pi, 0.3)[1, 0]) == pytest.approx(1.0)


def test_idle_keeps_populations(two_qubit):
    result = evolve(two_qubit, PulseSchedule(duration=1.0), ground(two_qubit), sample_times=[0.0, 0.5, 1.0])
    assert result.norm_error < 1e-12
    assert result.population(two_qubit.label())[-1] == pytest.approx(1.0)
    assert result.times.tolist() == [0.0, 0.5, 1.0]


def test_pi_pulse_flips_target(two_qubit):
    schedule = PulseSchedule(pulses=[QubitPulse(target="Q1", angle=math.pi, start=0.2)], duration=0.5)
    result = evolve(two_qubit, schedule, ground(two_qubit))
    final = np.abs(result.final_state) ** 2
    assert final[basis_index(two_qubit.layout(), two_qubit.label(Q1=1))] == pytest.approx(1.0, abs=1e-9)


def test_finite_pulse_matches_instant_pulse(two_qubit):
    instant = PulseSchedule(pulses=[QubitPulse(target="Q2", angle=math.pi, start=0.05)], duration=0.1)
    finite = PulseSchedule(pulses=[QubitPulse(target="Q2", angle=math.pi, start=0.04, duration=0.02)], duration=0.1)
    target = basis_index(two_qubit.layout(), two_qubit.label(Q2=1))
    for schedule in (instant, finite):
        final = np.abs(evolve(two_qubit, schedule, ground(two_qubit)).final_state) ** 2
        assert final[target] == pytest.approx(1.0, abs=1e-9)


def test_driven_evolution_is_unitary(two_qubit, operating_tone):
    schedule = PulseSchedule(
        tones=[ToneSegment(tone=operating_tone.at(0.66), envelope=Envelope.flat_top(1.0))], duration=1.0
    )
    unitary = propagator(two_qubit, schedule)
    assert np.allclose(unitary.conj().T @ unitary, np.eye(unitary.shape[0]), atol=1e-8)
    result = evolve(two_qubit, schedule, ground(two_qubit), sample_times=np.linspace(0, 1, 6))
    assert result.norm_error < 1e-8
    assert np.all(result.coupler_excitation < 0.01)


def test_schedule_errors(two_qubit, operating_tone):
    mixed = PulseSchedule(
        tones=[
            ToneSegment(tone=operating_tone.at(0.5), envelope=Envelope.flat_top(0.5)),
            ToneSegment(tone=DriveTone(target="C", frequency=6.0, amplitude=0.5), envelope=Envelope.flat_top(0.5),
                        start=0.5),
        ],
        duration=1.0,
    )
    with pytest.raises(ScheduleError):
        evolve(two_qubit, mixed, ground(two_qubit))
    on_coupler = PulseSchedule(pulses=[QubitPulse(target="C", angle=math.pi)], duration=0.1)
    with pytest.raises(ScheduleError):
        evolve(two_qubit, on_coupler, ground(two_qubit))


def test_initial_state_must_be_normalized(two_qubit):
    with pytest.raises(ValueError):
        evolve(two_qubit, PulseSchedule(duration=0.1), 2 * ground(two_qubit))


def test_trajectory_csv(tmp_path, two_qubit):
    result = evolve(two_qubit, PulseSchedule(duration=0.2), ground(two_qubit), sample_times=[0.0, 0.1, 0.2])
    path = result.to_csv(tmp_path / "trajectory.csv", labels=[two_qubit.label(), two_qubit.label(Q1=1)])
    lines = path.read_text().splitlines()
    assert lines[0] == "time_us,P_000,P_100,n_coupler"
    assert len(lines) == 4


@pytest.mark.slow
def test_coupler_leakage_falls_with_edge_duration(two_qubit, operating_tone):
    edges = [0.0, 0.1, 0.2, 0.3]
    leakage = [excitation for _, excitation in coupler_leakage_vs_edges(two_qubit, operating_tone.at(0.66), edges)]
    assert leakage[-1] <= 0.01
    assert leakage[0] > leakage[-1]
    assert all(a >= b for a, b in zip(leakage, leakage[1:]))


def test_conjugate_propagator_undoes_symmetric_drive(two_qubit, operating_tone):
    schedule = PulseSchedule(
        tones=[ToneSegment(tone=operating_tone.at(0.66), envelope=Envelope.flat_top(1.0))], duration=1.0
    )
    frame = get_engine(two_qubit, schedule).frame_phase(schedule.duration)
    unitary = frame.conj()[:, None] * propagator(two_qubit, schedule)
    layout = two_qubit.layout()
    initial = dressed_state(two_qubit, {two_qubit.label(): 1.0, two_qubit.label(Q1=1): 1.0,
                                        two_qubit.label(Q2=1): 1.0, two_qubit.label(Q1=1, Q2=1): 1.0})
    returned = unitary.conj() @ (unitary @ initial)
    assert abs(np.vdot(initial, returned)) ** 2 > 1 - 1e-6
    assert abs(returned[basis_index(layout, two_qubit.label(Q1=1, Q2=1))]) == pytest.approx(0.5, abs=1e-6)


def test_idle_frame_keeps_only_the_zz_phase(two_qubit, summary):
    labels = [two_qubit.label(), two_qubit.label(Q1=1), two_qubit.label(Q2=1), two_qubit.label(Q1=1, Q2=1)]
    initial = dressed_state(two_qubit, {label: 1.0 for label in labels})
    final = evolve(two_qubit, PulseSchedule(duration=10.0), initial).final_state
    layout = two_qubit.layout()
    gg, eg, ge, ee = (final[basis_index(layout, label)] for label in labels)
    assert wrap_phase(np.angle(eg / gg)) == pytest.approx(0.0, abs=1e-3)
    assert wrap_phase(np.angle(ge / gg)) == pytest.approx(0.0, abs=1e-3)
    expected = wrap_phase(-2 * math.pi * summary.chi_zz_static * 1e-3 * 10.0)
    assert wrap_phase(np.angle(ee / gg) - expected) == pytest.approx(0.0, abs=1e-3)
