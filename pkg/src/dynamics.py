"""Time-domain evolution under shaped coupler drives and ideal qubit rotations.

States are stored in the dressed eigenbasis of the static Hamiltonian, indexed like
bare product states (see :func:`src.spectrum.dressed_basis`). Reported states live in
the multi-rotating frame where each qubit rotates at its dressed frequency and every
coupler at the drive frequency; internally the engine propagates in the frame rotating
at the drive frequency for all modes, where the Hamiltonian depends on time only
through the pulse envelope.
"""
import csv
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import solve_ivp
from scipy.linalg import polar

from src.common.errors import IntegrationError, ScheduleError
from src.common.utils import ghz_to_rad, mhz_to_rad, TWO_PI
from src.device import DeviceSpec, DriveTone, build_static_hamiltonian, drive_operator
from src.qops import basis_index, embed
from src.spectrum import computational_label, dispersive_summary, dressed_basis

logger = logging.getLogger(__name__)

# Relative and absolute local error targets of the ramp integrator.
RTOL = 1e-9
ATOL = 1e-11
# Time resolution used to merge breakpoints, µs.
TIME_EPS = 1e-9
# Slice length used to split finite-duration qubit pulses, µs.
PULSE_SLICE = 0.002


class Envelope(BaseModel):
    """Pulse envelope of a coupler tone; times in µs, amplitude in MHz."""

    kind: Literal["flat-top-cosine-ramp", "square"] = Field("flat-top-cosine-ramp", description="Envelope family")
    rise: float = Field(0.3, ge=0, description="Rise duration")
    fall: float = Field(0.3, ge=0, description="Fall duration")
    plateau: float = Field(0.0, ge=0, description="Flat-top duration")
    amplitude: Optional[float] = Field(None, ge=0, description="Peak amplitude; the tone amplitude when omitted")

    @model_validator(mode="after")
    def _square_has_no_edges(self):
        if self.kind == "square" and (self.rise or self.fall):
            raise ValueError("a square envelope has no rise or fall")
        return self

    @property
    def duration(self) -> float:
        return self.rise + self.plateau + self.fall

    @classmethod
    def flat_top(cls, duration: float, edge: float = 0.3, amplitude: Optional[float] = None) -> "Envelope":
        """Cosine-ramp pulse filling ``duration``; edges shrink to half the duration when it is short."""
        if edge <= 0:
            return cls(kind="square", rise=0.0, fall=0.0, plateau=duration, amplitude=amplitude)
        edge = min(edge, duration / 2)
        return cls(rise=edge, fall=edge, plateau=max(duration - 2 * edge, 0.0), amplitude=amplitude)

    def shape(self, t: float) -> float:
        """Envelope value relative to the peak at local time ``t``."""
        if t < 0 or t > self.duration:
            return 0.0
        if t < self.rise:
            return 0.5 * (1 - math.cos(math.pi * t / self.rise))
        if t <= self.rise + self.plateau:
            return 1.0
        into_fall = t - self.rise - self.plateau
        return 0.5 * (1 + math.cos(math.pi * into_fall / self.fall))


class ToneSegment(BaseModel):
    """A drive tone switched on with an envelope at ``start``."""

    tone: DriveTone = Field(..., description="Carrier and target")
    envelope: Envelope = Field(default_factory=Envelope, description="Amplitude envelope")
    start: float = Field(0.0, ge=0, description="Start time in µs")

    @property
    def amplitude(self) -> float:
        return self.tone.amplitude if self.envelope.amplitude is None else self.envelope.amplitude

    @property
    def end(self) -> float:
        return self.start + self.envelope.duration

    def region(self, t: float) -> str:
        local = t - self.start
        env = self.envelope
        if local < 0 or local > env.duration:
            return "off"
        if local < env.rise:
            return "rise"
        if local <= env.rise + env.plateau:
            return "plateau"
        return "fall"


class QubitPulse(BaseModel):
    """Rotation of one qubit about an equatorial axis at angle ``phase`` from x."""

    target: str = Field(..., description="Qubit name")
    angle: float = Field(..., description="Rotation angle theta in rad")
    phase: float = Field(0.0, description="Axis angle phi in rad; 0 is x, pi/2 is y")
    start: float = Field(0.0, ge=0, description="Start time in µs")
    duration: float = Field(0.0, ge=0, description="0 for an ideal instantaneous rotation")
    detuning: float = Field(0.0, description="Pulse frame detuning in MHz")


class PulseSchedule(BaseModel):
    """Coupler tones and qubit rotations over a fixed window."""

    tones: List[ToneSegment] = Field(default_factory=list, description="Coupler drive segments")
    pulses: List[QubitPulse] = Field(default_factory=list, description="Qubit control pulses")
    duration: float = Field(..., ge=0, description="Total duration in µs")

    @model_validator(mode="after")
    def _within_window(self):
        for segment in self.tones:
            if segment.end > self.duration + TIME_EPS:
                raise ValueError(f"tone segment ends at {segment.end} µs after the schedule ({self.duration} µs)")
        for pulse in self.pulses:
            if pulse.start + pulse.duration > self.duration + TIME_EPS:
                raise ValueError(f"pulse on {pulse.target} ends after the schedule")
        ordered = sorted(self.tones, key=lambda s: s.start)
        for first, second in zip(ordered, ordered[1:]):
            if second.start < first.end - TIME_EPS:
                raise ValueError("tone segments overlap")
        return self


class EvolutionResult(BaseModel):
    """Sampled trajectory of one evolution."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    final_state: np.ndarray = Field(..., description="Final dressed amplitudes in the multi-rotating frame")
    times: np.ndarray = Field(..., description="Sample times in µs")
    populations: np.ndarray = Field(..., description="Dressed-label populations per sample, shape (samples, dim)")
    coupler_excitation: np.ndarray = Field(..., description="<n_c> of the driven coupler per sample")
    norm_error: float = Field(..., description="Largest |norm - 1| over the samples")
    labels: List[Tuple[int, ...]] = Field(..., description="Occupation tuple of each dressed index")

    def population(self, label: Sequence[int]) -> np.ndarray:
        return self.populations[:, self.labels.index(tuple(label))]

    def to_csv(self, path: Path, labels: Optional[Sequence[Sequence[int]]] = None) -> Path:
        chosen = [tuple(label) for label in (labels or self.labels)]
        columns = [self.labels.index(label) for label in chosen]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["time_us"] + ["P_" + "".join(map(str, label)) for label in chosen] + ["n_coupler"])
            for row, t in enumerate(self.times):
                values = [f"{self.populations[row, c]:.10f}" for c in columns]
                writer.writerow([f"{t:.6f}", *values, f"{self.coupler_excitation[row]:.10f}"])
        return path


def rotation_matrix(angle: float, phase: float) -> np.ndarray:
    """exp(-i angle/2 (cos(phase) sx + sin(phase) sy)) on levels g, e."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]],
        dtype=complex,
    )


class _Engine:
    """Per-device propagation data: dressed basis, frames and cached propagators."""

    def __init__(self, spec: DeviceSpec, target: Optional[str], drive_freq: Optional[float]):
        self.spec = spec
        self.layout = spec.layout()
        basis = dressed_basis(build_static_hamiltonian(spec), self.layout)
        self.labels = list(self.layout.occupations())
        occupations = np.array(self.labels)
        self.coupler = target or (spec.couplers[0].name if spec.couplers else None)
        ref = ghz_to_rad(drive_freq) if drive_freq else 0.0
        self.ref = ref
        self.diag = basis.energies - ref * occupations.sum(axis=1)
        ground = basis.energies[0]
        frame = np.zeros(self.layout.total_dim)
        for qubit in spec.qubits:
            index = spec.mode_index(qubit.name)
            excited = [0] * self.layout.n_modes
            excited[index] = 1
            freq = basis.energies[basis_index(self.layout, excited)] - ground
            frame += (freq - ref) * occupations[:, index]
        self.frame = frame
        if target is not None:
            self.quadrature = basis.vectors.conj().T @ drive_operator(spec, target) @ basis.vectors
        else:
            self.quadrature = np.zeros((self.layout.total_dim,) * 2, dtype=complex)
        self.coupler_number = occupations[:, spec.mode_index(self.coupler)] if self.coupler else np.zeros(len(frame))
        self._plateau_cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self._ramp_cache: Dict[tuple, np.ndarray] = {}
        logger.info("dynamics engine for %s (dim %d, min overlap %.3f)", spec.name, len(frame), basis.min_overlap)

    def frame_phase(self, t: float) -> np.ndarray:
        return np.exp(1j * self.frame * t)

    def idle(self, duration: float) -> np.ndarray:
        return np.exp(-1j * self.diag * duration)

    def plateau(self, amplitude: float, duration: float) -> np.ndarray:
        key = round(amplitude, 12)
        if key not in self._plateau_cache:
            hamiltonian = np.diag(self.diag) + 0.5 * mhz_to_rad(amplitude) * self.quadrature
            self._plateau_cache[key] = np.linalg.eigh(hamiltonian)
        values, vectors = self._plateau_cache[key]
        return (vectors * np.exp(-1j * values * duration)) @ vectors.conj().T

    def ramp(self, segment: ToneSegment, a: float, b: float) -> np.ndarray:
        """Propagator over local segment times [a, b] integrated in the interaction picture."""
        env = segment.envelope
        key = (env.kind, round(env.rise, 12), round(env.fall, 12), round(env.plateau, 12),
               round(segment.amplitude, 12), round(a, 12), round(b, 12))
        if key in self._ramp_cache:
            return self._ramp_cache[key]
        omega = mhz_to_rad(segment.amplitude)
        dim = len(self.diag)
        diag = self.diag
        quadrature = self.quadrature

        def rhs(tau, y):
            phases = np.exp(1j * diag * tau)
            coupling = phases[:, None] * quadrature * phases.conj()[None, :]
            strength = 0.5 * omega * env.shape(a + tau)
            return (-1j * strength * (coupling @ y.reshape(dim, dim))).ravel()

        length = b - a
        solution = solve_ivp(rhs, (0.0, length), np.eye(dim, dtype=complex).ravel(),
                             method="DOP853", rtol=RTOL, atol=ATOL)
        if not solution.success:
            raise IntegrationError(
                f"ramp integration failed on [{a:.4f}, {b:.4f}] µs at {segment.amplitude:.3f} MHz: {solution.message}"
            )
        interaction = polar(solution.y[:, -1].reshape(dim, dim))[0]
        propagator = self.idle(length)[:, None] * interaction
        self._ramp_cache[key] = propagator
        logger.debug("ramp propagator [%.4f, %.4f] µs used %d steps", a, b, solution.t.size)
        return propagator

    def rotation(self, pulse: QubitPulse, angle: float, t: float) -> np.ndarray:
        """Qubit rotation at time ``t`` expressed in the drive frame."""
        phase = pulse.phase - TWO_PI * pulse.detuning * t
        local = np.eye(self.layout.dims[self.spec.mode_index(pulse.target)], dtype=complex)
        local[:2, :2] = rotation_matrix(angle, phase)
        rotation = embed(self.layout, self.spec.mode_index(pulse.target), local)
        frame = self.frame_phase(t)
        return frame.conj()[:, None] * rotation * frame[None, :]


@lru_cache(maxsize=32)
def _engine(spec_json: str, target: Optional[str], drive_freq: Optional[float]) -> _Engine:
    return _Engine(DeviceSpec.model_validate_json(spec_json), target, drive_freq)


def get_engine(spec: DeviceSpec, schedule: PulseSchedule) -> _Engine:
    carriers = {(seg.tone.target, seg.tone.frequency) for seg in schedule.tones}
    if len(carriers) > 1:
        raise ScheduleError(f"all tones of one schedule must share target and frequency, got {sorted(carriers)}")
    target, freq = carriers.pop() if carriers else (None, None)
    if target is not None:
        spec.mode_index(target)
    for pulse in schedule.pulses:
        if spec.mode(pulse.target).role != "qubit":
            raise ScheduleError(f"qubit pulse targets non-qubit mode {pulse.target!r}")
    return _engine(spec.model_dump_json(), target, freq)


def _kicks(schedule: PulseSchedule) -> List[Tuple[float, QubitPulse, float]]:
    """Instantaneous rotations; finite pulses are split into equal kicks at slice midpoints."""
    kicks = []
    for pulse in schedule.pulses:
        if pulse.duration <= 0:
            kicks.append((pulse.start, pulse, pulse.angle))
            continue
        slices = max(1, int(math.ceil(pulse.duration / PULSE_SLICE)))
        width = pulse.duration / slices
        for k in range(slices):
            kicks.append((pulse.start + (k + 0.5) * width, pulse, pulse.angle / slices))
    return sorted(kicks, key=lambda kick: kick[0])


def _segment_step(engine: _Engine, schedule: PulseSchedule, t0: float, t1: float) -> np.ndarray:
    """Drive-frame propagator over [t0, t1], a window inside one envelope region."""
    middle = 0.5 * (t0 + t1)
    for segment in schedule.tones:
        region = segment.region(middle)
        if region == "off" or segment.amplitude == 0:
            continue
        if region == "plateau":
            return engine.plateau(segment.amplitude, t1 - t0)
        return engine.ramp(segment, t0 - segment.start, t1 - segment.start)
    return np.diag(engine.idle(t1 - t0))


def _run(spec: DeviceSpec, schedule: PulseSchedule, state: np.ndarray, sample_times: Sequence[float]):
    engine = get_engine(spec, schedule)
    kicks = _kicks(schedule)
    points = {0.0, schedule.duration}
    for segment in schedule.tones:
        env = segment.envelope
        points.update({segment.start, segment.start + env.rise, segment.start + env.rise + env.plateau, segment.end})
    points.update(t for t, _, _ in kicks)
    points.update(float(t) for t in sample_times)
    grid: List[float] = []
    for t in sorted(points):
        if 0 <= t <= schedule.duration + TIME_EPS and (not grid or t - grid[-1] > TIME_EPS):
            grid.append(min(t, schedule.duration))

    samples = sorted(float(t) for t in sample_times)
    recorded = []
    kick_index = 0
    sample_index = 0
    for i, t in enumerate(grid):
        if i:
            step = _segment_step(engine, schedule, grid[i - 1], t)
            state = step @ state
        while kick_index < len(kicks) and kicks[kick_index][0] <= t + TIME_EPS:
            _, pulse, angle = kicks[kick_index]
            state = engine.rotation(pulse, angle, t) @ state
            kick_index += 1
        while sample_index < len(samples) and samples[sample_index] <= t + TIME_EPS:
            recorded.append((samples[sample_index], state.copy()))
            sample_index += 1
    return engine, state, recorded


def evolve(
    spec: DeviceSpec,
    schedule: PulseSchedule,
    initial: np.ndarray,
    sample_times: Optional[Sequence[float]] = None,
) -> EvolutionResult:
    """
    Propagate a normalized state through a pulse schedule.

    Args:
        spec: Device description
        schedule: Tones and qubit rotations
        initial: Dressed amplitudes at t = 0, indexed like bare product states
        sample_times: Times (µs) at which populations are recorded; start and end by default

    Returns:
        EvolutionResult with the final state in the multi-rotating frame

    Raises:
        ScheduleError: If the schedule mixes carriers or addresses a non-qubit mode
        IntegrationError: If the ramp integrator fails
    """
    initial = np.asarray(initial, dtype=complex)
    if abs(np.linalg.norm(initial) - 1) > 1e-8:
        raise ValueError("initial state must be normalized")
    times = [0.0, schedule.duration] if sample_times is None else list(sample_times)
    engine, state, recorded = _run(spec, schedule, initial, times)
    populations = np.array([np.abs(s) ** 2 for _, s in recorded])
    norms = populations.sum(axis=1)
    return EvolutionResult(
        final_state=engine.frame_phase(schedule.duration) * state,
        times=np.array([t for t, _ in recorded]),
        populations=populations,
        coupler_excitation=populations @ engine.coupler_number,
        norm_error=float(np.max(np.abs(norms - 1))) if len(norms) else 0.0,
        labels=engine.labels,
    )


def propagator(spec: DeviceSpec, schedule: PulseSchedule) -> np.ndarray:
    """Full unitary of a schedule in the multi-rotating frame (dressed basis)."""
    engine = get_engine(spec, schedule)
    _, unitary, _ = _run(spec, schedule, np.eye(engine.layout.total_dim, dtype=complex), [])
    return engine.frame_phase(schedule.duration)[:, None] * unitary


def dressed_state(spec: DeviceSpec, amplitudes: Dict[Tuple[int, ...], complex]) -> np.ndarray:
    """Normalized dressed-basis vector from a map of occupation tuple to amplitude."""
    layout = spec.layout()
    vector = np.zeros(layout.total_dim, dtype=complex)
    for label, amplitude in amplitudes.items():
        vector[basis_index(layout, label)] = amplitude
    return vector / np.linalg.norm(vector)


def coupler_leakage_vs_edges(
    spec: DeviceSpec,
    tone: DriveTone,
    edge_axis: Sequence[float],
    plateau: float = 1.0,
    plateau_samples: int = 4,
) -> List[Tuple[float, float]]:
    """
    Residual coupler excitation after a flat-top pulse versus edge duration.

    For each edge duration every computational state |mn0> of the first two qubits is
    evolved through the pulse and the final <n_c> averaged. The average also runs over
    ``plateau_samples`` plateau lengths spread over one period of the smallest drive
    detuning, which removes the rise/fall interference fringe.

    Returns:
        List of (edge µs, average <n_c>) pairs
    """
    summary = dispersive_summary(spec)
    detunings = [abs(tone.frequency - f) * 1e3 for f in summary.coupler_freqs.values()]
    beat = 1.0 / max(min(detunings), 1e-3)
    plateaus = [plateau + k * beat / plateau_samples for k in range(plateau_samples)]
    layout = spec.layout()
    starts = [basis_index(layout, computational_label(spec, summary.qubits, summary.coupler, s))
              for s in ("gg", "ge", "eg", "ee")]
    results = []
    for edge in edge_axis:
        excitation = []
        for flat in plateaus:
            envelope = (Envelope(kind="square", rise=0.0, fall=0.0, plateau=flat) if edge <= 0
                        else Envelope(rise=edge, fall=edge, plateau=flat))
            schedule = PulseSchedule(tones=[ToneSegment(tone=tone, envelope=envelope)], duration=envelope.duration)
            unitary = propagator(spec, schedule)
            engine = get_engine(spec, schedule)
            for start in starts:
                final = np.abs(unitary[:, start]) ** 2
                excitation.append(float(final @ engine.coupler_number))
        results.append((float(edge), float(np.mean(excitation))))
        logger.info("edge %.3f µs: mean coupler excitation %.5f", edge, results[-1][1])
    return results
