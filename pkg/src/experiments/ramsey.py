"""Echoed and conditional Ramsey protocols with fringe fitting."""
import csv
import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from scipy.optimize import curve_fit

from src.cancel import driven_energies, operating_frequency
from src.common.errors import FitError
from src.common.utils import TWO_PI, rad_to_mhz
from src.device import DeviceSpec, DriveTone
from src.dynamics import Envelope, PulseSchedule, QubitPulse, ToneSegment, dressed_state, evolve, rotation_matrix
from src.experiments.readout import excited_population
from src.qops import embed
from src.spectrum import computational_label, dispersive_summary, resolve_pair

logger = logging.getLogger(__name__)

# Default edge duration of every coupler drive pulse, µs.
EDGE = 0.3


class RamseyTrace(BaseModel):
    """Excited-state population of one qubit over a delay or phase sweep and its fitted fringe."""

    label: str = Field(..., description="Run description")
    axis_kind: Literal["delay", "phase"] = Field(..., description="delay in µs or final-pulse phase in rad")
    axis: List[float] = Field(..., description="Swept values")
    population: List[float] = Field(..., description="Excited-state population per point")
    frequency: float = Field(..., description="Fitted frequency in kHz")
    phase: float = Field(..., description="Fitted phase in rad")
    contrast: float = Field(..., description="Fitted fringe amplitude")
    offset: float = Field(..., description="Fitted fringe offset")
    residual_rms: float = Field(..., description="RMS of the fit residual")
    below_resolution: bool = Field(False, description="Fitted frequency is below 1/(axis span)")
    drive_amplitude: float = Field(0.0, description="Coupler drive amplitude in MHz")

    def to_csv(self, path: Path) -> Path:
        unit = "delay_us" if self.axis_kind == "delay" else "phase_rad"
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([unit, "P_excited", "fit"])
            for x, p in zip(self.axis, self.population):
                writer.writerow([f"{x:.6f}", f"{p:.10f}", f"{self.model(x):.10f}"])
        return path

    def model(self, x: float) -> float:
        if self.axis_kind == "phase":
            return self.offset + self.contrast * math.cos(x - self.phase)
        return self.offset - self.contrast * math.cos(TWO_PI * self.frequency * 1e-3 * x + self.phase)


class FrequencyShiftSet(BaseModel):
    """Drive-induced shifts of |ge>, |eg>, |ee> relative to |gg>, in kHz, per drive amplitude."""

    amplitudes: List[float] = Field(..., description="Drive amplitudes in MHz")
    shift_ge: List[float] = Field(..., description="Shift of |ge>")
    shift_eg: List[float] = Field(..., description="Shift of |eg>")
    shift_ee: List[float] = Field(..., description="Shift of |ee>")
    chi_zz_cross: List[float] = Field(..., description="Net ZZ measured with the first qubit as target")

    @property
    def chi_zz(self) -> List[float]:
        return [ee - ge - eg for ge, eg, ee in zip(self.shift_ge, self.shift_eg, self.shift_ee)]

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["drive_amp_MHz", "shift_ge_kHz", "shift_eg_kHz", "shift_ee_kHz", "chi_zz_kHz"])
            for row in zip(self.amplitudes, self.shift_ge, self.shift_eg, self.shift_ee, self.chi_zz):
                writer.writerow([f"{value:.6f}" for value in row])
        return path


def _fringe(t, contrast, frequency, phase, offset):
    return offset - contrast * np.cos(TWO_PI * frequency * t + phase)


def fit_fringe(delays: Sequence[float], population: Sequence[float]) -> Tuple[float, float, float, float, float]:
    """
    Fit P = B - A cos(2 pi f t + phi) to a delay sweep (t in µs, f in MHz).

    A fixed-contrast periodogram over frequency seeds the least-squares fit, which keeps
    near-flat traces at f close to zero instead of chasing noise.

    Returns:
        (A, f, phi, B, residual RMS)

    Raises:
        FitError: If the least-squares fit does not converge
    """
    t = np.asarray(delays, dtype=float)
    p = np.asarray(population, dtype=float)
    span = float(t.max() - t.min())
    step = float(np.min(np.diff(np.unique(t)))) if t.size > 1 else span
    f_max = 0.5 / step if step > 0 else 1.0
    grid = np.linspace(0.0, f_max, max(64, int(8 * span * f_max) + 1))
    centred = p - 0.5
    c = np.cos(TWO_PI * np.outer(grid, t)) @ centred
    s = np.sin(TWO_PI * np.outer(grid, t)) @ centred
    best = int(np.argmax(np.hypot(c, s)))
    f0, phi0 = float(grid[best]), math.remainder(math.atan2(s[best], -c[best]), TWO_PI)
    try:
        params, _ = curve_fit(
            _fringe, t, p,
            p0=[0.5, f0, phi0, 0.5],
            bounds=([0.1, 0.0, -TWO_PI, -0.1], [0.6, f_max, TWO_PI, 1.1]),
            maxfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"fringe fit failed: {exc}") from exc
    contrast, frequency, phase, offset = (float(v) for v in params)
    rms = float(np.sqrt(np.mean((_fringe(t, *params) - p) ** 2)))
    return contrast, frequency, phase, offset, rms


def _echo_point(spec: DeviceSpec, tone: DriveTone, target: str, control: str, delay: float, edge: float) -> float:
    pulses = [
        QubitPulse(target=target, angle=math.pi / 2, start=0.0),
        QubitPulse(target=control, angle=math.pi, start=delay),
        QubitPulse(target=target, angle=math.pi, start=delay),
        QubitPulse(target=target, angle=math.pi / 2, start=2 * delay),
    ]
    tones = []
    if tone.amplitude > 0 and delay > 0:
        envelope = Envelope.flat_top(delay, edge)
        tones = [ToneSegment(tone=tone, envelope=envelope, start=k * delay) for k in (0, 1)]
    schedule = PulseSchedule(tones=tones, pulses=pulses, duration=2 * delay)
    initial = dressed_state(spec, {spec.label(): 1.0})
    return excited_population(spec, target, evolve(spec, schedule, initial).final_state)


def _echo_trace(spec, tone, pair, delays, edge) -> RamseyTrace:
    population = [_echo_point(spec, tone, pair[1], pair[0], float(d), edge) for d in delays]
    contrast, frequency, phase, offset, rms = fit_fringe(delays, population)
    span = float(max(delays) - min(delays))
    below = frequency < 1.0 / span
    if below:
        logger.warning(
            "echoed fringe at %.3f MHz drive is below the %.2f kHz resolution of a %.1f µs span",
            tone.amplitude, 1e3 / span, span,
        )
    return RamseyTrace(
        label=f"echo {pair[1]} amp={tone.amplitude:.4f} MHz",
        axis_kind="delay",
        axis=[float(d) for d in delays],
        population=population,
        frequency=frequency * 1e3,
        phase=phase,
        contrast=contrast,
        offset=offset,
        residual_rms=rms,
        below_resolution=below,
        drive_amplitude=tone.amplitude,
    )


def echoed_zz_ramsey(
    spec: DeviceSpec,
    amp_axis: Sequence[float],
    delay_axis: Sequence[float],
    drive_freq: Optional[float] = None,
    edge: float = EDGE,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
    threads: int = 1,
) -> List[RamseyTrace]:
    """
    Echoed ZZ Ramsey on the second qubit of the pair, one trace per drive amplitude.

    Each delay point runs pi/2 - [tau] - pi on both qubits - [tau] - pi/2 with a flat-top
    coupler pulse filling each tau window. The echo removes single-qubit phases, so the
    fringe oscillates at |chi_zz| in tau.

    Args:
        spec: Device description
        amp_axis: Drive amplitudes in MHz
        delay_axis: Window lengths tau in µs
        drive_freq: Drive frequency in GHz, the operating frequency when omitted
        edge: Rise and fall of each drive pulse in µs
        pair: Qubit pair (control, target)
        coupler: Driven coupler
        threads: Worker count across amplitudes

    Returns:
        One RamseyTrace per amplitude
    """
    summary = dispersive_summary(spec, pair, coupler)
    if drive_freq is None:
        drive_freq = operating_frequency(summary)
    tone = DriveTone(target=summary.coupler, frequency=drive_freq)
    logger.info("echoed ramsey: %d amplitudes x %d delays at %.6f GHz", len(amp_axis), len(delay_axis), drive_freq)
    return Parallel(n_jobs=threads)(
        delayed(_echo_trace)(spec, tone.at(amp), summary.qubits, list(delay_axis), edge) for amp in amp_axis
    )


def _state_name(target_first: bool, target: str, control: str) -> str:
    return target + control if target_first else control + target


def predicted_shift(
    spec: DeviceSpec,
    target: str,
    control_state: str,
    tone: Optional[DriveTone] = None,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> float:
    """Target transition frequency (MHz) relative to its undriven value with the control in |g>."""
    pair, coupler = resolve_pair(spec, pair, coupler)
    target_first = target == pair[0]
    if tone is None:
        summary = dispersive_summary(spec, pair, coupler)
        return summary.chi_zz_static * 1e-3 if control_state == "e" else 0.0
    driven = driven_energies(spec, tone, pair=pair, coupler=coupler).energies
    idle = driven_energies(spec, tone, amplitude=0.0, pair=pair, coupler=coupler).energies
    excited = _state_name(target_first, "e", control_state)
    ground = _state_name(target_first, "g", control_state)
    now = driven[excited] - driven[ground]
    reference = idle[_state_name(target_first, "e", "g")] - idle["gg"]
    return rad_to_mhz(now - reference)


def conditional_ramsey(
    spec: DeviceSpec,
    control_state: Literal["g", "e"],
    target: str,
    tone: Optional[DriveTone] = None,
    idle: float = 5.0,
    phase_axis: Optional[Sequence[float]] = None,
    reference_detuning: Optional[float] = None,
    edge: float = EDGE,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> RamseyTrace:
    """
    Phase-swept Ramsey on ``target`` with the other qubit of the pair held in ``control_state``.

    The final pi/2 pulse runs in a frame detuned by ``reference_detuning`` (MHz, the
    predicted shift by default) and its axis is swept over ``phase_axis``. The fitted
    phase Phi0 of P = B + A cos(phi - Phi0) gives the transition frequency relative to
    the undriven target frequency, reference_detuning - Phi0 / (2 pi idle).
    """
    pair, coupler = resolve_pair(spec, pair, coupler)
    if target not in pair:
        raise ValueError(f"target {target!r} is not in the pair {pair}")
    control = pair[1] if target == pair[0] else pair[0]
    if phase_axis is None:
        phase_axis = np.linspace(0.0, TWO_PI, 24, endpoint=False)
    if reference_detuning is None:
        reference_detuning = predicted_shift(spec, target, control_state, tone, pair, coupler)

    pulses = []
    if control_state == "e":
        pulses.append(QubitPulse(target=control, angle=math.pi, start=0.0))
    pulses.append(QubitPulse(target=target, angle=math.pi / 2, start=0.0))
    tones = []
    if tone is not None and tone.amplitude > 0:
        tones = [ToneSegment(tone=tone, envelope=Envelope.flat_top(idle, edge))]
    schedule = PulseSchedule(tones=tones, pulses=pulses, duration=idle)
    initial = dressed_state(spec, {computational_label(spec, pair, coupler, "gg"): 1.0})
    before = evolve(spec, schedule, initial).final_state

    layout = spec.layout()
    index = spec.mode_index(target)
    population = []
    for phi in phase_axis:
        local = np.eye(layout.dims[index], dtype=complex)
        local[:2, :2] = rotation_matrix(math.pi / 2, phi - TWO_PI * reference_detuning * idle)
        population.append(excited_population(spec, target, embed(layout, index, local) @ before))

    phases = np.asarray(phase_axis, dtype=float)
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    (offset, a, b), *_ = np.linalg.lstsq(design, np.asarray(population), rcond=None)
    phi0 = math.atan2(b, a)
    rms = float(np.sqrt(np.mean((design @ [offset, a, b] - population) ** 2)))
    frequency = reference_detuning - phi0 / (TWO_PI * idle)
    return RamseyTrace(
        label=f"conditional {target} control={control}:{control_state}",
        axis_kind="phase",
        axis=[float(p) for p in phases],
        population=population,
        frequency=frequency * 1e3,
        phase=phi0,
        contrast=float(math.hypot(a, b)),
        offset=float(offset),
        residual_rms=rms,
        drive_amplitude=tone.amplitude if tone else 0.0,
    )


def _shift_row(spec, tone, idle, edge, pair, coupler) -> Tuple[float, float, float, float]:
    def run(target: str, state: str) -> float:
        trace = conditional_ramsey(spec, state, target, tone, idle, edge=edge, pair=pair, coupler=coupler)
        return trace.frequency

    return run(pair[1], "g"), run(pair[1], "e"), run(pair[0], "g"), run(pair[0], "e")


def frequency_shifts(
    spec: DeviceSpec,
    drive_freq: Optional[float],
    amp_axis: Sequence[float],
    idle: float = 5.0,
    edge: float = EDGE,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
    threads: int = 1,
) -> FrequencyShiftSet:
    """
    Four conditional Ramsey runs per amplitude: each qubit as target, control in g and e.

    Shifts are relative to the undriven |gg>-frame, so shift(ee) is the sum of the second
    qubit's frequency with the first excited and the first qubit's frequency with the
    second in |g>.
    """
    summary = dispersive_summary(spec, pair, coupler)
    if drive_freq is None:
        drive_freq = operating_frequency(summary)
    tone = DriveTone(target=summary.coupler, frequency=drive_freq)
    rows = Parallel(n_jobs=threads)(
        delayed(_shift_row)(spec, tone.at(amp), idle, edge, summary.qubits, summary.coupler) for amp in amp_axis
    )
    return FrequencyShiftSet(
        amplitudes=[float(a) for a in amp_axis],
        shift_ge=[b_g for b_g, _, _, _ in rows],
        shift_eg=[a_g for _, _, a_g, _ in rows],
        shift_ee=[b_e + a_g for _, b_e, a_g, _ in rows],
        chi_zz_cross=[a_e - a_g for _, _, a_g, a_e in rows],
    )
