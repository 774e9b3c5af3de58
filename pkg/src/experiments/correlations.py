"""Simultaneous Ramsey on both qubits and the ZZ correlator C_zz."""
import csv
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from src.cancel import operating_frequency, stark_compensation
from src.device import DeviceSpec, DriveTone
from src.dynamics import Envelope, PulseSchedule, QubitPulse, ToneSegment, dressed_state, evolve
from src.experiments.readout import pair_populations
from src.spectrum import computational_label, dispersive_summary

logger = logging.getLogger(__name__)

# Frame detunings (MHz) of the two qubits in the correlation study.
DEFAULT_DETUNINGS = (-0.5, -0.1)
CORRELATION_AMPLITUDES = (0.0, 0.36, 0.66, 0.96)


class CorrelationTrace(BaseModel):
    """Single-qubit and joint Z expectations of a simultaneous Ramsey run."""

    delays: List[float] = Field(..., description="Idle durations in µs")
    sigma1: List[float] = Field(..., description="<sigma1z> per delay")
    sigma2: List[float] = Field(..., description="<sigma2z> per delay")
    sigma12: List[float] = Field(..., description="<sigma1z sigma2z> per delay")
    drive_amplitude: float = Field(0.0, description="Coupler drive amplitude in MHz")
    detunings: Tuple[float, float] = Field(..., description="Frame detunings in MHz")

    @property
    def c_zz(self) -> List[float]:
        return [zz - z1 * z2 for z1, z2, zz in zip(self.sigma1, self.sigma2, self.sigma12)]

    @property
    def max_abs_czz(self) -> float:
        return float(np.max(np.abs(self.c_zz))) if self.delays else 0.0

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["delay_us", "sigma1z", "sigma2z", "sigma1z_sigma2z", "C_zz"])
            for row in zip(self.delays, self.sigma1, self.sigma2, self.sigma12, self.c_zz):
                writer.writerow([f"{value:.10f}" for value in row])
        return path


def _point(spec, tone, pair, coupler, delay, detunings, edge) -> Tuple[float, float, float]:
    # the tone ramps while both qubits sit in |g> and again after the closing pulses
    driven = tone is not None and tone.amplitude > 0 and delay > 0
    edge = edge if driven else 0.0
    pulses = [
        QubitPulse(target=q, angle=math.pi / 2, start=start, detuning=d)
        for start in (edge, edge + delay)
        for q, d in zip(pair, detunings)
    ]
    tones = [ToneSegment(tone=tone, envelope=Envelope.flat_top(delay + 2 * edge, edge))] if driven else []
    schedule = PulseSchedule(tones=tones, pulses=pulses, duration=delay + 2 * edge)
    initial = dressed_state(spec, {computational_label(spec, pair, coupler, "gg"): 1.0})
    p = pair_populations(spec, pair, evolve(spec, schedule, initial).final_state)
    sigma1 = p["gg"] + p["ge"] - p["eg"] - p["ee"]
    sigma2 = p["gg"] + p["eg"] - p["ge"] - p["ee"]
    return sigma1, sigma2, p["gg"] - p["ge"] - p["eg"] + p["ee"]


def simultaneous_ramsey(
    spec: DeviceSpec,
    tone: Optional[DriveTone],
    detunings: Tuple[float, float],
    delay_axis: Sequence[float],
    compensate: bool = False,
    edge: float = 0.3,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> CorrelationTrace:
    """
    pi/2 on both qubits, idle tau under the optional coupler tone, pi/2 on both.

    Both pulse pairs run in frames detuned by ``detunings`` (MHz). With ``compensate``
    the drive-induced qubit shifts are added to those detunings so the fringes keep
    their undriven frequencies.
    """
    summary = dispersive_summary(spec, pair, coupler)
    frames = tuple(detunings)
    if compensate and tone is not None and tone.amplitude > 0:
        shift_1, shift_2 = stark_compensation(spec, tone, summary.qubits, summary.coupler)
        frames = (frames[0] + shift_1, frames[1] + shift_2)
        logger.info("stark compensation (%.4f, %.4f) MHz", shift_1, shift_2)
    points = [
        _point(spec, tone, summary.qubits, summary.coupler, float(d), frames, edge) for d in delay_axis
    ]
    return CorrelationTrace(
        delays=[float(d) for d in delay_axis],
        sigma1=[p[0] for p in points],
        sigma2=[p[1] for p in points],
        sigma12=[p[2] for p in points],
        drive_amplitude=tone.amplitude if tone else 0.0,
        detunings=tuple(detunings),
    )


def correlation_amplitude_sweep(
    spec: DeviceSpec,
    amplitudes: Sequence[float] = CORRELATION_AMPLITUDES,
    delay_axis: Optional[Sequence[float]] = None,
    detunings: Tuple[float, float] = DEFAULT_DETUNINGS,
    drive_freq: Optional[float] = None,
    threads: int = 1,
) -> List[CorrelationTrace]:
    """Simultaneous Ramsey at several drive amplitudes, one trace each."""
    summary = dispersive_summary(spec)
    if drive_freq is None:
        drive_freq = operating_frequency(summary)
    if delay_axis is None:
        delay_axis = np.linspace(0.0, 10.0, 101)
    tone = DriveTone(target=summary.coupler, frequency=drive_freq)
    traces = Parallel(n_jobs=threads)(
        delayed(simultaneous_ramsey)(spec, tone.at(amp), detunings, list(delay_axis), compensate=True)
        for amp in amplitudes
    )
    for trace in traces:
        logger.info("amplitude %.3f MHz: max |C_zz| = %.4f", trace.drive_amplitude, trace.max_abs_czz)
    return traces
