"""Driven-frame ZZ analysis: Stark shifts, the net-ZZ map and the cancellation point."""
import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from src.common.errors import ContinuationError, NoSignChangeError
from src.common.utils import mhz_to_rad, rad_to_khz, rad_to_mhz
from src.device import DeviceSpec, DriveTone, build_drive_rotating_hamiltonian, drive_operator
from src.spectrum import DispersiveSummary, computational_label, diagonalize_labeled, dispersive_summary, resolve_pair

logger = logging.getLogger(__name__)

# Largest amplitude increment (MHz) between two continuation steps.
CONTINUATION_STEP_MHZ = 0.05
# Successive dressed states must overlap at least this much.
CONTINUATION_OVERLAP = 0.5
# Root-finder tolerance on the net ZZ, kHz.
ROOT_TOLERANCE_KHZ = 0.1

STATES = ("gg", "ge", "eg", "ee")


class StarkShift(BaseModel):
    """Two-level ac Stark shift of one computational state."""

    detuning: float = Field(..., description="Drive detuning omega_d - omega_c^mn in MHz")
    amplitude: float = Field(..., description="Drive amplitude in MHz")
    shift: float = Field(..., description="Signed Stark shift in MHz")
    e_plus: float = Field(..., description="Upper dressed eigenvalue in MHz")
    e_minus: float = Field(..., description="Lower dressed eigenvalue in MHz")


class DrivenEnergies(BaseModel):
    """Continuation-tracked dressed energies of the four computational states."""

    energies: Dict[str, float] = Field(..., description="Rotating-frame energy per state in rad/µs")
    min_overlap: float = Field(..., description="Worst step-to-step overlap seen while tracking")
    steps: int = Field(..., description="Number of amplitude steps")

    @property
    def chi_zz(self) -> float:
        """Net ZZ in kHz."""
        e = self.energies
        return rad_to_khz(e["gg"] + e["ee"] - e["ge"] - e["eg"])


class ZZMap(BaseModel):
    """Net ZZ over a grid of drive frequency and amplitude."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    reference_freq: float = Field(..., description="omega_c^gg/2pi in GHz; the frequency axis is relative to it")
    drive_freq_axis: List[float] = Field(..., description="Drive frequency offsets from the reference in GHz")
    drive_amp_axis: List[float] = Field(..., description="Drive amplitudes in MHz")
    chi_zz_grid: np.ndarray = Field(..., description="Net ZZ in kHz, shape (freq, amp); NaN where tracking failed")
    valid: np.ndarray = Field(..., description="True where continuation succeeded")
    min_overlap: np.ndarray = Field(..., description="Worst continuation overlap per cell")
    chi_zz_static: float = Field(..., description="Static ZZ in kHz")

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["drive_freq_offset_GHz", "drive_amp_MHz", "chi_zz_kHz", "valid"])
            for i, freq in enumerate(self.drive_freq_axis):
                for j, amp in enumerate(self.drive_amp_axis):
                    writer.writerow([f"{freq:.9f}", f"{amp:.6f}", f"{self.chi_zz_grid[i, j]:.6f}", int(self.valid[i, j])])
        return path


class CancellationPoint(BaseModel):
    """Drive parameters that null the net ZZ."""

    drive_freq: float = Field(..., description="Drive frequency in GHz")
    drive_amp: float = Field(..., ge=0, description="Drive amplitude in MHz")
    residual_chi_zz: float = Field(..., description="Net ZZ at the root in kHz")
    margin: float = Field(..., description="min |Delta_mn| / Omega_d, large in the dispersive limit")
    detunings: Dict[str, float] = Field(..., description="omega_d - omega_c^mn per state in MHz")


def stark_shift_two_level(detuning: float, amplitude: float) -> StarkShift:
    """
    Ac Stark shift of a level dressed by a detuned drive, both arguments in MHz.

    The shift carries the sign of the detuning; the dressed eigenvalues are
    (-Delta +/- sqrt(Delta^2 + Omega^2)) / 2.
    """
    root = math.hypot(detuning, amplitude)
    magnitude = (root - abs(detuning)) / 2
    return StarkShift(
        detuning=detuning,
        amplitude=amplitude,
        shift=math.copysign(magnitude, detuning),
        e_plus=(-detuning + root) / 2,
        e_minus=(-detuning - root) / 2,
    )


def analytic_chi_zz_drive(summary: DispersiveSummary, drive_freq: float, amplitude: float) -> float:
    """Four-term two-level estimate of the drive-induced ZZ in kHz."""
    shift = {
        s: stark_shift_two_level((drive_freq - summary.coupler_freq(s)) * 1e3, amplitude).shift for s in STATES
    }
    return (shift["gg"] + shift["ee"] - shift["ge"] - shift["eg"]) * 1e3


def operating_frequency(summary: DispersiveSummary) -> float:
    """
    Default drive frequency in GHz.

    The midpoint between omega_c^ee and its nearest single-excitation neighbour when the
    resulting Stark contribution opposes the static ZZ, otherwise the mirrored midpoint
    on the omega_c^gg side.
    """
    freqs = summary.coupler_freqs
    candidates = []
    for end in ("ee", "gg"):
        neighbour = min(("ge", "eg"), key=lambda s: abs(freqs[s] - freqs[end]))
        candidates.append((freqs[end] + freqs[neighbour]) / 2)
    spacing_mhz = min(abs(freqs[a] - freqs[b]) for a in freqs for b in freqs if a != b) * 1e3
    weak = 1e-3 * spacing_mhz
    for candidate in candidates:
        drive_part = analytic_chi_zz_drive(summary, candidate, max(weak, 1e-6))
        if summary.chi_zz_static == 0 or drive_part * summary.chi_zz_static < 0:
            return candidate
    logger.warning("no operating side opposes the static ZZ; using the omega_c^ee midpoint")
    return candidates[0]


def _track_states(
    spec: DeviceSpec,
    target: str,
    drive_freq: float,
    amplitude: float,
    labels: Dict[str, tuple],
    step: float = CONTINUATION_STEP_MHZ,
) -> DrivenEnergies:
    layout = spec.layout()
    undriven = build_drive_rotating_hamiltonian(spec, DriveTone(target=target, frequency=drive_freq))
    quadrature = drive_operator(spec, target)
    start = diagonalize_labeled(undriven, layout, list(labels.values()))
    vectors = {s: start.vector(label) for s, label in labels.items()}
    energies = {s: start.energy(label) for s, label in labels.items()}
    n_steps = int(math.ceil(abs(amplitude) / step)) if amplitude else 0
    worst = 1.0
    for current in np.linspace(0.0, amplitude, n_steps + 1)[1:]:
        values, eigvecs = np.linalg.eigh(undriven.matrix + 0.5 * mhz_to_rad(current) * quadrature)
        claimed = {}
        for s, previous in vectors.items():
            overlaps = np.abs(eigvecs.conj().T @ previous) ** 2
            column = int(np.argmax(overlaps))
            worst = min(worst, float(overlaps[column]))
            if overlaps[column] < CONTINUATION_OVERLAP or column in claimed:
                raise ContinuationError(
                    f"lost dressed state |{s}0> at {current:.3f} MHz (overlap {overlaps[column]:.3f})",
                    amplitude_mhz=float(current),
                    overlap=float(overlaps[column]),
                )
            claimed[column] = s
            vectors[s] = eigvecs[:, column]
            energies[s] = float(values[column])
    return DrivenEnergies(energies=energies, min_overlap=worst, steps=n_steps)


def driven_energies(
    spec: DeviceSpec,
    tone: DriveTone,
    amplitude: Optional[float] = None,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> DrivenEnergies:
    """
    Track the four computational dressed states from zero drive up to the tone amplitude.

    ``amplitude`` overrides the tone amplitude and may be negative (a drive phase flip).
    Other qubits stay in their ground state and every non-driven coupler in vacuum.

    Raises:
        ContinuationError: If a tracked state loses overlap between successive steps
    """
    pair, coupler = resolve_pair(spec, pair, coupler)
    labels = {s: computational_label(spec, pair, coupler, s) for s in STATES}
    value = tone.amplitude if amplitude is None else amplitude
    return _track_states(spec, tone.target, tone.frequency, value, labels)


def chi_zz_driven(
    spec: DeviceSpec,
    tone: DriveTone,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> float:
    """Nonperturbative net ZZ in kHz under a flat tone."""
    return driven_energies(spec, tone, pair=pair, coupler=coupler).chi_zz


def stark_compensation(
    spec: DeviceSpec,
    tone: DriveTone,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> Tuple[float, float]:
    """Drive-induced shift (MHz) of each qubit's frequency with the other qubit in |g>."""
    driven = driven_energies(spec, tone, pair=pair, coupler=coupler).energies
    idle = driven_energies(spec, tone, amplitude=0.0, pair=pair, coupler=coupler).energies
    shift_1 = (driven["eg"] - driven["gg"]) - (idle["eg"] - idle["gg"])
    shift_2 = (driven["ge"] - driven["gg"]) - (idle["ge"] - idle["gg"])
    return rad_to_mhz(shift_1), rad_to_mhz(shift_2)


def _zz_row(spec: DeviceSpec, target: str, drive_freq: float, amp_axis: Sequence[float], labels: Dict[str, tuple]):
    row, valid, overlap = [], [], []
    for amp in amp_axis:
        try:
            result = _track_states(spec, target, drive_freq, amp, labels)
        except ContinuationError as exc:
            logger.warning("zz map cell (%.6f GHz, %.3f MHz) flagged: %s", drive_freq, amp, exc)
            row.append(float("nan"))
            valid.append(False)
            overlap.append(exc.overlap)
            continue
        row.append(result.chi_zz)
        valid.append(True)
        overlap.append(result.min_overlap)
    return row, valid, overlap


def zz_map(
    spec: DeviceSpec,
    freq_axis: Sequence[float],
    amp_axis: Sequence[float],
    threads: int = 1,
) -> ZZMap:
    """
    Net ZZ over drive frequency offsets (GHz from omega_c^gg) and amplitudes (MHz).

    Cells where continuation fails are stored as NaN with ``valid`` False.
    """
    if list(freq_axis) != sorted(freq_axis) or list(amp_axis) != sorted(amp_axis):
        raise ValueError("zz map axes must be sorted ascending")
    summary = dispersive_summary(spec)
    labels = {s: computational_label(spec, summary.qubits, summary.coupler, s) for s in STATES}
    logger.info("zz map over %d x %d cells with %d worker(s)", len(freq_axis), len(amp_axis), threads)
    rows = Parallel(n_jobs=threads)(
        delayed(_zz_row)(spec, summary.coupler, summary.coupler_freq_gg + offset, list(amp_axis), labels)
        for offset in freq_axis
    )
    return ZZMap(
        reference_freq=summary.coupler_freq_gg,
        drive_freq_axis=[float(f) for f in freq_axis],
        drive_amp_axis=[float(a) for a in amp_axis],
        chi_zz_grid=np.array([row for row, _, _ in rows], dtype=float).reshape(len(freq_axis), len(amp_axis)),
        valid=np.array([flags for _, flags, _ in rows], dtype=bool).reshape(len(freq_axis), len(amp_axis)),
        min_overlap=np.array([ov for _, _, ov in rows], dtype=float).reshape(len(freq_axis), len(amp_axis)),
        chi_zz_static=summary.chi_zz_static,
    )


def find_cancellation(
    spec: DeviceSpec,
    drive_freq: Optional[float] = None,
    amp_bracket: Tuple[float, float] = (0.0, 2.0),
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> CancellationPoint:
    """
    Brent root of the net ZZ in drive amplitude at a fixed drive frequency.

    Args:
        spec: Device description
        drive_freq: Drive frequency in GHz, the operating frequency when omitted
        amp_bracket: Amplitude bracket in MHz
        pair: Qubit pair, first two qubits by default
        coupler: Driven coupler, first coupler by default

    Raises:
        NoSignChangeError: If the net ZZ keeps its sign across the bracket
        ContinuationError: If tracking fails inside the bracket
    """
    summary = dispersive_summary(spec, pair, coupler)
    if drive_freq is None:
        drive_freq = operating_frequency(summary)
    tone = DriveTone(target=summary.coupler, frequency=drive_freq)

    def residual(amp: float) -> float:
        return driven_energies(spec, tone, amplitude=amp, pair=summary.qubits, coupler=summary.coupler).chi_zz

    low, high = amp_bracket
    f_low = residual(low)
    if abs(f_low) < ROOT_TOLERANCE_KHZ:
        root, f_root = low, f_low
    else:
        f_high = residual(high)
        if f_low * f_high > 0:
            raise NoSignChangeError(
                f"net ZZ keeps its sign on [{low}, {high}] MHz ({f_low:.3f} -> {f_high:.3f} kHz)"
            )
        logger.info("root search on [%.3f, %.3f] MHz at %.6f GHz", low, high, drive_freq)
        root = brentq(residual, low, high, xtol=1e-9, rtol=1e-12, maxiter=200)
        f_root = residual(root)
    detunings = {s: (drive_freq - summary.coupler_freq(s)) * 1e3 for s in STATES}
    margin = min(abs(d) for d in detunings.values()) / root if root > 0 else float("inf")
    return CancellationPoint(
        drive_freq=drive_freq,
        drive_amp=float(root),
        residual_chi_zz=float(f_root),
        margin=margin,
        detunings=detunings,
    )
