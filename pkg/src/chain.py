"""Three-qubit, two-coupler chain: pairwise ZZ under simultaneous coupler drives.

Drives are treated in the dressed basis of the static Hamiltonian with a label-selective
rotating-wave approximation: the drive on coupler Ck keeps only matrix elements between
dressed labels that differ by one Ck photon, and each Ck label rotates at its own tone.
The driven Hamiltonian is then static and block-diagonal in the qubit labels.
"""
import csv
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from src.cancel import CONTINUATION_OVERLAP, CONTINUATION_STEP_MHZ, operating_frequency
from src.common.errors import DeviceError, NoSignChangeError
from src.common.utils import ghz_to_rad, mhz_to_rad, rad_to_khz
from src.device import CouplingSpec, DeviceSpec, DriveTone, ModeSpec, build_static_hamiltonian, drive_operator
from src.spectrum import dispersive_summary, dressed_basis

logger = logging.getLogger(__name__)

PAIRS: Dict[str, Tuple[Tuple[str, str], str]] = {
    "Q1Q2": (("Q1", "Q2"), "C1"),
    "Q2Q3": (("Q2", "Q3"), "C2"),
}
STATES = ("gg", "ge", "eg", "ee")


class ChainSpec(BaseModel):
    """Chain device plus one drive tone per coupler."""

    device: DeviceSpec = Field(..., description="Q1, Q2, Q3, C1, C2 and their couplings")
    tones: Tuple[DriveTone, DriveTone] = Field(..., description="Tones on C1 and C2")

    def tone(self, coupler: str) -> DriveTone:
        return next(t for t in self.tones if t.target == coupler)


class OperatingPoint(BaseModel):
    pair: str = Field(..., description="Pair key, e.g. Q1Q2")
    coupler: str = Field(..., description="Coupler mediating the pair")
    drive_freq: float = Field(..., description="Operating drive frequency in GHz")
    chi_zz_static: float = Field(..., description="Static ZZ of the pair in kHz, spectator in |g>")


class PairwiseZZ(BaseModel):
    """chi_zz of both pairs over a two-axis grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    axis1_name: str = Field(..., description="Name and unit of the first axis")
    axis1: List[float] = Field(..., description="First axis values")
    axis2_name: str = Field(..., description="Name and unit of the second axis")
    axis2: List[float] = Field(..., description="Second axis values")
    chi_12: np.ndarray = Field(..., description="chi_zz Q1Q2 in kHz, shape (axis1, axis2)")
    chi_23: np.ndarray = Field(..., description="chi_zz Q2Q3 in kHz, shape (axis1, axis2)")
    valid: np.ndarray = Field(..., description="False where continuation failed")
    crossings: Optional[List[bool]] = Field(None, description="Per axis1 value, whether chi_12 changes sign along axis2")

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([self.axis1_name, self.axis2_name, "chi_zz_Q1Q2_kHz", "chi_zz_Q2Q3_kHz", "valid"])
            for i, x in enumerate(self.axis1):
                for j, y in enumerate(self.axis2):
                    writer.writerow(
                        [f"{x:.6f}", f"{y:.6f}", f"{self.chi_12[i, j]:.6f}", f"{self.chi_23[i, j]:.6f}",
                         int(self.valid[i, j])]
                    )
        return path


def chain_device(levels: Tuple[int, int, int, int, int] = (3, 3, 3, 4, 4)) -> DeviceSpec:
    q1, q2, q3, c1, c2 = levels
    return DeviceSpec(
        name="chain",
        modes=[
            ModeSpec(name="Q1", role="qubit", frequency=5.1, anharmonicity=-200.0, levels=q1),
            ModeSpec(name="Q2", role="qubit", frequency=5.6, anharmonicity=-200.0, levels=q2),
            ModeSpec(name="Q3", role="qubit", frequency=5.0, anharmonicity=-200.0, levels=q3),
            ModeSpec(name="C1", role="coupler", frequency=6.5, anharmonicity=-300.0, levels=c1),
            ModeSpec(name="C2", role="coupler", frequency=6.4, anharmonicity=-300.0, levels=c2),
        ],
        couplings=[
            CouplingSpec(mode_a="Q1", mode_b="Q2", strength=10.0),
            CouplingSpec(mode_a="Q1", mode_b="C1", strength=120.0),
            CouplingSpec(mode_a="Q2", mode_b="C1", strength=80.0),
            CouplingSpec(mode_a="Q2", mode_b="Q3", strength=10.0),
            CouplingSpec(mode_a="Q2", mode_b="C2", strength=70.0),
            CouplingSpec(mode_a="Q3", mode_b="C2", strength=120.0),
        ],
    )


def operating_point(chain: ChainSpec, pair: str) -> OperatingPoint:
    """Operating frequency of the pair's coupler tone and the pair's static ZZ."""
    qubits, coupler = PAIRS[pair]
    summary = dispersive_summary(chain.device, qubits, coupler)
    return OperatingPoint(
        pair=pair, coupler=coupler, drive_freq=operating_frequency(summary), chi_zz_static=summary.chi_zz_static
    )


def with_operating_tones(device: DeviceSpec) -> ChainSpec:
    draft = ChainSpec(
        device=device,
        tones=(DriveTone(target="C1", frequency=6.5), DriveTone(target="C2", frequency=6.4)),
    )
    tones = tuple(DriveTone(target=PAIRS[p][1], frequency=operating_point(draft, p).drive_freq) for p in PAIRS)
    return ChainSpec(device=device, tones=tones)


def default_chain() -> ChainSpec:
    """Chain device with both tones at their pair operating frequencies and zero amplitude."""
    return with_operating_tones(chain_device())


class _DrivenChain:
    """Per-qubit-label blocks of the label-selective driven Hamiltonian."""

    def __init__(self, chain: ChainSpec):
        device = chain.device
        layout = device.layout()
        basis = dressed_basis(build_static_hamiltonian(device), layout)
        occupations = np.array(list(layout.occupations()))
        self.qubit_slots = [device.mode_index(q.name) for q in device.qubits]
        couplers = [device.mode_index(name) for name in ("C1", "C2")]
        frame = basis.energies.copy()
        quadratures = []
        for slot, name in zip(couplers, ("C1", "C2")):
            frame -= ghz_to_rad(chain.tone(name).frequency) * occupations[:, slot]
            dressed = basis.vectors.conj().T @ drive_operator(device, name) @ basis.vectors
            others = [s for s in range(layout.n_modes) if s != slot]
            same_rest = np.all(occupations[:, None, others] == occupations[None, :, others], axis=2)
            one_photon = np.abs(occupations[:, None, slot] - occupations[None, :, slot]) == 1
            quadratures.append(np.where(same_rest & one_photon, dressed, 0.0))
        self.frame = frame
        self.quadratures = quadratures
        self.occupations = occupations
        self.coupler_slots = couplers

    def block(self, qubits: Tuple[int, ...]) -> np.ndarray:
        mask = np.all(self.occupations[:, self.qubit_slots] == np.array(qubits), axis=1)
        return np.flatnonzero(mask)

    def start(self, indices: np.ndarray) -> int:
        """Position within the block of the label with both couplers in vacuum."""
        vacuum = np.all(self.occupations[indices][:, self.coupler_slots] == 0, axis=1)
        return int(np.flatnonzero(vacuum)[0])

    def hamiltonian(self, indices: np.ndarray, amp1: float, amp2: float) -> np.ndarray:
        sub = np.ix_(indices, indices)
        return (np.diag(self.frame[indices]) + 0.5 * mhz_to_rad(amp1) * self.quadratures[0][sub]
                + 0.5 * mhz_to_rad(amp2) * self.quadratures[1][sub])


@lru_cache(maxsize=16)
def _driven(chain_json: str) -> _DrivenChain:
    return _DrivenChain(ChainSpec.model_validate_json(chain_json))


def _path(points: Sequence[Tuple[float, float]]) -> List[Tuple[float, float, int]]:
    """Piecewise-linear path from (0, 0) through ``points`` in steps no longer than the continuation step.

    Each entry carries the index of the requested point it lands on, or -1 for intermediate steps.
    """
    path = []
    previous = (0.0, 0.0)
    for index, point in enumerate(points):
        distance = max(abs(point[0] - previous[0]), abs(point[1] - previous[1]))
        n_steps = max(1, int(np.ceil(distance / CONTINUATION_STEP_MHZ)))
        for k in range(1, n_steps + 1):
            fraction = k / n_steps
            path.append((previous[0] + fraction * (point[0] - previous[0]),
                         previous[1] + fraction * (point[1] - previous[1]),
                         index if k == n_steps else -1))
        previous = point
    return path


def _track(engine: _DrivenChain, qubits: Tuple[int, ...], points: Sequence[Tuple[float, float]]) -> List[float]:
    """Energy (rad/µs) of the continued |qubits, 0, 0> state at each point; NaN after a failure."""
    indices = engine.block(qubits)
    vector = np.zeros(len(indices), dtype=complex)
    position = engine.start(indices)
    vector[position] = 1.0
    energies = [float("nan")] * len(points)
    for amp1, amp2, index in _path(points):
        values, vectors = np.linalg.eigh(engine.hamiltonian(indices, amp1, amp2))
        overlaps = np.abs(vectors.conj().T @ vector) ** 2
        column = int(np.argmax(overlaps))
        if overlaps[column] < CONTINUATION_OVERLAP:
            logger.warning("chain state %s lost at (%.3f, %.3f) MHz", qubits, amp1, amp2)
            break
        vector = vectors[:, column]
        if index >= 0:
            energies[index] = float(values[column])
    return energies


def _pair_chi(engine: _DrivenChain, points: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    energy = {}
    for q1, q2, q3 in {(a, b, 0) for a in (0, 1) for b in (0, 1)} | {(0, b, c) for b in (0, 1) for c in (0, 1)}:
        energy[(q1, q2, q3)] = np.array(_track(engine, (q1, q2, q3), points))
    chi_12 = energy[(0, 0, 0)] + energy[(1, 1, 0)] - energy[(1, 0, 0)] - energy[(0, 1, 0)]
    chi_23 = energy[(0, 0, 0)] + energy[(0, 1, 1)] - energy[(0, 1, 0)] - energy[(0, 0, 1)]
    return rad_to_khz(chi_12), rad_to_khz(chi_23)


def pairwise_chi(chain: ChainSpec, points: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    """chi_zz (kHz) of Q1Q2 and Q2Q3 at each (C1, C2) amplitude point, continued along the given order."""
    return _pair_chi(_driven(chain.model_dump_json()), points)


def _row(chain: ChainSpec, amp1_axis: Sequence[float], amp2: float):
    points = ([(0.0, amp2)] if amp2 else []) + [(a, amp2) for a in amp1_axis]
    chi_12, chi_23 = pairwise_chi(chain, points)
    offset = 1 if amp2 else 0
    return chi_12[offset:], chi_23[offset:]


def zz_vs_detuning_and_amp(
    chain: ChainSpec,
    detuning_axis: Sequence[float],
    amp_axis: Sequence[float],
    threads: int = 1,
) -> PairwiseZZ:
    """
    chi_zz of Q1Q2 versus Delta12 = omega_Q1 - omega_Q2 (MHz) and the C1 amplitude (MHz).

    Delta12 is set by moving Q1; the C1 tone follows the pair's operating frequency at
    each detuning. Rows record whether chi_12 crosses zero along the amplitude axis.
    """
    if list(amp_axis) != sorted(amp_axis):
        raise ValueError("amplitude axis must be ascending")
    device = chain.device
    default = (device.mode("Q1").frequency - device.mode("Q2").frequency) * 1e3
    chains = []
    for detuning in detuning_axis:
        if abs(detuning - default) < 1e-9:
            chains.append(chain)
            continue
        moved = device.with_mode("Q1", frequency=device.mode("Q2").frequency + detuning * 1e-3)
        tones = (DriveTone(target="C1", frequency=operating_point(chain.model_copy(update={"device": moved}),
                                                                  "Q1Q2").drive_freq),
                 chain.tone("C2"))
        chains.append(ChainSpec(device=moved, tones=tones))
    logger.info("chain detuning sweep: %d x %d cells", len(detuning_axis), len(amp_axis))
    rows = Parallel(n_jobs=threads)(delayed(_row)(c, list(amp_axis), 0.0) for c in chains)
    chi_12 = np.array([r[0] for r in rows])
    chi_23 = np.array([r[1] for r in rows])
    valid = np.isfinite(chi_12) & np.isfinite(chi_23)
    crossings = []
    for row, ok in zip(chi_12, valid):
        values = row[ok]
        crossings.append(bool(values.size and (np.any(values == 0) or np.any(np.sign(values[:-1]) != np.sign(values[1:])))))
    return PairwiseZZ(
        axis1_name="delta12_MHz", axis1=[float(d) for d in detuning_axis],
        axis2_name="amp_C1_MHz", axis2=[float(a) for a in amp_axis],
        chi_12=chi_12, chi_23=chi_23, valid=valid, crossings=crossings,
    )


def simultaneous_cancellation(
    chain: ChainSpec,
    amp1_axis: Sequence[float],
    amp2_axis: Sequence[float],
    threads: int = 1,
) -> PairwiseZZ:
    """
    chi_zz of both pairs over the joint (C1, C2) amplitude grid with both tones on.

    For every C2 amplitude the states are continued from zero drive by first raising C2,
    then sweeping C1 along its axis.
    """
    if list(amp1_axis) != sorted(amp1_axis):
        raise ValueError("C1 amplitude axis must be ascending")
    rows = Parallel(n_jobs=threads)(delayed(_row)(chain, list(amp1_axis), float(a2)) for a2 in amp2_axis)
    chi_12 = np.array([r[0] for r in rows]).T
    chi_23 = np.array([r[1] for r in rows]).T
    return PairwiseZZ(
        axis1_name="amp_C1_MHz", axis1=[float(a) for a in amp1_axis],
        axis2_name="amp_C2_MHz", axis2=[float(a) for a in amp2_axis],
        chi_12=chi_12, chi_23=chi_23, valid=np.isfinite(chi_12) & np.isfinite(chi_23),
    )


def cancellation_amplitude(grid: Sequence[float], chi: Sequence[float]) -> float:
    """Linear interpolation of the first zero crossing of ``chi`` along ``grid``."""
    values = np.asarray(chi, dtype=float)
    for k in range(len(values) - 1):
        a, b = values[k], values[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b <= 0 and a != b:
            return float(grid[k] + (grid[k + 1] - grid[k]) * a / (a - b))
    raise NoSignChangeError("chi_zz does not change sign on the amplitude grid")


def truncation_check(chain: ChainSpec, levels: Tuple[int, int, int, int, int] = (3, 3, 3, 5, 5)) -> Dict[str, float]:
    """Static chi_zz difference (kHz) per pair between the chain's truncation and ``levels``."""
    names = ("Q1", "Q2", "Q3", "C1", "C2")
    if len(levels) != len(names):
        raise DeviceError(f"expected {len(names)} truncation levels, got {len(levels)}")
    bigger = chain.device.with_levels(**dict(zip(names, levels)))
    differences = {}
    for pair, (qubits, coupler) in PAIRS.items():
        base = dispersive_summary(chain.device, qubits, coupler).chi_zz_static
        wide = dispersive_summary(bigger, qubits, coupler).chi_zz_static
        differences[pair] = wide - base
        logger.info("truncation check %s: %.3f -> %.3f kHz", pair, base, wide)
    return differences
