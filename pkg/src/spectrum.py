"""Labeled diagonalization and the static dispersive quantities of a device."""
import logging
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment

from src.common.errors import DeviceError, LabelCollisionError, ResonantDenominatorError
from src.common.utils import rad_to_ghz, rad_to_khz
from src.device import DeviceSpec, build_static_hamiltonian
from src.qops import Op, SpaceLayout, basis_index, basis_occupations, excitation_blocks

logger = logging.getLogger(__name__)

# Perturbative denominators closer than this (MHz) straddle a two-photon resonance.
RESONANCE_TOLERANCE_MHZ = 1.0

Label = Tuple[int, ...]


class LabeledSpectrum(BaseModel):
    """Eigenpairs with each eigenvector tagged by the bare product state it continues."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layout: SpaceLayout = Field(..., description="Layout the Hamiltonian lives on")
    eigenvalues: np.ndarray = Field(..., description="Ascending energies in rad/µs")
    eigenvectors: np.ndarray = Field(..., description="Unitary matrix, one eigenvector per column")
    labels: Dict[Label, int] = Field(..., description="Bare occupation tuple -> eigen index")
    overlap_quality: Dict[Label, float] = Field(..., description="Squared overlap of each label with its bare state")

    def energy(self, label: Sequence[int]) -> float:
        return float(self.eigenvalues[self.labels[tuple(label)]])

    def vector(self, label: Sequence[int]) -> np.ndarray:
        return self.eigenvectors[:, self.labels[tuple(label)]]


class DispersiveSummary(BaseModel):
    """State-dependent coupler frequencies and the static ZZ of one qubit pair."""

    coupler_freq_gg: float = Field(..., description="omega_c^gg/2pi in GHz")
    coupler_freq_ge: float = Field(..., description="omega_c^ge/2pi in GHz")
    coupler_freq_eg: float = Field(..., description="omega_c^eg/2pi in GHz")
    coupler_freq_ee: float = Field(..., description="omega_c^ee/2pi in GHz")
    chi1: float = Field(..., description="Qubit 1 dispersive shift of the coupler in MHz")
    chi2: float = Field(..., description="Qubit 2 dispersive shift of the coupler in MHz")
    chi_zz_static: float = Field(..., description="Static ZZ in kHz")
    qubit_dressed_freqs: Tuple[float, float] = Field(..., description="Dressed qubit frequencies in GHz")
    qubits: Tuple[str, str] = Field(..., description="Qubit names, first letter of each state label")
    coupler: str = Field(..., description="Coupler name")
    min_overlap: float = Field(..., description="Smallest squared overlap of the four coupler-vacuum states")

    def coupler_freq(self, state: str) -> float:
        return getattr(self, f"coupler_freq_{state}")

    @property
    def coupler_freqs(self) -> Dict[str, float]:
        return {state: self.coupler_freq(state) for state in ("gg", "ge", "eg", "ee")}


class PerturbativeInputs(BaseModel):
    """Detunings, sums and effective coupling entering the fourth-order estimate, in MHz."""

    delta_12: float = Field(..., description="omega_1 - omega_2")
    delta_1c: float = Field(..., description="omega_1 - omega_c")
    delta_2c: float = Field(..., description="omega_2 - omega_c")
    sigma_1c: float = Field(..., description="omega_1 + omega_c")
    sigma_2c: float = Field(..., description="omega_2 + omega_c")
    g_eff: float = Field(..., description="Effective qubit-qubit coupling")
    v: float = Field(..., description="Dimensionless g1c*g2c/(2 delta_1c delta_2c)")


def diagonalize_labeled(h: Op, layout: SpaceLayout, targets: Optional[Iterable[Label]] = None) -> LabeledSpectrum:
    """
    Diagonalize a Hermitian operator and label eigenvectors by maximum bare overlap.

    Labels are assigned greedily in order of decreasing overlap. A bare state whose best
    eigenvector is already claimed, or whose best overlap does not exceed one half,
    means the dispersive assignment has broken down.

    Args:
        h: Hermitian operator on ``layout``
        layout: Space layout used to interpret bare indices
        targets: Occupation tuples to label; every product state when omitted

    Returns:
        LabeledSpectrum with ascending eigenvalues

    Raises:
        LabelCollisionError: If two bare states claim one eigenvector
    """
    eigenvalues, eigenvectors = np.linalg.eigh(h.matrix)
    overlaps = np.abs(eigenvectors) ** 2
    if targets is None:
        bare_indices = list(range(layout.total_dim))
    else:
        bare_indices = [basis_index(layout, label) for label in targets]

    best = {b: int(np.argmax(overlaps[b])) for b in bare_indices}
    ordered = sorted(bare_indices, key=lambda b: overlaps[b, best[b]], reverse=True)

    labels: Dict[Label, int] = {}
    quality: Dict[Label, float] = {}
    claimed: Dict[int, Label] = {}
    for b in ordered:
        label = basis_occupations(layout, b)
        column = best[b]
        overlap = float(overlaps[b, column])
        if column in claimed or overlap <= 0.5:
            rival = claimed.get(column)
            raise LabelCollisionError(
                f"bare state {label} (overlap {overlap:.3f}) collides with {rival} on eigenvector {column}",
                labels=[label, rival],
            )
        claimed[column] = label
        labels[label] = column
        quality[label] = overlap
    return LabeledSpectrum(
        layout=layout,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        labels=labels,
        overlap_quality=quality,
    )


def resolve_pair(spec: DeviceSpec, pair: Optional[Tuple[str, str]] = None, coupler: Optional[str] = None):
    """Qubit pair and coupler names, defaulting to the first two qubits and first coupler."""
    if pair is None:
        qubits = spec.qubits
        pair = (qubits[0].name, qubits[1].name)
    if coupler is None:
        if not spec.couplers:
            raise DeviceError(f"device {spec.name!r} has no coupler")
        coupler = spec.couplers[0].name
    for name in (*pair, coupler):
        spec.mode_index(name)
    return tuple(pair), coupler


def computational_label(spec: DeviceSpec, pair: Tuple[str, str], coupler: str, state: str, photons: int = 0) -> Label:
    """Occupation tuple of a two-letter state such as 'eg' with the coupler holding ``photons``."""
    occupation = {pair[0]: int(state[0] == "e"), pair[1]: int(state[1] == "e"), coupler: photons}
    return spec.label(**occupation)


def dispersive_summary(
    spec: DeviceSpec,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> DispersiveSummary:
    """
    Extract coupler frequencies, dispersive shifts and static ZZ from labeled eigenvalues.

    Raises:
        LabelCollisionError: Propagated from the labeling step
    """
    pair, coupler = resolve_pair(spec, pair, coupler)
    states = ("gg", "ge", "eg", "ee")
    targets = [computational_label(spec, pair, coupler, s, k) for s in states for k in (0, 1)]
    spectrum = diagonalize_labeled(build_static_hamiltonian(spec), spec.layout(), targets)

    def energy(state: str, photons: int) -> float:
        return spectrum.energy(computational_label(spec, pair, coupler, state, photons))

    coupler_freqs = {s: rad_to_ghz(energy(s, 1) - energy(s, 0)) for s in states}
    chi_zz = energy("gg", 0) + energy("ee", 0) - energy("ge", 0) - energy("eg", 0)
    summary = DispersiveSummary(
        coupler_freq_gg=coupler_freqs["gg"],
        coupler_freq_ge=coupler_freqs["ge"],
        coupler_freq_eg=coupler_freqs["eg"],
        coupler_freq_ee=coupler_freqs["ee"],
        chi1=(coupler_freqs["eg"] - coupler_freqs["gg"]) * 1e3,
        chi2=(coupler_freqs["ge"] - coupler_freqs["gg"]) * 1e3,
        chi_zz_static=rad_to_khz(chi_zz),
        qubit_dressed_freqs=(
            rad_to_ghz(energy("eg", 0) - energy("gg", 0)),
            rad_to_ghz(energy("ge", 0) - energy("gg", 0)),
        ),
        qubits=pair,
        coupler=coupler,
        min_overlap=min(spectrum.overlap_quality[computational_label(spec, pair, coupler, s)] for s in states),
    )
    logger.info(
        "dispersive summary for %s: chi1=%.3f MHz chi2=%.3f MHz chi_zz=%.2f kHz",
        spec.name, summary.chi1, summary.chi2, summary.chi_zz_static,
    )
    return summary


def perturbative_inputs(
    spec: DeviceSpec,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> PerturbativeInputs:
    pair, coupler = resolve_pair(spec, pair, coupler)
    w1, w2 = (spec.mode(name).frequency * 1e3 for name in pair)
    wc = spec.mode(coupler).frequency * 1e3
    g12 = spec.coupling(*pair)
    g1c = spec.coupling(pair[0], coupler)
    g2c = spec.coupling(pair[1], coupler)
    delta_1c, delta_2c = w1 - wc, w2 - wc
    sigma_1c, sigma_2c = w1 + wc, w2 + wc
    for name, value in (("delta_1c", delta_1c), ("delta_2c", delta_2c)):
        if abs(value) < RESONANCE_TOLERANCE_MHZ:
            raise ResonantDenominatorError(f"{name} = {value:.3f} MHz is resonant")
    g_eff = g12 + g1c * g2c * (1 / delta_1c + 1 / delta_2c - 1 / sigma_1c - 1 / sigma_2c) / 2
    return PerturbativeInputs(
        delta_12=w1 - w2,
        delta_1c=delta_1c,
        delta_2c=delta_2c,
        sigma_1c=sigma_1c,
        sigma_2c=sigma_2c,
        g_eff=g_eff,
        v=g1c * g2c / (2 * delta_1c * delta_2c),
    )


def perturbative_chi_zz(
    spec: DeviceSpec,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> float:
    """
    Fourth-order perturbative static ZZ in kHz.

    Raises:
        ResonantDenominatorError: If |delta_12 + eta_1| or |delta_12 - eta_2| is below 1 MHz
    """
    pair, coupler = resolve_pair(spec, pair, coupler)
    p = perturbative_inputs(spec, pair, coupler)
    eta1, eta2 = (spec.mode(name).anharmonicity for name in pair)
    eta_c = spec.mode(coupler).anharmonicity
    d12 = p.delta_12
    first, second = d12 + eta1, d12 - eta2
    if abs(first) < RESONANCE_TOLERANCE_MHZ or abs(second) < RESONANCE_TOLERANCE_MHZ:
        raise ResonantDenominatorError(
            f"denominators ({first:.3f}, {second:.3f}) MHz straddle a two-photon resonance"
        )
    denominator = first * second
    exchange = (eta1 + eta2) * p.g_eff**2 - 2 * p.v * (2 * eta1 * eta2 + (eta1 - eta2) * d12) * p.g_eff
    coupler_term = 4 * eta_c + (eta1 + eta2) * d12**2 / denominator
    chi_mhz = 2 * exchange / denominator + 2 * p.v**2 * coupler_term
    return chi_mhz * 1e3


class DressedBasis(BaseModel):
    """
    Complete dressed eigenbasis of an excitation-conserving Hamiltonian.

    Column ``b`` of ``vectors`` is the eigenvector assigned to bare product state ``b``
    and ``energies[b]`` its eigenvalue, so amplitudes in this basis are indexed exactly
    like bare product states.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layout: SpaceLayout = Field(..., description="Layout of the bare product basis")
    energies: np.ndarray = Field(..., description="Eigenvalue per bare label in rad/µs")
    vectors: np.ndarray = Field(..., description="Eigenvector per bare label, column-wise")
    min_overlap: float = Field(..., description="Smallest squared overlap with the assigned bare state")


def dressed_basis(h: Op, layout: SpaceLayout, tolerance: float = 1e-9) -> DressedBasis:
    """
    Label every eigenvector of ``h`` one-to-one with a bare state.

    Each excitation-number block is diagonalized on its own and its eigenvectors are
    matched to bare states by a maximum-overlap assignment, so the labeling is a
    bijection even where a greedy pass would collide. Eigenvector phases are fixed so
    the diagonal overlap is real and positive.

    Raises:
        DeviceError: If ``h`` couples different excitation numbers
    """
    blocks = excitation_blocks(layout)
    matrix = h.matrix
    block_id = np.empty(layout.total_dim, dtype=int)
    for number, block in enumerate(blocks):
        block_id[block] = number
    leak = np.abs(matrix[block_id[:, None] != block_id[None, :]])
    if leak.size and leak.max() > tolerance:
        raise DeviceError(f"operator couples excitation-number sectors (max {leak.max():.3e})")

    energies = np.empty(layout.total_dim)
    vectors = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    min_overlap = 1.0
    for block in blocks:
        values, block_vectors = np.linalg.eigh(matrix[np.ix_(block, block)])
        overlaps = np.abs(block_vectors) ** 2
        rows, cols = linear_sum_assignment(-overlaps)
        for row, col in zip(rows, cols):
            bare = block[row]
            column = block_vectors[:, col]
            phase = column[row] / abs(column[row]) if abs(column[row]) > 0 else 1.0
            vectors[block, bare] = column / phase
            energies[bare] = values[col]
            min_overlap = min(min_overlap, float(overlaps[row, col]))
    return DressedBasis(layout=layout, energies=energies, vectors=vectors, min_overlap=min_overlap)
