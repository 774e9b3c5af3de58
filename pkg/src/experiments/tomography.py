"""Two-qubit state tomography: forward model, maximum-likelihood inversion and phase analysis."""
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize

from src.common.errors import FitError
from src.common.utils import wrap_phase
from src.device import DeviceSpec, DriveTone
from src.dynamics import Envelope, PulseSchedule, QubitPulse, ToneSegment, dressed_state, evolve, rotation_matrix
from src.experiments.readout import STATES, pair_populations
from src.spectrum import computational_label, dispersive_summary

logger = logging.getLogger(__name__)

# (angle, axis phase) of each pre-rotation; "I" is a zero-angle rotation.
PRE_ROTATION_PULSES: Dict[str, Tuple[float, float]] = {
    "I": (0.0, 0.0),
    "X/2": (math.pi / 2, 0.0),
    "Y/2": (math.pi / 2, math.pi / 2),
    "X": (math.pi, 0.0),
}
PRE_ROTATIONS: Dict[str, np.ndarray] = {name: rotation_matrix(*pulse) for name, pulse in PRE_ROTATION_PULSES.items()}
GROUND = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
PLUS_PLUS = np.full(4, 0.5, dtype=complex)
_LOWER = np.tril_indices(4, -1)


def measurement_operators() -> List[np.ndarray]:
    """M_k = U_k^+ |gg><gg| U_k for the 16 pre-rotations, first qubit's rotation slowest."""
    operators = []
    for first, second in itertools.product(PRE_ROTATIONS.values(), repeat=2):
        rotation = np.kron(first, second)
        operators.append(rotation.conj().T @ GROUND @ rotation)
    return operators


MEASUREMENTS = measurement_operators()


class DensityMatrix(BaseModel):
    """Physical two-qubit density matrix over gg, ge, eg, ee."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: np.ndarray = Field(..., description="4x4 complex matrix")
    log_likelihood: Optional[float] = Field(None, description="Final log-likelihood of the reconstruction")

    @model_validator(mode="after")
    def _physical(self):
        rho = self.matrix
        if rho.shape != (4, 4):
            raise ValueError(f"density matrix must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > 1e-9:
            raise ValueError(f"density matrix trace {np.trace(rho).real:.12f} != 1")
        if np.linalg.eigvalsh(rho).min() < -1e-9:
            raise ValueError("density matrix has negative eigenvalues")
        return self

    @classmethod
    def pure(cls, amplitudes: Sequence[complex]) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(matrix=np.outer(psi, psi.conj()))

    def phases(self) -> Dict[str, float]:
        """arg rho[mn, gg] for ge, eg and ee."""
        return {s: float(np.angle(self.matrix[i, 0])) for i, s in enumerate(STATES) if s != "gg"}

    def to_json(self, path: Path) -> Path:
        record = {
            "basis": list(STATES),
            "real": self.matrix.real.tolist(),
            "imag": self.matrix.imag.tolist(),
            "log_likelihood": self.log_likelihood,
        }
        Path(path).write_text(json.dumps(record, indent=2))
        return path


def trace_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """F = |Tr(rho sigma)|."""
    return float(abs(np.trace(rho.matrix @ sigma.matrix)))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def state_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    root = _psd_sqrt(rho.matrix)
    values = np.linalg.eigvalsh(root @ sigma.matrix @ root)
    return float(min(1.0, np.sum(np.sqrt(np.clip(values, 0.0, None))) ** 2))


def entangling_phase(rho: DensityMatrix) -> float:
    """phi_ee - phi_ge - phi_eg wrapped to (-pi, pi]."""
    phases = rho.phases()
    return wrap_phase(phases["ee"] - phases["ge"] - phases["eg"])


def local_phase_corrected(rho: DensityMatrix) -> DensityMatrix:
    """Apply single-qubit Z rotations that zero phi_ge and phi_eg."""
    phases = rho.phases()
    d = np.exp(-1j * np.array([0.0, phases["ge"], phases["eg"], phases["ge"] + phases["eg"]]))
    corrected = d[:, None] * rho.matrix * d.conj()[None, :]
    return DensityMatrix(matrix=0.5 * (corrected + corrected.conj().T), log_likelihood=rho.log_likelihood)


def forward_expectations(
    rho: DensityMatrix,
    shots: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """<M_k> = Tr(U_k rho U_k^+ |gg><gg|); binomially sampled when ``shots`` is given."""
    return sample_expectations([np.trace(m @ rho.matrix).real for m in MEASUREMENTS], shots, rng)


def sample_expectations(
    exact: Sequence[float],
    shots: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    exact = np.clip(np.asarray(exact, dtype=float), 0.0, 1.0)
    if shots is None:
        return exact
    rng = rng or np.random.default_rng()
    return rng.binomial(shots, exact) / shots


def _unpack(x: np.ndarray) -> np.ndarray:
    t = np.diag(x[:4].astype(complex))
    t[_LOWER] = x[4::2] + 1j * x[5::2]
    return t


def _pack(t: np.ndarray) -> np.ndarray:
    x = np.empty(16)
    x[:4] = np.diag(t).real
    x[4::2] = t[_LOWER].real
    x[5::2] = t[_LOWER].imag
    return x


def linear_inversion(expectations: Sequence[float]) -> np.ndarray:
    """Least-squares rho from the 16 expectations, projected onto the physical cone."""
    design = np.array([m.T.ravel() for m in MEASUREMENTS])
    vector, *_ = np.linalg.lstsq(design, np.asarray(expectations, dtype=complex), rcond=None)
    rho = vector.reshape(4, 4)
    rho = 0.5 * (rho + rho.conj().T)
    values, vectors = np.linalg.eigh(rho)
    values = np.clip(values, 0.0, None)
    if values.sum() <= 0:
        return np.eye(4, dtype=complex) / 4
    rho = (vectors * values) @ vectors.conj().T
    return rho / np.trace(rho).real


def tomography_mle(expectations: Sequence[float], shots: Optional[int] = None) -> DensityMatrix:
    """
    Maximum-likelihood density matrix from the 16 pre-rotated ground-state expectations.

    rho = T T^+ / Tr(T T^+) with T lower triangular (16 real parameters) and a BFGS
    search started at the projected linear-inversion estimate. Without ``shots`` the
    cost is the squared residual; with shots each residual is weighted by its binomial
    variance, making the cost a Gaussian negative log-likelihood.

    Raises:
        FitError: If the optimizer hits its iteration cap
    """
    m = np.asarray(expectations, dtype=float)
    if m.shape != (16,):
        raise ValueError(f"expected 16 expectation values, got shape {m.shape}")
    if shots is None:
        weights = np.ones(16)
    else:
        weights = shots / np.clip(m * (1 - m), 1.0 / shots, None)

    def cost(x: np.ndarray):
        t = _unpack(x)
        s_mat = t @ t.conj().T
        scale = np.trace(s_mat).real
        rho = s_mat / scale
        residual = np.array([np.trace(op @ rho).real for op in MEASUREMENTS]) - m
        value = float(np.sum(weights * residual**2))
        a = sum(2 * w * r * op for w, r, op in zip(weights, residual, MEASUREMENTS))
        b = a / scale - np.trace(a @ rho).real / scale * np.eye(4)
        w_mat = (t.conj().T @ b).T
        grad = np.empty(16)
        grad[:4] = 2 * np.diag(w_mat).real
        grad[4::2] = 2 * w_mat[_LOWER].real
        grad[5::2] = -2 * w_mat[_LOWER].imag
        return value, grad

    start = linear_inversion(m) + 1e-6 * np.eye(4)
    x0 = _pack(np.linalg.cholesky(start / np.trace(start).real))
    result = minimize(cost, x0, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": 10000})
    if result.status == 1:
        raise FitError(f"tomography optimizer stopped at the iteration cap: {result.message}")
    if not result.success:
        logger.warning("tomography optimizer: %s (cost %.3e)", result.message, result.fun)
    t = _unpack(result.x)
    rho = t @ t.conj().T
    rho = rho / np.trace(rho).real
    return DensityMatrix(matrix=0.5 * (rho + rho.conj().T), log_likelihood=-0.5 * float(result.fun))


class TomographyPoint(BaseModel):
    """Reconstruction at one idle duration."""

    delay: float = Field(..., description="Idle duration in µs")
    fidelity: float = Field(..., description="|Tr(rho rho_ideal)| after local phase correction")
    entangling_phase: float = Field(..., description="phi_ee - phi_ge - phi_eg in rad")
    rho: DensityMatrix = Field(..., description="Reconstructed density matrix")


def measured_expectations(
    spec: DeviceSpec,
    tone: Optional[DriveTone],
    delay: float,
    edge: float = 0.3,
    pair: Optional[Tuple[str, str]] = None,
    coupler: Optional[str] = None,
) -> np.ndarray:
    """
    Ground-state probability of the pair after each of the 16 pre-rotations.

    The tone ramps up while both qubits sit in |g>, Y/2 pulses open the idle window and
    the pre-rotations close it before the tone ramps down. Phases picked up on the ramps
    are then diagonal in the measured basis and drop out of the probabilities.
    """
    if pair is None or coupler is None:
        summary = dispersive_summary(spec)
        pair, coupler = summary.qubits, summary.coupler
    driven = tone is not None and tone.amplitude > 0 and delay > 0
    edge = edge if driven else 0.0
    tones = [ToneSegment(tone=tone, envelope=Envelope.flat_top(delay + 2 * edge, edge))] if driven else []
    opened, closed = edge, edge + delay
    preparation = [QubitPulse(target=q, angle=math.pi / 2, phase=math.pi / 2, start=opened) for q in pair]
    initial = dressed_state(spec, {computational_label(spec, pair, coupler, "gg"): 1.0})
    probabilities = []
    for names in itertools.product(PRE_ROTATION_PULSES, repeat=2):
        analysis = [
            QubitPulse(target=q, angle=PRE_ROTATION_PULSES[name][0], phase=PRE_ROTATION_PULSES[name][1], start=closed)
            for q, name in zip(pair, names)
            if name != "I"
        ]
        schedule = PulseSchedule(tones=tones, pulses=preparation + analysis, duration=closed + edge)
        final = evolve(spec, schedule, initial).final_state
        probabilities.append(pair_populations(spec, pair, final)["gg"])
    return np.array(probabilities)


def idle_tomography_suite(
    spec: DeviceSpec,
    tone: Optional[DriveTone],
    delay_axis: Sequence[float],
    edge: float = 0.3,
    shots: Optional[int] = None,
    seed: int = 0,
) -> List[TomographyPoint]:
    """
    Idle |++> under the optional coupler tone, reconstruct by MLE and analyse phases.

    Expectations come from :func:`measured_expectations`. The ideal reference is |++>
    after removing the single-qubit phases phi_ge and phi_eg, so the fidelity reflects
    only the conditional phase and leakage.
    """
    summary = dispersive_summary(spec)
    pair, coupler = summary.qubits, summary.coupler
    rng = np.random.default_rng(seed)
    ideal = DensityMatrix.pure(PLUS_PLUS)
    points = []
    for delay in delay_axis:
        exact = measured_expectations(spec, tone, float(delay), edge, pair, coupler)
        rho = tomography_mle(sample_expectations(exact, shots, rng), shots)
        points.append(
            TomographyPoint(
                delay=float(delay),
                fidelity=trace_fidelity(local_phase_corrected(rho), ideal),
                entangling_phase=entangling_phase(rho),
                rho=rho,
            )
        )
        logger.info("tomography at %.2f µs: F=%.4f dphi=%.4f rad", delay, points[-1].fidelity, points[-1].entangling_phase)
    return points
