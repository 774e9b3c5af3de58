"""Simultaneous single-qubit Clifford RB with interleaved two-qubit idling gates."""
import csv
import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import curve_fit

from src.common.errors import FitError
from src.device import DeviceSpec

logger = logging.getLogger(__name__)

DEFAULT_M_AXIS = (1, 2, 3, 4, 6, 8, 11, 15, 20, 27, 36, 48, 64, 85, 100)
DEFAULT_RANDOMIZATIONS = 80

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Time-ordered physical gates followed by virtual Z gates.
CLIFFORD_DECOMPOSITIONS: Tuple[Tuple[str, ...], ...] = (
    ("I",), ("X",), ("Y",), ("Z", "I"),
    ("Y/2", "-Z/2"), ("-Y/2", "Z/2"), ("Y/2", "Z/2"), ("-Y/2", "-Z/2"),
    ("X/2", "-Z/2"), ("-X/2", "Z/2"), ("X/2", "Z/2"), ("-X/2", "-Z/2"),
    ("X/2",), ("-X/2",), ("Y/2",), ("-Y/2",), ("Z/2", "I"), ("-Z/2", "I"),
    ("Y/2", "-Z"), ("-Y/2", "Z"), ("X/2", "Z"), ("-X/2", "-Z"), ("-X", "Z/2"), ("-Z/2", "-Y"),
)


def gate_unitary(name: str) -> np.ndarray:
    """R_axis(theta) = exp(-i theta sigma_axis / 2) for names like 'X', '-Y/2', 'Z/2' or 'I'."""
    if name == "I":
        return np.eye(2, dtype=complex)
    sign = -1.0 if name.startswith("-") else 1.0
    body = name.lstrip("-")
    axis, _, half = body.partition("/")
    theta = sign * (math.pi / 2 if half == "2" else math.pi)
    return math.cos(theta / 2) * np.eye(2) - 1j * math.sin(theta / 2) * _PAULI[axis]


class CliffordGate(BaseModel):
    """One of the 24 single-qubit Cliffords with its physical and virtual gate content."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: int = Field(..., ge=0, le=23, description="Table index")
    gates: Tuple[str, ...] = Field(..., description="Gates in time order")
    unitary: np.ndarray = Field(..., description="2x2 unitary, later gates multiplied on the left")


def same_up_to_phase(u: np.ndarray, v: np.ndarray, atol: float = 1e-9) -> bool:
    return abs(abs(np.trace(u.conj().T @ v)) - u.shape[0]) < atol


@lru_cache(maxsize=1)
def clifford_table() -> List[CliffordGate]:
    table = []
    for index, gates in enumerate(CLIFFORD_DECOMPOSITIONS):
        unitary = np.eye(2, dtype=complex)
        for name in gates:
            unitary = gate_unitary(name) @ unitary
        table.append(CliffordGate(id=index, gates=gates, unitary=unitary))
    return table


@lru_cache(maxsize=1)
def _inverse_lookup() -> Tuple[np.ndarray, np.ndarray]:
    """Multiplication table (j after i) and inverse index of the Clifford table."""
    table = clifford_table()
    product = np.empty((24, 24), dtype=int)
    for i, first in enumerate(table):
        for j, second in enumerate(table):
            composite = second.unitary @ first.unitary
            product[i, j] = next(k for k, g in enumerate(table) if same_up_to_phase(g.unitary, composite))
    inverse = np.array([int(np.flatnonzero(product[i] == 0)[0]) for i in range(24)])
    return product, inverse


def _phase_damping_pair(t1: Optional[float], t_phi: Optional[float], duration: float) -> List[np.ndarray]:
    gamma = 0.0 if t1 is None else 1 - math.exp(-duration / t1)
    lam = 0.0 if t_phi is None else 1 - math.exp(-2 * duration / t_phi)
    damping = [np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
               np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)]
    dephasing = [np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=complex),
                 np.array([[0, 0], [0, math.sqrt(lam)]], dtype=complex)]
    return [a @ p for a in damping for p in dephasing]


class NoiseChannel(BaseModel):
    """Idle-gate channel on the two-qubit computational subspace."""

    t1: Tuple[Optional[float], Optional[float]] = Field((None, None), description="T1 per qubit in µs; None is infinite")
    t_phi: Tuple[Optional[float], Optional[float]] = Field((None, None), description="Pure dephasing time per qubit in µs")
    chi_zz: float = Field(0.0, description="Coherent ZZ rate in kHz")
    duration: float = Field(0.0, ge=0, description="Idle segment duration in µs")

    @classmethod
    def from_coherence(
        cls,
        spec: DeviceSpec,
        chi_zz: float,
        duration: float = 0.0,
        dephasing: Literal["t2_star", "t2_echo", "none"] = "t2_star",
        qubits: Optional[Tuple[str, str]] = None,
    ) -> "NoiseChannel":
        """
        Build the channel from the device coherence block (range midpoints).

        T_phi follows 1/T2 = 1/(2 T1) + 1/T_phi with T2 taken from ``dephasing``; a
        non-positive pure-dephasing rate is treated as no dephasing.
        """
        names = qubits or tuple(q.name for q in spec.qubits[:2])
        t1s, tphis = [], []
        for name in names:
            coherence = spec.coherence.get(name)
            t1 = coherence.midpoint(coherence.t1) if coherence else None
            t2 = None
            if coherence and dephasing != "none":
                t2 = coherence.midpoint(getattr(coherence, dephasing))
            t_phi = None
            if t2 is not None:
                rate = 1 / t2 - (0.5 / t1 if t1 else 0.0)
                if rate > 0:
                    t_phi = 1 / rate
                else:
                    logger.warning("%s: T2 %.2f µs exceeds 2 T1; no pure dephasing", name, t2)
            t1s.append(t1)
            tphis.append(t_phi)
        return cls(t1=tuple(t1s), t_phi=tuple(tphis), chi_zz=chi_zz, duration=duration)

    def with_duration(self, duration: float) -> "NoiseChannel":
        return self.model_copy(update={"duration": duration})

    def kraus(self) -> List[np.ndarray]:
        """Kraus operators of U_zz composed with local damping and dephasing, over gg, ge, eg, ee."""
        zz_phase = np.exp(-1j * 2 * math.pi * self.chi_zz * 1e-3 * self.duration)
        u_zz = np.diag([1, 1, 1, zz_phase]).astype(complex)
        first = _phase_damping_pair(self.t1[0], self.t_phi[0], self.duration)
        second = _phase_damping_pair(self.t1[1], self.t_phi[1], self.duration)
        return [u_zz @ np.kron(a, b) for a in first for b in second]

    def superoperator(self) -> np.ndarray:
        """Sum of K (x) K* acting on row-major vec(rho)."""
        return sum(np.kron(k, k.conj()) for k in self.kraus())

    def trace_preservation_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.kraus())
        return float(np.max(np.abs(total - np.eye(4))))


def coherence_limit_slope(noise: NoiseChannel, include_dephasing: bool = False) -> float:
    """(1/3) sum 1/T1, plus (1/3) sum 1/T_phi when dephasing is included; per µs."""
    rate = sum(1 / t for t in noise.t1 if t)
    if include_dephasing:
        rate += sum(1 / t for t in noise.t_phi if t)
    return rate / 3


class RBResult(BaseModel):
    """Sequence-fidelity decay and its fit."""

    m_axis: List[int] = Field(..., description="Clifford cycle counts")
    fidelity_mean: List[float] = Field(..., description="Mean sequence fidelity per m")
    fidelity_std: List[float] = Field(..., description="Standard deviation over randomizations")
    a: float = Field(..., description="Fit amplitude A")
    p: float = Field(..., ge=0, le=1, description="Fit decay p")
    b: float = Field(..., description="Fit offset B")
    p_ci: float = Field(..., description="95% half-width of p")
    idle: float = Field(0.0, description="Interleaved idle duration in µs; 0 for the reference")
    epsilon: Optional[float] = Field(None, description="Idle-gate error for interleaved runs")
    epsilon_ci: Optional[float] = Field(None, description="95% half-width of epsilon")

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["m", "F_mean", "F_std"])
            for m, mean, std in zip(self.m_axis, self.fidelity_mean, self.fidelity_std):
                writer.writerow([m, f"{mean:.12f}", f"{std:.12f}"])
        return path

    def fit_record(self) -> Dict[str, Optional[float]]:
        return {"A": self.a, "p": self.p, "B": self.b, "p_ci": self.p_ci,
                "epsilon": self.epsilon, "epsilon_ci": self.epsilon_ci, "idle_us": self.idle}

    def write_fit(self, path: Path) -> Path:
        Path(path).write_text(json.dumps(self.fit_record(), indent=2))
        return path


def _decay(m, a, p, b):
    return a * np.power(p, m) + b


def fit_decay(m_axis: Sequence[int], fidelity: Sequence[float]) -> Tuple[float, float, float, float]:
    """
    Fit F = A p^m + B with all parameters in [0, 1].

    Returns:
        (A, p, B, 95% half-width of p)

    Raises:
        FitError: If the fit does not converge
    """
    m = np.asarray(m_axis, dtype=float)
    f = np.asarray(fidelity, dtype=float)
    if np.ptp(f) < 1e-12:
        return float(f.mean()) - 0.25, 1.0, 0.25, 0.0
    try:
        params, covariance = curve_fit(
            _decay, m, f, p0=[0.7, 0.98, 0.25], bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), maxfev=20000
        )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"RB decay fit failed: {exc}") from exc
    a, p, b = (float(v) for v in params)
    spread = float(np.sqrt(covariance[1, 1])) if np.isfinite(covariance[1, 1]) else float("inf")
    return a, p, b, 1.96 * spread


def interleaved_error(p_ref: float, p_int: float, ci_ref: float = 0.0, ci_int: float = 0.0) -> Tuple[float, float]:
    """
    epsilon = (3/4)(1 - p_int/p_ref) and its propagated half-width.

    Raises:
        FitError: If the reference decay has no surviving contrast (p_ref = 0)
    """
    if p_ref <= 0:
        raise FitError("reference RB decay fully decayed; the interleaved error is undefined")
    epsilon = 0.75 * (1 - p_int / p_ref)
    spread = 0.75 * math.hypot(ci_int / p_ref, p_int * ci_ref / p_ref**2)
    return epsilon, spread


def _apply_unitary(rho: np.ndarray, unitary: np.ndarray) -> np.ndarray:
    return unitary @ rho @ unitary.conj().T


def _survival(rho: np.ndarray, survival: str) -> float:
    populations = np.real(np.diag(rho))
    if survival == "joint":
        return float(populations[0])
    first_g = populations[0] + populations[1]
    second_g = populations[0] + populations[2]
    return float(0.5 * (first_g + second_g))


def _sequence(
    seed: np.random.SeedSequence,
    m_axis: Sequence[int],
    superoperator: Optional[np.ndarray],
    survival: str,
    shots: Optional[int],
) -> List[float]:
    """Survival at every m of one random sequence, recovering after each prefix."""
    rng = np.random.default_rng(seed)
    table = clifford_table()
    product, inverse = _inverse_lookup()
    m_max = max(m_axis)
    choices = rng.integers(0, 24, size=(m_max, 2))
    wanted = set(m_axis)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1.0
    composite = [0, 0]
    fidelity = {}
    for step in range(1, m_max + 1):
        first, second = choices[step - 1]
        rho = _apply_unitary(rho, np.kron(table[first].unitary, table[second].unitary))
        composite = [product[composite[0], first], product[composite[1], second]]
        if superoperator is not None:
            rho = (superoperator @ rho.ravel()).reshape(4, 4)
        if step in wanted:
            recovery = np.kron(table[inverse[composite[0]]].unitary, table[inverse[composite[1]]].unitary)
            value = _survival(_apply_unitary(rho, recovery), survival)
            if shots:
                value = rng.binomial(shots, min(max(value, 0.0), 1.0)) / shots
            fidelity[step] = value
    return [fidelity[m] for m in m_axis]


def _benchmark(noise, idle, m_axis, seeds, survival, shots, threads) -> Tuple[np.ndarray, Tuple]:
    superoperator = noise.with_duration(idle).superoperator() if idle > 0 else None
    runs = Parallel(n_jobs=threads)(
        delayed(_sequence)(seed, m_axis, superoperator, survival, shots) for seed in seeds
    )
    data = np.clip(np.array(runs), 0.0, 1.0)
    return data, fit_decay(m_axis, data.mean(axis=0))


def run_rb(
    noise: NoiseChannel,
    idle: float,
    m_axis: Sequence[int] = DEFAULT_M_AXIS,
    n_random: int = DEFAULT_RANDOMIZATIONS,
    seed: int = 0,
    survival: Literal["joint", "average"] = "joint",
    shots: Optional[int] = None,
    threads: int = 1,
) -> Tuple[RBResult, RBResult, float]:
    """
    Reference and interleaved RB with the same random Clifford sequences.

    Clifford gates are ideal and instantaneous; the interleaved run applies ``noise``
    for ``idle`` µs after every cycle. Sequence fidelity is the |gg> population after
    recovery, or the averaged single-qubit ground populations with ``survival="average"``.

    Returns:
        (reference, interleaved, epsilon)
    """
    m_axis = sorted(int(m) for m in m_axis)
    seeds = np.random.SeedSequence(seed).spawn(n_random)
    logger.info("RB: %d randomizations, m up to %d, idle %.3f µs", n_random, m_axis[-1], idle)
    ref_data, (a_r, p_r, b_r, ci_r) = _benchmark(noise, 0.0, m_axis, seeds, survival, shots, threads)
    int_data, (a_i, p_i, b_i, ci_i) = _benchmark(noise, idle, m_axis, seeds, survival, shots, threads)
    epsilon, epsilon_ci = interleaved_error(p_r, p_i, ci_r, ci_i)
    reference = RBResult(
        m_axis=m_axis, fidelity_mean=ref_data.mean(axis=0).tolist(), fidelity_std=ref_data.std(axis=0).tolist(),
        a=a_r, p=p_r, b=b_r, p_ci=ci_r,
    )
    interleaved = RBResult(
        m_axis=m_axis, fidelity_mean=int_data.mean(axis=0).tolist(), fidelity_std=int_data.std(axis=0).tolist(),
        a=a_i, p=p_i, b=b_i, p_ci=ci_i, idle=idle, epsilon=epsilon, epsilon_ci=epsilon_ci,
    )
    return reference, interleaved, epsilon


class IdleErrorSweep(BaseModel):
    """Idle-gate error versus idle duration with a slope fitted through the origin."""

    taus: List[float] = Field(..., description="Idle durations in µs")
    errors: List[float] = Field(..., description="epsilon per duration")
    slope: float = Field(..., description="d(epsilon)/d(tau) per µs")
    chi_zz: float = Field(..., description="Coherent ZZ used, kHz")

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.taus, self.errors))

    def to_csv(self, path: Path) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["tau_us", "epsilon"])
            for tau, eps in self.points:
                writer.writerow([f"{tau:.6f}", f"{eps:.12f}"])
        return path


def error_vs_idle_duration(
    noise: NoiseChannel,
    tau_axis: Sequence[float],
    cancellation: bool,
    residual_chi_zz: float = 0.0,
    m_axis: Sequence[int] = DEFAULT_M_AXIS,
    n_random: int = DEFAULT_RANDOMIZATIONS,
    seed: int = 0,
    threads: int = 1,
) -> IdleErrorSweep:
    """epsilon(tau) with the static ZZ of ``noise`` (off) or ``residual_chi_zz`` (on)."""
    chi = residual_chi_zz if cancellation else noise.chi_zz
    channel = noise.model_copy(update={"chi_zz": chi})
    errors = [run_rb(channel, float(tau), m_axis, n_random, seed, threads=threads)[2] for tau in tau_axis]
    taus = np.asarray(tau_axis, dtype=float)
    denominator = float(taus @ taus)
    slope = float(taus @ np.asarray(errors)) / denominator if denominator else 0.0
    logger.info("idle error slope %.5f /µs (1/%.1f µs) at chi_zz=%.2f kHz", slope, 1 / slope if slope else math.inf, chi)
    return IdleErrorSweep(taus=taus.tolist(), errors=errors, slope=slope, chi_zz=chi)
