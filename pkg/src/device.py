"""Device description and Hamiltonian builders.

Frequencies are stored as ordinary frequencies in the unit named by each field and
converted to angular rad/µs only inside the builders.
"""
import itertools
import logging
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationInfo, field_serializer, field_validator, model_validator

from src.common.errors import DeviceError
from src.common.utils import format_frequency, ghz_to_rad, mhz_to_rad, parse_frequency
from src.qops import Op, SpaceLayout, annihilation, number, total_number

logger = logging.getLogger(__name__)


def _coerce_frequency(value, info: ValidationInfo, unit: str):
    if isinstance(value, str):
        return parse_frequency(value, unit)
    if info.context and info.context.get("strict_units"):
        raise ValueError(f"unitless frequency {value!r}; write it with a unit, e.g. '{value} {unit}'")
    return value


class ModeSpec(BaseModel):
    """One bosonic mode: a transmon qubit or a coupler."""

    name: str = Field(..., description="Unique mode name, e.g. Q1 or C")
    role: Literal["qubit", "coupler"] = Field(..., description="Role tag of the mode")
    frequency: float = Field(..., gt=0, description="Bare frequency omega/2pi in GHz")
    anharmonicity: float = Field(0.0, description="Anharmonicity eta/2pi in MHz")
    levels: int = Field(3, ge=2, description="Truncation dimension")

    @field_validator("frequency", mode="before")
    @classmethod
    def _frequency_unit(cls, value, info: ValidationInfo):
        return _coerce_frequency(value, info, "GHz")

    @field_validator("anharmonicity", mode="before")
    @classmethod
    def _anharmonicity_unit(cls, value, info: ValidationInfo):
        return _coerce_frequency(value, info, "MHz")

    @field_serializer("frequency", when_used="json")
    def _dump_frequency(self, value: float) -> str:
        return format_frequency(value, "GHz")

    @field_serializer("anharmonicity", when_used="json")
    def _dump_anharmonicity(self, value: float) -> str:
        return format_frequency(value, "MHz")


class CouplingSpec(BaseModel):
    """Exchange coupling g_ij between two modes."""

    mode_a: str = Field(..., description="First endpoint")
    mode_b: str = Field(..., description="Second endpoint")
    strength: float = Field(..., description="Coupling g/2pi in MHz")

    @field_validator("strength", mode="before")
    @classmethod
    def _strength_unit(cls, value, info: ValidationInfo):
        return _coerce_frequency(value, info, "MHz")

    @field_serializer("strength", when_used="json")
    def _dump_strength(self, value: float) -> str:
        return format_frequency(value, "MHz")

    @model_validator(mode="after")
    def _distinct_endpoints(self):
        if self.mode_a == self.mode_b:
            raise ValueError(f"coupling endpoints must differ, got {self.mode_a!r} twice")
        return self

    @property
    def pair(self) -> frozenset:
        return frozenset((self.mode_a, self.mode_b))


class Coherence(BaseModel):
    """Coherence times in µs; a two-element list is a quoted range and its midpoint is used."""

    t1: Optional[List[float]] = Field(None, description="Energy relaxation time T1")
    t2_star: Optional[List[float]] = Field(None, description="Ramsey dephasing time T2*")
    t2_echo: Optional[List[float]] = Field(None, description="Echo dephasing time T2E")

    @field_validator("t1", "t2_star", "t2_echo", mode="before")
    @classmethod
    def _as_range(cls, value):
        if value is None or isinstance(value, list):
            return value
        return [value]

    @staticmethod
    def midpoint(values: Optional[List[float]]) -> Optional[float]:
        return None if not values else float(np.mean(values))


class DeviceSpec(BaseModel):
    """Full system of modes and pairwise exchange couplings."""

    name: str = Field("device", description="Label used in outputs")
    modes: List[ModeSpec] = Field(..., description="Declared modes")
    couplings: List[CouplingSpec] = Field(default_factory=list, description="Exchange couplings")
    coherence: Dict[str, Coherence] = Field(default_factory=dict, description="Coherence per mode name")
    sum_frequency_exchange: bool = Field(
        True, description="Fold counter-rotating qubit-coupler terms into the qubit-qubit exchange"
    )

    @model_validator(mode="after")
    def _check_topology(self):
        names = [mode.name for mode in self.modes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate mode names in {names}")
        if sum(mode.role == "qubit" for mode in self.modes) < 2:
            raise ValueError("a device needs at least two qubit-tagged modes")
        seen = set()
        for coupling in self.couplings:
            for endpoint in (coupling.mode_a, coupling.mode_b):
                if endpoint not in names:
                    raise ValueError(f"coupling endpoint {endpoint!r} is not a declared mode")
            if coupling.pair in seen:
                raise ValueError(f"coupling {coupling.mode_a}-{coupling.mode_b} declared twice")
            seen.add(coupling.pair)
        for name in self.coherence:
            if name not in names:
                raise ValueError(f"coherence entry {name!r} is not a declared mode")
        return self

    @property
    def qubits(self) -> List[ModeSpec]:
        return [mode for mode in self.modes if mode.role == "qubit"]

    @property
    def couplers(self) -> List[ModeSpec]:
        return [mode for mode in self.modes if mode.role == "coupler"]

    @property
    def ordered_modes(self) -> List[ModeSpec]:
        """Layout order: qubits in declaration order, then couplers."""
        return self.qubits + self.couplers

    def layout(self) -> SpaceLayout:
        return SpaceLayout(dims=[mode.levels for mode in self.ordered_modes])

    def mode_index(self, name: str) -> int:
        for index, mode in enumerate(self.ordered_modes):
            if mode.name == name:
                return index
        raise DeviceError(f"unknown mode {name!r}")

    def mode(self, name: str) -> ModeSpec:
        return self.ordered_modes[self.mode_index(name)]

    def coupling(self, name_a: str, name_b: str) -> float:
        """Coupling strength in MHz, zero when the pair is not coupled."""
        wanted = frozenset((name_a, name_b))
        return next((c.strength for c in self.couplings if c.pair == wanted), 0.0)

    def label(self, **occupations: int) -> Tuple[int, ...]:
        """Occupation tuple in layout order; unspecified modes are in their ground state."""
        for name in occupations:
            self.mode_index(name)
        return tuple(occupations.get(mode.name, 0) for mode in self.ordered_modes)

    def with_mode(self, name: str, **changes) -> "DeviceSpec":
        """Copy with one mode's fields replaced."""
        self.mode_index(name)
        modes = [mode.model_copy(update=changes) if mode.name == name else mode for mode in self.modes]
        return self.model_copy(update={"modes": modes})

    def with_levels(self, **levels: int) -> "DeviceSpec":
        spec = self
        for name, value in levels.items():
            spec = spec.with_mode(name, levels=value)
        return spec

    def with_coupling(self, name_a: str, name_b: str, strength: float) -> "DeviceSpec":
        wanted = frozenset((name_a, name_b))
        couplings = [c for c in self.couplings if c.pair != wanted]
        couplings.append(CouplingSpec(mode_a=name_a, mode_b=name_b, strength=strength))
        return self.model_copy(update={"couplings": couplings})


class DriveTone(BaseModel):
    """Continuous microwave tone on one mode; analyses treat it as flat."""

    target: str = Field(..., description="Driven mode name")
    frequency: float = Field(..., gt=0, description="Drive frequency omega_d/2pi in GHz")
    amplitude: float = Field(0.0, ge=0, description="Drive amplitude Omega_d/2pi in MHz")

    @field_validator("frequency", mode="before")
    @classmethod
    def _frequency_unit(cls, value, info: ValidationInfo):
        return _coerce_frequency(value, info, "GHz")

    @field_validator("amplitude", mode="before")
    @classmethod
    def _amplitude_unit(cls, value, info: ValidationInfo):
        return _coerce_frequency(value, info, "MHz")

    @field_serializer("frequency", when_used="json")
    def _dump_frequency(self, value: float) -> str:
        return format_frequency(value, "GHz")

    @field_serializer("amplitude", when_used="json")
    def _dump_amplitude(self, value: float) -> str:
        return format_frequency(value, "MHz")

    def at(self, amplitude: float) -> "DriveTone":
        return self.model_copy(update={"amplitude": abs(amplitude)})


def exchange_strength(spec: DeviceSpec, name_a: str, name_b: str) -> float:
    """
    Exchange (MHz) between two modes as it enters the static Hamiltonian.

    For a qubit pair with ``sum_frequency_exchange`` set, every shared coupler c adds
    -g_ac g_bc (1/(w_a + w_c) + 1/(w_b + w_c)) / 2, the second-order trace of the
    counter-rotating a^+ c^+ + a c terms. The Hamiltonian keeps conserving the total
    excitation number.
    """
    strength = spec.coupling(name_a, name_b)
    mode_a, mode_b = spec.mode(name_a), spec.mode(name_b)
    if not spec.sum_frequency_exchange or mode_a.role != "qubit" or mode_b.role != "qubit":
        return strength
    w_a, w_b = mode_a.frequency * 1e3, mode_b.frequency * 1e3
    for coupler in spec.couplers:
        g_ac, g_bc = spec.coupling(name_a, coupler.name), spec.coupling(name_b, coupler.name)
        if g_ac and g_bc:
            w_c = coupler.frequency * 1e3
            strength -= g_ac * g_bc * (1 / (w_a + w_c) + 1 / (w_b + w_c)) / 2
    return strength


def build_static_hamiltonian(spec: DeviceSpec) -> Op:
    """
    Static Hamiltonian of coupled Duffing oscillators in rad/µs.

    H0 = sum_i w_i n_i + (eta_i/2) a_i^+ a_i^+ a_i a_i + sum_ij g_ij (a_i^+ a_j + a_i a_j^+)

    Qubit-qubit g_ij come from :func:`exchange_strength`.
    """
    layout = spec.layout()
    matrix = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    lowering = {}
    for index, mode in enumerate(spec.ordered_modes):
        a = annihilation(layout, index).matrix
        n = number(layout, index).matrix
        lowering[mode.name] = a
        matrix += ghz_to_rad(mode.frequency) * n
        matrix += 0.5 * mhz_to_rad(mode.anharmonicity) * (n @ n - n)
    qubits = [mode.name for mode in spec.qubits]
    pairs = {coupling.pair for coupling in spec.couplings if not coupling.pair <= set(qubits)}
    pairs.update(frozenset(pair) for pair in itertools.combinations(qubits, 2))
    for pair in sorted(pairs, key=sorted):
        name_a, name_b = sorted(pair)
        strength = exchange_strength(spec, name_a, name_b)
        if strength:
            exchange = lowering[name_a].conj().T @ lowering[name_b]
            matrix += mhz_to_rad(strength) * (exchange + exchange.conj().T)
    return Op.of(matrix, hermitian=True)


def drive_operator(spec: DeviceSpec, target: str) -> np.ndarray:
    """a + a^+ on the target mode, the static drive quadrature of the rotating frame."""
    a = annihilation(spec.layout(), spec.mode_index(target)).matrix
    return a + a.conj().T


def build_drive_rotating_hamiltonian(spec: DeviceSpec, tone: DriveTone) -> Op:
    """
    Hamiltonian in a frame rotating at the drive frequency for every mode.

    Counter-rotating drive terms are dropped, leaving
    H0 - w_d N + (Omega/2)(a_t + a_t^+).
    """
    spec.mode_index(tone.target)
    layout = spec.layout()
    matrix = build_static_hamiltonian(spec).matrix - ghz_to_rad(tone.frequency) * total_number(layout).matrix
    if tone.amplitude:
        matrix = matrix + 0.5 * mhz_to_rad(tone.amplitude) * drive_operator(spec, tone.target)
    return Op.of(matrix, hermitian=True)
