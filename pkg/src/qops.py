"""Hilbert-space bookkeeping and dense operators for truncated bosonic modes.

Product states are ordered row-major with mode 0 as the slowest-varying index: for
dims (2, 2, 5) the occupation (n0, n1, n2) sits at row n0*10 + n1*5 + n2.
"""
from typing import Annotated, Iterator, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.common.errors import LayoutError

ModeDim = Annotated[int, Field(ge=2, description="Truncation dimension of one mode")]


class SpaceLayout(BaseModel):
    """Ordered truncation dimensions of every mode (qubits first, then couplers)."""

    model_config = ConfigDict(frozen=True)

    dims: Tuple[ModeDim, ...] = Field(..., description="Levels per mode in layout order")

    @field_validator("dims", mode="before")
    @classmethod
    def _as_tuple(cls, value):
        return tuple(value)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def strides(self) -> Tuple[int, ...]:
        strides = []
        step = 1
        for levels in reversed(self.dims):
            strides.append(step)
            step *= levels
        return tuple(reversed(strides))

    def occupations(self) -> Iterator[Tuple[int, ...]]:
        """All occupation tuples in basis order."""
        for index in range(self.total_dim):
            yield basis_occupations(self, index)

    def check_mode(self, mode_index: int) -> None:
        if not 0 <= mode_index < self.n_modes:
            raise LayoutError(f"mode index {mode_index} out of range for {self.n_modes} modes")


class Op(BaseModel):
    """Dense complex operator over a full :class:`SpaceLayout`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray = Field(..., description="Complex square matrix over the full space")
    dim: int = Field(..., gt=0, description="Dimension of the space")
    hermitian: bool = Field(False, description="Set when the operator was built Hermitian")

    @classmethod
    def of(cls, matrix: np.ndarray, hermitian: bool = False) -> "Op":
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise LayoutError(f"operator must be square, got shape {matrix.shape}")
        return cls(matrix=matrix, dim=matrix.shape[0], hermitian=hermitian)

    def dag(self) -> "Op":
        return Op.of(self.matrix.conj().T, hermitian=self.hermitian)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) if self.dim else 0.0

    def __add__(self, other: "Op") -> "Op":
        return Op.of(self.matrix + other.matrix, hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other: "Op") -> "Op":
        return Op.of(self.matrix - other.matrix, hermitian=self.hermitian and other.hermitian)

    def __matmul__(self, other: "Op") -> "Op":
        return Op.of(self.matrix @ other.matrix)

    def __mul__(self, scalar: float) -> "Op":
        keeps = self.hermitian and np.isreal(scalar)
        return Op.of(self.matrix * scalar, hermitian=bool(keeps))

    __rmul__ = __mul__


def lowering_matrix(levels: int) -> np.ndarray:
    """Truncated lowering matrix with a|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), k=1).astype(complex)


def embed(layout: SpaceLayout, mode_index: int, local: np.ndarray) -> np.ndarray:
    """Kronecker-embed a single-mode matrix at ``mode_index``."""
    layout.check_mode(mode_index)
    full = np.ones((1, 1), dtype=complex)
    for slot, levels in enumerate(layout.dims):
        factor = local if slot == mode_index else np.eye(levels, dtype=complex)
        full = np.kron(full, factor)
    return full


def annihilation(layout: SpaceLayout, mode_index: int) -> Op:
    layout.check_mode(mode_index)
    return Op.of(embed(layout, mode_index, lowering_matrix(layout.dims[mode_index])))


def creation(layout: SpaceLayout, mode_index: int) -> Op:
    return annihilation(layout, mode_index).dag()


def number(layout: SpaceLayout, mode_index: int) -> Op:
    layout.check_mode(mode_index)
    levels = layout.dims[mode_index]
    return Op.of(embed(layout, mode_index, np.diag(np.arange(levels, dtype=float))), hermitian=True)


def total_number(layout: SpaceLayout) -> Op:
    """Total excitation number over all modes."""
    diagonal = np.array([sum(occ) for occ in layout.occupations()], dtype=float)
    return Op.of(np.diag(diagonal), hermitian=True)


def basis_index(layout: SpaceLayout, occupations: Sequence[int]) -> int:
    """Flat row index of a product state; inverse of :func:`basis_occupations`."""
    if len(occupations) != layout.n_modes:
        raise LayoutError(f"expected {layout.n_modes} occupations, got {len(occupations)}")
    index = 0
    for occupation, levels, stride in zip(occupations, layout.dims, layout.strides):
        if not 0 <= occupation < levels:
            raise LayoutError(f"occupation {occupation} outside 0..{levels - 1}")
        index += int(occupation) * stride
    return index


def basis_occupations(layout: SpaceLayout, index: int) -> Tuple[int, ...]:
    if not 0 <= index < layout.total_dim:
        raise LayoutError(f"basis index {index} outside 0..{layout.total_dim - 1}")
    return tuple(int(n) for n in np.unravel_index(index, layout.dims))


def basis_vector(layout: SpaceLayout, occupations: Sequence[int]) -> np.ndarray:
    vector = np.zeros(layout.total_dim, dtype=complex)
    vector[basis_index(layout, occupations)] = 1.0
    return vector


def excitation_blocks(layout: SpaceLayout) -> List[np.ndarray]:
    """Basis indices grouped by total excitation number, lowest first."""
    totals = np.array([sum(occ) for occ in layout.occupations()])
    return [np.flatnonzero(totals == n) for n in np.unique(totals)]
