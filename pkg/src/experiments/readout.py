"""Projective readout of the two computational qubits from a dressed state."""
from typing import Dict, Tuple

import numpy as np

from src.device import DeviceSpec
from src.qops import basis_index
from src.spectrum import computational_label

STATES = ("gg", "ge", "eg", "ee")


def pair_populations(spec: DeviceSpec, pair: Tuple[str, str], state: np.ndarray) -> Dict[str, float]:
    """Joint g/e populations of the pair, summed over every other mode; leaked weight is dropped."""
    occupations = np.array(list(spec.layout().occupations()))
    first, second = (occupations[:, spec.mode_index(name)] for name in pair)
    weights = np.abs(state) ** 2
    return {
        s: float(weights[(first == int(s[0] == "e")) & (second == int(s[1] == "e"))].sum())
        for s in STATES
    }


def excited_population(spec: DeviceSpec, qubit: str, state: np.ndarray) -> float:
    occupations = np.array(list(spec.layout().occupations()))
    return float((np.abs(state) ** 2)[occupations[:, spec.mode_index(qubit)] == 1].sum())


def pair_amplitudes(spec: DeviceSpec, pair: Tuple[str, str], coupler: str, state: np.ndarray) -> np.ndarray:
    """Amplitudes on |gg0>, |ge0>, |eg0>, |ee0> with every other mode in its ground state."""
    layout = spec.layout()
    indices = [basis_index(layout, computational_label(spec, pair, coupler, s)) for s in STATES]
    return state[indices]
