import numpy as np
import pytest

from src.common.errors import DeviceError, ResonantDenominatorError
from src.device import DeviceSpec, DriveTone, ModeSpec, build_drive_rotating_hamiltonian, build_static_hamiltonian
from src.qops import basis_index
from src.spectrum import (
    computational_label,
    diagonalize_labeled,
    dispersive_summary,
    dressed_basis,
    perturbative_chi_zz,
    perturbative_inputs,
    resolve_pair,
)


def test_dispersive_shifts_match_device_table(summary):
    assert summary.chi1 == pytest.approx(-6.79, rel=0.02)
    assert summary.chi2 == pytest.approx(-4.80, rel=0.02)


def test_static_zz(summary):
    assert summary.chi_zz_static == pytest.approx(-103.0, abs=5.0)


def test_coupler_frequency_ordering(summary):
    freqs = summary.coupler_freqs
    assert freqs["ee"] < freqs["eg"] < freqs["ge"] < freqs["gg"]
    assert (freqs["eg"] - freqs["gg"]) * 1e3 == pytest.approx(summary.chi1)


def test_labels_are_well_defined(summary):
    assert summary.min_overlap > 0.9
    assert summary.qubits == ("Q1", "Q2")
    assert summary.coupler == "C"


def test_perturbative_estimate(two_qubit):
    assert perturbative_inputs(two_qubit).g_eff == pytest.approx(-11.6, abs=0.2)
    assert perturbative_chi_zz(two_qubit) == pytest.approx(-101.3, abs=0.5)


@pytest.mark.parametrize("scale", [0.9, 1.1])
def test_perturbative_tracks_diagonalization(two_qubit, scale):
    spec = two_qubit.with_coupling("Q2", "C", 228.0 * scale)
    exact = dispersive_summary(spec).chi_zz_static
    assert perturbative_chi_zz(spec) == pytest.approx(exact, rel=0.15)


def test_resonant_denominator(two_qubit):
    # omega_1 - omega_2 = -eta_1 puts |eg> on resonance with |0,2>
    spec = two_qubit.with_mode("Q2", frequency=5.627 - 0.184)
    with pytest.raises(ResonantDenominatorError):
        perturbative_chi_zz(spec)


def test_static_zz_converges_with_coupler_levels(two_qubit):
    five = dispersive_summary(two_qubit.with_levels(C=5)).chi_zz_static
    seven = dispersive_summary(two_qubit.with_levels(C=7)).chi_zz_static
    assert abs(five - seven) < 1.0


def test_resolve_pair_without_coupler():
    spec = DeviceSpec(
        modes=[ModeSpec(name="A", role="qubit", frequency=5.0), ModeSpec(name="B", role="qubit", frequency=4.0)]
    )
    with pytest.raises(DeviceError):
        resolve_pair(spec)
    assert resolve_pair(spec, coupler="B") == (("A", "B"), "B")


def test_computational_label(two_qubit):
    assert computational_label(two_qubit, ("Q1", "Q2"), "C", "eg") == (1, 0, 0)
    assert computational_label(two_qubit, ("Q1", "Q2"), "C", "ge", photons=1) == (0, 1, 1)


def test_uncoupled_labels_are_exact():
    spec = DeviceSpec(
        modes=[
            ModeSpec(name="Q1", role="qubit", frequency=5.0, anharmonicity=-200.0),
            ModeSpec(name="Q2", role="qubit", frequency=4.3, anharmonicity=-200.0),
        ]
    )
    spectrum = diagonalize_labeled(build_static_hamiltonian(spec), spec.layout())
    assert len(spectrum.labels) == spec.layout().total_dim
    assert min(spectrum.overlap_quality.values()) == pytest.approx(1.0)
    assert spectrum.energy((1, 1)) == pytest.approx(spectrum.energy((1, 0)) + spectrum.energy((0, 1)))


def test_dressed_basis_diagonalizes(two_qubit):
    h = build_static_hamiltonian(two_qubit)
    basis = dressed_basis(h, two_qubit.layout())
    v = basis.vectors
    assert np.allclose(v.conj().T @ v, np.eye(v.shape[0]), atol=1e-10)
    assert np.allclose(h.matrix @ v, v * basis.energies[None, :], atol=1e-6)
    for state in ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (0, 0, 1)):
        b = basis_index(two_qubit.layout(), state)
        assert abs(v[b, b]) ** 2 > 0.9


def test_dressed_basis_rejects_non_conserving(two_qubit):
    driven = build_drive_rotating_hamiltonian(two_qubit, DriveTone(target="C", frequency=6.3, amplitude=1.0))
    with pytest.raises(DeviceError):
        dressed_basis(driven, two_qubit.layout())


def test_sum_frequency_exchange_deepens_static_zz(two_qubit, summary):
    bare = dispersive_summary(two_qubit.model_copy(update={"sum_frequency_exchange": False}))
    assert abs(summary.chi_zz_static) > abs(bare.chi_zz_static) + 10.0
    assert bare.chi2 == pytest.approx(summary.chi2, rel=0.05)
