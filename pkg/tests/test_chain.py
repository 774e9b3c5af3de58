import numpy as np
import pytest

from cli.config import load_device, parse_device
from src.chain import (
    PAIRS,
    ChainSpec,
    cancellation_amplitude,
    chain_device,
    default_chain,
    operating_point,
    pairwise_chi,
    simultaneous_cancellation,
    truncation_check,
    zz_vs_detuning_and_amp,
)
from src.common.errors import DeviceError, NoSignChangeError
from tests.conftest import DATA_DIR


@pytest.fixture(scope="module")
def chain():
    return default_chain()


def test_chain_device_parameters():
    device = chain_device()
    assert [m.name for m in device.modes] == ["Q1", "Q2", "Q3", "C1", "C2"]
    assert device.layout().total_dim == 432
    assert device.mode("Q2").frequency == pytest.approx(5.6)
    assert device.coupling("Q3", "C2") == pytest.approx(120.0)


def test_bundled_chain_file_matches(chain):
    bundled = load_device(DATA_DIR / "chain.device")
    assert [m.frequency for m in bundled.modes] == pytest.approx([m.frequency for m in chain.device.modes])
    assert len(bundled.couplings) == 6


def test_default_chain_serializes_with_units(chain):
    device = parse_device(chain.device.model_dump_json(), "chain")
    assert device.layout().dims == chain.device.layout().dims
    restored = ChainSpec.model_validate_json(chain.model_dump_json())
    assert restored.tone("C2").frequency == pytest.approx(chain.tone("C2").frequency)


@pytest.mark.parametrize("pair", sorted(PAIRS))
def test_operating_points(chain, pair):
    point = operating_point(chain, pair)
    assert point.coupler == PAIRS[pair][1]
    assert 0 < abs(point.chi_zz_static) < 100.0
    assert chain.tone(point.coupler).frequency == pytest.approx(point.drive_freq)


def test_undriven_pairwise_chi_is_static(chain):
    chi_12, chi_23 = pairwise_chi(chain, [(0.0, 0.0)])
    assert chi_12[0] == pytest.approx(operating_point(chain, "Q1Q2").chi_zz_static, abs=0.5)
    assert chi_23[0] == pytest.approx(operating_point(chain, "Q2Q3").chi_zz_static, abs=0.5)


def test_cancellation_amplitude_interpolates():
    assert cancellation_amplitude([0.0, 1.0, 2.0], [-2.0, -1.0, 1.0]) == pytest.approx(1.5)
    assert cancellation_amplitude([0.0, 1.0], [0.0, 3.0]) == 0.0
    with pytest.raises(NoSignChangeError):
        cancellation_amplitude([0.0, 1.0, 2.0], [-3.0, -2.0, -1.0])


def test_truncation_check_validates_levels(chain):
    with pytest.raises(DeviceError):
        truncation_check(chain, levels=(3, 3, 5))


@pytest.mark.slow
def test_truncation_is_converged(chain):
    assert all(abs(d) < 1.0 for d in truncation_check(chain).values())


@pytest.mark.slow
def test_spectator_drive_barely_moves_pair_zz(chain):
    step = 0.5
    grid = simultaneous_cancellation(chain, [0.0, step], [0.0, step])
    own = abs(grid.chi_12[1, 0] - grid.chi_12[0, 0]) / step
    spectator = abs(grid.chi_12[0, 1] - grid.chi_12[0, 0]) / step
    assert own >= 10 * spectator
    own = abs(grid.chi_23[0, 1] - grid.chi_23[0, 0]) / step
    spectator = abs(grid.chi_23[1, 0] - grid.chi_23[0, 0]) / step
    assert own >= 10 * spectator
    assert np.all(grid.valid)


@pytest.mark.slow
def test_every_nearby_detuning_has_a_cancellation_amplitude(chain):
    default = (chain.device.mode("Q1").frequency - chain.device.mode("Q2").frequency) * 1e3
    detunings = default + np.linspace(-200.0, 200.0, 9)
    grid = zz_vs_detuning_and_amp(chain, detunings, np.linspace(0.0, 3.0, 31))
    assert grid.crossings == [True] * len(detunings)
    assert grid.chi_12.shape == (9, 31)


@pytest.mark.slow
def test_cancelled_pair_zz_ignores_the_other_tone(chain):
    axis = np.linspace(0.0, 1.2, 13)
    grid = simultaneous_cancellation(chain, axis, axis)
    assert np.all(grid.valid)
    amp_1 = cancellation_amplitude(axis, grid.chi_12[:, 0])
    pinned_12 = [np.interp(amp_1, axis, grid.chi_12[:, j]) for j in range(len(axis))]
    assert np.ptp(pinned_12) < 5.0
    amp_2 = cancellation_amplitude(axis, grid.chi_23[0, :])
    pinned_23 = [np.interp(amp_2, axis, grid.chi_23[i, :]) for i in range(len(axis))]
    assert np.ptp(pinned_23) < 5.0
