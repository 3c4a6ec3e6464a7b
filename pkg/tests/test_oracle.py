import numpy as np
import pytest

from chainquant import DIRICHLET, NEUMANN, Potential, PotentialError, rotate
from chainquant import oracle
from chainquant.oracle import _cheb_spectrum, _energy_scale


def test_quartic_reference_values():
    p = Potential.homogeneous(4)
    assert oracle.diagonalize(p, NEUMANN, 3).values[0] == pytest.approx(1.0603620904841828, abs=1e-9)
    assert oracle.diagonalize(p, DIRICHLET, 3).values[0] == pytest.approx(3.7996730298013941, abs=1e-9)


@pytest.mark.parametrize("sector", [NEUMANN, DIRICHLET])
def test_two_bases_agree_on_even_potential(sector):
    p = Potential(4, (0, -2.0, 0))
    ho = oracle.diagonalize(p, sector, 6)
    assert ho.resolution["basis"] == "oscillator"
    E, qt = _energy_scale(p, 6)
    cheb = _cheb_spectrum(p, 0 if sector == NEUMANN else 1, 160, 2.2 * qt, 6)
    assert np.allclose(ho.values, cheb, atol=1e-9)


def test_shooting_agrees_with_diagonalization():
    p = Potential(3, (0.5, -0.3))
    ref = oracle.diagonalize(p, DIRICHLET, 3).values
    shot = oracle.shoot_levels(p, DIRICHLET, ref + 0.05).values
    assert np.allclose(shot, ref, atol=1e-9)


def test_shooting_complex_potential_conjugates():
    p = Potential(4, (0, 1.0, 0))
    a = oracle.shoot_complex(rotate(p, 1), NEUMANN, 0.9 + 0.35j)
    b = oracle.shoot_complex(rotate(p, -1), NEUMANN, 0.9 - 0.35j)
    assert abs(a - np.conj(b)) < 1e-9 and abs(a.imag) > 0.1


def test_recessive_solution_at_eigenvalue():
    p = Potential.homogeneous(4)
    E0 = oracle.diagonalize(p, NEUMANN, 1).values[0]
    psi, dpsi = oracle.recessive_solution(p, -E0)
    assert abs(dpsi) < 1e-7 * abs(psi)


def test_wave_integration_shape():
    p = Potential.homogeneous(4)
    E0 = oracle.diagonalize(p, NEUMANN, 1).values[0]
    vals = oracle.integrate_wave(p, E0, [1.0, 0.0, 0.5]).values
    assert vals[1] > vals[2] > vals[0] > 0
    assert oracle.integrate_wave(p, E0, []).values.size == 0
    with pytest.raises(PotentialError):
        oracle.integrate_wave(rotate(Potential(4, (0, 1.0, 0)), 1), 1.0, [0.0])


def test_fit_scale():
    ref = np.array([1.0, 2.0, 3.0])
    assert oracle.fit_scale(ref, ref / 3.0) == pytest.approx(3.0)
