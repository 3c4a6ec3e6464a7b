import numpy as np
import pytest

from chainquant import IterationConfig, Potential, PotentialError, rotate, wave_at, wave_profile
from chainquant import oracle
from chainquant.wavefunction import _config_for, profile_csv

Q4 = Potential.homogeneous(4)
E0 = 1.0603620904841828


def test_empty_grid():
    assert wave_profile(Q4, E0, []) == []
    assert profile_csv([]) == "a,re_psi,im_psi,ratio,converged\n"


def test_scheme_selection():
    assert _config_for(6, IterationConfig()).scheme == "C"
    assert _config_for(3, IterationConfig()).scheme == "B"
    with pytest.raises(ValueError):
        _config_for(6, IterationConfig(scheme="B"))


def test_complex_potential_rejected():
    with pytest.raises(PotentialError):
        wave_at(rotate(Potential(4, (0, 1.0, 0)), 1), 1.0, 0.0)


def test_value_and_derivative_against_integration():
    # the Neumann sector of a shifted quartic contracts slowly (about 0.8 per cycle)
    cfg = IterationConfig(k_max=24, max_cycles=150)
    sample, systems = wave_at(Q4, E0, 0.5, cfg, derivative=True)
    assert sample.converged and set(systems) == {"dirichlet", "neumann"}
    psi, dpsi = oracle.recessive_solution(Q4, -E0, 0.5)
    assert sample.psi.real == pytest.approx(psi.real, rel=1e-6)
    assert sample.psi_prime.real == pytest.approx(dpsi.real, rel=1e-6)
    assert abs(sample.psi.imag) < 1e-10


def test_failures_are_flagged_not_raised():
    samples = wave_profile(Q4, E0, [2.2], IterationConfig(max_cycles=5))
    assert len(samples) == 1 and not samples[0].converged
    assert samples[0].message and np.isnan(samples[0].psi.real)
    assert profile_csv(samples).splitlines()[1].endswith(",0")
