import csv
import io

import numpy as np
import pytest

from chainquant import (
    DIRICHLET,
    NEUMANN,
    ChainSystem,
    IterationConfig,
    Potential,
    QuantizationError,
    estimate_contraction,
    fixed_point_residual,
    initial_system,
    linearized_radius,
    run_scheme,
    seeded_system,
    wronskian_residual,
)
from chainquant import oracle
from chainquant.quantizer import jacobian_radius, sigma


def test_scheme_orders():
    cfg = IterationConfig()
    assert cfg.order(3) == [0, 1]
    assert cfg.order(6) == [0, 2, 3, 1]
    assert cfg.order(5) == [0, 1, 2, 3, 4]
    assert IterationConfig(scheme=[0, 4, -1]).order(6) == [0, 4, 5]
    with pytest.raises(ValueError):
        IterationConfig(scheme="C").order(3)
    with pytest.raises(ValueError):
        IterationConfig(scheme="B").order(6)
    with pytest.raises(ValueError):
        IterationConfig(scheme="Z").order(3)


def test_contraction_fit_on_synthetic_history():
    est = estimate_contraction(0.5 ** np.arange(12) * 3.0)
    assert est.ratio == pytest.approx(0.5, rel=1e-12) and est.good
    rng = np.random.default_rng(0)
    noisy = 0.5 ** np.arange(12) * np.exp(rng.normal(0, 1.0, 12))
    assert not estimate_contraction(noisy).good
    assert np.isnan(estimate_contraction([1.0]).ratio)


def test_jacobian_radius_of_linear_map():
    A = np.array([[0.2, 0.5, 0.0], [0.0, -0.6, 0.1], [0.0, 0.0, 0.3]])
    r, ev = jacobian_radius(lambda x: A @ x, np.array([1.0, -2.0, 0.5]), 1e-4)
    assert r == pytest.approx(0.6, abs=1e-10)
    assert sorted(np.abs(ev)) == pytest.approx([0.2, 0.3, 0.6], abs=1e-10)


@pytest.fixture(scope="module")
def q4():
    p = Potential.homogeneous(4)
    cfg = IterationConfig(k_max=16)
    s, rep = run_scheme(initial_system(p, NEUMANN, 16), cfg)
    return p, cfg, s, rep


def test_small_cutoff_run(q4):
    p, cfg, s, rep = q4
    assert rep.converged and rep.ratio_quality
    assert rep.residual == fixed_point_residual(s) < 1e-9
    ref = oracle.diagonalize(p, NEUMANN, 3).values
    assert np.max(np.abs(s.levels(0)[:3] - ref)) < 1e-6
    assert np.all(s.levels(0).imag == 0)
    assert np.array_equal(s.levels(2), np.conj(s.levels(1)))


def test_convergence_log_csv(q4):
    rep = q4[3]
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["cycle", "sup_displacement", "ratio_estimate"]
    assert len(rows) == rep.cycles + 1
    assert rows[1][2] == "" and float(rows[3][2]) > 0


def test_linearized_radius_matches_fit(q4):
    _, cfg, s, rep = q4
    r = linearized_radius(s, cfg)
    assert abs(r - rep.ratio) < 0.1


def test_snapshot_round_trip(q4):
    s = q4[2]
    back = ChainSystem.from_json(s.to_json())
    for ell in range(s.L):
        assert np.array_equal(back.levels(ell), s.levels(ell))
        assert back.chain(ell).tail.entries == s.chain(ell).tail.entries
    assert back.to_json() == s.to_json()


def test_seeding_from_converged_system(q4):
    p, cfg, s, _ = q4
    again, rep = run_scheme(seeded_system(p, NEUMANN, s), cfg)
    assert rep.converged and rep.cycles <= 2
    moved = seeded_system(Potential(4, (0, 0.3, 0)), NEUMANN, s)
    _, rep2 = run_scheme(moved, cfg)
    _, rep3 = run_scheme(initial_system(Potential(4, (0, 0.3, 0)), NEUMANN, 16), cfg)
    assert rep2.converged and rep2.cycles < rep3.cycles


def test_phase_respects_conjugation(q4):
    s = q4[2]
    rng = np.random.default_rng(5)
    E = rng.uniform(0.5, 20, 6) * np.exp(1j * rng.uniform(-1, 1, 6))
    for ell in range(s.L):
        assert np.max(np.abs(sigma(s, ell, E) - np.conj(sigma(s, -ell, np.conj(E))))) < 1e-12


def test_symmetry_emerges_without_enforcement():
    p = Potential(4, (0, 1.0, 0))
    cfg = IterationConfig(scheme=[0, 1, 2], enforce_symmetry=False, k_max=24, newton_tol=1e-12, max_cycles=150)
    s, rep = run_scheme(initial_system(p, NEUMANN, 24), cfg)
    assert rep.converged
    for ell in range(3):
        a, b = s.levels(ell), s.levels(-ell)
        # bounded by the roundoff floor of the phase, about 1e-13 of |E|
        assert np.max(np.abs(a - np.conj(b)) / np.abs(a)) < 1e-11


def test_newton_failure_carries_cycle():
    cfg = IterationConfig(k_max=8, newton_maxiter=1)
    with pytest.raises(QuantizationError) as info:
        run_scheme(initial_system(Potential(4, (0, 1.0, 0)), NEUMANN, 8), cfg)
    assert info.value.cycle == 1 and info.value.ell is not None


def test_wronskian_needs_one_potential(q4):
    s = q4[2]
    other = initial_system(Potential(4, (0, 1.0, 0)), DIRICHLET, 16)
    with pytest.raises(ValueError):
        wronskian_residual(s, other, 1.0)


def test_harmonic_system_rejected():
    with pytest.raises(ValueError):
        initial_system(Potential.homogeneous(2), NEUMANN, 8)
