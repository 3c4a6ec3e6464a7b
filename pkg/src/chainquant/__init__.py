"""Exact quantization of one-dimensional polynomial potentials through chains of
rotated spectra and their zeta-regularized spectral determinants."""

from .determinant import (
    Chain,
    DeterminantValue,
    DeterminantZero,
    fredholm_crosscheck,
    harmonic_chain,
    harmonic_wronskian,
    log_det,
    log_det_array,
    make_chain,
    zeta_value,
)
from .potential import (
    Potential,
    PotentialError,
    beta_minus_one,
    laurent_head,
    residue_R,
    rotate,
    shift,
)
from .quantizer import (
    ChainSystem,
    ConvergenceReport,
    IterationConfig,
    QuantizationError,
    estimate_contraction,
    fixed_point_residual,
    initial_system,
    linearized_radius,
    run_scheme,
    seeded_system,
    solve_chain,
    wronskian_residual,
)
from .semiclassics import DIRICHLET, NEUMANN, bs_coeffs, heat_coeffs, semiclassical_chain
from .wavefunction import WaveSample, wave_at, wave_profile

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ChainSystem",
    "ConvergenceReport",
    "DIRICHLET",
    "DeterminantValue",
    "DeterminantZero",
    "IterationConfig",
    "NEUMANN",
    "Potential",
    "PotentialError",
    "QuantizationError",
    "WaveSample",
    "beta_minus_one",
    "bs_coeffs",
    "estimate_contraction",
    "fixed_point_residual",
    "fredholm_crosscheck",
    "harmonic_chain",
    "harmonic_wronskian",
    "heat_coeffs",
    "initial_system",
    "laurent_head",
    "linearized_radius",
    "log_det",
    "log_det_array",
    "make_chain",
    "residue_R",
    "rotate",
    "run_scheme",
    "seeded_system",
    "semiclassical_chain",
    "shift",
    "solve_chain",
    "wave_at",
    "wave_profile",
    "wronskian_residual",
    "zeta_value",
]
