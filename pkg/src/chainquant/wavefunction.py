"""Absolutely normalized wave functions from determinants of shifted potentials.

With V_a(q) = V(q+a) - V(a) on the half-line [0, inf),

    psi_lam(a)  =  D_a^-(V(a) + lam),      psi'_lam(a) = -D_a^+(V(a) + lam),

where D_a^-/D_a^+ are the Dirichlet/Neumann determinants of V_a, whose
zeros are obtained by iterating the exact quantization conditions.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .determinant import log_det
from .potential import Potential, PotentialError, shift
from .quantizer import (
    ChainSystem,
    IterationConfig,
    QuantizationError,
    initial_system,
    run_scheme,
    seeded_system,
)
from .semiclassics import DIRICHLET, NEUMANN

log = logging.getLogger(__name__)

WAVE_SCHEMES = {3: "B", 6: "C"}


@dataclass
class WaveSample:
    a: float
    lam: complex
    psi: complex = complex("nan")
    psi_prime: complex | None = None
    contraction_ratio: float = float("nan")
    converged: bool = False
    cycles: int = 0
    warm: bool = False
    message: str = ""

    def to_row(self) -> list:
        return [self.a, self.psi.real, self.psi.imag, self.contraction_ratio, int(self.converged)]


def _config_for(L: int, config: IterationConfig) -> IterationConfig:
    if config.scheme != "auto":
        config.order(L)  # raises for an incompatible scheme
        return config
    if L not in WAVE_SCHEMES:
        return config
    return IterationConfig(**{**config.to_dict(), "scheme": WAVE_SCHEMES[L]})


def _solve_sector(Va: Potential, sector: str, config: IterationConfig, seed: ChainSystem | None):
    warm = seed is not None and seed.L == Va.group_order and seed.sector == sector
    if warm:
        system = seeded_system(Va, sector, seed, config.k_max, config.K_eval, config.tail)
    else:
        system = initial_system(Va, sector, config.k_max, config.K_eval, config.tail)
    system, report = run_scheme(system, _config_for(Va.group_order, config))
    return system, report, warm


def wave_at(
    potential: Potential,
    E: float,
    a: float,
    config: IterationConfig | None = None,
    derivative: bool = False,
    seed: dict | None = None,
):
    """psi(a) (and optionally psi'(a)) for energy E; returns (WaveSample, systems).

    ``seed`` maps sector to a converged system of a nearby endpoint and
    is used for warm starts when the chain count agrees.
    """
    config = config or IterationConfig()
    if not potential.is_real:
        raise PotentialError("wave reconstruction needs a real potential")
    a = float(a)
    Va = shift(potential, a)
    arg = complex(potential(a)) - E
    sample = WaveSample(a=a, lam=-complex(E))
    seed = seed or {}
    systems = {}
    sectors = [DIRICHLET, NEUMANN] if derivative else [DIRICHLET]
    ratios = []
    try:
        for sector in sectors:
            system, report, warm = _solve_sector(Va, sector, config, seed.get(sector))
            sample.warm = sample.warm or warm
            systems[sector] = system
            ratios.append(report.ratio)
            sample.cycles += report.cycles
            if not report.converged:
                sample.message = f"{sector}: {report.status}"
                break
        else:
            sample.converged = True
    except QuantizationError as exc:
        sample.message = f"{exc} (cycle {exc.cycle})"
        log.info("wave_at a=%g: %s", a, sample.message)
    sample.contraction_ratio = float(np.nanmax(ratios)) if ratios and not np.all(np.isnan(ratios)) else float("nan")
    if sample.converged:
        sample.psi = log_det(systems[DIRICHLET].chain(0), arg).value
        if derivative:
            sample.psi_prime = -log_det(systems[NEUMANN].chain(0), arg).value
    return sample, systems


def wave_profile(
    potential: Potential,
    E: float,
    a_grid,
    config: IterationConfig | None = None,
    warm: bool = True,
    derivative: bool = False,
) -> list[WaveSample]:
    """wave_at over a grid; failures are flagged per point and never abort the sweep."""
    out = []
    seed = None
    for a in np.asarray(a_grid, dtype=float).ravel():
        try:
            sample, systems = wave_at(potential, E, a, config, derivative, seed if warm else None)
        except (PotentialError, ValueError) as exc:
            sample, systems = WaveSample(a=float(a), lam=-complex(E), message=str(exc)), {}
        out.append(sample)
        if warm and sample.converged:
            seed = systems
    return out


def profile_csv(samples) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "re_psi", "im_psi", "ratio", "converged"])
    for s in samples:
        w.writerow([repr(x) if isinstance(x, float) else x for x in s.to_row()])
    return buf.getvalue()
