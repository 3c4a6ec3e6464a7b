"""Fixed-point iteration of the exact quantization conditions over all chains.

Chain ell of a sector satisfies, level by level,

    Sigma^[ell](E_k) = pi (k + 1/2 +- (N-2)/(2(N+2))) + (-1)^ell phi beta_-1,
    Sigma^[ell](E)   = -i [log D(-e^{-i phi} E; chain ell+1) - log D(-e^{+i phi} E; chain ell-1)],

so each chain is re-solved by Newton's method against frozen neighbours,
and the schemes decide the order in which chains are refreshed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .determinant import DEFAULT_K_EVAL, Chain, DeterminantZero, log_det_array, wronskian_from_chains
from .potential import Potential, PotentialError, beta_minus_one, rotate
from .semiclassics import (
    SemiclassicalTail,
    bs_coeffs,
    normalize_sector,
    sector_indices,
    sector_parity,
    semiclassical_chain,
)

log = logging.getLogger(__name__)

SCHEMES = ("A", "B", "C")


class QuantizationError(RuntimeError):
    """Newton failure while re-solving a chain."""

    def __init__(self, message: str, ell=None, k=None, trace=None, cycle=None):
        super().__init__(message)
        self.ell = ell
        self.k = k
        self.trace = trace or []
        self.cycle = cycle


@dataclass
class IterationConfig:
    scheme: str | list = "auto"
    updating: str = "immediate"
    newton_tol: float = 1e-10
    max_cycles: int = 60
    k_max: int = 48
    K_eval: int = DEFAULT_K_EVAL
    newton_maxiter: int = 40
    enforce_symmetry: bool = True
    tail: str = "corrected"

    def order(self, L: int) -> list[int]:
        scheme = self.resolved_scheme(L)
        if isinstance(scheme, (list, tuple)):
            return [int(x) % L for x in scheme]
        if scheme in ("A", "B"):
            if L != 3:
                raise ValueError(f"scheme {scheme} needs L=3 (got L={L})")
            return [0, 1]
        if scheme == "C":
            if L != 6:
                raise ValueError(f"scheme C needs L=6 (got L={L})")
            return [0, 2, 3, 1]
        raise ValueError(f"unknown scheme {scheme!r}")

    def resolved_scheme(self, L: int):
        if self.scheme == "auto":
            return {3: "A", 6: "C"}.get(L, list(range(L)))
        return self.scheme

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ChainSystem:
    """All L chains of one sector for one potential."""

    potential: Potential
    sector: str
    chains: list[Chain]
    k_max: int
    beta: complex = 0j
    cycle: int = 0

    def __post_init__(self):
        self.sector = normalize_sector(self.sector)
        self.beta = beta_minus_one(self.potential)

    @property
    def L(self) -> int:
        return self.potential.group_order

    @property
    def phi(self) -> float:
        return self.potential.symmetry_angle

    @property
    def indices(self) -> np.ndarray:
        return sector_indices(self.sector, self.k_max)

    @property
    def sign(self) -> int:
        return 1 if sector_parity(self.sector) == 0 else -1

    def mirror(self, ell: int) -> int | None:
        """Index of the complex-conjugate partner chain (real potentials only)."""
        if not self.potential.is_real:
            return None
        return (-ell) % self.L

    def rhs(self, ell: int) -> np.ndarray:
        N = self.potential.degree
        ks = self.indices
        base = np.pi * (ks + 0.5 + self.sign * (N - 2) / (2 * (N + 2)))
        return base + (-1) ** ell * self.phi * self.beta

    def chain(self, ell: int) -> Chain:
        return self.chains[ell % self.L]

    def levels(self, ell: int = 0) -> np.ndarray:
        return self.chain(ell).levels

    def copy(self) -> "ChainSystem":
        return ChainSystem(self.potential, self.sector, list(self.chains), self.k_max, cycle=self.cycle)

    def set_chain(self, ell: int, levels, enforce_symmetry: bool = True) -> None:
        ell %= self.L
        self.chains[ell] = self.chains[ell].with_levels(levels)
        m = self.mirror(ell)
        if enforce_symmetry and m is not None and m != ell:
            self.chains[m] = self.chains[m].with_levels(np.conj(levels))

    def state(self) -> np.ndarray:
        return np.concatenate([c.levels for c in self.chains])

    # snapshots

    def to_dict(self) -> dict:
        return {
            "potential": self.potential.to_dict(),
            "sector": self.sector,
            "k_max": self.k_max,
            "K_eval": self.chains[0].K_eval,
            "chains": [
                {
                    "ell": c.ell,
                    "levels": [[e.real, e.imag] for e in c.levels],
                    "tail": c.tail.to_dict(),
                }
                for c in self.chains
            ],
            "cycle": self.cycle,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "ChainSystem":
        p = Potential.from_dict(data["potential"])
        k_max = int(data["k_max"])
        K_eval = int(data.get("K_eval", DEFAULT_K_EVAL))
        chains = []
        for c in data["chains"]:
            levels = np.array([complex(re, im) for re, im in c["levels"]])
            tail = SemiclassicalTail.from_dict(c["tail"], potential=rotate(p, c["ell"]))
            chains.append(Chain(int(c["ell"]), data["sector"], levels, tail, k_max, K_eval))
        return cls(p, data["sector"], chains, k_max, cycle=int(data.get("cycle", 0)))

    @classmethod
    def from_json(cls, text: str) -> "ChainSystem":
        return cls.from_dict(json.loads(text))


def initial_system(p: Potential, sector: str, k_max: int = 48, K_eval: int = DEFAULT_K_EVAL,
                   tail_mode: str = "corrected") -> ChainSystem:
    """Every chain seeded with its own semiclassical levels."""
    p.require_quantizable()
    L = p.group_order
    chains = []
    for ell in range(L):
        tail = bs_coeffs(rotate(p, ell), tail_mode, sector)
        levels = semiclassical_chain(p, sector, k_max, tail=tail, strict=False)
        chains.append(Chain(ell, sector, levels, tail, k_max, K_eval))
    system = ChainSystem(p, sector, chains, k_max)
    if p.is_real:
        for ell in range(L):
            m = (-ell) % L
            if m == ell:
                system.chains[ell] = system.chains[ell].with_levels(system.chains[ell].levels.real)
            elif m > ell:
                system.chains[m] = system.chains[m].with_levels(system.chains[ell].levels.conj())
    return system


def seeded_system(p: Potential, sector: str, seeds: ChainSystem, k_max: int | None = None,
                  K_eval: int | None = None, tail_mode: str = "corrected") -> ChainSystem:
    """A system for ``p`` whose explicit levels start from another system's where they overlap.

    When the potentials differ, each seed level is moved by the change of
    its semiclassical value, which carries the bulk shift of the chain.
    """
    system = initial_system(p, sector, k_max or seeds.k_max, K_eval or seeds.chains[0].K_eval, tail_mode)
    if seeds.L == system.L and normalize_sector(sector) == seeds.sector:
        for ell in range(system.L):
            lev = system.levels(ell).copy()
            n = min(len(lev), len(seeds.levels(ell)))
            moved = seeds.levels(ell)[:n]
            if seeds.potential != p:
                ks = system.indices[:n].astype(float)
                old = seeds.chain(ell).tail.solve(ks, strict=False)
                moved = moved + (lev[:n] - old)
            lev[:n] = moved
            system.chains[ell] = system.chains[ell].with_levels(lev)
    return system


# -- quantization phase ----------------------------------------------------


def _sigma(system: ChainSystem, ell: int, E: np.ndarray, replace=None) -> np.ndarray:
    up = system.chain(ell + 1)
    down = system.chain(ell - 1)
    phi = system.phi
    rep_up = rep_down = None
    if replace is not None:
        which, cols, vals = replace
        if which == (ell + 1) % system.L:
            rep_up = (cols, vals)
        if which == (ell - 1) % system.L:
            rep_down = (cols, vals)
    a = log_det_array(up, -np.exp(-1j * phi) * E, replace=rep_up)
    b = log_det_array(down, -np.exp(1j * phi) * E, replace=rep_down)
    return -1j * (a - b)


def sigma(system: ChainSystem, ell: int, E) -> np.ndarray | complex:
    """Quantization phase Sigma^[ell](E) on the principal per-factor branch."""
    scalar = np.ndim(E) == 0
    out = _sigma(system, ell, np.atleast_1d(np.asarray(E, dtype=complex)))
    return complex(out[0]) if scalar else out


def wronskian_residual(neumann: ChainSystem, dirichlet: ChainSystem, lam, ell: int = 0):
    """Bilinear-identity residual between chains ell and ell+1 of the two sectors."""
    if neumann.potential != dirichlet.potential:
        raise ValueError("both systems must belong to the same potential")
    scalar = np.ndim(lam) == 0
    out = wronskian_from_chains(
        neumann.chain(ell), dirichlet.chain(ell), neumann.chain(ell + 1), dirichlet.chain(ell + 1),
        lam, neumann.phi, (-1) ** ell * neumann.beta,
    )
    return complex(out[0]) if scalar else out


def fixed_point_residual(system: ChainSystem) -> float:
    """max |Sigma(E_k) - rhs| over all explicit levels of all chains."""
    worst = 0.0
    for ell in range(system.L):
        r = _sigma(system, ell, system.levels(ell)) - system.rhs(ell)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


# -- single chain update ---------------------------------------------------


def _mirror_replacement(system: ChainSystem, ell: int):
    """For a chain adjacent to its own mirror: (mirror index, columns)."""
    m = system.mirror(ell)
    if m is None or m == ell:
        return None
    if m not in ((ell + 1) % system.L, (ell - 1) % system.L):
        return None
    return m, np.arange(len(system.indices))


def solve_chain(
    system: ChainSystem,
    ell: int,
    config: IterationConfig | None = None,
    real: bool = False,
    mirror_constraint: bool = False,
) -> np.ndarray:
    """Re-solve chain ``ell`` against its current neighbours; returns new levels.

    ``real`` keeps levels on the real axis.  ``mirror_constraint`` takes the
    conjugate partner of each level to be the conjugate of the unknown itself
    rather than the neighbour's stored value, which makes the equation
    non-holomorphic and calls for a 2x2 real Newton step.
    """
    config = config or IterationConfig()
    ell %= system.L
    E = np.array(system.levels(ell), dtype=complex)
    if real:
        E = E.real.astype(complex)
    target = system.rhs(ell)
    ks = system.indices
    mirror = _mirror_replacement(system, ell) if mirror_constraint else None

    def F(x):
        rep = None
        if mirror is not None:
            rep = (mirror[0], mirror[1], np.conj(x))
        val = _sigma(system, ell, x, rep) - target
        return val.real.astype(complex) if real else val

    trace = []
    try:
        f = F(E)
        for it in range(config.newton_maxiter):
            h = 1e-6 * np.maximum(np.abs(E), 1.0)
            if mirror is None:
                d = (F(E + h) - F(E - h)) / (2 * h)
                step = f / d
            else:
                dx = (F(E + h) - F(E - h)) / (2 * h)
                dy = (F(E + 1j * h) - F(E - 1j * h)) / (2 * h)
                a, b, c, dd = dx.real, dy.real, dx.imag, dy.imag
                det = a * dd - b * c
                sx = (dd * f.real - b * f.imag) / det
                sy = (-c * f.real + a * f.imag) / det
                step = sx + 1j * sy
            if real:
                step = step.real.astype(complex)
            trace.append(float(np.max(np.abs(f))))
            if not np.all(np.isfinite(step)):
                raise QuantizationError("non-finite Newton step", ell=ell, trace=trace)
            trial = E - step
            ft = F(trial)
            for _ in range(6):
                bad = np.abs(ft) > np.abs(f)
                if not np.any(bad):
                    break
                step = np.where(bad, step / 2, step)
                trial = E - step
                ft = F(trial)
            best = min(trace)
            E, f = trial, ft
            rel = float(np.max(np.abs(step) / np.maximum(np.abs(E), 1e-300)))
            # done, or below tolerance and stuck at the roundoff floor
            if rel < config.newton_tol * 1e-2 or (rel < config.newton_tol and np.max(np.abs(f)) > 0.5 * best):
                break
        else:
            bad = int(np.argmax(np.abs(f)))
            raise QuantizationError(
                f"Newton did not converge on chain {ell}, k={ks[bad]}",
                ell=ell, k=int(ks[bad]), trace=trace,
            )
    except DeterminantZero as exc:
        raise QuantizationError(f"chain {ell} collided with a neighbour zero: {exc}", ell=ell, trace=trace) from exc
    if np.max(np.abs(f)) > 1e3 * config.newton_tol * max(1.0, float(np.max(np.abs(target)))):
        bad = int(np.argmax(np.abs(f)))
        raise QuantizationError(
            f"Newton stalled on chain {ell}, k={ks[bad]} (residual {abs(f[bad]):.2e})",
            ell=ell, k=int(ks[bad]), trace=trace,
        )
    E = _reseed_collisions(system, ell, E)
    return E


def _reseed_collisions(system: ChainSystem, ell: int, E: np.ndarray) -> np.ndarray:
    scale = abs(E[0]) if len(E) else 1.0
    gaps = np.abs(np.diff(E))
    hit = np.nonzero(gaps < 1e-8 * scale)[0]
    if len(hit):
        seeds = semiclassical_chain(system.potential, system.sector, system.k_max,
                                    tail=system.chain(ell).tail, strict=False)
        for i in hit:
            log.warning("chain %d: levels %d and %d merged; reseeding", ell, i, i + 1)
            E[i + 1] = seeds[i + 1]
    return E


# -- schemes ---------------------------------------------------------------


@dataclass
class ConvergenceReport:
    displacements: list = field(default_factory=list)
    ratio: float = float("nan")
    ratio_quality: bool = False
    radius: float | None = None
    status: str = "running"
    cycles: int = 0
    residual: float = float("nan")
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "sup_displacement", "ratio_estimate"])
        for i, d in enumerate(self.displacements, start=1):
            r = self.displacements[i - 1] / self.displacements[i - 2] if i > 1 and self.displacements[i - 2] else ""
            w.writerow([i, repr(float(d)), repr(float(r)) if r != "" else ""])
        return buf.getvalue()


@dataclass(frozen=True)
class ContractionEstimate:
    ratio: float
    good: bool
    spread: float

    def __float__(self):
        return self.ratio


def estimate_contraction(history, skip: int = 0) -> ContractionEstimate:
    """Geometric decay factor from a least-squares fit of log displacement vs cycle."""
    d = np.asarray(history, dtype=float)[skip:]
    d = d[d > 0]
    if len(d) < 2:
        return ContractionEstimate(float("nan"), False, float("inf"))
    n = np.arange(len(d))
    slope, icpt = np.polyfit(n, np.log(d), 1)
    resid = np.log(d) - (slope * n + icpt)
    spread = float(np.max(np.abs(resid)))
    monotone = bool(np.all(np.diff(d) < 0))
    return ContractionEstimate(float(np.exp(slope)), monotone and len(d) >= 4 and spread < 0.5, spread)


def _geometric_window(d: list, floor: float) -> list:
    """Displacements of the geometric phase: after the first cycles, above the noise floor."""
    usable = [x for x in d if x > floor]
    if len(usable) < 6:
        return usable[1:]
    return usable[max(2, len(usable) // 3):]


def _update_plan(system: ChainSystem, config: IterationConfig):
    scheme = config.resolved_scheme(system.L)
    order = config.order(system.L)
    plan = []
    for ell in order:
        self_conj = system.mirror(ell) == ell
        real = self_conj and scheme != "A" and config.enforce_symmetry
        mirror = scheme == "B" and not self_conj
        plan.append((ell, real, mirror))
    return plan


def one_cycle(system: ChainSystem, config: IterationConfig) -> ChainSystem:
    """Apply one full cycle of the configured scheme, returning a new system."""
    new = system.copy()
    plan = _update_plan(system, config)
    if config.updating == "synchronous":
        updates = [(ell, solve_chain(system, ell, config, real, mirror)) for ell, real, mirror in plan]
        for ell, levels in updates:
            new.set_chain(ell, levels, config.enforce_symmetry)
    else:
        for ell, real, mirror in plan:
            levels = solve_chain(new, ell, config, real, mirror)
            new.set_chain(ell, levels, config.enforce_symmetry)
    new.cycle = system.cycle + 1
    return new


def run_scheme(system: ChainSystem, config: IterationConfig | None = None, callback=None):
    """Iterate cycles until the sup displacement drops below newton_tol * |E_0|.

    Returns the final system and a :class:`ConvergenceReport`.  Newton
    failures propagate as :class:`QuantizationError` carrying the cycle.
    """
    config = config or IterationConfig()
    report = ConvergenceReport()
    current = system
    scale = max(abs(system.levels(0)[0]), 1.0)
    for cycle in range(config.max_cycles):
        try:
            nxt = one_cycle(current, config)
        except QuantizationError as exc:
            exc.cycle = cycle + 1
            raise
        disp = float(np.max(np.abs(nxt.state() - current.state())))
        report.displacements.append(disp)
        current = nxt
        if callback is not None:
            callback(current, disp)
        if not np.isfinite(disp) or (len(report.displacements) > 3 and disp > 1e3 * max(report.displacements[:3])):
            report.status = "diverging"
            break
        if disp < config.newton_tol * scale:
            report.status = "converged"
            break
    else:
        report.status = "max_cycles"
    report.cycles = len(report.displacements)
    window = _geometric_window(report.displacements, 100 * config.newton_tol * scale)
    if len(window) >= 2:
        est = estimate_contraction(window)
        report.ratio, report.ratio_quality = est.ratio, est.good
    report.residual = fixed_point_residual(current) if report.status != "diverging" else float("nan")
    log.info("run_scheme: %s after %d cycles, ratio %.3g", report.status, report.cycles, report.ratio)
    return current, report


# -- linear stability ------------------------------------------------------


def jacobian_radius(update, x0: np.ndarray, h: float) -> tuple[float, np.ndarray]:
    """Spectral radius of the Jacobian of ``update`` at ``x0`` (central differences)."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(update(x0 + e)) - np.asarray(update(x0 - e))) / (2 * h)
    ev = np.linalg.eigvals(J)
    return float(np.max(np.abs(ev))), ev


def _free_coordinates(system: ChainSystem, config: IterationConfig):
    """(ell, real-only) for each chain the scheme updates."""
    return [(ell, real) for ell, real, _ in _update_plan(system, config)]


def linearized_radius(system: ChainSystem, config: IterationConfig | None = None, h: float | None = None) -> float:
    """Spectral radius of the one-cycle map linearized at a converged system."""
    config = config or IterationConfig()
    tight = IterationConfig(**{**config.to_dict(), "newton_tol": 1e-12})
    coords = _free_coordinates(system, config)
    n_lev = len(system.indices)

    def pack(s: ChainSystem) -> np.ndarray:
        parts = []
        for ell, real in coords:
            lev = s.levels(ell)
            parts.append(lev.real)
            if not real:
                parts.append(lev.imag)
        return np.concatenate(parts)

    def unpack(x: np.ndarray) -> ChainSystem:
        s = system.copy()
        i = 0
        for ell, real in coords:
            re = x[i:i + n_lev]
            i += n_lev
            if real:
                lev = re.astype(complex)
            else:
                lev = re + 1j * x[i:i + n_lev]
                i += n_lev
            s.set_chain(ell, lev, config.enforce_symmetry)
        return s

    def update(x):
        return pack(one_cycle(unpack(x), tight))

    if h is None:
        h = 1e-6 * max(abs(system.levels(0)[0]), 1.0)
    radius, ev = jacobian_radius(update, pack(system), h)
    if not np.isfinite(radius):
        raise QuantizationError("ill-conditioned Jacobian of the cycle map")
    return radius
