"""Command-line driver: spectra, chain plots, wave functions and oracle checks.

Exit codes: 0 success, 1 iteration failure or tolerance breach, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import gamma

from . import oracle
from .determinant import harmonic_chain, harmonic_wronskian, log_det_array
from .potential import Potential, PotentialError, beta_minus_one, rotate
from .quantizer import (
    ChainSystem,
    IterationConfig,
    QuantizationError,
    fixed_point_residual,
    initial_system,
    run_scheme,
    seeded_system,
    sigma,
    wronskian_residual,
)
from .semiclassics import DIRICHLET, NEUMANN, TAIL_MODES, heat_coeffs, normalize_sector
from .wavefunction import wave_profile

log = logging.getLogger("chainquant")

SNAPSHOT_ENV = "CHAINQUANT_SNAPSHOT_DIR"
SUITES = ("idr", "zeta0", "harmonic-det", "wronskian", "spectrum", "conjugation")


class ConfigError(ValueError):
    pass


# -- potential mini-language ----------------------------------------------

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(rf"([+-]?)({_NUM})?(\*?)(q(?:\^|\*\*)?(\d+)?)?")


def parse_potential(text: str) -> Potential:
    """Parse ``q4+2*q2-0.5*q1`` (also ``q^4``, ``q**4``, ``2q2``, bare ``q``) into monic form."""
    src = re.sub(r"\s+", "", text)
    if not src:
        raise ConfigError("empty potential")
    terms: dict[int, float] = {}
    pos = 0
    while pos < len(src):
        m = _TERM.match(src, pos)
        if m is None or m.end() == pos or (pos > 0 and not m.group(1)):
            raise ConfigError(f"cannot parse potential at {src[pos:]!r}")
        sign, num, star, qpart, power = m.groups()
        if qpart is None:
            raise ConfigError(f"constant term {m.group(0)!r}: shift the energy instead")
        if star and num is None:
            raise ConfigError(f"dangling '*' in {m.group(0)!r}")
        coef = float(num) if num is not None else 1.0
        if sign == "-":
            coef = -coef
        n = int(power) if power is not None else 1
        terms[n] = terms.get(n, 0.0) + coef
        pos = m.end()
    try:
        return Potential.from_powers(terms)
    except PotentialError as exc:
        raise ConfigError(str(exc)) from None


def parse_scheme(text: str):
    if text in ("auto", "A", "B", "C"):
        return text
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"scheme must be auto, A, B, C or a comma list of chain indices, got {text!r}") from None


def parse_grid(text: str) -> np.ndarray:
    """``0,0.5,1`` or ``start:stop:step`` (stop included); empty string gives an empty grid."""
    text = text.strip()
    if not text:
        return np.zeros(0)
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(max(n, 0))
    return np.array([float(x) for x in text.split(",")])


# -- configuration ---------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    potential: Potential
    sectors: list[str]
    iteration: IterationConfig = field(default_factory=IterationConfig)
    out: Path = Path(".")
    snapshot_in: Path | None = None
    snapshot_out: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        p = self.potential
        if self.command in ("spectrum", "chains", "wavefunction"):
            if p.degree == 2:
                raise ConfigError("N=2 is unsupported: the harmonic case is singular for exact quantization")
            try:
                p.require_quantizable()
            except PotentialError as exc:
                raise ConfigError(str(exc)) from None
            try:
                self.iteration.order(p.group_order)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    def summary(self) -> dict:
        return {
            "command": self.command,
            "potential": str(self.potential),
            "sectors": self.sectors,
            "iteration": self.iteration.to_dict(),
        }


def _snapshot_path(path: str | None, default_name: str | None) -> Path | None:
    base = os.environ.get(SNAPSHOT_ENV)
    if path is None:
        if default_name is None or base is None:
            return None
        return Path(base) / default_name
    p = Path(path)
    if not p.is_absolute() and base is not None and not p.exists():
        return Path(base) / p
    return p


def _slug(p: Potential) -> str:
    return re.sub(r"[^0-9A-Za-z]+", "_", str(p)).strip("_")


def build_config(args) -> RunConfig:
    pot = parse_potential(args.potential)
    sectors = [NEUMANN, DIRICHLET] if args.sector == "both" else [normalize_sector(args.sector)]
    it = IterationConfig(
        scheme=parse_scheme(args.scheme),
        updating=args.updating,
        newton_tol=args.tol,
        max_cycles=args.max_cycles,
        k_max=args.k_max,
        K_eval=args.k_eval,
        tail=args.tail,
    )
    out = Path(args.out)
    snap_out = _snapshot_path(args.snapshot_out, f"snapshot_{_slug(pot)}.json")
    if snap_out is None:
        snap_out = out / "snapshot.json"
    return RunConfig(
        command=args.command,
        potential=pot,
        sectors=sectors,
        iteration=it,
        out=out,
        snapshot_in=_snapshot_path(args.snapshot_in, None),
        snapshot_out=snap_out,
        jobs=max(1, args.jobs),
    )


# -- shared solve ----------------------------------------------------------


@dataclass
class SectorResult:
    sector: str
    system: ChainSystem | None
    status: str
    cycles: int = 0
    ratio: float = float("nan")
    residual: float = float("nan")
    displacements: list = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "loaded")


def _load_snapshot(path: Path) -> dict[str, ChainSystem]:
    data = json.loads(path.read_text())
    return {s: ChainSystem.from_dict(d) for s, d in data["systems"].items()}


def solve_sector(p: Potential, sector: str, it: IterationConfig, seed: ChainSystem | None = None) -> SectorResult:
    if seed is not None:
        system = seeded_system(p, sector, seed, it.k_max, it.K_eval, it.tail)
    else:
        system = initial_system(p, sector, it.k_max, it.K_eval, it.tail)
    if it.max_cycles == 0:
        return SectorResult(sector, system, "loaded" if seed is not None else "seeded",
                            residual=fixed_point_residual(system))
    try:
        system, rep = run_scheme(system, it)
    except QuantizationError as exc:
        return SectorResult(sector, None, "failed",
                            message=f"Newton iteration went unstable on chain {exc.ell} "
                                    f"at cycle {exc.cycle}: {exc}")
    return SectorResult(sector, system, rep.status, rep.cycles, rep.ratio, rep.residual,
                        rep.displacements, rep.message)


def _solve_job(args):
    p_dict, sector, it_dict, seed_dict = args
    seed = ChainSystem.from_dict(seed_dict) if seed_dict is not None else None
    return solve_sector(Potential.from_dict(p_dict), sector, IterationConfig(**it_dict), seed)


def solve_all(cfg: RunConfig) -> list[SectorResult]:
    seeds = _load_snapshot(cfg.snapshot_in) if cfg.snapshot_in is not None else {}
    jobs = [(cfg.potential.to_dict(), s, cfg.iteration.to_dict(),
             seeds[s].to_dict() if s in seeds else None) for s in cfg.sectors]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(jobs))) as pool:
            return list(pool.map(_solve_job, jobs))
    return [_solve_job(j) for j in jobs]


def write_snapshot(path: Path, results: list[SectorResult], cfg: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "version": 1,
        "config": cfg.summary(),
        "systems": {r.sector: r.system.to_dict() for r in results if r.system is not None},
    }
    path.write_text(json.dumps(data, indent=1) + "\n")


def _f(x: float) -> str:
    return repr(float(x))


def _real_chains(system: ChainSystem) -> list[int]:
    return [ell for ell in range(system.L) if system.mirror(ell) == ell]


def _report_failures(results) -> bool:
    bad = [r for r in results if not r.ok]
    for r in bad:
        print(f"error: {r.sector}: {r.status}. {r.message}".rstrip(), file=sys.stderr)
    return not bad


# -- commands --------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, count: int = 5) -> int:
    results = solve_all(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "levels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector", "ell", "k", "re_E", "im_E"])
        for r in results:
            if r.system is None:
                continue
            for ell in range(r.system.L):
                for k, E in zip(r.system.indices, r.system.levels(ell)):
                    w.writerow([r.sector, ell, int(k), _f(E.real), _f(E.imag)])
    with open(cfg.out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector", "cycle", "sup_displacement", "ratio_estimate"])
        for r in results:
            d = r.displacements
            for i, x in enumerate(d):
                ratio = _f(d[i] / d[i - 1]) if i and d[i - 1] else ""
                w.writerow([r.sector, i + 1, _f(x), ratio])
    if any(r.system is not None for r in results):
        write_snapshot(cfg.snapshot_out, results, cfg)
    for r in results:
        if r.system is None:
            continue
        print(f"{r.sector}: {r.status} after {r.cycles} cycles, ratio {r.ratio:.3g}, residual {r.residual:.2e}")
        for ell in _real_chains(r.system):
            lev = r.system.levels(ell)[:count].real
            print(f"  chain {ell}: " + " ".join(f"{e:.10f}" for e in lev))
    return 0 if _report_failures(results) else 1


def _overlay_markers(p: Potential, sector: str, ell: int, count: int):
    """Harmonic estimates at stationary points of the rotated potential.

    For large |v2| the chains follow these: the real chain the well levels,
    the complex chains the resonances of the rotated barrier at q = 0.
    """
    V = rotate(p, ell)
    out = []
    par = 0 if sector == NEUMANN else 1
    c = V.poly_coefficients()
    d1 = np.polyder(c)
    d2 = np.polyder(c, 2)
    crit = np.roots(d1) if len(d1) > 1 else np.zeros(0)
    for q in crit:
        if abs(q) < 1e-9:
            q = 0.0
            ns = range(par, 2 * count, 2)
        elif abs(q.imag) < 1e-9 and q.real > 0:
            q = q.real
            ns = range(count)
        else:
            continue
        curv = np.polyval(d2, q)
        if curv == 0:
            continue
        w = np.sqrt(complex(curv) / 2.0)
        for n in ns:
            out.append(("well" if q else "origin", n, complex(np.polyval(c, q)) + w * (2 * n + 1)))
    return out


def cmd_chains(cfg: RunConfig, overlay: bool = False, count: int = 6) -> int:
    results = solve_all(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    phi = cfg.potential.symmetry_angle
    with open(cfg.out / "chains.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector", "ell", "k", "re_pos", "im_pos", "re_E", "im_E"])
        for r in results:
            if r.system is None:
                continue
            for ell in range(r.system.L):
                pos = r.system.chain(ell).display_positions(phi)
                for k, z, E in zip(r.system.indices, pos, r.system.levels(ell)):
                    w.writerow([r.sector, ell, int(k), _f(z.real), _f(z.imag), _f(E.real), _f(E.imag)])
    plots = ["'chains.csv' using 4:5:2 with points pointtype 7 palette title 'chains'"]
    if overlay:
        with open(cfg.out / "overlay.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sector", "ell", "kind", "n", "re_pos", "im_pos"])
            for sector in cfg.sectors:
                for ell in range(cfg.potential.group_order):
                    for kind, n, E in _overlay_markers(cfg.potential, sector, ell, count):
                        z = np.exp(1j * ell * phi) * E
                        w.writerow([sector, ell, kind, n, _f(z.real), _f(z.imag)])
        plots.append("'overlay.csv' using 5:6 with points pointtype 6 title 'harmonic estimates'")
    (cfg.out / "chains.gp").write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set size ratio -1\n"
        "set xlabel 'Re'\nset ylabel 'Im'\n"
        "set xrange [-40:40]\nset yrange [-40:40]\n"
        f"plot {', '.join(plots)}\n"
    )
    if any(r.system is not None for r in results):
        write_snapshot(cfg.snapshot_out, results, cfg)
    return 0 if _report_failures(results) else 1


def cmd_wavefunction(cfg: RunConfig, grid: np.ndarray, energy: float | None, level: int) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "wave.csv"
    if grid.size == 0:
        path.write_text("")
        return 0
    p = cfg.potential
    if energy is None:
        sector = NEUMANN if level % 2 == 0 else DIRICHLET
        res = solve_sector(p, sector, cfg.iteration)
        if not res.ok:
            print(f"error: energy solve: {res.status}. {res.message}", file=sys.stderr)
            return 1
        energy = float(res.system.levels(0)[level // 2].real)
    samples = wave_profile(p, energy, grid, cfg.iteration)
    ok = np.array([s.converged for s in samples])
    psi = np.array([s.psi.real if s.converged else np.nan for s in samples])
    try:
        ref = oracle.integrate_wave(p, energy, grid).values
    except (oracle.OracleError, PotentialError) as exc:
        log.warning("oracle integration failed: %s", exc)
        ref = np.full(grid.size, np.nan)
    scale = oracle.fit_scale(ref[ok], psi[ok]) if ok.any() else float("nan")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "re_psi", "im_psi", "ratio", "converged", "oracle_psi",
                    "rel_err_nofit", "rel_err_fit", "cycles", "message"])
        for s, r in zip(samples, ref):
            nofit = abs(s.psi.real - r) / abs(r) if s.converged else float("nan")
            fit = abs(scale * s.psi.real - r) / abs(r) if s.converged else float("nan")
            w.writerow([_f(s.a), _f(s.psi.real), _f(s.psi.imag), _f(s.contraction_ratio),
                        int(s.converged), _f(r), _f(nofit), _f(fit), s.cycles, s.message])
    (cfg.out / "wave.gp").write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 'a'\n"
        "plot 'wave.csv' using 1:6 with lines title 'integration', "
        "'' using 1:($5 > 0 ? $2 : 1/0) with points pointtype 7 title 'determinant'\n"
    )
    print(f"E = {energy:.12g}; {int(ok.sum())}/{len(samples)} points converged; scale fit {scale:.8g}")
    for s in samples:
        flag = "ok" if s.converged else f"unconverged ({s.message})"
        print(f"  a={s.a:g} psi={s.psi.real:.10g} ratio={s.contraction_ratio:.3g} {flag}")
    return 0 if ok.any() else 1


# -- validation suites -----------------------------------------------------


def _random_potentials(rng: np.random.Generator, count: int) -> list[Potential]:
    out = []
    for i in range(count):
        if i % 2 == 0:
            out.append(Potential(4, tuple(rng.uniform(-2, 2, 3))))
        else:
            v2, v4 = rng.uniform(-2, 2, 2)
            out.append(Potential(6, (0.0, v2, 0.0, v4, 0.0)))
    return out


def suite_idr(rng, p=None):
    """Residue route vs heat-trace route for the constant coefficient."""
    worst = 0.0
    for q in _random_potentials(rng, 20):
        c0 = dict(heat_coeffs(q).entries).get(Fraction(0), 0j)
        worst = max(worst, abs(c0 + 2.0 / q.degree * beta_minus_one(q)))
    return worst, 1e-10


def suite_zeta0(rng, p=None):
    """Z(0) of the converged sector chains against b0/2 +- 1/4."""
    from .determinant import zeta_value

    p = p or Potential.homogeneous(4)
    c0 = dict(heat_coeffs(p).entries).get(Fraction(0), 0j)
    it = IterationConfig(scheme="B" if p.group_order == 3 else "auto", k_max=24)
    worst = 0.0
    for sector, sgn in ((NEUMANN, 1), (DIRICHLET, -1)):
        res = solve_sector(p, sector, it)
        if not res.ok:
            return float("inf"), 1e-6
        worst = max(worst, abs(zeta_value(res.system.chain(0), 0.0) - (c0 / 2 + sgn / 4)))
    return worst, 1e-6


def suite_harmonic_det(rng=None, p=None):
    """log det over {3, 7, 11, ...} vs the Gamma-function closed form."""
    lam = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    chain = harmonic_chain(DIRICHLET, k_max=0)
    got = log_det_array(chain, lam)
    exact = np.log(np.sqrt(np.pi) * 2.0 ** (-lam / 2) / gamma((3 + lam) / 4))
    worst = float(np.max(np.abs(got - exact)))
    worst = max(worst, float(np.max(np.abs(harmonic_wronskian(lam + 0.5j)))))
    return worst, 1e-5


def suite_wronskian(rng, p=None):
    p = p or Potential.homogeneous(4)
    it = IterationConfig(scheme="B" if p.group_order == 3 else "auto")
    sys_ = {}
    for sector in (NEUMANN, DIRICHLET):
        res = solve_sector(p, sector, it)
        if not res.ok:
            return float("inf"), 1e-6
        sys_[sector] = res.system
    r = 5 * np.sqrt(rng.uniform(0, 1, 10))
    lam = r * np.exp(2j * np.pi * rng.uniform(0, 1, 10))
    res = wronskian_residual(sys_[NEUMANN], sys_[DIRICHLET], lam)
    return float(np.max(np.abs(res))), 1e-6


def suite_spectrum(rng, p=None):
    """Lowest five levels of the real chain against diagonalization."""
    p = p or Potential.homogeneous(4)
    it = IterationConfig(scheme="B" if p.group_order == 3 else "auto")
    worst = 0.0
    for sector in (NEUMANN, DIRICHLET):
        res = solve_sector(p, sector, it)
        if not res.ok:
            return float("inf"), 1e-5
        ref = oracle.diagonalize(p, sector, 5).values
        worst = max(worst, float(np.max(np.abs(res.system.levels(0)[:5] - ref))))
    return worst, 1e-5


def suite_conjugation(rng, p=None):
    """The quantization phase of a real potential obeys Sigma_(-ell)(conj E) = conj Sigma_ell(E)."""
    p = p or Potential(4, (0.0, 1.0, 0.0))
    res = solve_sector(p, NEUMANN, IterationConfig(k_max=24))
    if not res.ok:
        return float("inf"), 1e-12
    s = res.system
    E = rng.uniform(0.5, 20, 8) * np.exp(1j * rng.uniform(-1, 1, 8))
    worst = 0.0
    for ell in range(s.L):
        a, b = sigma(s, ell, E), sigma(s, -ell, np.conj(E))
        worst = max(worst, float(np.max(np.abs(a - np.conj(b)))))
    return worst, 1e-12


SUITE_FUNCS = {
    "idr": suite_idr,
    "zeta0": suite_zeta0,
    "harmonic-det": suite_harmonic_det,
    "wronskian": suite_wronskian,
    "spectrum": suite_spectrum,
    "conjugation": suite_conjugation,
}


def cmd_validate(suites: list[str], potential: Potential | None, seed: int) -> int:
    failed = []
    for name in suites:
        rng = np.random.default_rng(seed)
        err, tol = SUITE_FUNCS[name](rng, potential)
        ok = err < tol
        print(f"{'PASS' if ok else 'FAIL'} {name}: max deviation {err:.3e} (tolerance {tol:.0e})")
        if not ok:
            failed.append(name)
    if failed:
        print("tolerance breaches: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


# -- argument parsing ------------------------------------------------------


def _add_run_options(sp, default_potential=None, sectors=("neumann", "dirichlet", "both"), default_sector="neumann"):
    if default_potential is None:
        sp.add_argument("--potential", required=True, help="e.g. 'q4+2*q2-0.5*q1' (monic)")
    else:
        sp.add_argument("--potential", default=default_potential, help="e.g. 'q4+2*q2-0.5*q1' (monic)")
    sp.add_argument("--sector", choices=sectors, default=default_sector)
    sp.add_argument("--scheme", default="auto", help="auto, A, B, C or chain order like 0,2,3,1")
    sp.add_argument("--updating", choices=("immediate", "synchronous"), default="immediate")
    sp.add_argument("--k-max", type=int, default=48)
    sp.add_argument("--k-eval", type=int, default=512, help="semiclassical summation cutoff")
    sp.add_argument("--tol", type=float, default=1e-10, help="relative convergence tolerance")
    sp.add_argument("--max-cycles", type=int, default=60, help="0 evaluates a loaded snapshot as is")
    sp.add_argument("--tail", choices=TAIL_MODES, default="corrected")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--snapshot-in", default=None, help=f"seed chains from a snapshot (relative paths also tried under ${SNAPSHOT_ENV})")
    sp.add_argument("--snapshot-out", default=None, help=f"snapshot destination (default ${SNAPSHOT_ENV} or the output directory)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for independent sectors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainquant", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="converged levels of every chain")
    _add_run_options(sp)
    sp.add_argument("--count", type=int, default=5, help="levels printed per real chain")

    sp = sub.add_parser("chains", help="display positions of all chains for plotting")
    _add_run_options(sp)
    sp.add_argument("--overlay", action="store_true", help="add harmonic reference markers")

    sp = sub.add_parser("wavefunction", help="psi(a) from determinants of shifted potentials")
    _add_run_options(sp, default_potential="q4", sectors=("neumann",))
    sp.add_argument("--grid", default="0,0.5,1.0,1.5", help="a values: list or start:stop:step")
    sp.add_argument("--energy", type=float, default=None, help="energy (default: solve for --level)")
    sp.add_argument("--level", type=int, default=0)

    sp = sub.add_parser("validate", help="oracle and identity checks")
    sp.add_argument("--suite", action="append", choices=SUITES + ("all",), help="repeatable; default all")
    sp.add_argument("--potential", default=None, help="potential for the solver-based suites (default q4)")
    sp.add_argument("--seed", type=int, default=1)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            suites = list(SUITES) if not args.suite or "all" in args.suite else args.suite
            pot = parse_potential(args.potential) if args.potential else None
            return cmd_validate(suites, pot, args.seed)
        cfg = build_config(args)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args.count)
        if args.command == "chains":
            return cmd_chains(cfg, args.overlay)
        return cmd_wavefunction(cfg, parse_grid(args.grid), args.energy, args.level)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
