"""Bohr-Sommerfeld coefficients from the classical partition function.

The classical partition function of the half-line problem,

    theta_cl(t) = (pi t)^(-1/2) * int_0^inf exp(-V(q) t) dq,

expands for small t in powers t^(-mu + m/N).  Substituting q = t^(-1/N) x
turns every coefficient into a finite sum of moments
int_0^inf exp(-x^N) x^p dx = Gamma((p+1)/N)/N.  The counting-function
coefficients follow from the heat-trace ones by b_nu = c_(-nu) / Gamma(1+nu).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gamma, rgamma

from .potential import Potential, PotentialError

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


class SemiclassicalError(RuntimeError):
    """Newton failure while solving the Bohr-Sommerfeld condition."""

    def __init__(self, message: str, k=None, last=None):
        super().__init__(message)
        self.k = k
        self.last = last


def sector_parity(sector: str) -> int:
    sector = normalize_sector(sector)
    return 0 if sector == NEUMANN else 1


def normalize_sector(sector: str) -> str:
    s = str(sector).lower()
    if s in ("neumann", "n", "+", "even"):
        return NEUMANN
    if s in ("dirichlet", "d", "-", "odd"):
        return DIRICHLET
    raise ValueError(f"unknown sector {sector!r}")


@dataclass(frozen=True)
class HeatTraceHead:
    """Coefficients c_(-nu) of theta(t) ~ sum c_(-nu) t^(-nu)."""

    potential: Potential
    entries: tuple[tuple[Fraction, complex], ...]  # (-nu, c)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return sum(c * t ** float(e) for e, c in self.entries)


@dataclass(frozen=True, eq=False)
class SemiclassicalTail:
    """Truncated counting function P(E) = sum_nu b_nu (E - shift)^nu.

    Levels beyond a chain's cutoff solve P(E_k) = k + 1/2.  ``exact`` marks
    tails with no omitted terms (the harmonic case), which lifts depth
    restrictions on zeta continuation.
    """

    entries: tuple[tuple[Fraction, complex], ...]
    shift: complex = 0j
    exact: bool = False
    potential: Potential | None = field(default=None, compare=False)
    cutoff: Fraction | None = None  # first omitted exponent, when not the next lattice step

    @property
    def exponents(self) -> np.ndarray:
        return np.array([float(nu) for nu, _ in self.entries])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([b for _, b in self.entries], dtype=complex)

    @property
    def depth(self) -> int:
        return len(self.entries)

    @property
    def leading(self) -> tuple[Fraction, complex]:
        return self.entries[0]

    def coefficient(self, nu) -> complex:
        nu = Fraction(nu)
        for e, b in self.entries:
            if e == nu:
                return b
        return 0j

    @property
    def next_exponent(self) -> float:
        """First omitted exponent (-inf for exact tails)."""
        if self.exact:
            return -math.inf
        if self.cutoff is not None:
            return float(self.cutoff)
        nus = [nu for nu, _ in self.entries]
        if len(nus) > 1:
            return float(nus[-1] - (nus[-2] - nus[-1]))
        return float(nus[-1]) - 1.0

    def translated(self, t: complex) -> "SemiclassicalTail":
        return SemiclassicalTail(self.entries, self.shift + t, self.exact, self.potential, self.cutoff)

    def counting(self, E, order: int = 0):
        """P(E) or its ``order``-th derivative, principal branch powers."""
        y = np.asarray(E, dtype=complex) - self.shift
        logy = np.log(y)
        out = np.zeros_like(y)
        for nu, b in self.entries:
            nu = float(nu)
            fac = 1.0
            for i in range(order):
                fac *= nu - i
            if fac == 0.0:
                continue
            out = out + b * fac * np.exp((nu - order) * logy)
        return out

    def solve(self, k, seed=None, tol: float = 1e-14, maxiter: int = 100, strict: bool = True):
        """Solve P(E) = k + 1/2 for each k by damped Newton.

        With ``strict=False`` levels whose Newton run fails (the truncated
        series may have no root, e.g. below a double-well barrier) come
        back as the last iterate instead of raising.
        """
        k = np.atleast_1d(np.asarray(k, dtype=float))
        target = k + 0.5
        nu0, b0 = self.leading
        if seed is None:
            E = (target / b0) ** (1.0 / float(nu0)) + self.shift
            E = np.asarray(E, dtype=complex)
        else:
            E = np.array(np.broadcast_to(seed, k.shape), dtype=complex)
        res = self.counting(E) - target
        for _ in range(maxiter):
            d = self.counting(E, 1)
            step = res / d
            done = np.abs(step) <= tol * np.maximum(np.abs(E), 1.0)
            if np.all(done):
                return E
            trial = E - step
            new = self.counting(trial) - target
            # halve the step where the residual grew
            for _h in range(8):
                bad = np.abs(new) > np.abs(res)
                if not np.any(bad):
                    break
                step = np.where(bad, step / 2, step)
                trial = E - step
                new = self.counting(trial) - target
            E, res = trial, new
        if not strict:
            return E
        worst = int(np.argmax(np.abs(res)))
        raise SemiclassicalError(
            f"Bohr-Sommerfeld Newton did not converge for k={k[worst]:g}",
            k=k[worst],
            last=E[worst],
        )

    def to_dict(self) -> dict:
        cut = None if self.cutoff is None else [self.cutoff.numerator, self.cutoff.denominator]
        return {"terms": self.to_list(), "cutoff": cut, "exact": self.exact}

    @classmethod
    def from_dict(cls, data: dict, potential=None) -> "SemiclassicalTail":
        cut = data.get("cutoff")
        cut = None if cut is None else Fraction(cut[0], cut[1])
        return cls.from_list(data["terms"], exact=bool(data.get("exact", False)), potential=potential, cutoff=cut)

    def to_list(self) -> list[dict]:
        return [
            {"nu": [nu.numerator, nu.denominator], "b": [b.real, b.imag]}
            for nu, b in self.entries
        ]

    @classmethod
    def from_list(cls, data, shift: complex = 0j, exact: bool = False, potential=None, cutoff=None):
        entries = tuple(
            (Fraction(d["nu"][0], d["nu"][1]), complex(d["b"][0], d["b"][1])) for d in data
        )
        return cls(entries, shift, exact, potential, cutoff)


@lru_cache(maxsize=None)
def _compositions(total: int, max_part: int) -> tuple[tuple[int, ...], ...]:
    """Multiplicity vectors r (r[j-1] = count of part j) with sum j*r_j = total."""
    out = []

    def rec(remaining: int, part: int, acc: list[int]):
        if part == 0:
            if remaining == 0:
                out.append(tuple(acc))
            return
        for r in range(remaining // part, -1, -1):
            acc[part - 1] = r
            rec(remaining - r * part, part - 1, acc)
        acc[part - 1] = 0

    rec(total, max_part, [0] * max_part)
    return tuple(out)


def classical_heat_series(p: Potential, terms: int) -> HeatTraceHead:
    """First ``terms`` coefficients of the classical partition function, uncapped.

    Beyond the classical range these are not the quantum heat-trace
    coefficients; the function exists for checking against quadrature.
    """
    N = p.degree
    if N < 3:
        raise PotentialError("heat coefficients need N > 2")
    mu = p.growth_order
    v = p.coeffs
    entries = []
    for m in range(terms):
        total = 0j
        for r in _compositions(m, N - 1):
            term = 1.0 + 0j
            power = 0
            for j, rj in enumerate(r, start=1):
                if rj:
                    term *= (-v[j - 1]) ** rj / math.factorial(rj)
                    power += (N - j) * rj
            if term != 0:
                total += term * gamma((power + 1) / N) / N
        entries.append((-mu + Fraction(m, N), total / math.sqrt(math.pi)))
    return HeatTraceHead(p, tuple(entries))


def classical_depth(p: Potential) -> int:
    """Number of exponents nu = mu - m/N with nu > -mu."""
    return p.degree + 2


def heat_coeffs(p: Potential, depth: int | None = None) -> HeatTraceHead:
    """Heat-trace coefficients c_(-nu) within the classical range -nu < mu."""
    p.require_quantizable()
    maxdepth = classical_depth(p)
    if depth is None:
        depth = maxdepth
    if depth > maxdepth:
        raise ValueError(
            f"depth {depth} exceeds the classical range ({maxdepth} terms with -nu < mu)"
        )
    return classical_heat_series(p, depth)


def quantum_heat_row(p: Potential, terms: int | None = None) -> HeatTraceHead:
    """hbar^2 correction to the heat trace, exponents -nu = mu + m/N.

    The Wigner-Kirkwood term -(t^(3/2) / (12 sqrt(pi))) int_0^inf V'' e^(-tV) dq
    expands with the same moment substitution as the classical part.
    By default the first N-1 terms (-nu < 3/2) are returned.
    """
    N = p.degree
    if N < 3:
        raise PotentialError("heat coefficients need N > 2")
    if terms is None:
        terms = N - 1
    mu = p.growth_order
    v = p.coeffs
    # V'' = sum_i a_i q^(N-2-i)
    a = [N * (N - 1)] + [v[i - 1] * (N - i) * (N - i - 1) for i in range(1, N - 1)]
    entries = []
    for m in range(terms):
        total = 0j
        for i in range(min(m, N - 2) + 1):
            if a[i] == 0:
                continue
            for r in _compositions(m - i, N - 1):
                term = complex(a[i])
                power = N - 2 - i
                for j, rj in enumerate(r, start=1):
                    if rj:
                        term *= (-v[j - 1]) ** rj / math.factorial(rj)
                        power += (N - j) * rj
                if term != 0:
                    total += term * gamma((power + 1) / N) / N
        entries.append((mu + Fraction(m, N), -total / (12.0 * math.sqrt(math.pi))))
    return HeatTraceHead(p, tuple(entries))


def _boundary_slot(e: Fraction) -> bool:
    """Half-integer orders from 3/2 on also receive endpoint (sector) terms."""
    return e >= Fraction(3, 2) and (2 * e).denominator == 1 and (2 * e).numerator % 2 == 1


ENDPOINT_SLOT = Fraction(3, 2)
# t^(3/2) coefficient per unit V'(0)/sqrt(pi): the boundary E_;n heat invariant
# plus the surface term left over when V'' is integrated over the half-line
_ENDPOINT_WEIGHT = {NEUMANN: -7.0 / 12.0, DIRICHLET: 5.0 / 12.0}


def endpoint_term(p: Potential, sector: str) -> complex:
    """Sector-dependent part of the t^(3/2) heat coefficient, proportional to V'(0)."""
    slope = p.coeffs[-1] if p.coeffs else 0j
    return _ENDPOINT_WEIGHT[normalize_sector(sector)] * slope / math.sqrt(math.pi)


def corrected_heat_coeffs(p: Potential, sector: str | None = None) -> tuple[HeatTraceHead, Fraction]:
    """Heat coefficients below the hbar^4 row, with endpoint-contaminated slots handled.

    Returns the head and the first omitted order -nu.  The classical and
    hbar^2 rows are summed where their exponents coincide; the hbar^4 row
    starts at -nu = 3/2 + 3/N.  Endpoint terms occupy half-integer orders
    from 3/2 on.  With a ``sector`` the 3/2 slot is completed by its
    endpoint term (the next one, 5/2, lies beyond the hbar^4 threshold);
    without one every endpoint slot is dropped.
    """
    N = p.degree
    mu = p.growth_order
    limit = Fraction(3, 2) + Fraction(3, N)
    n_cl = sum(1 for m in range(4 * N) if -mu + Fraction(m, N) < limit)
    n_q = sum(1 for m in range(4 * N) if mu + Fraction(m, N) < limit)
    total: dict[Fraction, complex] = {}
    for e, c in classical_heat_series(p, n_cl).entries + quantum_heat_row(p, n_q).entries:
        total[e] = total.get(e, 0j) + c
    if sector is not None and ENDPOINT_SLOT < limit:
        total[ENDPOINT_SLOT] = total.get(ENDPOINT_SLOT, 0j) + endpoint_term(p, sector)
        open_slots = [e for e in total if _boundary_slot(e) and e != ENDPOINT_SLOT]
    else:
        open_slots = [e for e in total if _boundary_slot(e)]
    first = min(open_slots + [limit])
    kept = tuple(sorted((e, c) for e, c in total.items() if e not in open_slots))
    return HeatTraceHead(p, kept), first


TAIL_MODES = ("corrected", "classical")


def bs_coeffs(p: Potential, mode: str = "corrected", sector: str | None = None) -> SemiclassicalTail:
    """Bohr-Sommerfeld coefficients b_nu = c_(-nu) / Gamma(1+nu).

    ``classical`` keeps the N+2 exponents nu > -mu.  ``corrected`` appends
    the remaining terms below the hbar^4 order; given the ``sector`` this
    includes the endpoint term at E^(-3/2), otherwise the counting function
    is only exact up to that order.
    """
    if mode not in TAIL_MODES:
        raise ValueError(f"tail mode must be one of {TAIL_MODES}, got {mode!r}")
    cutoff = None
    if mode == "classical":
        rows = heat_coeffs(p).entries
    else:
        head, first = corrected_heat_coeffs(p, sector)
        rows, cutoff = head.entries, -first
    entries = []
    for e, c in rows:
        nu = -e
        # 1/Gamma vanishes at the negative integers: integer powers of t
        # carry no large-E information
        entries.append((nu, c * rgamma(1.0 + float(nu))))
    return SemiclassicalTail(tuple(entries), potential=p, cutoff=cutoff)


def harmonic_tail() -> SemiclassicalTail:
    """Exact counting function of q^2: E_k = 2k + 1."""
    return SemiclassicalTail(((Fraction(1), 0.5 + 0j),), exact=True, potential=Potential(2, (0.0,)))


def sector_indices(sector: str, k_max: int) -> np.ndarray:
    p = sector_parity(sector)
    return np.arange(p, k_max + 1, 2)


def semiclassical_chain(p: Potential, sector: str, k_max: int, tail=None, strict: bool = True,
                        mode: str = "corrected") -> np.ndarray:
    """Levels E_k (k of the sector parity, k <= k_max) solving the truncated BS condition."""
    if tail is None:
        p.require_quantizable()
        tail = bs_coeffs(p, mode, sector)
    ks = sector_indices(sector, k_max)
    if len(ks) == 0:
        return np.zeros(0, dtype=complex)
    return tail.solve(ks.astype(float), strict=strict)
