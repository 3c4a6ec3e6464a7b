"""Zeta-regularized spectral determinants over chains with semiclassical tails.

A chain lists levels E_k for k of one parity up to a cutoff ``k_max``;
beyond it the levels are the roots of the chain's truncated Bohr-Sommerfeld
counting function P.  The regularized product is evaluated as

    log D(lam) = sum'_{k <= K} log(E_k + lam)
                 - (1/step) sum_{rho != 0} B_rho x_K^rho (log x_K - 1/rho)
                 - f'(K)/12 + f'''(K)/720,

where the primed sum halves the endpoint, x = E + lam, B_rho are the
coefficients of P re-expanded in powers of x, and f(n) = log x(n) is the
summand as a function of the level index.  Positive powers rho are the
zeta counterterms; negative ones integrate the tail beyond K in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .potential import Potential, rotate
from .semiclassics import (
    SemiclassicalTail,
    bs_coeffs,
    harmonic_tail,
    normalize_sector,
    sector_parity,
)

log = logging.getLogger(__name__)

DEFAULT_K_EVAL = 512
ZERO_TOL = 1e-12
_SERIES_RATIO = 0.5
_BINOMIAL_TERMS = 80


class DeterminantZero(ArithmeticError):
    """The evaluation point sits on a zero of the determinant."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class TailDivergence(ArithmeticError):
    """The regularized sum is not stable under doubling of the evaluation cutoff."""

    def __init__(self, message: str, values=None):
        super().__init__(message)
        self.values = values


@dataclass(eq=False)
class Chain:
    """One spectrum E_k^[ell] of a sector, explicit up to ``k_max``.

    ``step`` is 2 for a Neumann/Dirichlet sector and 1 for a merged
    whole-line chain.  Semiclassical levels above the cutoff are solved
    lazily and cached.
    """

    ell: int
    sector: str
    levels: np.ndarray
    tail: SemiclassicalTail
    k_max: int
    K_eval: int = DEFAULT_K_EVAL
    step: int = 2
    _semi: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.levels = np.array(self.levels, dtype=complex)
        if self.step == 2:
            self.sector = normalize_sector(self.sector)
        if len(self.levels) != len(self.indices):
            raise ValueError(
                f"expected {len(self.indices)} explicit levels up to k_max={self.k_max}, "
                f"got {len(self.levels)}"
            )

    @property
    def parity(self) -> int:
        return sector_parity(self.sector) if self.step == 2 else 0

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.parity, self.k_max + 1, self.step)

    @property
    def first_tail_index(self) -> int:
        ks = self.indices
        return int(ks[-1] + self.step) if len(ks) else self.parity

    def with_levels(self, levels) -> "Chain":
        return Chain(self.ell, self.sector, levels, self.tail, self.k_max, self.K_eval, self.step, self._semi)

    def conjugate(self, ell: int) -> "Chain":
        tail = SemiclassicalTail(
            tuple((nu, b.conjugate()) for nu, b in self.tail.entries),
            complex(self.tail.shift).conjugate(),
            self.tail.exact,
        )
        return Chain(ell, self.sector, self.levels.conj(), tail, self.k_max, self.K_eval, self.step)

    def translated(self, t: complex) -> "Chain":
        """The chain {E_k + t} with its counting function translated to match."""
        return Chain(self.ell, self.sector, self.levels + t, self.tail.translated(t),
                     self.k_max, self.K_eval, self.step)

    def semiclassical_levels(self, K: int) -> np.ndarray:
        """Tail levels for indices first_tail_index .. K (inclusive)."""
        first = self.first_tail_index
        have = self._semi.get("E")
        if have is None or len(have) < (K - first) // self.step + 1:
            ks = np.arange(first, K + 1, self.step, dtype=float)
            self._semi["E"] = self.tail.solve(ks)
        return self._semi["E"][: (K - first) // self.step + 1]

    def display_positions(self, phi: float) -> np.ndarray:
        return np.exp(1j * self.ell * phi) * self.levels


def make_chain(p: Potential, ell: int, sector: str, levels, k_max: int, K_eval: int = DEFAULT_K_EVAL,
               tail_mode: str = "corrected") -> Chain:
    return Chain(ell, sector, levels, bs_coeffs(rotate(p, ell), tail_mode, sector), k_max, K_eval)


def harmonic_chain(sector: str, k_max: int = 0, K_eval: int = DEFAULT_K_EVAL) -> Chain:
    """Exact chain of q^2: E_k = 2k+1 on the sector's parity."""
    par = sector_parity(sector)
    ks = np.arange(par, k_max + 1, 2)
    return Chain(0, sector, 2.0 * ks + 1.0, harmonic_tail(), k_max, K_eval)


def merge_chains(plus: Chain, minus: Chain) -> Chain:
    """Whole-line chain from a Neumann and a Dirichlet chain sharing one tail."""
    top_p, top_m = int(plus.indices[-1]), int(minus.indices[-1])
    if abs(top_p - top_m) != 1:
        raise ValueError("sector cutoffs must be adjacent")
    k_max = max(top_p, top_m)
    levels = np.empty(k_max + 1, dtype=complex)
    levels[plus.indices] = plus.levels
    levels[minus.indices] = minus.levels
    return Chain(plus.ell, "merged", levels, plus.tail, k_max, 2 * plus.K_eval, step=1)


@dataclass(frozen=True)
class DeterminantValue:
    log_modulus: float
    phase: float
    windings: int = 0

    @property
    def log(self) -> complex:
        return complex(self.log_modulus, self.phase)

    @property
    def value(self) -> complex:
        return complex(np.exp(self.log))


# -- engine ----------------------------------------------------------------


def _binomials(nu: float, count: int) -> np.ndarray:
    out = np.empty(count)
    out[0] = 1.0
    for m in range(1, count):
        out[m] = out[m - 1] * (nu - m + 1) / m
    return out


def _counterterms(tail: SemiclassicalTail, x: np.ndarray, c: np.ndarray, g) -> np.ndarray:
    """sum_{rho} B_rho * g(x, rho) with P(E) re-expanded around x = E + c."""
    r = -c / x
    logx = np.log(x)
    out = np.zeros_like(x)
    m = np.arange(_BINOMIAL_TERMS)
    rpow = r[:, None] ** m[None, :]
    for nu, b in tail.entries:
        nu = float(nu)
        binom = _binomials(nu, _BINOMIAL_TERMS)
        rho = nu - m
        keep = rho != 0
        coef = np.where(keep, binom, 0.0)
        vals = g(logx[:, None], np.where(keep, rho, 1.0)[None, :])
        out = out + b * np.exp(nu * logx) * np.sum(coef[None, :] * rpow * vals, axis=1)
    return out


def _em_third(w, w1, w2, g1, g2, g3):
    """f'(n) and f'''(n) for f(n) = g(E(n)) with dE/dn = w(E)."""
    h = w1 * g1 + w * g2
    h1 = w2 * g1 + 2 * w1 * g2 + w * g3
    return w * g1, w * (w1 * h + w * h1)


def _tail_point(chain: Chain, c: np.ndarray, K: int | None):
    """Pick the endpoint index K (same parity) with |c| <= ratio * |E_K + c|."""
    if K is None:
        K = max(chain.K_eval, chain.first_tail_index)
    K = int(K)
    par = chain.parity if chain.step == 2 else 0
    if (K - par) % chain.step:
        K += 1
    K = max(K, chain.first_tail_index)
    cmax = float(np.max(np.abs(c))) if c.size else 0.0
    for _ in range(40):
        EK = chain.semiclassical_levels(K)[-1]
        if cmax <= _SERIES_RATIO * abs(EK) - cmax:
            return K
        K = 2 * K + par
    raise TailDivergence(f"spectral parameter |{cmax}| too large for the tail expansion")


def log_det_array(chain: Chain, lam, K: int | None = None, replace=None, check_zero: bool = True) -> np.ndarray:
    """Vectorized log D(lam) on the principal per-factor branch.

    ``replace`` is an optional pair (column, value) of equal-length arrays:
    for evaluation point i the level at explicit position column[i] is
    replaced by value[i] (used for a priori constrained pairs).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    c = lam + chain.tail.shift
    K = _tail_point(chain, c, K)
    semi = chain.semiclassical_levels(K)
    body = np.concatenate([chain.levels, semi[:-1]])
    EK = semi[-1]

    F = body[None, :] + lam[:, None]
    if replace is not None:
        cols, vals = replace
        rows = np.arange(len(lam))
        F[rows, cols] = np.asarray(vals) + lam
    if check_zero and F.size:
        scale = max(abs(body[0]), 1.0) if len(body) else 1.0
        near = np.abs(F) < ZERO_TOL * scale
        if np.any(near):
            i, j = np.argwhere(near)[0]
            raise DeterminantZero(f"lam={lam[i]} is a zero of the determinant (level {j})", index=j)
    S = np.sum(np.log(F), axis=1)

    x = EK + lam
    S = S + 0.5 * np.log(x)
    S = S - _counterterms(chain.tail, x, c, lambda lx, rho: lx - 1.0 / rho) / chain.step

    tail = chain.tail
    P1 = tail.counting(EK, 1)
    P2 = tail.counting(EK, 2)
    P3 = tail.counting(EK, 3)
    st = chain.step
    w = st / P1
    w1 = -st * P2 / P1**2
    w2 = -st * P3 / P1**2 + 2 * st * P2**2 / P1**3
    f1, f3 = _em_third(w, w1, w2, 1 / x, -1 / x**2, 2 / x**3)
    return S - f1 / 12.0 + f3 / 720.0


def log_det(chain: Chain, lam: complex, check_tail: bool = True, reference: DeterminantValue | None = None) -> DeterminantValue:
    """log D(lam) for one chain, optionally unwrapped against ``reference``.

    With ``check_tail`` the value is recomputed with the evaluation cutoff
    doubled; a relative change above 1e-9 raises :class:`TailDivergence`.
    """
    lam = complex(lam)
    val = complex(log_det_array(chain, [lam])[0])
    if check_tail:
        K = _tail_point(chain, np.array([lam + chain.tail.shift]), None)
        val2 = complex(log_det_array(chain, [lam], K=2 * K + chain.parity)[0])
        if abs(val2 - val) > 1e-9 * max(abs(val), 1.0):
            raise TailDivergence(
                f"log D unstable under cutoff doubling: {val} vs {val2}", values=(val, val2)
            )
    phase = val.imag
    windings = 0
    if reference is not None:
        turns = round((reference.phase - phase) / (2 * math.pi))
        if turns:
            log.debug("log_det: applied %+d winding(s) at lam=%s", turns, lam)
        phase += 2 * math.pi * turns
        windings = reference.windings + turns
    return DeterminantValue(val.real, phase, windings)


def log_det_path(chain: Chain, lams) -> list[DeterminantValue]:
    """log D along a caller-declared path, phase unwrapped continuously."""
    out = []
    ref = None
    for lam in lams:
        ref = log_det(chain, lam, check_tail=False, reference=ref)
        out.append(ref)
    return out


def zeta_value(chain: Chain, s: float, K: int | None = None) -> complex:
    """Continued spectral zeta function sum_k E_k^(-s) of one chain."""
    s = float(s)
    if not chain.tail.exact and s <= chain.tail.next_exponent:
        raise ValueError(
            f"s={s} is outside the strip reachable with this tail (needs s > {chain.tail.next_exponent})"
        )
    c = np.array([chain.tail.shift], dtype=complex)
    K = _tail_point(chain, c, K)
    semi = chain.semiclassical_levels(K)
    body = np.concatenate([chain.levels, semi[:-1]])
    EK = semi[-1]
    S = np.sum(body ** (-s)) + 0.5 * EK ** (-s)

    def g(lx, rho):
        if np.any(rho == s):
            raise ValueError(f"s={s} hits a pole of the zeta function")
        return rho * np.exp(-s * lx) / (rho - s)

    x = np.array([EK])
    S = S - _counterterms(chain.tail, x, c - 0.0 + 0 * x, g)[0] / chain.step
    tail = chain.tail
    P1, P2, P3 = (tail.counting(EK, o) for o in (1, 2, 3))
    st = chain.step
    w = st / P1
    w1 = -st * P2 / P1**2
    w2 = -st * P3 / P1**2 + 2 * st * P2**2 / P1**3
    g1 = -s * EK ** (-s - 1)
    g2 = s * (s + 1) * EK ** (-s - 2)
    g3 = -s * (s + 1) * (s + 2) * EK ** (-s - 3)
    f1, f3 = _em_third(w, w1, w2, g1, g2, g3)
    return complex(S - f1 / 12.0 + f3 / 720.0)


def fredholm_crosscheck(chain: Chain, lam: complex, terms: int = 1000) -> float:
    """Relative deviation between a truncated Fredholm product and D(lam)/D(0)."""
    lam = complex(lam)
    if lam == 0:
        return 0.0
    n_exp = len(chain.levels)
    if terms <= n_exp:
        levels = chain.levels[:terms]
    else:
        K = chain.first_tail_index + chain.step * (terms - n_exp - 1)
        levels = np.concatenate([chain.levels, chain.semiclassical_levels(K)])[:terms]
    prod = np.sum(np.log1p(lam / levels))
    ref = log_det_array(chain, [lam])[0] - log_det_array(chain, [0.0])[0]
    return float(abs(np.expm1(prod - ref)))


def winding_number(chain: Chain, center: complex, radius: float, points: int = 64) -> int:
    """Number of zeros of D inside a small circle around ``center``."""
    t = np.linspace(0.0, 2 * math.pi, points + 1)
    lams = center + radius * np.exp(1j * t)
    vals = log_det_array(chain, lams)
    ph = np.unwrap(vals.imag)
    return int(round((ph[-1] - ph[0]) / (2 * math.pi)))


def large_lambda_expansion(head, lam: float) -> float:
    """Sum of c_(-nu) [-Gamma(-nu) lam^nu] with the log lam convention at nu = 0."""
    total = 0.0
    for e, cval in head.entries:
        nu = -float(e)
        if nu == 0:
            total += cval * math.log(lam)
        else:
            total += cval * (-gamma(-nu)) * lam**nu
    return total


def wronskian_from_chains(plus0: Chain, minus0: Chain, plus1: Chain, minus1: Chain,
                          lam, phi: float, beta) -> np.ndarray:
    """Residual of the bilinear identity linking chains 0 and 1 of both sectors.

    e^{i phi/4} D+_1(e^{-i phi} lam) D-_0(lam) - e^{-i phi/4} D+_0(lam) D-_1(e^{-i phi} lam)
    - 2i e^{i phi beta/2}; ``beta`` may be an array matching ``lam``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    rot = np.exp(-1j * phi) * lam
    a = log_det_array(plus1, rot) + log_det_array(minus0, lam)
    b = log_det_array(plus0, lam) + log_det_array(minus1, rot)
    lhs = np.exp(1j * phi / 4 + a) - np.exp(-1j * phi / 4 + b)
    return lhs - 2j * np.exp(1j * phi * np.asarray(beta) / 2)


def harmonic_wronskian(lam) -> np.ndarray:
    """The same identity for q^2 (phi = pi, beta_-1 = lam/2), using the exact chains."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    plus, minus = harmonic_chain("neumann"), harmonic_chain("dirichlet")
    return wronskian_from_chains(plus, minus, plus, minus, lam, math.pi, lam / 2)
