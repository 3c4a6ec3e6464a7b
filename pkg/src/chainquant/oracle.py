"""Independent numerical ground truth for spectra and recessive solutions.

Nothing here uses determinants or chains: real spectra come from matrix
diagonalization, complex levels from shooting the recessive solution in
from large q, and absolutely normalized wave functions from the same
inward integration seeded by the asymptotic series of log psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eig, eigh

from .potential import Potential, PotentialError
from .semiclassics import normalize_sector, sector_parity


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    values: np.ndarray
    method: str
    resolution: dict = field(default_factory=dict)
    error: float = 0.0

    def to_dict(self) -> dict:
        vals = np.asarray(self.values, dtype=complex)
        return {
            "method": self.method,
            "values": [[v.real, v.imag] for v in vals],
            "resolution": self.resolution,
            "error": self.error,
        }


# -- diagonalization --------------------------------------------------------


def _energy_scale(p: Potential, count: int) -> tuple[float, float]:
    """A reference energy above the wanted levels and its outer turning point."""
    N = p.degree
    kmax = 2 * count + 10
    b_mu = math.gamma(1 / N) / (N * math.sqrt(math.pi) * math.gamma(1.5 + 1 / N))
    E = ((kmax + 0.5) / b_mu) ** (2.0 * N / (N + 2.0))
    coeffs = p.poly_coefficients().real.copy()
    E = max(E, -min(np.polyval(coeffs, np.linspace(0, 10, 2001))) + 1.0)
    c = coeffs.copy()
    c[-1] -= E
    roots = np.roots(c)
    qt = max(r.real for r in roots if abs(r.imag) < 1e-9 * max(1, abs(r)) and r.real > 0)
    return E, qt


def _ho_spectrum(p: Potential, parity: int, size: int, omega: float, count: int) -> np.ndarray:
    N = p.degree
    big = size + N + 2
    n = np.arange(1, big)
    A = np.diag(np.sqrt(n), 1)
    X = (A + A.T) / math.sqrt(2 * omega)
    D = A.T - A
    H = -(omega / 2) * (D @ D)
    coeffs = p.poly_coefficients().real
    Xp = np.eye(big)
    for power in range(1, N + 1):
        Xp = Xp @ X
        H = H + coeffs[N - power] * Xp
    H = H[:size, :size]
    idx = np.arange(parity, size, 2)
    return eigh(H[np.ix_(idx, idx)], eigvals_only=True)[:count]


def _cheb(n: int):
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def _cheb_spectrum(p: Potential, parity: int, n: int, Q: float, count: int) -> np.ndarray:
    D, x = _cheb(n)
    q = Q * (1 - x) / 2  # q runs 0 -> Q as x runs 1 -> -1
    Dq = D * (-2.0 / Q)
    D2 = Dq @ Dq
    V = np.polyval(p.poly_coefficients().real, q)
    L = -D2 + np.diag(V)
    # q = Q (last node): Dirichlet truncation.  q = 0 (first node): sector condition.
    inner = np.arange(1, n)
    if parity == 1:
        M = L[np.ix_(inner, inner)]
    else:
        # psi'(0) = 0 eliminates psi_0 in favour of the interior values
        row = Dq[0]
        elim = -row[inner] / row[0]
        M = L[np.ix_(inner, inner)] + np.outer(L[inner, 0], elim)
    w = eig(M, right=False)
    w = w[np.abs(w.imag) < 1e-6 * np.maximum(1, np.abs(w.real))].real
    return np.sort(w)[:count]


def diagonalize(p: Potential, sector: str, count: int, tol: float = 1e-8) -> OracleResult:
    """Lowest ``count`` half-line eigenvalues of -d^2/dq^2 + V(q) for one sector.

    Even potentials use a parity-restricted harmonic-oscillator basis with
    exact polynomial matrix elements; others a Chebyshev collocation on a
    truncated half-line.  The basis is doubled until the values settle.
    """
    if not p.is_real:
        raise PotentialError("diagonalize needs a real potential")
    parity = sector_parity(sector)
    E_ref, qt = _energy_scale(p, count)
    if p.is_even:
        omega = math.sqrt(E_ref) / qt
        size = max(64, 8 * count)
        prev = _ho_spectrum(p, parity, size, omega, count)
        for _ in range(6):
            size *= 2
            cur = _ho_spectrum(p, parity, size, omega, count)
            err = float(np.max(np.abs(cur - prev) / np.maximum(1, np.abs(cur))))
            if err < tol * 1e-2:
                return OracleResult(cur, "diagonalization", {"basis": "oscillator", "size": size, "omega": omega}, err)
            prev = cur
    else:
        # decay of exp(-int sqrt(V-E)) past the turning point to below 1e-20
        Q = qt * 1.2
        while np.sqrt(max(np.polyval(p.poly_coefficients().real, Q) - E_ref, 0)) * (Q - qt) < 60:
            Q *= 1.15
        n = max(80, 10 * count)
        prev = _cheb_spectrum(p, parity, n, Q, count)
        for _ in range(4):
            n = int(n * 1.5)
            cur = _cheb_spectrum(p, parity, n, Q, count)
            err = float(np.max(np.abs(cur - prev) / np.maximum(1, np.abs(cur))))
            if err < tol * 1e-1:
                # a larger box must not move the values either
                wide = _cheb_spectrum(p, parity, n, 1.3 * Q, count)
                err = max(err, float(np.max(np.abs(wide - cur) / np.maximum(1, np.abs(cur)))))
                if err >= tol:
                    raise OracleError(f"box truncation error {err:.2e} exceeds tol")
                return OracleResult(cur, "diagonalization", {"basis": "chebyshev", "nodes": n, "Q": Q}, err)
            prev = cur
    raise OracleError(f"diagonalization did not converge (last change {err:.2e})")


# -- recessive solution -----------------------------------------------------


def riccati_coefficients(p: Potential, lam: complex, terms: int) -> np.ndarray:
    """Coefficients g_M of y = -psi'/psi = sum_M g_M q^(N/2 - M/2).

    They solve y^2 - y' = V + lam order by order; the classical part
    reproduces the expansion of (V+lam)^(1/2).
    """
    N = p.degree
    c = np.zeros(terms, dtype=complex)
    c[0] = 1.0
    for j, v in enumerate(p.coeffs, start=1):
        if 2 * j < terms:
            c[2 * j] = v
    if 2 * N < terms:
        c[2 * N] += lam
    g = np.zeros(terms, dtype=complex)
    g[0] = 1.0
    for M in range(1, terms):
        acc = c[M] - np.dot(g[1:M], g[M - 1:0:-1])
        i = M - N - 2
        if i >= 0:
            acc += (N / 2 - i / 2) * g[i]
        g[M] = acc / 2.0
    return g


def recessive_asymptotics(p: Potential, lam: complex, q: float, terms: int = 400):
    """(log psi, psi'/psi, last term size) at large q, zero constant term.

    log psi = -sum g_M q^(s+1)/(s+1) - g_(-1) log q with s = N/2 - M/2,
    truncated once the terms start to diverge or fall below 1e-18.
    """
    N = p.degree
    g = riccati_coefficients(p, lam, terms)
    logpsi = 0j
    dlog = 0j
    best = math.inf
    for M in range(terms):
        s = N / 2 - M / 2
        if s == -1:
            t = g[M] * math.log(q)
        else:
            t = g[M] * q ** (s + 1) / (s + 1)
        size = abs(t)
        if s < -1 and size:
            if size > 100 * best:
                break
            best = min(best, size)
            if best < 1e-18:
                logpsi -= t
                dlog -= g[M] * q**s
                break
        logpsi -= t
        dlog -= g[M] * q**s
    return logpsi, dlog, best


def _start_point(p: Potential, lam: complex, q_start: float | None = None) -> float:
    if q_start is not None:
        return float(q_start)
    N = p.degree
    h = N / 2 + 1
    q = (20.0 * h) ** (1 / h)
    scale = max([abs(lam) ** (1 / N)] + [abs(v) ** (1 / j) for j, v in enumerate(p.coeffs, start=1)])
    q = max(q, 2.5 * scale)
    for _ in range(60):
        _, _, tail = recessive_asymptotics(p, lam, q)
        if tail < 1e-15:
            return q
        q *= 1.1
    raise OracleError("could not find a start point where the asymptotic series is accurate")


def _integrate_in(p: Potential, lam: complex, q_start: float, stop: float, t_eval=None, rtol: float = 1e-12, max_step=np.inf):
    coeffs = p.poly_coefficients()

    def rhs(q, y):
        return [y[1], (np.polyval(coeffs, q) + lam) * y[0]]

    logpsi0, dlog0, _ = recessive_asymptotics(p, lam, q_start)
    sol = solve_ivp(
        rhs,
        (q_start, stop),
        np.array([1.0, dlog0], dtype=complex),
        method="DOP853",
        rtol=rtol,
        atol=1e-30,
        t_eval=t_eval,
        max_step=max_step,
    )
    if not sol.success:
        raise OracleError(f"integration failed: {sol.message}")
    scale = np.exp(logpsi0)
    return sol, scale


def recessive_solution(p: Potential, lam: complex, q: float = 0.0, q_start: float | None = None, rtol: float = 1e-12):
    """Absolutely normalized recessive solution (psi, psi') at ``q``."""
    lam = complex(lam)
    qs = _start_point(p, lam, q_start)
    if q >= qs:
        lp, dl, _ = recessive_asymptotics(p, lam, q)
        return np.exp(lp), dl * np.exp(lp)
    sol, scale = _integrate_in(p, lam, qs, q, rtol=rtol)
    return sol.y[0, -1] * scale, sol.y[1, -1] * scale


def shoot_complex(p: Potential, sector: str, seed: complex, tol: float = 1e-12, maxiter: int = 50) -> complex:
    """Eigenvalue E near ``seed`` with psi(0)=0 (Dirichlet) or psi'(0)=0 (Neumann).

    The potential may carry complex lower coefficients; its leading term
    +q^N keeps the recessive direction on the positive real axis.
    """
    parity = sector_parity(sector)

    def f(E):
        psi, dpsi = recessive_solution(p, -E)
        return psi if parity else dpsi

    E0 = complex(seed)
    h = 1e-4 * max(1.0, abs(E0))
    E1 = E0 + h
    f0, f1 = f(E0), f(E1)
    for _ in range(maxiter):
        if f1 == f0:
            break
        E2 = E1 - f1 * (E1 - E0) / (f1 - f0)
        if abs(E2 - E1) <= tol * max(1.0, abs(E2)):
            return E2
        E0, f0 = E1, f1
        E1, f1 = E2, f(E2)
    raise OracleError(f"shooting did not converge near {seed}")


def shoot_levels(p: Potential, sector: str, seeds) -> OracleResult:
    vals = np.array([shoot_complex(p, sector, s) for s in seeds])
    return OracleResult(vals, "shooting", {"seeds": [complex(s) for s in seeds]})


def integrate_wave(p: Potential, E: float, grid, q_start: float | None = None, rtol: float = 1e-12, max_step=np.inf) -> OracleResult:
    """psi_lam(q) with lam = -E on ``grid`` (q >= 0), absolutely normalized."""
    if not p.is_real:
        raise PotentialError("integrate_wave needs a real potential")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return OracleResult(np.zeros(0), "integration")
    lam = -complex(E)
    qs = _start_point(p, lam, q_start)
    if np.any(grid >= qs):
        qs = float(grid.max()) * 1.01 + 1e-3
    order = np.argsort(-grid)
    sol, scale = _integrate_in(p, lam, qs, float(grid.min()), t_eval=grid[order], rtol=rtol, max_step=max_step)
    vals = np.empty(grid.size, dtype=complex)
    vals[order] = sol.y[0] * scale
    if not np.all(np.isfinite(vals)):
        raise OracleError("overflow in inward integration; lower q_start or tighten the step")
    return OracleResult(vals.real, "integration", {"q_start": qs, "rtol": rtol, "max_step": max_step})


def fit_scale(reference, values) -> float:
    """Least-squares factor s minimizing |s * values - reference|."""
    reference = np.asarray(reference, dtype=float)
    values = np.asarray(values, dtype=float)
    return float(np.dot(values, reference) / np.dot(values, values))
