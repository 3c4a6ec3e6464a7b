"""Monic polynomial potentials, their rotations, shifts and residues at infinity.

A potential of degree N is stored in the rescaled monic form

    V(q) = q^N + v_1 q^(N-1) + ... + v_(N-1) q

with no constant term (a constant is absorbed into the spectral parameter).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np


class PotentialError(ValueError):
    """Raised for malformed or unsupported potentials."""


def _as_coeffs(coeffs, degree: int) -> tuple[complex, ...]:
    out = tuple(complex(c) for c in coeffs)
    if len(out) != degree - 1:
        raise PotentialError(
            f"degree {degree} needs {degree - 1} coefficients, got {len(out)}"
        )
    return out


@dataclass(frozen=True)
class Potential:
    degree: int
    coeffs: tuple[complex, ...] = field(default=())

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise PotentialError(f"degree must be a positive integer, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs, self.degree))

    @classmethod
    def homogeneous(cls, degree: int) -> "Potential":
        return cls(degree, (0.0,) * (degree - 1))

    @classmethod
    def from_powers(cls, terms: dict[int, complex]) -> "Potential":
        """Build from ``{power: coefficient}``; the top power must carry 1."""
        terms = {int(p): complex(c) for p, c in terms.items()}
        degree = max(terms)
        if terms[degree] != 1:
            raise PotentialError("leading coefficient must be exactly 1 (monic form)")
        if 0 in terms:
            raise PotentialError("constant terms belong to the spectral parameter")
        if min(terms) < 0:
            raise PotentialError("negative powers are not polynomial")
        return cls(degree, tuple(terms.get(degree - j, 0.0) for j in range(1, degree)))

    # derived symmetry data

    @property
    def growth_order(self) -> Fraction:
        return Fraction(1, 2) + Fraction(1, self.degree)

    @property
    def symmetry_angle(self) -> float:
        return 4.0 * math.pi / (self.degree + 2)

    @property
    def is_even(self) -> bool:
        if self.degree % 2:
            return False
        return all(c == 0 for j, c in enumerate(self.coeffs, start=1) if j % 2)

    @property
    def group_order(self) -> int:
        N = self.degree
        return N // 2 + 1 if self.is_even else N + 2

    @property
    def is_real(self) -> bool:
        return all(c.imag == 0 for c in self.coeffs)

    @property
    def is_homogeneous(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def supports_quantization(self) -> bool:
        return self.degree > 2

    def require_quantizable(self) -> None:
        if self.degree == 2:
            raise PotentialError("N=2 (harmonic) is singular for exact quantization")
        if self.degree < 3:
            raise PotentialError(f"degree {self.degree} is not supported for quantization")

    def poly_coefficients(self) -> np.ndarray:
        """Coefficients in descending powers, constant term (zero) included."""
        return np.array([1.0, *self.coeffs, 0.0], dtype=complex)

    def __call__(self, q):
        return np.polyval(self.poly_coefficients(), q)

    def derivative(self, q, order: int = 1):
        return np.polyval(np.polyder(self.poly_coefficients(), order), q)

    def __str__(self) -> str:
        return format_potential(self)

    # serialization

    def to_dict(self) -> dict:
        return {"degree": self.degree, "coeffs": [[c.real, c.imag] for c in self.coeffs]}

    @classmethod
    def from_dict(cls, data: dict) -> "Potential":
        coeffs = [complex(re, im) for re, im in data["coeffs"]]
        return cls(int(data["degree"]), tuple(coeffs))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        return cls.from_dict(json.loads(text))


def format_potential(p: Potential) -> str:
    parts = [f"q{p.degree}"]
    for j, c in enumerate(p.coeffs, start=1):
        if c == 0:
            continue
        val = c.real if c.imag == 0 else c
        parts.append(f"{val!r}*q{p.degree - j}")
    return "+".join(parts)


def rotate(p: Potential, ell: int) -> Potential:
    """Apply the rotation v_j -> exp(i j ell phi / 2) v_j (ell used literally)."""
    if ell == 0:
        return p
    half = 0.5 * p.symmetry_angle * ell
    coeffs = tuple(
        c * complex(math.cos(j * half), math.sin(j * half)) if c != 0 else 0j
        for j, c in enumerate(p.coeffs, start=1)
    )
    return Potential(p.degree, coeffs)


def shift(p: Potential, a: float) -> Potential:
    """Return V_a(q) = V(q + a) - V(a), monic of the same degree."""
    if isinstance(a, complex) or np.iscomplexobj(a):
        raise PotentialError("only real shifts are supported")
    if not p.is_real:
        raise PotentialError("shift requires a potential with real coefficients")
    a = float(a)
    N = p.degree
    # coefficient of q^m in V(q+a): sum over powers n >= m of c_n C(n, m) a^(n-m)
    full = [1.0] + [c.real for c in p.coeffs] + [0.0]  # c_N ... c_0, descending
    by_power = {N - i: full[i] for i in range(N + 1)}
    new = {}
    for m in range(1, N + 1):
        new[m] = sum(by_power[n] * comb(n, m) * a ** (n - m) for n in range(m, N + 1))
    return Potential(N, tuple(new[N - j] for j in range(1, N)))


@dataclass(frozen=True)
class LaurentHead:
    """Coefficients beta_sigma of (V(q)+lam)^(1/2) at q -> infinity, sigma >= -1."""

    potential: Potential
    lam: complex
    entries: tuple[tuple[Fraction, complex], ...]

    def coefficient(self, sigma) -> complex:
        sigma = Fraction(sigma)
        for s, b in self.entries:
            if s == sigma:
                return b
        if sigma < -1:
            raise ValueError("the head stops at sigma = -1")
        return 0j

    @property
    def beta_minus_one(self) -> complex:
        return self.coefficient(-1)

    @property
    def exponents(self) -> list[Fraction]:
        return [s for s, _ in self.entries]


def _sqrt_series(a: list[complex], order: int) -> list[complex]:
    """Taylor coefficients of sqrt(1 + a_1 z + a_2 z^2 + ...) up to z^order."""
    g = [1.0 + 0j] + [0j] * order
    for n in range(1, order + 1):
        an = a[n] if n < len(a) else 0j
        acc = sum(g[i] * g[n - i] for i in range(1, n))
        g[n] = (an - acc) / 2.0
    return g


def laurent_head(p: Potential, lam: complex = 0.0) -> LaurentHead:
    """Expand (V+lam)^(1/2) = q^(N/2) (1 + v_1/q + ... + lam/q^N)^(1/2) down to q^-1.

    Exponents run N/2, N/2 - 1, ... (only integer offsets occur for a
    polynomial); for odd N the q^-1 slot is absent and recorded as zero.
    """
    N = p.degree
    top = Fraction(N, 2)
    depth = int(math.floor(top + 1))  # number of unit steps from N/2 to >= -1
    series = [1.0 + 0j, *p.coeffs, complex(lam)]
    g = _sqrt_series(series, depth)
    entries = [(top - m, g[m]) for m in range(depth + 1)]
    if N % 2:
        entries.append((Fraction(-1), 0j))
    return LaurentHead(p, complex(lam), tuple(entries))


def beta_minus_one(p: Potential) -> complex:
    """Residue at infinity of (V+lam)^(1/2); lam-independent for N > 2."""
    if p.degree % 2:
        return 0j
    return laurent_head(p, 0.0).beta_minus_one


def residue_R(p: Potential) -> complex:
    """Residue at s=-1/2 of the continued integral of (V+lam)^(-s) over the half-line."""
    if p.degree < 3:
        raise PotentialError("the residue is lam-dependent for N <= 2")
    return beta_minus_one(p) / p.degree
