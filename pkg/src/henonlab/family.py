"""Henon compositions, one-parameter families, and their differentials.

A map is an ordered composition of generalized Henon factors

    (z, w) |-> (p(z) - b*w, z),    deg p >= 2,  b != 0.

Points are plain ``(z, w)`` tuples of Python complex; 2x2 differentials are
numpy complex arrays.  Coordinates beyond ``OVERFLOW`` raise
:class:`~henonlab.errors.Escaped` instead of silently producing inf.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, Escaped

OVERFLOW = 1e150

Point = tuple[complex, complex]


def _check_finite(z: complex, w: complex, index: int = 0) -> None:
    if abs(z.real) > OVERFLOW or abs(z.imag) > OVERFLOW or abs(w.real) > OVERFLOW or abs(w.imag) > OVERFLOW:
        raise Escaped(index)


def parse_complex(s) -> complex:
    """Parse a complex literal: a number, or a string 'a+bi' (also 'a+bj')."""
    if isinstance(s, complex):
        return s
    if isinstance(s, (int, float)):
        return complex(s)
    txt = str(s).strip().replace(" ", "")
    txt = txt.replace("i", "j")
    try:
        return complex(txt)
    except ValueError:
        # bare imaginary like "+j2"? complex() handles most; re-raise with context
        raise ValueError(f"cannot parse complex literal {s!r}") from None


def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


@dataclass(frozen=True)
class HenonFactor:
    """One Henon factor (z, w) -> (p(z) - b*w, z).

    ``coeffs`` are the coefficients of p, ascending: p(z) = sum c_k z^k.
    """

    coeffs: tuple[complex, ...]
    b: complex

    def __post_init__(self):
        if len(self.coeffs) < 3 or self.coeffs[-1] == 0:
            raise ValueError("factor polynomial must have degree >= 2 with nonzero leading coefficient")
        if self.b == 0:
            raise ValueError("Jacobian factor b must be nonzero")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def p(self, z: complex) -> complex:
        acc = self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * z + c
        return acc

    def dp(self, z: complex) -> complex:
        acc = self.coeffs[-1] * self.degree
        for k in range(self.degree - 1, 0, -1):
            acc = acc * z + self.coeffs[k] * k
        return acc


@dataclass(frozen=True)
class HenonMap:
    factors: tuple[HenonFactor, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("need at least one Henon factor")

    @property
    def degree(self) -> int:
        d = 1
        for f in self.factors:
            d *= f.degree
        return d

    @property
    def jacobian(self) -> complex:
        j = complex(1.0)
        for f in self.factors:
            j *= f.b
        return j

    # --- evaluation -------------------------------------------------

    def eval(self, x: Point) -> Point:
        z, w = x
        for f in self.factors:
            z, w = f.p(z) - f.b * w, z
        _check_finite(z, w)
        return (z, w)

    def eval_inverse(self, x: Point) -> Point:
        z, w = x
        for f in reversed(self.factors):
            inv_b = 1.0 / f.b
            # multiply by 1/b instead of dividing: keeps this path bit-identical
            # with the batch kernels, which cannot use Python's complex division
            z, w = w, (f.p(w) - z) * inv_b
        _check_finite(z, w)
        return (z, w)

    def orbit(self, x: Point, n: int, inverse: bool = False) -> list[Point]:
        """Points x, f(x), ..., f^n(x); raises Escaped(index of last finite)."""
        step = self.eval_inverse if inverse else self.eval
        pts = [x]
        for k in range(n):
            try:
                x = step(x)
            except Escaped:
                raise Escaped(k, partial=pts) from None
            pts.append(x)
        return pts

    def iterate(self, x: Point, n: int, inverse: bool = False) -> Point:
        return self.orbit(x, n, inverse=inverse)[-1]

    # --- differentials ----------------------------------------------

    def differential(self, x: Point) -> np.ndarray:
        z, w = x
        m = np.eye(2, dtype=complex)
        for f in self.factors:
            df = np.array([[f.dp(z), -f.b], [1.0, 0.0]], dtype=complex)
            m = df @ m
            z, w = f.p(z) - f.b * w, z
        return m

    def differential_inverse(self, x: Point) -> np.ndarray:
        z, w = x
        m = np.eye(2, dtype=complex)
        for f in reversed(self.factors):
            inv_b = 1.0 / f.b
            df = np.array([[0.0, 1.0], [-inv_b, f.dp(w) * inv_b]], dtype=complex)
            m = df @ m
            z, w = w, (f.p(w) - z) * inv_b
        return m

    def orbit_differential(self, x: Point, n: int, inverse: bool = False) -> np.ndarray:
        """Cocycle product Df(f^{n-1}x) ... Df(x) (or the inverse-map analog)."""
        m = np.eye(2, dtype=complex)
        cur = x
        for k in range(n):
            if inverse:
                m = self.differential_inverse(cur) @ m
                cur = self.eval_inverse(cur)
            else:
                m = self.differential(cur) @ m
                try:
                    cur = self.eval(cur)
                except Escaped:
                    raise Escaped(k, partial=m) from None
        return m

    def is_moderately_dissipative(self) -> bool:
        return abs(self.jacobian) < 1.0 / self.degree**2

    # --- series composition (used by the manifold parameterizer) ----

    def apply_series(self, az: np.ndarray, aw: np.ndarray, inverse: bool = False):
        """Compose the map with a truncated curve t -> (Z(t), W(t)).

        ``az``/``aw`` are coefficient arrays (ascending).  Returns the
        coefficient arrays of f(Z(t), W(t)) truncated to the same length.
        """
        n = len(az)

        def mul(u, v):
            return np.convolve(u, v)[:n]

        z, w = np.array(az, dtype=complex), np.array(aw, dtype=complex)
        factors = reversed(self.factors) if inverse else self.factors
        for f in factors:
            if inverse:
                inv_b = 1.0 / f.b
                pz = np.zeros(n, dtype=complex)
                pz[0] = f.coeffs[-1]
                for c in reversed(f.coeffs[:-1]):
                    pz = mul(pz, w)
                    pz[0] += c
                z, w = w, (pz - z) * inv_b
            else:
                pz = np.zeros(n, dtype=complex)
                pz[0] = f.coeffs[-1]
                for c in reversed(f.coeffs[:-1]):
                    pz = mul(pz, z)
                    pz[0] += c
                z, w = pz - f.b * w, z
        return z, w

    # --- flattening for the batch escape kernels --------------------

    def kernel_data(self, inverse: bool = False):
        """Flattened (degrees, coeffs, b_or_invb) arrays for the batch kernels."""
        degs = np.array([f.degree for f in self.factors], dtype=np.int64)
        coeffs = np.concatenate([np.asarray(f.coeffs, dtype=complex) for f in self.factors])
        if inverse:
            bs = np.array([1.0 / f.b for f in self.factors], dtype=complex)
        else:
            bs = np.array([f.b for f in self.factors], dtype=complex)
        return degs, coeffs, bs


def multipliers(m: np.ndarray) -> tuple[complex, complex]:
    """Eigenvalues of a 2x2 matrix, sorted |k1| >= |k2|, ties by argument."""
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    s = cmath.sqrt(tr * tr - 4.0 * det)
    k1, k2 = (tr + s) / 2.0, (tr - s) / 2.0
    if (abs(k1), cmath.phase(k1)) < (abs(k2), cmath.phase(k2)):
        k1, k2 = k2, k1
    return k1, k2


def det2(m: np.ndarray) -> complex:
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


# ---------------------------------------------------------------------------
# one-parameter families
# ---------------------------------------------------------------------------


def _poly_eval(coeffs: tuple[complex, ...], lam: complex) -> complex:
    acc = complex(0.0)
    for c in reversed(coeffs):
        acc = acc * lam + c
    return acc


@dataclass(frozen=True)
class ParamFactor:
    """Henon factor whose coefficients are polynomials in the parameter.

    ``coeffs[k]`` is the lambda-polynomial (ascending) of the z^k coefficient.
    """

    coeffs: tuple[tuple[complex, ...], ...]
    b: tuple[complex, ...]

    def at(self, lam: complex) -> HenonFactor:
        return HenonFactor(
            coeffs=tuple(_poly_eval(c, lam) for c in self.coeffs),
            b=_poly_eval(self.b, lam),
        )


@dataclass(frozen=True)
class ParamHenonFamily:
    factors: tuple[ParamFactor, ...]
    center: complex = 0.0
    radius: float = 1.0

    def contains(self, lam: complex) -> bool:
        return abs(lam - self.center) <= self.radius * (1.0 + 1e-12)

    def at(self, lam: complex) -> HenonMap:
        if not self.contains(lam):
            raise DomainError(f"parameter {lam} outside disk(center={self.center}, radius={self.radius})")
        return HenonMap(tuple(f.at(lam) for f in self.factors))

    @property
    def degree(self) -> int:
        return math.prod(len(f.coeffs) - 1 for f in self.factors)


# --- family specification files -------------------------------------------


def _parse_coeff(raw) -> tuple[complex, ...]:
    """A coefficient entry: complex literal, or [[a0,b0],[a1,b1],...] in lambda."""
    if isinstance(raw, list):
        return tuple(complex(float(a), float(b)) for a, b in raw)
    return (parse_complex(raw),)


def family_from_dict(doc: dict) -> ParamHenonFamily:
    factors = []
    for fd in doc["factors"]:
        coeffs = tuple(_parse_coeff(c) for c in fd["p"])
        b = _parse_coeff(fd["b"])
        factors.append(ParamFactor(coeffs=coeffs, b=b))
    dom = doc.get("domain", {"center": 0.0, "radius": 1.0})
    return ParamHenonFamily(
        factors=tuple(factors),
        center=parse_complex(dom.get("center", 0.0)),
        radius=float(dom.get("radius", 1.0)),
    )


def load_family(path) -> ParamHenonFamily:
    with open(path, "r", encoding="utf-8") as fh:
        return family_from_dict(json.load(fh))


def henon_quadratic(c: complex, b: complex) -> HenonMap:
    """The workhorse single-factor map (z, w) -> (z^2 + c - b*w, z)."""
    return HenonMap((HenonFactor(coeffs=(complex(c), 0.0, 1.0), b=complex(b)),))


def quadratic_family(b: complex, center: complex = 0.0, radius: float = 4.0) -> ParamHenonFamily:
    """Family (z, w) -> (z^2 + lambda - b*w, z) over a parameter disk."""
    factor = ParamFactor(coeffs=((0.0, 1.0), (0.0,), (1.0,)), b=(complex(b),))
    return ParamHenonFamily(factors=(factor,), center=complex(center), radius=float(radius))
