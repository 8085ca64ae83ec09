"""Truncated power series in (x, y, lam) and germ maps built from them.

Coefficients live in a dense complex array ``c[i, j, m]`` for the monomial
x^i y^j lam^m.  Multiplication is direct (non-FFT) convolution truncated back
to the stored orders, so rational inputs stay exact to machine arithmetic.
Composition substitutes jets with zero constant term in the x and y slots;
lam always stays lam.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve


class Jet3:
    __slots__ = ("c",)

    def __init__(self, c):
        self.c = np.asarray(c, dtype=complex)

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, nx: int, ny: int, nl: int) -> "Jet3":
        return cls(np.zeros((nx + 1, ny + 1, nl + 1), dtype=complex))

    @classmethod
    def const(cls, value: complex, orders) -> "Jet3":
        j = cls.zeros(*orders)
        j.c[0, 0, 0] = value
        return j

    @classmethod
    def variable(cls, name: str, orders) -> "Jet3":
        j = cls.zeros(*orders)
        idx = {"x": (1, 0, 0), "y": (0, 1, 0), "lam": (0, 0, 1)}[name]
        j.c[idx] = 1.0
        return j

    @classmethod
    def from_lambda_poly(cls, coeffs, orders) -> "Jet3":
        j = cls.zeros(*orders)
        for m, v in enumerate(coeffs):
            if m > orders[2]:
                break
            j.c[0, 0, m] = v
        return j

    # -- bookkeeping ---------------------------------------------------

    @property
    def orders(self):
        return (self.c.shape[0] - 1, self.c.shape[1] - 1, self.c.shape[2] - 1)

    def copy(self) -> "Jet3":
        return Jet3(self.c.copy())

    def maxabs(self) -> float:
        return float(np.max(np.abs(self.c)))

    def chop(self, eps: float = 0.0) -> "Jet3":
        out = self.c.copy()
        out[np.abs(out) <= eps] = 0.0
        return Jet3(out)

    @property
    def const_term(self) -> complex:
        return complex(self.c[0, 0, 0])

    def lambda_poly(self) -> np.ndarray:
        """The (0, 0, :) slice as a plain 1D coefficient array."""
        return self.c[0, 0, :].copy()

    def max_total_order(self) -> int:
        return sum(self.orders)

    # -- ring operations ------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet3):
            return other
        return Jet3.const(complex(other), self.orders)

    def __add__(self, other):
        o = self._coerce(other)
        return Jet3(self.c + o.c)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet3(self.c - o.c)

    def __rsub__(self, other):
        o = self._coerce(other)
        return Jet3(o.c - self.c)

    def __neg__(self):
        return Jet3(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            return Jet3(self.c * complex(other))
        nx, ny, nl = self.orders
        full = convolve(self.c, other.c, method="direct")
        return Jet3(full[: nx + 1, : ny + 1, : nl + 1])

    def __rmul__(self, other):
        return Jet3(self.c * complex(other))

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative jet powers are not defined")
        out = Jet3.const(1.0, self.orders)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    # -- calculus and substitution ---------------------------------------

    def diff_x(self) -> "Jet3":
        nx, ny, nl = self.orders
        out = Jet3.zeros(nx, ny, nl)
        for i in range(1, nx + 1):
            out.c[i - 1] = i * self.c[i]
        return out

    def diff_y(self) -> "Jet3":
        nx, ny, nl = self.orders
        out = Jet3.zeros(nx, ny, nl)
        for j in range(1, ny + 1):
            out.c[:, j - 1] = j * self.c[:, j]
        return out

    def compose(self, x_sub: "Jet3", y_sub: "Jet3") -> "Jet3":
        """Substitute x <- x_sub, y <- y_sub (zero constant term up to noise)."""
        tol = 1e-9 * max(1.0, x_sub.maxabs(), y_sub.maxabs())
        if abs(x_sub.const_term) > tol or abs(y_sub.const_term) > tol:
            raise ValueError("substituted jets must have zero constant term")
        nx, ny, nl = self.orders
        # Horner in y inside Horner in x
        out = None
        for i in range(nx, -1, -1):
            row = None
            for j in range(ny, -1, -1):
                lam_slice = Jet3.from_lambda_poly(self.c[i, j, :], (nx, ny, nl))
                row = lam_slice if row is None else row * y_sub + lam_slice
            out = row if out is None else out * x_sub + row
        return out

    def subs_y_scaled(self, scale: "Jet3") -> "Jet3":
        """Substitute y <- scale(lam) * y for a lambda-jet ``scale``."""
        nx, ny, nl = self.orders
        out = Jet3.zeros(nx, ny, nl)
        pl = np.zeros(nl + 1, dtype=complex)
        pl[0] = 1.0
        sc = scale.lambda_poly()
        for j in range(ny + 1):
            for i in range(nx + 1):
                out.c[i, j, :] += np.convolve(self.c[i, j, :], pl)[: nl + 1]
            pl = np.convolve(pl, sc)[: nl + 1]
        return out

    def eval(self, x, y, lam):
        """Numeric Horner evaluation; works with complex or mpmath scalars."""
        nx, ny, nl = self.orders
        acc_x = 0
        for i in range(nx, -1, -1):
            acc_y = 0
            for j in range(ny, -1, -1):
                acc_l = 0
                for m in range(nl, -1, -1):
                    acc_l = acc_l * lam + complex(self.c[i, j, m])
                acc_y = acc_y * y + acc_l
            acc_x = acc_x * x + acc_y
        return acc_x


def jet_inverse_unit(b: Jet3, iters: int | None = None) -> Jet3:
    """1/b for a jet with nonzero constant term (Newton iteration)."""
    b0 = b.const_term
    if b0 == 0:
        raise ZeroDivisionError("jet has zero constant term")
    inv = Jet3.const(1.0 / b0, b.orders)
    n = iters if iters is not None else max(3, math.ceil(math.log2(b.max_total_order() + 2)) + 2)
    two = Jet3.const(2.0, b.orders)
    for _ in range(n):
        inv = inv * (two - b * inv)
    return inv


def jet_div(a: Jet3, b: Jet3) -> Jet3:
    return a * jet_inverse_unit(b)


def jet_div_lambda_valuation(a: Jet3, b: Jet3, tol: float = 1e-10) -> Jet3:
    """a/b when both have lambda-valuation >= 1 (e.g. rho_lam - rho_lam^j).

    Both series are shifted down by one power of lambda; the quotient's top
    lambda order is therefore zero-padded (one order of accuracy spent).
    """
    if np.max(np.abs(a.c[:, :, 0])) > tol * max(1.0, a.maxabs()):
        raise ValueError("numerator has nonzero lambda-constant part")
    if np.max(np.abs(b.c[:, :, 0])) > tol * max(1.0, b.maxabs()):
        raise ValueError("denominator has nonzero lambda-constant part")
    sa, sb = Jet3.zeros(*a.orders), Jet3.zeros(*b.orders)
    sa.c[:, :, :-1] = a.c[:, :, 1:]
    sb.c[:, :, :-1] = b.c[:, :, 1:]
    return jet_div(sa, sb)


def jet_log1p_part(u: Jet3) -> Jet3:
    """log(1 + u) for a jet u with zero constant term (up to noise)."""
    if abs(u.const_term) > 1e-9 * max(1.0, u.maxabs()):
        raise ValueError("jet_log1p_part needs zero constant term")
    out = Jet3.zeros(*u.orders)
    term = Jet3.const(1.0, u.orders)
    nmax = u.max_total_order()
    for k in range(1, nmax + 1):
        term = term * u
        out = out + term * ((-1.0) ** (k + 1) / k)
    return out


def jet_exp_part(e: Jet3) -> Jet3:
    """exp(e) for a jet e with zero constant term (up to noise)."""
    if abs(e.const_term) > 1e-9 * max(1.0, e.maxabs()):
        raise ValueError("jet_exp_part needs zero constant term")
    out = Jet3.const(1.0, e.orders)
    term = Jet3.const(1.0, e.orders)
    nmax = e.max_total_order()
    for k in range(1, nmax + 1):
        term = term * e * (1.0 / k)
        out = out + term
    return out


def jet_root(a: Jet3, k: int) -> Jet3:
    """Principal k-th root of a jet with nonzero constant term."""
    a0 = a.const_term
    if a0 == 0:
        raise ZeroDivisionError("jet_root needs a unit jet")
    u = a * (1.0 / a0) - Jet3.const(1.0, a.orders)
    root0 = complex(a0) ** (1.0 / k)
    return root0 * jet_exp_part(jet_log1p_part(u) * (1.0 / k))


def jet_sqrt(a: Jet3) -> Jet3:
    return jet_root(a, 2)


# ---------------------------------------------------------------------------
# germ maps and coordinate changes
# ---------------------------------------------------------------------------


class JetMap:
    """A germ (x, y) -> (f1(x, y, lam), f2(x, y, lam)) fixing the origin."""

    __slots__ = ("f1", "f2")

    def __init__(self, f1: Jet3, f2: Jet3):
        if abs(f1.const_term) > 1e-13 * max(1.0, f1.maxabs()) or abs(f2.const_term) > 1e-13 * max(1.0, f2.maxabs()):
            raise ValueError("germ must fix the origin for every lambda-slice truncation")
        self.f1 = f1
        self.f2 = f2

    @property
    def orders(self):
        return self.f1.orders

    def eval(self, x, y, lam):
        return self.f1.eval(x, y, lam), self.f2.eval(x, y, lam)

    def linear_part(self):
        """2x2 matrix of lambda-polys: d(f)/d(x,y) at the origin."""
        return (
            self.f1.c[1, 0, :].copy(), self.f1.c[0, 1, :].copy(),
            self.f2.c[1, 0, :].copy(), self.f2.c[0, 1, :].copy(),
        )

    def compose_map(self, other: "JetMap") -> "JetMap":
        """self after other: point -> self(other(point))."""
        return JetMap(
            self.f1.compose(other.f1, other.f2),
            self.f2.compose(other.f1, other.f2),
        )


class Change:
    """Coordinate change (X, Y) = (u(x, y, lam), v(x, y, lam)), invertible."""

    __slots__ = ("u", "v", "label")

    def __init__(self, u: Jet3, v: Jet3, label: str = ""):
        self.u = u
        self.v = v
        self.label = label

    def inverse(self) -> tuple[Jet3, Jet3]:
        """(s, t) with u(s, t) = x, v(s, t) = y to truncation order."""
        orders = self.u.orders
        x = Jet3.variable("x", orders)
        y = Jet3.variable("y", orders)
        a, b = self.u.c[1, 0, :], self.u.c[0, 1, :]
        c, d = self.v.c[1, 0, :], self.v.c[0, 1, :]
        ja = Jet3.from_lambda_poly(a, orders)
        jb = Jet3.from_lambda_poly(b, orders)
        jc = Jet3.from_lambda_poly(c, orders)
        jd = Jet3.from_lambda_poly(d, orders)
        det = ja * jd - jb * jc
        inv_det = jet_inverse_unit(det)
        i11, i12 = jd * inv_det, -1.0 * jb * inv_det
        i21, i22 = -1.0 * jc * inv_det, ja * inv_det
        s = i11 * x + i12 * y
        t = i21 * x + i22 * y
        for _ in range(sum(orders) + 2):
            e1 = x - self.u.compose(s, t)
            e2 = y - self.v.compose(s, t)
            err = max(e1.maxabs(), e2.maxabs())
            s = s + i11 * e1 + i12 * e2
            t = t + i21 * e1 + i22 * e2
            if err < 1e-14:
                break
        return s, t

    def apply(self, jm: JetMap) -> JetMap:
        """Conjugated germ in the new coordinates: C o f o C^{-1}."""
        s, t = self.inverse()
        g1 = jm.f1.compose(s, t)
        g2 = jm.f2.compose(s, t)
        return JetMap(self.u.compose(g1, g2), self.v.compose(g1, g2))


def identity_change(orders) -> Change:
    return Change(Jet3.variable("x", orders), Jet3.variable("y", orders), label="identity")


def compose_changes(first: Change, second: Change) -> Change:
    """The change doing ``first`` then ``second`` (both as old->new maps)."""
    return Change(
        second.u.compose(first.u, first.v),
        second.v.compose(first.u, first.v),
        label=f"{second.label} o {first.label}",
    )
