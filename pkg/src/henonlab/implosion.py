"""Normal-form reduction at semi-parabolic parameters and transit solvers.

The reduction brings a germ (rho_lam x + ..., b_lam y + ...) with rho(0) = 1
to the shape

    (rho_lam x + x^{k+1} + x^{k+2} g(x, y), b_lam y + x h(x, y)),

killing the x^j (2 <= j <= k) and x*y^j coefficients.  The x^{k+2}..x^{2k}
terms cannot be killed family-wise and stay; the transit remainder eta
absorbs their effect, so the measured decay constant M may exceed what a
single parameter slice would suggest.

Transit parameters are found by the argument principle on the window
W_n = B(-2*pi*i/n, n^{-1-gamma/2}) followed by Newton, and every solution
carries recomputable certificates (forbidden region, derivative product,
winding).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import (
    BackwardNewtonFailure,
    ForbiddenRegionViolation,
    NewtonFailure,
    NoRootInWindow,
)
from .jets import (
    Change,
    Jet3,
    JetMap,
    compose_changes,
    jet_div,
    jet_div_lambda_valuation,
    jet_inverse_unit,
    jet_root,
    jet_sqrt,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# normal-form reduction
# ---------------------------------------------------------------------------


@dataclass
class NormalFormResult:
    k: int
    nu: int
    chain: list[Change]
    normalized: JetMap
    rho: np.ndarray          # lambda-poly of the neutral multiplier
    b: np.ndarray            # lambda-poly of the contracting multiplier
    passes: int
    killed_max: float

    def total_change(self) -> Change:
        if not self.chain:
            from .jets import identity_change

            return identity_change(self.normalized.orders)
        total = self.chain[0]
        for ch in self.chain[1:]:
            total = compose_changes(total, ch)
        return total


def _linear_jets(jm: JetMap):
    orders = jm.orders
    a, b = jm.f1.c[1, 0, :], jm.f1.c[0, 1, :]
    c, d = jm.f2.c[1, 0, :], jm.f2.c[0, 1, :]
    return tuple(Jet3.from_lambda_poly(v, orders) for v in (a, b, c, d))


def _diagonalize(jm: JetMap) -> tuple[JetMap, Change, Jet3, Jet3]:
    """Linear lambda-dependent change making the linear part diag(rho, b)."""
    orders = jm.orders
    ja, jb, jc, jd = _linear_jets(jm)
    tr = ja + jd
    det = ja * jd - jb * jc
    disc = tr * tr - 4.0 * det
    s = jet_sqrt(disc)
    rho = (tr + s) * 0.5
    if abs(rho.const_term - 1.0) > abs((tr - s).const_term * 0.5 - 1.0):
        s = -1.0 * s
        rho = (tr + s) * 0.5
    blam = (tr - s) * 0.5

    x = Jet3.variable("x", orders)
    y = Jet3.variable("y", orders)
    # eigenvector columns; pick the better-conditioned formula per column
    v1a, v1b = jb, rho - ja          # (b, rho - a)
    w1a, w1b = rho - jd, jc          # (rho - d, c)
    if abs(w1a.const_term) + abs(w1b.const_term) > abs(v1a.const_term) + abs(v1b.const_term):
        v1a, v1b = w1a, w1b
    v2a, v2b = jb, blam - ja
    w2a, w2b = blam - jd, jc
    if abs(w2a.const_term) + abs(w2b.const_term) > abs(v2a.const_term) + abs(v2b.const_term):
        v2a, v2b = w2a, w2b
    # normalize columns so the change is near the identity when possible
    n1 = v1a if abs(v1a.const_term) >= abs(v1b.const_term) else v1b
    n2 = v2b if abs(v2b.const_term) >= abs(v2a.const_term) else v2a
    inv1, inv2 = jet_inverse_unit(n1), jet_inverse_unit(n2)
    v1a, v1b = v1a * inv1, v1b * inv1
    v2a, v2b = v2a * inv2, v2b * inv2
    # old coords = V * new coords; the change (old -> new) is V^{-1}
    detv = v1a * v2b - v2a * v1b
    idet = jet_inverse_unit(detv)
    u = (v2b * idet) * x + (-1.0 * v2a * idet) * y
    v = (-1.0 * v1b * idet) * x + (v1a * idet) * y
    ch = Change(u, v, label="diagonalize")
    return ch.apply(jm), ch, rho, blam


def _is_identity(ch: Change, tol: float) -> bool:
    orders = ch.u.orders
    x = Jet3.variable("x", orders)
    y = Jet3.variable("y", orders)
    return (ch.u - x).maxabs() <= tol and (ch.v - y).maxabs() <= tol


def _jet_from_yl(coef_yl: np.ndarray, orders) -> Jet3:
    """Lift a (y, lambda) coefficient block to a full Jet3."""
    j = Jet3.zeros(*orders)
    ny = min(coef_yl.shape[0] - 1, orders[1])
    nl = min(coef_yl.shape[1] - 1, orders[2])
    j.c[0, : ny + 1, : nl + 1] = coef_yl[: ny + 1, : nl + 1]
    return j


def _pad_lambda(j: Jet3, extra: int) -> Jet3:
    nx, ny, nl = j.orders
    out = Jet3.zeros(nx, ny, nl + extra)
    out.c[:, :, : nl + 1] = j.c
    return out


def _trunc_lambda(j: Jet3, nl: int) -> Jet3:
    return Jet3(j.c[:, :, : nl + 1].copy())


def reduce_normal_form(
    jm: JetMap,
    q: int = 1,
    kill_tol: float = 1e-12,
    detect_tol: float = 1e-9,
    max_passes: int | None = None,
) -> NormalFormResult:
    """Full reduction pipeline: diagonalize, straighten the strong stable
    manifold to {x = 0}, Schroder-linearize on it, kill the x*y^j terms with
    the convergent product, kill x^j (2 <= j <= k) inductively, and rescale
    the leading coefficient to 1.  Passes repeat until every targeted
    coefficient is below kill_tol (the changes interact at higher order).

    Each x^j kill divides by rho - rho^j, which spends one lambda order, so
    after detecting k the reduction reruns in a lambda-padded algebra (pad =
    k - 1) and truncates the result back to the requested orders.
    """
    nl_user = jm.orders[2]
    probe = _reduce_core(jm, q, kill_tol, detect_tol, max_passes, detect_only=True)
    pad = max(0, probe.k - 1)
    if pad:
        jm_p = JetMap(_pad_lambda(jm.f1, pad), _pad_lambda(jm.f2, pad))
        res = _reduce_core(jm_p, q, kill_tol, detect_tol, max_passes, check_nl=nl_user)
        res = NormalFormResult(
            k=res.k,
            nu=res.nu,
            chain=[
                Change(_trunc_lambda(c.u, nl_user), _trunc_lambda(c.v, nl_user), c.label)
                for c in res.chain
            ],
            normalized=JetMap(
                _trunc_lambda(res.normalized.f1, nl_user),
                _trunc_lambda(res.normalized.f2, nl_user),
            ),
            rho=res.rho[: nl_user + 1],
            b=res.b[: nl_user + 1],
            passes=res.passes,
            killed_max=res.killed_max,
        )
    else:
        res = _reduce_core(jm, q, kill_tol, detect_tol, max_passes)
    return res


def _reduce_core(
    jm: JetMap,
    q: int = 1,
    kill_tol: float = 1e-12,
    detect_tol: float = 1e-9,
    max_passes: int | None = None,
    detect_only: bool = False,
    check_nl: int | None = None,
) -> NormalFormResult:
    orders = jm.orders
    nx, ny, nl = orders
    x = Jet3.variable("x", orders)
    y = Jet3.variable("y", orders)

    jaq = _linear_jets(jm)
    tr0 = jaq[0].const_term + jaq[3].const_term
    det0 = jaq[0].const_term * jaq[3].const_term - jaq[1].const_term * jaq[2].const_term
    disc0 = cmath.sqrt(tr0 * tr0 - 4.0 * det0)
    eig = [(tr0 + disc0) / 2.0, (tr0 - disc0) / 2.0]
    eig.sort(key=lambda e: abs(e - 1.0))
    if abs(eig[0] - 1.0) > 1e-12:
        raise ValueError(f"neutral multiplier {eig[0]} is not 1 (iterate q times first)")

    chain: list[Change] = []
    cur, ch, rho, blam = _diagonalize(jm)
    if not _is_identity(ch, kill_tol):
        chain.append(ch)
    else:
        cur = jm
    rho_poly = cur.f1.c[1, 0, :].copy()
    b_poly = cur.f2.c[0, 1, :].copy()
    rho = Jet3.from_lambda_poly(rho_poly, orders)
    blam = Jet3.from_lambda_poly(b_poly, orders)
    b0 = blam.const_term
    if not abs(b0) < 1.0:
        raise ValueError(f"second multiplier {b0} must be contracting")

    k: int | None = None
    if max_passes is None:
        max_passes = nx + ny + nl + 6

    cn = (check_nl if check_nl is not None else nl) + 1

    def targets(g: JetMap, kk) -> float:
        worst = float(np.max(np.abs(g.f1.c[0, 1:, :cn]))) if ny >= 1 else 0.0
        if nx >= 1:
            worst = max(worst, float(np.max(np.abs(g.f1.c[1, 1:, :cn]))) if ny >= 1 else 0.0)
        if kk is not None:
            if kk >= 2:
                worst = max(worst, float(np.max(np.abs(g.f1.c[2: kk + 1, :, :cn]))))
            lead = g.f1.c[kk + 1, :, :cn].copy()
            lead[0, 0] -= 1.0
            worst = max(worst, float(np.max(np.abs(lead))))
        if ny >= 2:
            worst = max(worst, float(np.max(np.abs(g.f2.c[0, 2:, :cn]))))
        worst = max(worst, float(np.max(np.abs(g.f2.c[1, 0, :cn]))))
        return worst

    passes = 0
    while passes < max_passes:
        passes += 1

        # 1. straighten the strong stable manifold {x = sigma(lam, y)} to {x = 0}
        if ny >= 1 and float(np.max(np.abs(cur.f1.c[0, 1:, :]))) > kill_tol:
            corr = Jet3.zeros(*orders)
            for j in range(1, ny + 1):
                rj = Jet3.from_lambda_poly(cur.f1.c[0, j, :], orders)
                denom = rho - blam**j
                cj = jet_div(rj, denom)
                corr = corr + cj * (y**j)
            ch = Change(x + corr, y.copy(), label="straighten-stable")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        # 2. Schroder linearization on {x = 0}
        if ny >= 2 and float(np.max(np.abs(cur.f2.c[0, 2:, :]))) > kill_tol:
            corr = Jet3.zeros(*orders)
            for j in range(2, ny + 1):
                rj = Jet3.from_lambda_poly(cur.f2.c[0, j, :], orders)
                denom = blam - blam**j
                corr = corr + jet_div(rj, denom) * (y**j)
            ch = Change(x.copy(), y + corr, label="schroder")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        # 3. kill the y-dependence of the x-coefficient via the infinite product
        if ny >= 1 and float(np.max(np.abs(cur.f1.c[1, 1:, :]))) > kill_tol:
            a1 = _jet_from_yl(cur.f1.c[1, :, :], orders)
            a1 = jet_div(a1, rho)
            # a1(lam, 0) = 1 by definition; drop the division roundoff there
            a1.c[0, 0, :] = 0.0
            a1.c[0, 0, 0] = 1.0
            phi = Jet3.const(1.0, orders)
            bpow = Jet3.const(1.0, orders)
            for _ in range(500):
                factor = a1.subs_y_scaled(bpow)
                dev = factor - Jet3.const(1.0, orders)
                if dev.maxabs() < 1e-16:
                    break
                phi = phi * factor
                bpow = bpow * blam
            else:
                raise NewtonFailure("a1-killing product did not converge (|b| too close to 1)")
            ch = Change(x * phi, y.copy(), label="kill-a1")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        # 4. multiplicity detection (first complete pass only)
        if k is None:
            scale = max(1.0, cur.f1.maxabs())
            for j in range(2, nx + 1):
                if abs(cur.f1.c[j, 0, 0]) > detect_tol * scale:
                    k = j - 1
                    break
            if k is None:
                raise ValueError(f"multiplicity k not determined within x-order {nx}")
            if k % q:
                raise ValueError(f"k = {k} is not a multiple of q = {q}")
            if k + 1 > nx:
                raise ValueError("x truncation order too small for detected k")
            if detect_only:
                return NormalFormResult(
                    k=k, nu=k // q, chain=chain, normalized=cur,
                    rho=rho_poly, b=b_poly, passes=passes, killed_max=math.inf,
                )

        # 5. kill x^j for 2 <= j <= k.  The change (x + c(lam,y) x^j, y) acts
        #    as a_j -> a_j + rho^j c(lam, b y) - rho c(lam, y): per y-degree m
        #    the denominator rho^j b^m - rho is a unit for m >= 1, while the
        #    y-free part needs the lambda-valuation division by rho^j - rho
        #    (this is where one lambda order is spent).
        for j in range(2, k + 1):
            if float(np.max(np.abs(cur.f1.c[j, :, :]))) <= kill_tol:
                continue
            rho_j = rho**j
            denom0 = rho_j - rho
            if denom0.maxabs() < 1e-14:
                raise ZeroDivisionError(f"rho^{j} - rho vanishes identically: degenerate family")
            corr = jet_div_lambda_valuation(
                -1.0 * Jet3.from_lambda_poly(cur.f1.c[j, 0, :], orders),
                denom0,
                tol=math.sqrt(kill_tol),
            )
            bpow = blam.copy()
            for m_ in range(1, ny + 1):
                row = Jet3.from_lambda_poly(cur.f1.c[j, m_, :], orders)
                corr = corr + jet_div(-1.0 * row, rho_j * bpow - rho) * (y**m_)
                bpow = bpow * blam
            ch = Change(x + corr * (x**j), y.copy(), label=f"kill-x{j}")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        # 6a. scalar (y-free) rescale normalizes a_{k+1}(lam, 0) to 1 without
        #     disturbing the x*y^j terms
        lead_scalar = cur.f1.c[k + 1, 0, :]
        if float(np.max(np.abs(lead_scalar - np.eye(1, nl + 1)[0]))) > kill_tol:
            c = jet_root(Jet3.from_lambda_poly(lead_scalar, orders), k)
            ch = Change(c * x, y.copy(), label="rescale-leading")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        # 6b. the y-dependent part of a_{k+1} is killed additively by
        #     X = x + e(lam, y) x^{k+1}; the cohomological denominator
        #     rho^{k+1} b^m - rho is a unit for every y-degree m >= 1
        lead_ydep = cur.f1.c[k + 1, 1:, :]
        if ny >= 1 and float(np.max(np.abs(lead_ydep))) > kill_tol:
            rho_k1 = rho ** (k + 1)
            corr = Jet3.zeros(*orders)
            bpow = blam.copy()
            for m_ in range(1, ny + 1):
                dev_m = Jet3.from_lambda_poly(cur.f1.c[k + 1, m_, :], orders)
                denom = rho_k1 * bpow - rho
                corr = corr + jet_div(-1.0 * dev_m, denom) * (y**m_)
                bpow = bpow * blam
            ch = Change(x + corr * (x ** (k + 1)), y.copy(), label="kill-lead-ydep")
            if not _is_identity(ch, kill_tol / 10):
                chain.append(ch)
                cur = ch.apply(cur)

        rho_poly = cur.f1.c[1, 0, :].copy()
        b_poly = cur.f2.c[0, 1, :].copy()
        rho = Jet3.from_lambda_poly(rho_poly, orders)
        blam = Jet3.from_lambda_poly(b_poly, orders)
        if targets(cur, k) <= kill_tol:
            break
    else:
        raise NewtonFailure(
            f"normal form did not stabilize after {max_passes} passes "
            f"(worst coefficient {targets(cur, k):.3e})"
        )

    return NormalFormResult(
        k=k,
        nu=k // q,
        chain=chain,
        normalized=cur,
        rho=rho_poly,
        b=b_poly,
        passes=passes,
        killed_max=targets(cur, k),
    )


# ---------------------------------------------------------------------------
# germ extraction from a Henon family at a unity parameter
# ---------------------------------------------------------------------------


def _shift_poly(coeffs, lam_star: complex) -> np.ndarray:
    """Coefficients of p(lam_star + d) as a polynomial in d."""
    p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=complex))
    q = p(np.polynomial.Polynomial([lam_star, 1.0]))
    return np.asarray(q.coef, dtype=complex)


def _polymul_trunc(a, b, nl: int) -> np.ndarray:
    return np.convolve(a, b)[: nl + 1]


def _family_step_poly(shifted_factors, px, pw, nl: int):
    """One map application on a lambda-poly point (px(d), pw(d))."""
    for coeffs, bpoly in shifted_factors:
        acc = np.zeros(nl + 1, dtype=complex)
        acc[: len(coeffs[-1])] = coeffs[-1][: nl + 1]
        for ck in reversed(coeffs[:-1]):
            acc = _polymul_trunc(acc, px, nl)
            acc[: min(nl + 1, len(ck))] += ck[: nl + 1]
        px, pw = acc - _polymul_trunc(bpoly, pw, nl), px
    return px, pw


def germ_from_family(family, lam_star: complex, point, n: int, q: int, orders) -> JetMap:
    """Jet of f^{n*q} around the continued period-n point, in (x, y, d).

    ``d`` is the parameter offset lambda - lam_star.  Requires the point to
    be holomorphically continuable, i.e. the f^n multiplier at lam_star is a
    primitive q-th root of unity different from 1 when q >= 2 (for q = 1 the
    fixed point has a square-root branch and no such germ exists).
    """
    nx, ny, nl = orders
    shifted = []
    for f in family.factors:
        coeffs = [_shift_poly(c, lam_star)[: nl + 1] for c in f.coeffs]
        bp = _shift_poly(f.b, lam_star)[: nl + 1]
        shifted.append((coeffs, bp))

    # point branch p(d) by Newton in lambda-poly arithmetic
    px = np.zeros(nl + 1, dtype=complex)
    pw = np.zeros(nl + 1, dtype=complex)
    px[0], pw[0] = point
    m_star = family.at(lam_star)
    jac = m_star.orbit_differential(point, n) - np.eye(2)
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if abs(det) < 1e-12:
        raise ValueError("period-n point is not holomorphically continuable (multiplier 1)")
    inv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]], dtype=complex) / det
    for _ in range(nl + 3):
        fx, fw = px, pw
        for _ in range(n):
            fx, fw = _family_step_poly(shifted, fx, fw, nl)
        rx, rw = fx - px, fw - pw
        px = px - (inv[0, 0] * rx + inv[0, 1] * rw)
        pw = pw - (inv[1, 0] * rx + inv[1, 1] * rw)

    # germ of f^{n q} around the branch
    pxj = Jet3.from_lambda_poly(px, orders)
    pwj = Jet3.from_lambda_poly(pw, orders)
    gx = Jet3.variable("x", orders) + pxj
    gy = Jet3.variable("y", orders) + pwj
    for _ in range(n * q):
        for coeffs, bpoly in shifted:
            acc = Jet3.from_lambda_poly(coeffs[-1], orders)
            for ck in reversed(coeffs[:-1]):
                acc = acc * gx + Jet3.from_lambda_poly(ck, orders)
            gx, gy = acc - Jet3.from_lambda_poly(bpoly, orders) * gy, gx
    g1 = gx - pxj
    g2 = gy - pwj
    # the branch is periodic, so the residual constants are solver noise
    g1.c[0, 0, :] = 0.0
    g2.c[0, 0, :] = 0.0
    return JetMap(g1, g2)


# ---------------------------------------------------------------------------
# Fatou-type coordinate / parameter change: the model family
# ---------------------------------------------------------------------------


def _poly_eval(coeffs, lam):
    acc = 0.0
    for c in reversed(list(coeffs)):
        acc = acc * lam + complex(c)
    return acc


def sector_root(zeta: complex, k: int) -> complex:
    """k-th root with argument in (-3*pi/(2k), pi/(2k)] (transit branch)."""
    if k == 1:
        return zeta
    a = cmath.phase(zeta)
    if a > math.pi / 2.0:
        a -= TWO_PI
    return abs(zeta) ** (1.0 / k) * cmath.exp(1j * a / k)


@dataclass
class ModelFamily:
    """Transit model in Fatou-type coordinates z = rho^{k+1}/(k x^k), w = y.

    ``f_u(u)`` returns a callable (z, w) -> (z', w'); the first coordinate is
    (1+u)z - 1 + eta_u(z, w) with eta measured to decay like |z|^{-gamma}.
    """

    nf: NormalFormResult
    k: int
    gamma: float
    u_poly: np.ndarray          # u as a polynomial in lambda
    M: float
    decay_exponent: float
    decay_ok: bool
    worst_sample: tuple
    R_proof: float
    probe_R: float
    s0: float

    def lambda_of_u(self, u: complex) -> complex:
        du = np.polynomial.polynomial.polyder(self.u_poly)
        lam = complex(u) / complex(du[0]) if abs(complex(du[0])) > 0 else 0.0
        for _ in range(60):
            r = _poly_eval(self.u_poly, lam) - u
            dr = _poly_eval(du, lam)
            step = r / dr
            lam -= step
            if abs(step) < 1e-16 * max(1.0, abs(lam)):
                break
        return lam

    def u_of_lambda(self, lam: complex) -> complex:
        return _poly_eval(self.u_poly, lam)

    def rho_of_lambda(self, lam: complex) -> complex:
        return _poly_eval(self.nf.rho, lam)

    def b_of_u(self, u: complex) -> complex:
        return _poly_eval(self.nf.b, self.lambda_of_u(u))

    def f_u(self, u: complex):
        lam = self.lambda_of_u(u)
        rho = self.rho_of_lambda(lam)
        scale = rho ** (self.k + 1) / self.k
        f1, f2 = self.nf.normalized.f1, self.nf.normalized.f2
        k = self.k

        def apply(z: complex, w: complex = 0.0) -> tuple[complex, complex]:
            xx = sector_root(scale / z, k)
            x1 = f1.eval(xx, w, lam)
            y1 = f2.eval(xx, w, lam)
            return scale / (x1**k), y1

        return apply

    def eta_theta(self, u: complex):
        fu = self.f_u(u)
        bu = self.b_of_u(u)

        def eta(z, w=0.0):
            return fu(z, w)[0] - ((1.0 + u) * z - 1.0)

        def theta(z, w=0.0):
            return fu(z, w)[1] - bu * w

        return eta, theta


def fatou_parameter_change(
    nf: NormalFormResult,
    probe_R: float = 30.0,
    s0: float = 0.5,
    n_radii: int = 8,
    n_args: int = 9,
) -> ModelFamily:
    """Build the model family and measure the decay constant of eta.

    Samples |eta_u| * |z|^gamma over radii in [probe_R, 100*probe_R] and a
    fan of admissible arguments; the fitted log-log slope should be about
    -gamma (k = 1 gives exponent -1).  A slope above -gamma/2 flags a decay
    violation, reported with the worst sample.
    """
    k = nf.k
    gamma = 1.0 / k
    orders = nf.normalized.orders
    rho_jet = Jet3.from_lambda_poly(nf.rho, orders)
    u_jet = jet_inverse_unit(rho_jet**k) - Jet3.const(1.0, orders)
    u_poly = u_jet.lambda_poly()

    mf = ModelFamily(
        nf=nf, k=k, gamma=gamma, u_poly=u_poly,
        M=0.0, decay_exponent=0.0, decay_ok=True, worst_sample=(),
        R_proof=0.0, probe_R=probe_R, s0=s0,
    )

    radii = np.logspace(math.log10(probe_R), math.log10(probe_R * 100.0), n_radii)
    args = np.linspace(-3.0 * math.pi / 8.0 + 0.2, 11.0 * math.pi / 8.0 - 0.2, n_args)
    u_samples = [0.0, 1e-3 * 1j, -1e-3 * 1j * 0.5 + 1e-3 * 0.3]
    w_samples = [0.0, 0.5 * s0, 0.5j * s0]
    best = (0.0, None)
    per_radius_max = np.zeros(n_radii)
    for u in u_samples:
        eta, _theta = mf.eta_theta(u)
        for ir, r in enumerate(radii):
            for a in args:
                z = r * cmath.exp(1j * a)
                for w in w_samples:
                    v = abs(eta(z, w))
                    per_radius_max[ir] = max(per_radius_max[ir], v)
                    weighted = v * r**gamma
                    if weighted > best[0]:
                        best = (weighted, (z, w, u, v))
    xs = np.log(radii)
    ys = np.log(np.maximum(per_radius_max, 1e-300))
    slope = float(np.polyfit(xs, ys, 1)[0])
    mf.M = float(best[0])
    mf.decay_exponent = slope
    mf.decay_ok = slope <= -0.5 * gamma
    mf.worst_sample = best[1]
    mf.R_proof = (1e5 * k * max(mf.M, 1e-6)) ** k
    return mf


# ---------------------------------------------------------------------------
# transit window and certificates
# ---------------------------------------------------------------------------


def transit_window(n: int, gamma: float) -> tuple[complex, float]:
    return (-2j * math.pi / n, n ** (-1.0 - gamma / 2.0))


def in_window(u: complex, n: int, gamma: float) -> bool:
    c, r = transit_window(n, gamma)
    return abs(u - c) <= r * (1.0 + 1e-9)


def in_omega(z: complex, R: float) -> bool:
    """Membership in Omega_R = {|z| > R, arg z not in the forbidden sector}."""
    if abs(z) <= R:
        return False
    a = cmath.phase(z)
    return not (-5.0 * math.pi / 8.0 <= a <= -3.0 * math.pi / 8.0)


def in_sector_in(z: complex) -> bool:
    return 3.0 * math.pi / 4.0 < cmath.phase(z) % TWO_PI < 5.0 * math.pi / 4.0


def in_sector_out(z: complex) -> bool:
    a = cmath.phase(z)
    return -math.pi / 4.0 < a < math.pi / 4.0


def winding_number(fun, center: complex, radius: float, samples: int = 64, max_samples: int = 4096) -> int:
    """Winding of fun(u) around 0 as u traverses the circle, adaptively sampled."""
    while samples <= max_samples:
        vals = [fun(center + radius * cmath.exp(2j * math.pi * kk / samples)) for kk in range(samples)]
        total = 0.0
        ok = True
        for i in range(samples):
            a, bb = vals[i], vals[(i + 1) % samples]
            if a == 0 or bb == 0:
                ok = False
                break
            d = cmath.phase(bb / a)
            if abs(d) > math.pi / 2.0:
                ok = False
                break
            total += d
        if ok:
            return round(total / TWO_PI)
        samples *= 2
    raise NewtonFailure("winding sampling did not stabilize")


@dataclass(frozen=True)
class TransitProblem:
    model: object               # callable u -> (callable z -> z') for 1D
    gamma: float
    M: float
    R: float
    z_in: complex
    z_out: complex
    n: int
    derivative: object = None   # optional: u -> (callable z -> f_u'(z))


@dataclass
class TransitSolution:
    u: complex
    n: int
    l: int
    m: int
    forward: list[complex]
    backward: list[complex]
    endpoint_error: float
    derivative_product: complex
    certificates: dict = field(default_factory=dict)


def linear_map(u: complex):
    return lambda z: (1.0 + u) * z - 1.0


def linear_orbit_end(u: complex, z: complex, n: int) -> complex:
    return (1.0 + u) ** n * (z - 1.0 / u) + 1.0 / u


def feasible_n_estimate(z_in: complex, z_out: complex, gamma: float) -> int:
    """Smallest n for which the root u(z_in, z_out) can sit inside W_n.

    The root lies about sqrt((2 pi^2)^2 + (2 pi |dz|)^2)/n^2 from the window
    center while the radius is n^{-1-gamma/2}, so feasibility needs
    n^{1-gamma/2} >= that constant.
    """
    const = math.hypot(2.0 * math.pi**2, 2.0 * math.pi * abs(z_in - z_out))
    return int(math.ceil(const ** (1.0 / (1.0 - gamma / 2.0)))) + 1


def linear_transit(z_in: complex, z_out: complex, n: int, gamma: float = 1.0, certify: bool = True):
    """Transit parameter for the affine model l_u(z) = (1+u)z - 1.

    Returns (u, certificates).  Certificates: winding of the connecting ratio
    around 1 on the window boundary, and of (1+u)^n around 1.  The window
    W_n = B(-2 pi i/n, n^{-1-gamma/2}) contains the root only above the
    feasibility threshold (see feasible_n_estimate); below it the error
    carries that estimate.
    """
    c, r = transit_window(n, gamma)

    def g(u: complex) -> complex:
        return linear_orbit_end(u, z_in, n) - z_out

    cert = {}
    if certify:
        l = n // 2
        m = n - l

        def ratio_minus_1(u: complex) -> complex:
            top = (1.0 + u) ** l * (z_in - 1.0 / u) + 1.0 / u
            bot = (1.0 + u) ** (-m) * (z_out - 1.0 / u) + 1.0 / u
            return (top - 1.0 / u) / (bot - 1.0 / u) - 1.0

        w = winding_number(ratio_minus_1, c, r)
        cert["winding"] = w
        cert["winding_power"] = winding_number(lambda u: (1.0 + u) ** n - 1.0, c, r)
        if w != 1:
            raise NoRootInWindow(
                f"connecting-ratio winding = {w} on the window boundary for n = {n}",
                n_estimate=feasible_n_estimate(z_in, z_out, gamma),
            )

    u = c
    for _ in range(80):
        gu = g(u)
        du = n * (1.0 + u) ** (n - 1) * (z_in - 1.0 / u) + ((1.0 + u) ** n - 1.0) / u**2
        step = gu / du
        u -= step
        if abs(step) < 1e-18 * max(1.0, abs(u)):
            break
    if abs(g(u)) > 1e-10:
        raise NewtonFailure(f"linear transit residual {abs(g(u)):.3e}")
    if not in_window(u, n, gamma):
        raise NoRootInWindow(
            f"solution {u} left the window W_{n}",
            n_estimate=feasible_n_estimate(z_in, z_out, gamma),
        )
    return u, cert


def _numeric_derivative(f, z: complex, h: float) -> complex:
    return (f(z + h) - f(z - h)) / (2.0 * h)


def _backward_step(fu, target: complex, u: complex, dfu=None, tol: float = 1e-13) -> complex:
    zeta = (target + 1.0) / (1.0 + u)  # affine predictor
    for _ in range(50):
        r = fu(zeta) - target
        if abs(r) < tol * max(1.0, abs(target)):
            return zeta
        d = dfu(zeta) if dfu is not None else _numeric_derivative(fu, zeta, 1e-6 * max(1.0, abs(zeta)))
        zeta -= r / d
    raise BackwardNewtonFailure(f"backward Newton stalled at target {target}")


def _forward_orbit(fu, z: complex, steps: int) -> list[complex]:
    pts = [z]
    for _ in range(steps):
        z = fu(z)
        pts.append(z)
    return pts


def _backward_orbit(fu, z: complex, steps: int, u: complex, dfu=None) -> list[complex]:
    pts = [z]
    for _ in range(steps):
        z = _backward_step(fu, z, u, dfu)
        pts.append(z)
    return pts


def transit_solve_1d(tp: TransitProblem, winding_samples: int = 64) -> TransitSolution:
    """Certified transit parameter: f_u^n(z_in) = z_out with u in W_n.

    Existence/uniqueness is certified by the argument principle on the window
    boundary before Newton runs from the center; the solution carries the
    forbidden-region, orbit-lower-bound and derivative-product certificates.
    """
    n, gamma = tp.n, tp.gamma
    if not in_sector_in(tp.z_in):
        raise ValueError(f"z_in = {tp.z_in} is not in the incoming sector")
    if not in_sector_out(tp.z_out):
        raise ValueError(f"z_out = {tp.z_out} is not in the outgoing sector")
    l = n // 2
    m = n - l
    c, r = transit_window(n, gamma)

    def dfu_of(u):
        if tp.derivative is None:
            return None
        return tp.derivative(u)

    def match(u: complex) -> complex:
        fu = tp.model(u)
        fwd = _forward_orbit(fu, tp.z_in, l)[-1]
        back = _backward_orbit(fu, tp.z_out, m, u, dfu_of(u))[-1]
        return (fwd - 1.0 / u) / (back - 1.0 / u) - 1.0

    w = winding_number(match, c, r, samples=winding_samples)
    if w != 1:
        raise NoRootInWindow(
            f"window winding = {w} for n = {n}",
            n_estimate=feasible_n_estimate(tp.z_in, tp.z_out, gamma),
        )

    u = c
    h = 1e-4 * r
    for _ in range(60):
        gu = match(u)
        if abs(gu) < 1e-13:
            break
        d = (match(u + h) - match(u - h)) / (2.0 * h)
        step = gu / d
        if abs(step) > r:
            step *= r / abs(step)
        u -= step
    else:
        raise NewtonFailure("transit Newton did not converge in the window")

    fu = tp.model(u)
    dfu = dfu_of(u)
    forward = _forward_orbit(fu, tp.z_in, n)
    backward = _backward_orbit(fu, tp.z_out, m, u, dfu)
    endpoint_error = abs(forward[-1] - tp.z_out)

    prod = complex(1.0)
    for z in forward[:-1]:
        d = dfu(z) if dfu is not None else _numeric_derivative(fu, z, 1e-7 * max(1.0, abs(z)))
        prod *= d

    certificates = {
        "winding": w,
        "forbidden_ok": True,
        "derivative_ok": bool(abs(prod - 1.0) <= 0.2),
        "lower_bounds_ok": True,
    }
    for idx, z in enumerate(forward):
        if not in_omega(z, tp.R):
            certificates["forbidden_ok"] = False
            raise ForbiddenRegionViolation(f"orbit point {idx} = {z} outside Omega_R", index=idx)
    z0 = abs(tp.z_in)
    for j, z in enumerate(forward[: l + 1]):
        if abs(z) < min(z0 / 2.0 + j / 10.0, n / 10.0) - 1e-9:
            certificates["lower_bounds_ok"] = False
    zb = abs(tp.z_out)
    for j, z in enumerate(backward):
        if abs(z) < min(zb / 2.0 + j / 10.0, n / 10.0) - 1e-9:
            certificates["lower_bounds_ok"] = False

    return TransitSolution(
        u=u, n=n, l=l, m=m,
        forward=forward, backward=backward,
        endpoint_error=endpoint_error,
        derivative_product=prod,
        certificates=certificates,
    )


def verify_transit_1d(tp: TransitProblem, sol: TransitSolution, prec_bits: int = 106) -> dict:
    """Independent re-verification at twice the working precision."""
    with mpmath.workprec(prec_bits):
        u = mpmath.mpc(sol.u)
        fu = tp.model(u)
        z = mpmath.mpc(tp.z_in)
        prod = mpmath.mpc(1.0)
        region_ok = True
        bounds_ok = True
        z0 = abs(mpmath.mpc(tp.z_in))
        for j in range(sol.n):
            az = abs(z)
            arg = float(mpmath.arg(z))
            if az <= tp.R or (-5.0 * math.pi / 8.0 <= arg <= -3.0 * math.pi / 8.0):
                region_ok = False
            if j <= sol.l and az < min(z0 / 2 + j / mpmath.mpf(10), sol.n / mpmath.mpf(10)) - mpmath.mpf("1e-9"):
                bounds_ok = False
            h = mpmath.mpf(10) ** (-12) * max(1.0, az)
            d = (fu(z + h) - fu(z - h)) / (2 * h)
            prod *= d
            z = fu(z)
        endpoint = abs(z - mpmath.mpc(tp.z_out))
        return {
            "endpoint_error": float(endpoint),
            "region_ok": region_ok,
            "lower_bounds_ok": bounds_ok,
            "derivative_product_dev": float(abs(prod - 1)),
            "derivative_ok": bool(abs(prod - 1) <= 0.2),
        }


# ---------------------------------------------------------------------------
# 2D: vertical-graph transforms and the two-dimensional transit
# ---------------------------------------------------------------------------


@dataclass
class VerticalGraph:
    """Analytic graph w -> z over the disk |w| <= domain_radius.

    Stored as Taylor coefficients recovered from samples on a circle
    (spectral accuracy for graphs of slope <= 1/100).
    """

    coeffs: np.ndarray
    domain_radius: float

    def __call__(self, w: complex) -> complex:
        acc = complex(self.coeffs[-1])
        for ck in reversed(self.coeffs[:-1]):
            acc = acc * w + complex(ck)
        return acc

    def derivative(self, w: complex) -> complex:
        nn = len(self.coeffs) - 1
        acc = complex(self.coeffs[-1]) * nn
        for kk in range(nn - 1, 0, -1):
            acc = acc * w + complex(self.coeffs[kk]) * kk
        return acc

    def slope(self, samples: int = 64) -> float:
        r = 0.9 * self.domain_radius
        return max(
            abs(self.derivative(r * cmath.exp(2j * math.pi * kk / samples)))
            for kk in range(samples)
        )

    @classmethod
    def constant(cls, z0: complex, domain_radius: float) -> "VerticalGraph":
        return cls(coeffs=np.array([z0], dtype=complex), domain_radius=domain_radius)


def graph_transform_pullback(
    f2d,
    phi: VerticalGraph,
    u: complex,
    b_u: complex,
    s: float,
    degree: int = 32,
    slope_cap: float = 1.0 / 100.0,
    residual_tol: float = 1e-9,
) -> VerticalGraph:
    """One backward graph transform: the vertical graph of f_u^{-1}(graph phi).

    Solves (1+u)z - 1 + eta_u(z, w) = phi(b_u w + theta_u(z, w)) per w-node on
    a sampling circle, then recovers Taylor coefficients by FFT.  The output
    slope is checked against the cap and membership residuals against
    residual_tol.
    """
    if phi.slope() > slope_cap * (1.0 + 1e-6):
        raise ValueError(f"input graph slope {phi.slope():.3e} exceeds {slope_cap}")
    nnode = degree + 1
    rs = 0.9 * s
    nodes = rs * np.exp(2j * np.pi * np.arange(nnode) / nnode)
    sol = np.zeros(nnode, dtype=complex)
    for i, w in enumerate(nodes):
        z = (1.0 + phi(b_u * w)) / (1.0 + u)
        for _ in range(60):
            z1, w1 = f2d(z, w)
            r = z1 - phi(w1)
            if abs(r) < 1e-14 * max(1.0, abs(z)):
                break
            h = 1e-6 * max(1.0, abs(z))
            za, wa = f2d(z + h, w)
            zb, wb = f2d(z - h, w)
            d = ((za - phi(wa)) - (zb - phi(wb))) / (2.0 * h)
            z -= r / d
        else:
            raise NewtonFailure(f"graph pullback Newton stalled at node {i}")
        sol[i] = z
    coeffs = np.fft.fft(sol) / nnode
    coeffs = coeffs * rs ** (-np.arange(nnode, dtype=float))
    out = VerticalGraph(coeffs=coeffs, domain_radius=s)
    if out.slope() > slope_cap * (1.0 + 1e-6):
        raise ValueError(f"pullback slope {out.slope():.3e} exceeds {slope_cap}")
    worst = 0.0
    for kk in range(8):
        w = 0.5 * s * cmath.exp(2j * math.pi * kk / 8)
        z = out(w)
        z1, w1 = f2d(z, w)
        worst = max(worst, abs(z1 - phi(w1)))
    if worst > residual_tol:
        raise NewtonFailure(f"pullback membership residual {worst:.3e} > {residual_tol}")
    return out


@dataclass(frozen=True)
class TransitProblem2D:
    model: object               # callable u -> (callable (z, w) -> (z', w'))
    b_of_u: object              # callable u -> b_u
    gamma: float
    M: float
    R: float
    s: float
    p_in: tuple[complex, complex]
    z_out: complex              # vertical target leaf {z = z_out}
    n: int


def transit_solve_2d(tp: TransitProblem2D, winding_samples: int = 32) -> TransitSolution:
    """2D transit at model-map level: f_u^l(p_in) on the m-times pulled-back
    vertical leaf through (z_out, *), with the window winding certificate."""
    n, gamma = tp.n, tp.gamma
    l = n // 2
    m = n - l
    c, r = transit_window(n, gamma)
    if not in_sector_in(tp.p_in[0]):
        raise ValueError(f"p_in = {tp.p_in} is not over the incoming sector")
    if not in_sector_out(tp.z_out):
        raise ValueError(f"target leaf {tp.z_out} is not over the outgoing sector")

    def pulled_graph(u: complex) -> VerticalGraph:
        fu = tp.model(u)
        bu = tp.b_of_u(u)
        g = VerticalGraph.constant(tp.z_out, tp.s)
        for _ in range(m):
            g = graph_transform_pullback(fu, g, u, bu, tp.s)
        return g

    def push(u: complex) -> tuple[complex, complex]:
        fu = tp.model(u)
        z, w = tp.p_in
        for _ in range(l):
            z, w = fu(z, w)
        return z, w

    def match(u: complex) -> complex:
        zl, wl = push(u)
        g = pulled_graph(u)
        return (zl - 1.0 / u) / (g(wl) - 1.0 / u) - 1.0

    w = winding_number(match, c, r, samples=winding_samples, max_samples=256)
    if w != 1:
        raise NoRootInWindow(
            f"2D window winding = {w} for n = {n}",
            n_estimate=feasible_n_estimate(tp.p_in[0], tp.z_out, gamma),
        )

    u = c
    h = 1e-4 * r
    for _ in range(40):
        gu = match(u)
        if abs(gu) < 1e-11:
            break
        d = (match(u + h) - match(u - h)) / (2.0 * h)
        step = gu / d
        if abs(step) > r:
            step *= r / abs(step)
        u -= step
    else:
        raise NewtonFailure("2D transit Newton did not converge")

    fu = tp.model(u)
    g = pulled_graph(u)
    zw = [tp.p_in]
    for _ in range(n):
        zw.append(fu(*zw[-1]))
    zl, wl = zw[l]
    membership = abs(zl - g(wl))

    certificates = {"winding": w, "forbidden_ok": True, "derivative_ok": True}
    for idx, (z, _wv) in enumerate(zw):
        if not in_omega(z, tp.R):
            certificates["forbidden_ok"] = False
            raise ForbiddenRegionViolation(f"orbit point {idx} = {z} outside Omega_R", index=idx)

    prod = complex(1.0)
    for (z, wv) in zw[:-1]:
        h2 = 1e-7 * max(1.0, abs(z))
        prod *= (fu(z + h2, wv)[0] - fu(z - h2, wv)[0]) / (2.0 * h2)
    certificates["derivative_ok"] = bool(abs(prod - 1.0) <= 0.2)

    return TransitSolution(
        u=u, n=n, l=l, m=m,
        forward=[p[0] for p in zw],
        backward=[],
        endpoint_error=membership,
        derivative_product=prod,
        certificates={**certificates, "leaf_membership": membership},
    )


def measure_vertical_contraction(tp: TransitProblem2D, sol: TransitSolution, offset: float = 0.05) -> float:
    """Log-rate of contraction along the m-times pulled-back vertical leaf.

    Takes two nearby points on the solution leaf through f^l(p_in) and
    regresses the log displacement while pushing forward; the theorem
    predicts the slope log|b|.
    """
    fu = tp.model(sol.u)
    bu = tp.b_of_u(sol.u)
    g = VerticalGraph.constant(tp.z_out, tp.s)
    for _ in range(sol.m):
        g = graph_transform_pullback(fu, g, sol.u, bu, tp.s)
    z, w = tp.p_in
    for _ in range(sol.l):
        z, w = fu(z, w)
    w0, w1 = w, w + offset * tp.s
    p = (g(w0), w0)
    q = (g(w1), w1)
    logs = []
    floor = 1e-6 * offset * tp.s  # below this the leaf interpolation noise dominates
    for _ in range(min(sol.m, 60)):
        d = math.hypot(abs(p[0] - q[0]), abs(p[1] - q[1]))
        if d <= floor or not math.isfinite(d):
            break
        logs.append(math.log(d))
        p = fu(*p)
        q = fu(*q)
    xs = np.arange(len(logs))
    return float(np.polyfit(xs, np.array(logs), 1)[0])


def verify_transit_2d(tp: TransitProblem2D, sol: TransitSolution, prec_bits: int = 106) -> dict:
    """Re-verify the 2D theorem statement at twice the working precision:
    the n-th forward image of p_in returns to the target vertical leaf."""
    with mpmath.workprec(prec_bits):
        u = mpmath.mpc(sol.u)
        fu = tp.model(u)
        z, w = mpmath.mpc(tp.p_in[0]), mpmath.mpc(tp.p_in[1])
        region_ok = True
        dz = mpmath.mpc(1.0)
        for _ in range(sol.n):
            az = abs(z)
            arg = float(mpmath.arg(z))
            if az <= tp.R or (-5.0 * math.pi / 8.0 <= arg <= -3.0 * math.pi / 8.0):
                region_ok = False
            h = mpmath.mpf(10) ** (-12) * max(1.0, az)
            dz *= (fu(z + h, w)[0] - fu(z - h, w)[0]) / (2 * h)
            z, w = fu(z, w)
        return {
            "leaf_error": float(abs(z - mpmath.mpc(tp.z_out))),
            "region_ok": region_ok,
            "derivative_product_dev": float(abs(dz - 1)),
        }
