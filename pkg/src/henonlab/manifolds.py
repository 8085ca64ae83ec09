"""Power-series parameterization of stable/unstable manifolds.

The parameterization psi solves the conjugacy f^q(psi(t)) = psi(kappa * t)
coefficientwise (q = orbit period); the normalization is by unit eigenvector,
which differs from a derivative-normalized parameterization only by a linear
reparameterization t -> c*t.  Order estimates and circle certificates are
invariant under that rescaling.

Evaluation at large |t| rescales the argument into the validity disk and
pushes forward dynamically; growth statistics switch to extended precision
instead of overflowing.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import Escaped
from .escape import escape_radius
from .family import OVERFLOW, multipliers
from .periodic import PeriodicOrbit

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ManifoldSeries:
    base: PeriodicOrbit
    kappa: complex
    direction: str                  # 'unstable' | 'stable'
    eigvec: tuple[complex, complex]
    az: np.ndarray                  # coefficients of the first coordinate
    aw: np.ndarray
    r_valid: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.az) - 1

    @property
    def inverse(self) -> bool:
        return self.direction == "stable"

    def poly(self, t: complex) -> tuple[complex, complex]:
        z = complex(self.az[-1])
        w = complex(self.aw[-1])
        for k in range(len(self.az) - 2, -1, -1):
            z = z * t + complex(self.az[k])
            w = w * t + complex(self.aw[k])
        return (z, w)


def _eig_pair(d: np.ndarray, kappa: complex) -> tuple[complex, complex]:
    v1 = (d[0, 1], kappa - d[0, 0])
    v2 = (kappa - d[1, 1], d[1, 0])
    v = v1 if max(abs(v1[0]), abs(v1[1])) >= max(abs(v2[0]), abs(v2[1])) else v2
    norm = math.hypot(abs(v[0]), abs(v[1]))
    return (v[0] / norm, v[1] / norm)


def _build(m, saddle: PeriodicOrbit, n: int, inverse: bool) -> ManifoldSeries:
    k1, k2 = saddle.multipliers
    if not (abs(k1) > 1.0 > abs(k2)):
        raise ValueError(f"series parameterization needs a saddle orbit, got multipliers {saddle.multipliers}")
    q = saddle.period
    d = m.orbit_differential(saddle.base, q, inverse=inverse)
    kappa, _ = multipliers(d)  # expanding eigenvalue of the generating map
    v = _eig_pair(d, kappa)

    az = np.zeros(n + 1, dtype=complex)
    aw = np.zeros(n + 1, dtype=complex)
    az[0], aw[0] = saddle.base
    az[1], aw[1] = v

    ill = []
    eye = np.eye(2)
    for j in range(2, n + 1):
        fz, fw = az[: j + 1].copy(), aw[: j + 1].copy()
        for _ in range(q):
            fz, fw = m.apply_series(fz, fw, inverse=inverse)
        a = d - kappa**j * eye
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if abs(det) == 0.0:
            raise ZeroDivisionError(f"resonance at order {j}: kappa^j is an eigenvalue")
        inv_norm = (abs(a[0, 0]) + abs(a[0, 1]) + abs(a[1, 0]) + abs(a[1, 1])) / abs(det)
        if inv_norm > 1e12:
            ill.append(j)
        rz, rw = -fz[j], -fw[j]
        az[j] = (rz * a[1, 1] - rw * a[0, 1]) / det
        aw[j] = (a[0, 0] * rw - a[1, 0] * rz) / det

    r_valid = _validity_radius(az, aw)
    series = ManifoldSeries(
        base=saddle,
        kappa=kappa,
        direction="stable" if inverse else "unstable",
        eigvec=v,
        az=az,
        aw=aw,
        r_valid=r_valid,
        diagnostics={"ill_conditioned_orders": ill},
    )
    # the tail bound only sees computed coefficients; shrink until the
    # measured conjugacy residual actually certifies the radius
    resid = conjugacy_residual(series, m, series.r_valid)
    while resid > 1e-9 and series.r_valid > 1e-6:
        series.r_valid *= 0.7
        resid = conjugacy_residual(series, m, series.r_valid)
    series.diagnostics["residual"] = resid
    return series


def unstable_series(m, saddle: PeriodicOrbit, n: int = 40) -> ManifoldSeries:
    """Taylor coefficients of the unstable-manifold parameterization."""
    return _build(m, saddle, n, inverse=False)


def stable_series(m, saddle: PeriodicOrbit, n: int = 40) -> ManifoldSeries:
    """Stable manifold, built from the inverse map (eigenvalue 1/kappa_s)."""
    return _build(m, saddle, n, inverse=True)


def _validity_radius(az, aw, tail_tol: float = 1e-10, cap: float = 1e12) -> float:
    n = len(az) - 1
    start = n // 2 + 1
    mags = np.maximum(np.abs(az), np.abs(aw))[start:]
    if not mags.any():
        return cap
    powers = np.arange(start, n + 1)

    def tail(r: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.sum(mags * r**powers))

    lo, hi = 0.0, 1.0
    while tail(hi) < tail_tol and hi < cap:
        lo, hi = hi, hi * 2.0
    if hi >= cap:
        return cap
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if tail(mid) < tail_tol:
            lo = mid
        else:
            hi = mid
    return lo


def evaluate(series: ManifoldSeries, t: complex, m):
    """psi(t) by rescaling into the validity disk and pushing forward."""
    r = series.r_valid
    kmod = abs(series.kappa)
    steps = 0
    if abs(t) > r:
        steps = math.ceil(math.log(abs(t) / r) / math.log(kmod))
    x = series.poly(t * series.kappa ** (-steps))
    step = m.eval_inverse if series.inverse else m.eval
    for k in range(steps * series.base.period):
        try:
            x = step(x)
        except Escaped as exc:
            raise Escaped(k, partial=x) from exc
    return x


def conjugacy_residual(series: ManifoldSeries, m, radius: float, samples: int = 64) -> float:
    """max |f^q(psi(t)) - psi(kappa t)| over a circle |t| = radius."""
    worst = 0.0
    step_count = series.base.period
    for k in range(samples):
        t = radius * cmath.exp(2j * math.pi * k / samples)
        x = evaluate(series, t, m)
        for _ in range(step_count):
            x = (m.eval_inverse if series.inverse else m.eval)(x)
        y = evaluate(series, series.kappa * t, m)
        worst = max(worst, abs(x[0] - y[0]), abs(x[1] - y[1]))
    return worst


# ---------------------------------------------------------------------------
# growth and order
# ---------------------------------------------------------------------------


def _push_log_moduli(series: ManifoldSeries, m, t: complex) -> tuple[float, float]:
    """(log|psi_1(t)|, log|psi_2(t)|), switching to mpmath past the float range."""
    r = series.r_valid
    kmod = abs(series.kappa)
    steps = 0
    if abs(t) > r:
        steps = math.ceil(math.log(abs(t) / r) / math.log(kmod))
    x = series.poly(t * series.kappa ** (-steps))
    total = steps * series.base.period
    stepper = m.eval_inverse if series.inverse else m.eval
    done = 0
    while done < total:
        try:
            x = stepper(x)
        except Escaped:
            break
        done += 1
    if done == total:
        return (
            math.log(abs(x[0])) if x[0] != 0 else -math.inf,
            math.log(abs(x[1])) if x[1] != 0 else -math.inf,
        )
    with mpmath.workprec(120):
        z, w = mpmath.mpc(x[0]), mpmath.mpc(x[1])
        for _ in range(total - done):
            z, w = _mp_apply(m, z, w, series.inverse)
        l1 = float(mpmath.log(abs(z))) if z != 0 else -math.inf
        l2 = float(mpmath.log(abs(w))) if w != 0 else -math.inf
    return l1, l2


def _mp_apply(m, z, w, inverse: bool):
    if inverse:
        for f in reversed(m.factors):
            acc = mpmath.mpc(f.coeffs[-1])
            for c in reversed(f.coeffs[:-1]):
                acc = acc * w + c
            z, w = w, (acc - z) / mpmath.mpc(f.b)
    else:
        for f in m.factors:
            acc = mpmath.mpc(f.coeffs[-1])
            for c in reversed(f.coeffs[:-1]):
                acc = acc * z + c
            z, w = acc - mpmath.mpc(f.b) * w, z
    return z, w


@dataclass
class GrowthProfile:
    radii: np.ndarray
    log_m1: np.ndarray          # log of the max modulus of psi_1 on |t| = r
    log_m2: np.ndarray
    rho_hat: float
    rho_theory: float
    fit_residual: float


def theoretical_order(degree: int, kappa: complex) -> float:
    return math.log(degree) / math.log(abs(kappa))


def order_estimate(series: ManifoldSeries, m, radii, samples: int = 128) -> GrowthProfile:
    """Least-squares order fit of loglog M(r) against log r (upper half)."""
    radii = np.asarray(sorted(float(r) for r in radii))
    if len(radii) < 4:
        raise ValueError("need at least 4 radii for an order fit")
    log_m1, log_m2 = [], []
    for r in radii:
        best1 = -math.inf
        best2 = -math.inf
        for k in range(samples):
            t = r * cmath.exp(2j * math.pi * (k + 0.5) / samples)
            l1, l2 = _push_log_moduli(series, m, t)
            best1 = max(best1, l1)
            best2 = max(best2, l2)
        log_m1.append(best1)
        log_m2.append(best2)
    log_m1 = np.array(log_m1)
    log_m2 = np.array(log_m2)

    log_m = np.maximum(log_m1, log_m2)
    half = len(radii) // 2
    xs = np.log(radii[half:])
    ys = np.log(np.maximum(log_m[half:], 1e-300))
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    return GrowthProfile(
        radii=radii,
        log_m1=log_m1,
        log_m2=log_m2,
        rho_hat=float(slope),
        rho_theory=theoretical_order(m.degree, series.kappa),
        fit_residual=resid,
    )


def growth_csv(profile: GrowthProfile) -> str:
    """CSV (r, M1, M2); huge moduli are formatted from their logs."""

    def fmt(logv: float) -> str:
        if logv == -math.inf:
            return "0"
        if logv < 700.0:
            return f"{math.exp(logv):.9e}"
        log10 = logv / math.log(10.0)
        mant = 10.0 ** (log10 - math.floor(log10))
        return f"{mant:.9f}e+{int(math.floor(log10))}"

    lines = ["r,M1,M2"]
    for r, l1, l2 in zip(profile.radii, profile.log_m1, profile.log_m2):
        lines.append(f"{r:.9e},{fmt(l1)},{fmt(l2)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Wiman minimum-modulus circles
# ---------------------------------------------------------------------------


def _supnorm_at(series: ManifoldSeries, m, t: complex) -> float:
    """sup-norm |psi(t)|; +inf when the push escapes the overflow guard
    (an escaped value certainly exceeds any Julia-set radius)."""
    try:
        x = evaluate(series, t, m)
    except Escaped:
        return math.inf
    return max(abs(x[0]), abs(x[1]))


def _golden_min(fun, a: float, b: float, iters: int = 48) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return min(fc, fd)


def _circle_supnorms(series: ManifoldSeries, m, r: float, n_samples: int) -> np.ndarray:
    """Vectorized sup-norms on |t| = r; escapes/overflows become +inf."""
    t = r * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    steps = 0
    if r > series.r_valid:
        steps = math.ceil(math.log(r / series.r_valid) / math.log(abs(series.kappa)))
    ts = t * series.kappa ** (-steps)
    z = np.full(n_samples, complex(series.az[-1]))
    w = np.full(n_samples, complex(series.aw[-1]))
    for k in range(len(series.az) - 2, -1, -1):
        z = z * ts + series.az[k]
        w = w * ts + series.aw[k]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps * series.base.period):
            factors = reversed(m.factors) if series.inverse else m.factors
            for f in factors:
                if series.inverse:
                    acc = np.full(n_samples, complex(f.coeffs[-1]))
                    for c in reversed(f.coeffs[:-1]):
                        acc = acc * w + c
                    z, w = w, (acc - z) * (1.0 / f.b)
                else:
                    acc = np.full(n_samples, complex(f.coeffs[-1]))
                    for c in reversed(f.coeffs[:-1]):
                        acc = acc * z + c
                    z, w = acc - f.b * w, z
        vals = np.maximum(np.abs(z), np.abs(w))
    vals[~np.isfinite(vals)] = math.inf
    vals[vals > OVERFLOW] = math.inf
    return vals


def wiman_circles(
    series: ManifoldSeries,
    m,
    k_radius: float | None = None,
    r_max: float = 1e6,
    n_samples: int = 4096,
    growth: float = 1.25,
) -> list[float]:
    """Radii whose full circle stays outside the |.| <= k_radius ball.

    Sampled densely, then local minima are refined by golden-section search.
    An empty list is a valid outcome (expect one for orders >= 1/2).
    """
    if k_radius is None:
        k_radius = escape_radius(m)
    certified = []
    r = max(1.0, series.r_valid)
    while r <= r_max:
        vals = _circle_supnorms(series, m, r, n_samples)
        if vals.min() > k_radius:
            below = vals < 10.0 * k_radius
            local_min = below & (vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1))
            ok = True
            for i in np.where(local_min)[0]:
                lo = 2.0 * math.pi * (i - 1) / n_samples
                hi = 2.0 * math.pi * (i + 1) / n_samples
                refined = _golden_min(lambda a: _supnorm_at(series, m, r * cmath.exp(1j * a)), lo, hi, iters=24)
                if refined <= k_radius:
                    ok = False
                    break
            if ok:
                certified.append(r)
        r *= growth
    return certified
