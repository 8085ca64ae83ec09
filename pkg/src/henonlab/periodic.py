"""Periodic orbits: Newton solving, enumeration, continuation, bifurcations.

Classification follows the usual taxonomy (Sink / Saddle / Source /
SemiIndifferent); a multiplier counts as on the unit circle when its modulus
lies in [1 - BAND, 1 + BAND].  Tracking periods <= P makes grid tags a
necessary-condition diagnostic only: an orbit of higher period may still
bifurcate inside a cell tagged Constant.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Diverged, Escaped, NewtonFailure, SingularJacobian
from .escape import escape_radius, worker_count
from .family import HenonMap, ParamHenonFamily, Point, det2, multipliers

BAND = 1e-6

SINK = "Sink"
SADDLE = "Saddle"
SOURCE = "Source"
SEMI = "SemiIndifferent"


def classify(k1: complex, k2: complex, band: float = BAND) -> str:
    if abs(abs(k1) - 1.0) <= band:
        return SEMI
    if abs(k1) < 1.0:
        return SINK
    if abs(k2) > 1.0 + band:
        return SOURCE
    if abs(abs(k2) - 1.0) <= band:
        return SEMI
    return SADDLE


@dataclass(frozen=True)
class PeriodicOrbit:
    points: tuple[Point, ...]
    period: int
    multipliers: tuple[complex, complex]
    type: str
    residual: float
    prime: bool = True

    @property
    def base(self) -> Point:
        return self.points[0]


@dataclass(frozen=True)
class ContinuationEvent:
    lam: complex
    kind: str               # TypeChange | Collision | NewtonFailure
    detail: str = ""


def _solve2(j: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    det = det2(j)
    scale = max(abs(j[0, 0]), abs(j[0, 1]), abs(j[1, 0]), abs(j[1, 1]), 1.0)
    if abs(det) < 1e-13 * scale * scale:
        raise SingularJacobian(f"|det| = {abs(det):.3e} at scale {scale:.3e}")
    dz = (rhs[0] * j[1, 1] - rhs[1] * j[0, 1]) / det
    dw = (j[0, 0] * rhs[1] - j[1, 0] * rhs[0]) / det
    return np.array([dz, dw], dtype=complex)


def orbit_from_point(m: HenonMap, x: Point, n: int, residual: float) -> PeriodicOrbit:
    pts = tuple(m.orbit(x, n - 1)) if n > 1 else (x,)
    dmat = m.orbit_differential(x, n)
    k1, k2 = multipliers(dmat)
    prime = True
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if max(abs(pts[i][0] - pts[j][0]), abs(pts[i][1] - pts[j][1])) <= 1e-8:
                prime = False
    return PeriodicOrbit(
        points=pts, period=n, multipliers=(k1, k2),
        type=classify(k1, k2), residual=residual, prime=prime,
    )


def solve_periodic(
    m: HenonMap,
    n: int,
    seed: Point,
    tol: float = 1e-12,
    max_iter: int = 60,
    box_radius: float | None = None,
) -> PeriodicOrbit:
    """Newton on f^n - id from the seed; multipliers from the orbit cocycle."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if box_radius is None:
        box_radius = 2.0 * escape_radius(m)
    z, w = complex(seed[0]), complex(seed[1])
    residual = math.inf
    for _ in range(max_iter):
        if max(abs(z), abs(w)) > box_radius:
            raise Diverged(f"Newton left the search box (radius {box_radius:.3g})")
        fz, fw = m.iterate((z, w), n)
        rz, rw = fz - z, fw - w
        residual = max(abs(rz), abs(rw))
        jac = m.orbit_differential((z, w), n) - np.eye(2)
        step = _solve2(jac, np.array([rz, rw]))
        z, w = z - step[0], w - step[1]
        if residual <= tol:
            break
    else:
        raise NewtonFailure(f"no convergence after {max_iter} iterations (residual {residual:.3e})")
    fz, fw = m.iterate((z, w), n)
    residual = max(abs(fz - z), abs(fw - w))
    if residual > tol:
        raise NewtonFailure(f"final residual {residual:.3e} > tol {tol:.3e}")
    return orbit_from_point(m, (z, w), n, residual)


def prime_period(m: HenonMap, x: Point, n: int, tol: float = 1e-9) -> int:
    for q in range(1, n):
        if n % q:
            continue
        fx = m.iterate(x, q)
        if max(abs(fx[0] - x[0]), abs(fx[1] - x[1])) <= tol:
            return q
    return n


def _orbit_rep(points) -> tuple:
    return min((p[0].real, p[0].imag, p[1].real, p[1].imag) for p in points)


def _same_orbit(a: PeriodicOrbit, b: PeriodicOrbit, tol: float = 1e-8) -> bool:
    if a.period != b.period:
        return False
    ra, rb = _orbit_rep(a.points), _orbit_rep(b.points)
    return max(abs(x - y) for x, y in zip(ra, rb)) <= tol


def enumerate_periodic(
    m: HenonMap,
    n: int,
    box: tuple[float, float] | None = None,
    grid_density: int = 5,
    tol: float = 1e-11,
) -> list[PeriodicOrbit]:
    """Seed-sweep Newton over a 4D grid; orbits deduplicated, prime periods.

    Returns orbits of prime period dividing n (a fixed point found while
    solving f^n = id is reported once, with period 1).  The number of
    periodic points is sum(o.period); it never exceeds d^n and completeness
    should be judged against that count.
    """
    if box is None:
        r = escape_radius(m)
        box = (-r, r)
    lo, hi = box
    axis = [lo + (hi - lo) * (k + 0.5) / grid_density for k in range(grid_density)]
    found: list[PeriodicOrbit] = []
    for zr in axis:
        for zi in axis:
            for wr in axis:
                for wi in axis:
                    seed = (complex(zr, zi), complex(wr, wi))
                    try:
                        sol = solve_periodic(m, n, seed, tol=tol)
                    except (Diverged, NewtonFailure, SingularJacobian, Escaped):
                        continue
                    q = prime_period(m, sol.base, n)
                    orb = orbit_from_point(m, sol.base, q, sol.residual)
                    if not any(_same_orbit(orb, o) for o in found):
                        found.append(orb)
    found.sort(key=lambda o: (o.period, _orbit_rep(o.points)))
    return found


def periodic_point_count(orbits) -> int:
    return sum(o.period for o in orbits)


# ---------------------------------------------------------------------------
# continuation along parameter paths
# ---------------------------------------------------------------------------


def _correct(family: ParamHenonFamily, lam: complex, n: int, seed: Point, tol: float) -> PeriodicOrbit:
    return solve_periodic(family.at(lam), n, seed, tol=tol)


def _correct_with_retries(family, lam, n, seed, tol) -> PeriodicOrbit:
    """Newton with deterministic complex-jittered reseeds.

    A real seed stays real under Newton, so tracking a fixed point through a
    fold (where the continued pair turns complex) needs a nudge off the axis.
    """
    last = None
    for jit in (0.0, 1e-7, 1e-5, 1e-3):
        nudge = jit * (1.0 + 1.0j)
        try:
            return _correct(family, lam, n, (seed[0] + nudge, seed[1] + nudge), tol)
        except (Diverged, NewtonFailure, SingularJacobian, Escaped) as exc:
            last = exc
    raise last


def _refine_event(family, n, lam_a, orb_a, lam_b, tol) -> complex:
    """Bisect a type flip inside [lam_a, lam_b]; returns the flip location."""
    for _ in range(24):
        if abs(lam_b - lam_a) < 1e-10 * max(1.0, abs(lam_b)):
            break
        mid = (lam_a + lam_b) / 2.0
        try:
            orb_mid = _correct_with_retries(family, mid, n, orb_a.base, tol)
        except (Diverged, NewtonFailure, SingularJacobian, Escaped):
            break
        if orb_mid.type == orb_a.type:
            lam_a, orb_a = mid, orb_mid
        else:
            lam_b = mid
    return lam_b


def continue_orbit(
    family: ParamHenonFamily,
    orbit: PeriodicOrbit,
    path,
    tol: float = 1e-11,
    max_refine: int = 14,
    others: tuple[PeriodicOrbit, ...] = (),
    collision_tol: float = 1e-6,
):
    """Predictor-corrector continuation along the waypoint sequence ``path``.

    Emits TypeChange when the classification flips (with the flip location
    bisected inside the offending step) and Collision when the tracked orbit
    approaches one of ``others`` (continued alongside) within collision_tol.
    """
    path = [complex(p) for p in path]
    lam = path[0]
    cur = solve_periodic(family.at(lam), orbit.period, orbit.base, tol=max(tol, orbit.residual * 10 + 1e-15))
    events: list[ContinuationEvent] = []
    shadow = list(others)
    prev_lam, prev_base = None, None

    for target in path[1:]:
        seg_a, seg_b = lam, target
        pending = [seg_b]
        depth = 0
        while pending:
            nxt = pending[-1]
            if prev_lam is not None and abs(lam - prev_lam) > 0:
                t = (nxt - lam) / (lam - prev_lam)
                seed = (
                    cur.base[0] + (cur.base[0] - prev_base[0]) * t,
                    cur.base[1] + (cur.base[1] - prev_base[1]) * t,
                )
            else:
                seed = cur.base
            try:
                new = _correct_with_retries(family, nxt, cur.period, seed, tol)
            except (Diverged, NewtonFailure, SingularJacobian, Escaped) as exc:
                depth += 1
                if depth > max_refine:
                    events.append(ContinuationEvent(lam=nxt, kind="NewtonFailure", detail=str(exc)))
                    raise NewtonFailure(f"continuation stalled at lambda={nxt}: {exc}") from exc
                pending.append((lam + nxt) / 2.0)
                continue
            pending.pop()
            if new.type != cur.type:
                flip = _refine_event(family, cur.period, lam, cur, nxt, tol)
                events.append(ContinuationEvent(lam=flip, kind="TypeChange", detail=f"{cur.type}->{new.type}"))
            new_shadow = []
            for o in shadow:
                try:
                    so = _correct_with_retries(family, nxt, o.period, o.base, tol)
                except (Diverged, NewtonFailure, SingularJacobian, Escaped):
                    continue
                d = max(abs(so.base[0] - new.base[0]), abs(so.base[1] - new.base[1]))
                if d < collision_tol:
                    events.append(ContinuationEvent(lam=nxt, kind="Collision", detail=f"distance {d:.3e}"))
                new_shadow.append(so)
            shadow = new_shadow
            prev_lam, prev_base = lam, cur.base
            lam, cur = nxt, new
    return cur, events


# ---------------------------------------------------------------------------
# semi-parabolic parameter solving
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnityResult:
    lam: complex
    orbit: PeriodicOrbit
    drho: complex
    degenerate: bool


def _multiplier_near(m: HenonMap, x: Point, n: int, target: complex) -> complex:
    k1, k2 = multipliers(m.orbit_differential(x, n))
    return k1 if abs(k1 - target) <= abs(k2 - target) else k2


def solve_multiplier_root_of_unity(
    family: ParamHenonFamily,
    orbit: PeriodicOrbit,
    target: complex,
    lam_seed: complex,
    tol: float = 3e-12,
    max_iter: int = 80,
) -> UnityResult:
    """Joint Newton on (f^n(p) - p, det(Df^n - target*I)) over (p, lambda).

    Solving the extended system sidesteps the singular plain-Newton step at
    the crossing itself.  The returned ``drho`` is the crossing speed
    d(rho)/d(lambda) of the continued eigenvalue for target != 1; for
    target == 1 the fixed point has a square-root branch in lambda, so the
    square-root speed (rho(lam*+h) - 1)/sqrt(h) is returned instead.
    """
    n = orbit.period
    u = np.array([orbit.base[0], orbit.base[1], complex(lam_seed)], dtype=complex)

    def system(v: np.ndarray) -> np.ndarray:
        m = family.at(v[2])
        fz, fw = m.iterate((v[0], v[1]), n)
        d = m.orbit_differential((v[0], v[1]), n) - complex(target) * np.eye(2)
        return np.array([fz - v[0], fw - v[1], det2(d)], dtype=complex)

    res = system(u)
    for _ in range(max_iter):
        if max(abs(c) for c in res) <= tol:
            break
        jac = np.zeros((3, 3), dtype=complex)
        for k in range(3):
            h = 1e-7 * max(1.0, abs(u[k]))
            dv = np.zeros(3, dtype=complex)
            dv[k] = h
            jac[:, k] = (system(u + dv) - system(u - dv)) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise NewtonFailure(f"singular extended system: {exc}") from exc
        u = u - step
        res = system(u)
    else:
        raise NewtonFailure(f"unity solve did not converge (residual {max(abs(c) for c in res):.3e})")

    lam_star = u[2]
    m_star = family.at(lam_star)
    rho = _multiplier_near(m_star, (u[0], u[1]), n, target)
    if abs(rho - target) > 1e-10:
        raise NewtonFailure(f"multiplier {rho} missed target {target}")
    k1, k2 = multipliers(m_star.orbit_differential((u[0], u[1]), n))
    pts = tuple(m_star.orbit((u[0], u[1]), n - 1)) if n > 1 else ((u[0], u[1]),)
    fz, fw = m_star.iterate((u[0], u[1]), n)
    sol_orbit = PeriodicOrbit(
        points=pts, period=n, multipliers=(k1, k2), type=classify(k1, k2),
        residual=max(abs(fz - u[0]), abs(fw - u[1])),
    )

    h = 1e-6 * max(family.radius, 1e-3)
    if abs(complex(target) - 1.0) > 1e-9:
        plus = _correct_with_retries(family, lam_star + h, n, sol_orbit.base, 1e-12)
        minus = _correct_with_retries(family, lam_star - h, n, sol_orbit.base, 1e-12)
        rp = _multiplier_near(family.at(lam_star + h), plus.base, n, target)
        rm = _multiplier_near(family.at(lam_star - h), minus.base, n, target)
        drho = (rp - rm) / (2.0 * h)
    else:
        plus = _correct_with_retries(family, lam_star + h, n, sol_orbit.base, 1e-12)
        rp = _multiplier_near(family.at(lam_star + h), plus.base, n, target)
        drho = (rp - 1.0) / math.sqrt(h)
    return UnityResult(lam=lam_star, orbit=sol_orbit, drho=drho, degenerate=abs(drho) < 1e-10)


# ---------------------------------------------------------------------------
# bifurcation grid scans
# ---------------------------------------------------------------------------

CONSTANT = "Constant"
CROSSING = "Crossing"
UNTRACKED = "Untracked"

_TAG_VALUE = {UNTRACKED: 0, CONSTANT: 1, CROSSING: 2}


@dataclass(frozen=True)
class GridSpec:
    re_range: tuple[float, float]
    im_range: tuple[float, float]
    n_re: int
    n_im: int

    def center(self, i: int, j: int) -> complex:
        re = self.re_range[0] + (self.re_range[1] - self.re_range[0]) * (i + 0.5) / self.n_re
        im = self.im_range[0] + (self.im_range[1] - self.im_range[0]) * (j + 0.5) / self.n_im
        return complex(re, im)

    def corners(self, i: int, j: int) -> list[complex]:
        re0 = self.re_range[0] + (self.re_range[1] - self.re_range[0]) * i / self.n_re
        re1 = self.re_range[0] + (self.re_range[1] - self.re_range[0]) * (i + 1) / self.n_re
        im0 = self.im_range[0] + (self.im_range[1] - self.im_range[0]) * j / self.n_im
        im1 = self.im_range[0] + (self.im_range[1] - self.im_range[0]) * (j + 1) / self.n_im
        return [complex(re0, im0), complex(re1, im0), complex(re0, im1), complex(re1, im1)]


@dataclass
class BifurcationRaster:
    grid: GridSpec
    tags: np.ndarray            # int8, shape (n_im, n_re): 0 Untracked, 1 Constant, 2 Crossing
    sink_counts: np.ndarray     # int16
    max_period: int

    def tag(self, i: int, j: int) -> str:
        return {v: k for k, v in _TAG_VALUE.items()}[int(self.tags[j, i])]


def _scan_cell(args):
    (i, j, family, grid, max_period, budget, box) = args
    lam_c = grid.center(i, j)
    try:
        m = family.at(lam_c)
    except Exception:
        return i, j, _TAG_VALUE[UNTRACKED], 0
    orbits: list[PeriodicOrbit] = []
    for n in range(1, max_period + 1):
        for orb in enumerate_periodic(m, n, box=box, grid_density=budget):
            if not any(_same_orbit(orb, o) for o in orbits):
                orbits.append(orb)
    if not orbits:
        return i, j, _TAG_VALUE[UNTRACKED], 0
    sinks = sum(1 for o in orbits if o.type == SINK)
    tag = CONSTANT
    for o in orbits:
        for corner in grid.corners(i, j):
            try:
                end, events = continue_orbit(family, o, [lam_c, corner])
            except (NewtonFailure, Escaped, Diverged):
                if tag == CONSTANT:
                    tag = UNTRACKED
                continue
            if any(e.kind == "TypeChange" for e in events) or end.type != o.type:
                tag = CROSSING
                break
        if tag == CROSSING:
            break
    return i, j, _TAG_VALUE[tag], sinks


def scan_bifurcation_grid(
    family: ParamHenonFamily,
    grid: GridSpec,
    max_period: int = 1,
    budget: int = 4,
    box: tuple[float, float] | None = None,
    workers: int | None = None,
) -> BifurcationRaster:
    """Tag each parameter cell Constant/Crossing/Untracked, count sinks.

    Tracking covers periods <= max_period only, so Constant is a
    necessary-condition diagnostic, not a stability certificate.
    """
    nw = worker_count(workers)
    tasks = [
        (i, j, family, grid, max_period, budget, box)
        for j in range(grid.n_im)
        for i in range(grid.n_re)
    ]
    if nw == 1:
        results = [_scan_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(_scan_cell, tasks))
    tags = np.zeros((grid.n_im, grid.n_re), dtype=np.int8)
    sinks = np.zeros((grid.n_im, grid.n_re), dtype=np.int16)
    for i, j, tag, cnt in results:
        tags[j, i] = tag
        sinks[j, i] = cnt
    return BifurcationRaster(grid=grid, tags=tags, sink_counts=sinks, max_period=max_period)
