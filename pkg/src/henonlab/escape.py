"""Escape-rate (Green) functions, Julia-set slice rasters, Hausdorff distance.

The per-pixel iteration is delegated to the kernel backend selected in
``henonlab._core`` (compiled when available, pure Python otherwise); both
backends produce bit-identical values.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._core import kernel
from ._core import escape_kernel_py as _scalar
from .family import HenonMap, Point

DEFAULT_BUDGET = 500
REFINE_BUDGET = 60
K_TOL = 1e-6


@dataclass(frozen=True)
class GreenResult:
    value: float
    escaped_at: int | None
    refined: bool


def escape_radius(m: HenonMap, inverse: bool = False) -> float:
    """Filtration radius 2*(1 + sum |coefficients|), composed over factors.

    Beyond this radius the sup-norm of the (forward or backward) orbit grows
    monotonically, so escape detection is sound.
    """
    r = 2.0
    for f in m.factors:
        if inverse:
            scale = 1.0 / abs(f.b)
            total = (sum(abs(c) for c in f.coeffs) + 1.0) * scale
        else:
            total = sum(abs(c) for c in f.coeffs) + abs(f.b)
        r = max(r, 2.0 * (1.0 + total))
    return r


def _green(m: HenonMap, x: Point, inverse: bool, R: float | None, N: int) -> GreenResult:
    if R is None:
        R = escape_radius(m, inverse=inverse)
    degs, coeffs, bs = m.kernel_data(inverse=inverse)
    value, esc, refined = _scalar.green_point(
        x[0].real, x[0].imag, x[1].real, x[1].imag,
        [int(v) for v in degs],
        [float(c.real) for c in coeffs], [float(c.imag) for c in coeffs],
        [float(c.real) for c in bs], [float(c.imag) for c in bs],
        int(inverse), float(m.degree), float(R), int(N), REFINE_BUDGET,
    )
    return GreenResult(value=value, escaped_at=None if esc < 0 else int(esc), refined=refined)


def green_plus(m: HenonMap, x: Point, R: float | None = None, N: int = DEFAULT_BUDGET) -> GreenResult:
    """Forward escape rate G+; 0 when the orbit stays bounded up to budget."""
    return _green(m, x, False, R, N)


def green_minus(m: HenonMap, x: Point, R: float | None = None, N: int = DEFAULT_BUDGET) -> GreenResult:
    """Backward escape rate G-, via the inverse factors."""
    return _green(m, x, True, R, N)


# ---------------------------------------------------------------------------
# slice rasters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """Affine embedding of a pixel rectangle into C^2.

    Pixel (row j, col i) maps to
        origin + (s_lo + (s_hi-s_lo)*(i+0.5)/width)  * dir1
               + (t_lo + (t_hi-t_lo)*(j+0.5)/height) * dir2
    """

    origin: Point = (0.0, 0.0)
    dir1: Point = (1.0, 0.0)
    dir2: Point = (0.0, 1.0)
    s_range: tuple[float, float] = (-2.0, 2.0)
    t_range: tuple[float, float] = (-2.0, 2.0)
    width: int = 256
    height: int = 256

    def __post_init__(self):
        det = self.dir1[0] * self.dir2[1] - self.dir1[1] * self.dir2[0]
        if det == 0:
            raise ValueError("slice direction vectors must be linearly independent")

    def row_points(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        s_lo, s_hi = self.s_range
        t_lo, t_hi = self.t_range
        v = t_lo + (t_hi - t_lo) * (j + 0.5) / self.height
        i = np.arange(self.width, dtype=np.float64)
        u = s_lo + (s_hi - s_lo) * (i + 0.5) / self.width
        z = self.origin[0] + u * self.dir1[0] + v * self.dir2[0]
        w = self.origin[1] + u * self.dir1[1] + v * self.dir2[1]
        return z.astype(complex), w.astype(complex)


@dataclass
class Raster:
    width: int
    height: int
    values: np.ndarray          # float64, shape (height, width), row-major
    escaped: np.ndarray         # int64, -1 where bounded up to budget
    mode: str = "gplus"
    meta: dict = field(default_factory=dict)


_WORKER_STATE: dict = {}


def _render_rows(args):
    (rows, spec, fwd_data, inv_data, d, R_fwd, R_inv, N, mode) = args
    out_vals = []
    out_escaped = []
    for j in rows:
        z, w = spec.row_points(j)
        if mode == "gminus":
            vals, esc = kernel.green_batch(z, w, *inv_data, 1, d, R_inv, N, REFINE_BUDGET)
        else:
            vals, esc = kernel.green_batch(z, w, *fwd_data, 0, d, R_fwd, N, REFINE_BUDGET)
            if mode == "k":
                mvals, _ = kernel.green_batch(z, w, *inv_data, 1, d, R_inv, N, REFINE_BUDGET)
                vals = np.where((vals < K_TOL) & (mvals < K_TOL), 1.0, 0.0)
        out_vals.append(vals)
        out_escaped.append(esc)
    return rows[0], np.vstack(out_vals), np.vstack(out_escaped)


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("HENONLAB_WORKERS")
    return max(1, int(env)) if env else 1


def render_julia_slice(
    m: HenonMap,
    spec: SliceSpec,
    R: float | None = None,
    N: int = DEFAULT_BUDGET,
    mode: str = "gplus",
    workers: int | None = None,
) -> Raster:
    """G+ shading of the slice ('gplus'), G- ('gminus'), or K indicator ('k').

    Rows are computed independently and merged by row index, so the raster is
    bit-identical for any worker count.
    """
    if mode not in ("gplus", "gminus", "k"):
        raise ValueError(f"unknown raster mode {mode!r}")
    nw = worker_count(workers)
    R_fwd = R if R is not None else escape_radius(m, inverse=False)
    R_inv = R if R is not None else escape_radius(m, inverse=True)
    fwd_data = m.kernel_data(inverse=False)
    inv_data = m.kernel_data(inverse=True)
    d = float(m.degree)

    all_rows = list(range(spec.height))
    chunk = max(1, math.ceil(spec.height / (nw * 4)))
    tasks = [
        (all_rows[k:k + chunk], spec, fwd_data, inv_data, d, R_fwd, R_inv, N, mode)
        for k in range(0, spec.height, chunk)
    ]

    pieces: list[tuple[int, np.ndarray, np.ndarray]] = []
    if nw == 1:
        for t in tasks:
            pieces.append(_render_rows(t))
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            pieces = list(pool.map(_render_rows, tasks))
    pieces.sort(key=lambda p: p[0])
    values = np.vstack([p[1] for p in pieces])
    escaped = np.vstack([p[2] for p in pieces])
    return Raster(
        width=spec.width,
        height=spec.height,
        values=values,
        escaped=escaped,
        mode=mode,
        meta={"budget": N, "escape_radius": R_fwd if mode != "gminus" else R_inv},
    )


def raster_to_pgm(r: Raster, vmin: float | None = None, vmax: float | None = None, gamma: float = 1.0):
    """P5 bytes plus the {min, max, gamma} sidecar dict."""
    v = r.values
    lo = float(np.min(v)) if vmin is None else float(vmin)
    hi = float(np.max(v)) if vmax is None else float(vmax)
    if hi <= lo:
        scaled = np.zeros_like(v)
    else:
        scaled = np.clip((v - lo) / (hi - lo), 0.0, 1.0) ** gamma
    data = np.round(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{r.width} {r.height}\n255\n".encode("ascii")
    return header + data.tobytes(), {"min": lo, "max": hi, "gamma": gamma}


def write_pgm(path, r: Raster, **kw) -> dict:
    payload, sidecar = raster_to_pgm(r, **kw)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    side_path = str(path) + ".json"
    tmp = side_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True)
    os.replace(tmp, side_path)
    return sidecar


# ---------------------------------------------------------------------------
# Hausdorff distance between sampled point sets
# ---------------------------------------------------------------------------


def _as_points(a) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.size == 0:
        raise ValueError("hausdorff_distance needs nonempty point sets")
    return arr.reshape(-1, 2)


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between finite subsets of C^2 (Euclidean on R^4)."""
    pa, pb = _as_points(a), _as_points(b)
    d2 = (
        np.abs(pa[:, None, 0] - pb[None, :, 0]) ** 2
        + np.abs(pa[:, None, 1] - pb[None, :, 1]) ** 2
    )
    d = np.sqrt(d2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
