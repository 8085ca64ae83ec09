"""Pure-Python escape-rate kernel.

Fallback twin of the compiled ``escape_kernel``; both implement the exact
same floating-point operation sequence so that raster bytes do not depend
on which backend happens to be importable.
"""

from __future__ import annotations

from math import hypot, log

import numpy as np

OVERFLOW = 1e150

BACKEND = "python"


def _advance(zr, zi, wr, wi, degs, cre, cim, bre, bim, inverse):
    """One map application with hand-rolled complex ops (matches the C twin)."""
    off = 0
    if inverse:
        nf = len(degs)
        offsets = []
        for f in range(nf):
            offsets.append(off)
            off += degs[f] + 1
        for f in range(nf - 1, -1, -1):
            o = offsets[f]
            deg = degs[f]
            ar = cre[o + deg]
            ai = cim[o + deg]
            for k in range(deg - 1, -1, -1):
                tr = ar * wr - ai * wi + cre[o + k]
                ti = ar * wi + ai * wr + cim[o + k]
                ar, ai = tr, ti
            # (z, w) <- (w, (p(w) - z) * inv_b)
            sr = ar - zr
            si = ai - zi
            nwr = sr * bre[f] - si * bim[f]
            nwi = sr * bim[f] + si * bre[f]
            zr, zi, wr, wi = wr, wi, nwr, nwi
    else:
        for f in range(len(degs)):
            deg = degs[f]
            ar = cre[off + deg]
            ai = cim[off + deg]
            for k in range(deg - 1, -1, -1):
                tr = ar * zr - ai * zi + cre[off + k]
                ti = ar * zi + ai * zr + cim[off + k]
                ar, ai = tr, ti
            tr = bre[f] * wr - bim[f] * wi
            ti = bre[f] * wi + bim[f] * wr
            zr, zi, wr, wi = ar - tr, ai - ti, zr, zi
            off += deg + 1
    return zr, zi, wr, wi


def green_point(zr, zi, wr, wi, degs, cre, cim, bre, bim, inverse, d, R, N, refine):
    """(value, escaped_at, refined) of the escape-rate function at one point."""
    n = 0
    norm = max(hypot(zr, zi), hypot(wr, wi))
    while norm <= R:
        if n >= N:
            return 0.0, -1, False
        zr, zi, wr, wi = _advance(zr, zi, wr, wi, degs, cre, cim, bre, bim, inverse)
        n += 1
        norm = max(hypot(zr, zi), hypot(wr, wi))

    scale = d ** float(-n)
    log_prev = log(norm)
    value = scale * log_prev
    refined = False
    j = 0
    while j < refine:
        zr, zi, wr, wi = _advance(zr, zi, wr, wi, degs, cre, cim, bre, bim, inverse)
        j += 1
        if max(abs(zr), abs(zi), abs(wr), abs(wi)) > OVERFLOW:
            break
        norm = max(hypot(zr, zi), hypot(wr, wi))
        scale = scale / d
        log_cur = log(norm)
        inc = scale * (log_cur - d * log_prev)
        value = value + inc
        log_prev = log_cur
        if abs(inc) < 1e-14:
            refined = True
            break
    if value == 0.0:
        value = 5e-324  # escaped points are strictly positive by contract
    return value, n, refined


def green_batch(z, w, degs, coeffs, bs, inverse, d, R, N, refine):
    """Vectorized front: returns (values, escaped_at) arrays for point arrays."""
    z = np.ascontiguousarray(z, dtype=complex)
    w = np.ascontiguousarray(w, dtype=complex)
    degs = [int(x) for x in degs]
    cre = [float(c.real) for c in coeffs]
    cim = [float(c.imag) for c in coeffs]
    bre = [float(c.real) for c in bs]
    bim = [float(c.imag) for c in bs]
    m = z.shape[0]
    values = np.empty(m, dtype=np.float64)
    escaped = np.empty(m, dtype=np.int64)
    for i in range(m):
        v, e, _ = green_point(
            z[i].real, z[i].imag, w[i].real, w[i].imag,
            degs, cre, cim, bre, bim, int(inverse), float(d), float(R), int(N), int(refine),
        )
        values[i] = v
        escaped[i] = e
    return values, escaped
