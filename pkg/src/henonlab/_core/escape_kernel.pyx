# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled escape-rate kernel (hot per-pixel loop).

Twin of ``escape_kernel_py``: the floating-point operation sequence is kept
identical so raster bytes do not depend on the backend.
"""

from libc.math cimport fabs, hypot, log, pow

import numpy as np

OVERFLOW = 1e150

BACKEND = "compiled"

cdef double _OVF = 1e150


cdef inline void _advance(double* zr, double* zi, double* wr, double* wi,
                          long nf, const long* degs, const long* offs,
                          const double* cre, const double* cim,
                          const double* bre, const double* bim,
                          int inverse) nogil:
    cdef long f, k, deg, o
    cdef double ar, ai, tr, ti, sr, si, nwr, nwi
    if inverse:
        for f in range(nf - 1, -1, -1):
            o = offs[f]
            deg = degs[f]
            ar = cre[o + deg]
            ai = cim[o + deg]
            for k in range(deg - 1, -1, -1):
                tr = ar * wr[0] - ai * wi[0] + cre[o + k]
                ti = ar * wi[0] + ai * wr[0] + cim[o + k]
                ar = tr
                ai = ti
            sr = ar - zr[0]
            si = ai - zi[0]
            nwr = sr * bre[f] - si * bim[f]
            nwi = sr * bim[f] + si * bre[f]
            zr[0] = wr[0]
            zi[0] = wi[0]
            wr[0] = nwr
            wi[0] = nwi
    else:
        for f in range(nf):
            o = offs[f]
            deg = degs[f]
            ar = cre[o + deg]
            ai = cim[o + deg]
            for k in range(deg - 1, -1, -1):
                tr = ar * zr[0] - ai * zi[0] + cre[o + k]
                ti = ar * zi[0] + ai * zr[0] + cim[o + k]
                ar = tr
                ai = ti
            tr = bre[f] * wr[0] - bim[f] * wi[0]
            ti = bre[f] * wi[0] + bim[f] * wr[0]
            wr[0] = zr[0]
            wi[0] = zi[0]
            zr[0] = ar - tr
            zi[0] = ai - ti


cdef inline double _max2(double a, double b) nogil:
    return a if a > b else b


def green_batch(z, w, degs, coeffs, bs, inverse, d, R, N, refine):
    """Returns (values, escaped_at) arrays for complex point arrays."""
    cdef long m, i, n, j, f
    z = np.ascontiguousarray(z, dtype=complex)
    w = np.ascontiguousarray(w, dtype=complex)
    cdef long[::1] degs_v = np.ascontiguousarray(degs, dtype=np.int64)
    coeffs = np.ascontiguousarray(coeffs, dtype=complex)
    bs = np.ascontiguousarray(bs, dtype=complex)
    cdef double[::1] cre = np.ascontiguousarray(coeffs.real, dtype=np.float64)
    cdef double[::1] cim = np.ascontiguousarray(coeffs.imag, dtype=np.float64)
    cdef double[::1] bre = np.ascontiguousarray(bs.real, dtype=np.float64)
    cdef double[::1] bim = np.ascontiguousarray(bs.imag, dtype=np.float64)
    cdef double[::1] pzr = np.ascontiguousarray(z.real, dtype=np.float64)
    cdef double[::1] pzi = np.ascontiguousarray(z.imag, dtype=np.float64)
    cdef double[::1] pwr = np.ascontiguousarray(w.real, dtype=np.float64)
    cdef double[::1] pwi = np.ascontiguousarray(w.imag, dtype=np.float64)

    cdef long nf = degs_v.shape[0]
    offs_np = np.zeros(nf, dtype=np.int64)
    cdef long off = 0
    for f in range(nf):
        offs_np[f] = off
        off += degs_v[f] + 1
    cdef long[::1] offs = offs_np

    m = z.shape[0]
    values_np = np.empty(m, dtype=np.float64)
    escaped_np = np.empty(m, dtype=np.int64)
    cdef double[::1] values = values_np
    cdef long[::1] escaped = escaped_np

    cdef int inv = 1 if inverse else 0
    cdef double dd = float(d)
    cdef double RR = float(R)
    cdef long NN = int(N)
    cdef long ref = int(refine)

    cdef double zr, zi, wr, wi, norm, scale, log_prev, log_cur, inc, value
    with nogil:
        for i in range(m):
            zr = pzr[i]
            zi = pzi[i]
            wr = pwr[i]
            wi = pwi[i]
            n = 0
            norm = _max2(hypot(zr, zi), hypot(wr, wi))
            while norm <= RR:
                if n >= NN:
                    break
                _advance(&zr, &zi, &wr, &wi, nf, &degs_v[0], &offs[0],
                         &cre[0], &cim[0], &bre[0], &bim[0], inv)
                n += 1
                norm = _max2(hypot(zr, zi), hypot(wr, wi))
            if norm <= RR:
                values[i] = 0.0
                escaped[i] = -1
                continue
            scale = pow(dd, <double>(-n))
            log_prev = log(norm)
            value = scale * log_prev
            j = 0
            while j < ref:
                _advance(&zr, &zi, &wr, &wi, nf, &degs_v[0], &offs[0],
                         &cre[0], &cim[0], &bre[0], &bim[0], inv)
                j += 1
                if _max2(_max2(fabs(zr), fabs(zi)), _max2(fabs(wr), fabs(wi))) > _OVF:
                    break
                norm = _max2(hypot(zr, zi), hypot(wr, wi))
                scale = scale / dd
                log_cur = log(norm)
                inc = scale * (log_cur - dd * log_prev)
                value = value + inc
                log_prev = log_cur
                if fabs(inc) < 1e-14:
                    break
            if value == 0.0:
                value = 5e-324
            values[i] = value
            escaped[i] = n
    return values_np, escaped_np
