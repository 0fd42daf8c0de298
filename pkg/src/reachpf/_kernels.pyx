# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_kernels_py`` exactly in semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, atan2, hypot, INFINITY

cnp.import_array()


def sector_closest(double qx, double qy, double ox, double oy, double heading,
                   double half_width, double r_lo, double r_hi):
    cdef double dx = qx - ox, dy = qy - oy
    cdef double c = cos(heading), s = sin(heading)
    cdef double a = c * dx + s * dy
    cdef double b = -s * dx + c * dy
    cdef double rho = hypot(a, b)
    cdef double la = 0.0, lb = 0.0, beta, r, ea, eb, d2, best, side
    cdef int k
    if rho == 0.0:
        if r_lo <= 0.0:
            return qx, qy, 0.0
        la = r_lo
        lb = 0.0
    else:
        beta = atan2(b, a)
        if -half_width <= beta <= half_width:
            if r_lo <= rho <= r_hi:
                return qx, qy, 0.0
            r = r_lo if rho < r_lo else r_hi
            la = a * (r / rho)
            lb = b * (r / rho)
        else:
            best = INFINITY
            for k in range(2):
                side = half_width if k == 0 else -half_width
                ea = cos(side)
                eb = sin(side)
                r = a * ea + b * eb
                if r < r_lo:
                    r = r_lo
                elif r > r_hi:
                    r = r_hi
                d2 = (a - r * ea) * (a - r * ea) + (b - r * eb) * (b - r * eb)
                if d2 < best:
                    best = d2
                    la = r * ea
                    lb = r * eb
    cdef double px = ox + c * la - s * lb
    cdef double py = oy + s * la + c * lb
    return px, py, hypot(qx - px, qy - py)


cdef enum:
    _STACK_WIDTH = 64


def mlp_forward(x, sizes, params):
    """Forward pass of a packed ReLU network; see ``_kernels_py.mlp_forward``."""
    cdef const cnp.int64_t[::1] sz = sizes if isinstance(sizes, np.ndarray) and \
        sizes.dtype == np.int64 and sizes.flags.c_contiguous else \
        np.ascontiguousarray(sizes, dtype=np.int64)
    cdef const double[::1] p = params if isinstance(params, np.ndarray) and \
        params.dtype == np.float64 and params.flags.c_contiguous else \
        np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t n_layers = sz.shape[0] - 1
    cdef Py_ssize_t width = 0, k, i, j, off = 0, n_in, n_out
    for k in range(sz.shape[0]):
        if sz[k] > width:
            width = sz[k]
    if width > _STACK_WIDTH:
        return _mlp_forward_wide(x, sz, p, width)
    cdef double cur[_STACK_WIDTH]
    cdef double nxt[_STACK_WIDTH]
    cdef double acc
    if len(x) != sz[0]:
        raise ValueError("input length does not match the first layer")
    for i in range(sz[0]):
        cur[i] = x[i]
    for k in range(n_layers):
        n_in = sz[k]
        n_out = sz[k + 1]
        for j in range(n_out):
            nxt[j] = 0.0
        # accumulate in the same order as a row-vector @ matrix product
        for i in range(n_in):
            acc = cur[i]
            for j in range(n_out):
                nxt[j] += acc * p[off + i * n_out + j]
        off += n_in * n_out
        for j in range(n_out):
            acc = nxt[j] + p[off + j]
            if k < n_layers - 1 and acc < 0.0:
                acc = 0.0
            cur[j] = acc
        off += n_out
    out = np.empty(sz[n_layers], dtype=np.float64)
    cdef double[::1] ov = out
    for j in range(sz[n_layers]):
        ov[j] = cur[j]
    return out


cdef _mlp_forward_wide(x, const cnp.int64_t[::1] sz, const double[::1] p, Py_ssize_t width):
    cdef Py_ssize_t n_layers = sz.shape[0] - 1
    cdef Py_ssize_t k, i, j, off = 0, n_in, n_out
    cdef double[::1] cur = np.zeros(width, dtype=np.float64)
    cdef double[::1] nxt = np.zeros(width, dtype=np.float64)
    cdef double acc
    if len(x) != sz[0]:
        raise ValueError("input length does not match the first layer")
    for i in range(sz[0]):
        cur[i] = x[i]
    for k in range(n_layers):
        n_in = sz[k]
        n_out = sz[k + 1]
        for j in range(n_out):
            nxt[j] = 0.0
        for i in range(n_in):
            acc = cur[i]
            for j in range(n_out):
                nxt[j] += acc * p[off + i * n_out + j]
        off += n_in * n_out
        for j in range(n_out):
            acc = nxt[j] + p[off + j]
            if k < n_layers - 1 and acc < 0.0:
                acc = 0.0
            cur[j] = acc
        off += n_out
    return np.asarray(cur[:sz[n_layers]]).copy()
