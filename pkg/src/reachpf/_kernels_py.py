"""Pure-Python versions of the hot kernels.

Used when the compiled extension is unavailable or when
``REACHPF_PURE_PYTHON=1`` is set. Semantics must match ``_kernels.pyx``.
"""
from __future__ import annotations

import math

import numpy as np


def sector_closest(qx, qy, ox, oy, heading, half_width, r_lo, r_hi):
    """Closest point of an undilated annular sector to ``(qx, qy)``.

    The sector is centred at ``(ox, oy)`` and spans polar angles
    ``heading +/- half_width`` and radii ``[r_lo, r_hi]``.
    Returns ``(px, py, distance)``; a query inside gives itself and 0.
    """
    dx = qx - ox
    dy = qy - oy
    c = math.cos(heading)
    s = math.sin(heading)
    a = c * dx + s * dy
    b = -s * dx + c * dy
    rho = math.hypot(a, b)
    if rho == 0.0:
        if r_lo <= 0.0:
            return qx, qy, 0.0
        la, lb = r_lo, 0.0
    else:
        beta = math.atan2(b, a)
        if -half_width <= beta <= half_width:
            if r_lo <= rho <= r_hi:
                return qx, qy, 0.0
            r = r_lo if rho < r_lo else r_hi
            la = a * (r / rho)
            lb = b * (r / rho)
        else:
            # nearest point lies on one of the two radial edges
            best = math.inf
            la = lb = 0.0
            for side in (half_width, -half_width):
                ea = math.cos(side)
                eb = math.sin(side)
                r = a * ea + b * eb
                if r < r_lo:
                    r = r_lo
                elif r > r_hi:
                    r = r_hi
                d2 = (a - r * ea) ** 2 + (b - r * eb) ** 2
                if d2 < best:
                    best = d2
                    la = r * ea
                    lb = r * eb
    px = ox + c * la - s * lb
    py = oy + s * la + c * lb
    return px, py, math.hypot(qx - px, qy - py)


def mlp_forward(x, sizes, params):
    """Forward pass of a packed ReLU network on one input vector.

    ``params`` holds, per layer, the row-major ``(n_in, n_out)`` weight
    block followed by the ``n_out`` bias vector. Hidden layers use ReLU,
    the last layer is linear.
    """
    h = np.asarray(x, dtype=np.float64)
    off = 0
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        n_in = int(sizes[k])
        n_out = int(sizes[k + 1])
        w = params[off:off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        bias = params[off:off + n_out]
        off += n_out
        h = h @ w + bias
        if k < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h
