"""Interpolation on the packed triangular (s, x, w) node layout.

A field over the grid is stored as a 2-D array ``vals[tri(i) + k, j]`` with
``tri(i) = i * (i + 1) // 2``: one row per ``(time index i, elapsed index k)``
pair with ``k <= i``, one column per surplus node ``j``.
"""

import math

from numba import njit


@njit(cache=True, nogil=True)
def tri(i):
    return i * (i + 1) // 2


@njit(cache=True, nogil=True)
def _slice_bilinear(vals, i, n_x, fx, fw):
    # fx, fw: fractional node coordinates; fx in [0, n_x], fw >= 0
    base = tri(i)
    if fw >= i:
        k0 = i
        tk = 0.0
    else:
        k0 = int(math.floor(fw))
        tk = fw - k0
    if fx >= n_x:
        j0 = n_x
        tj = 0.0
    else:
        j0 = int(math.floor(fx))
        tj = fx - j0
    r0 = base + k0
    v0 = vals[r0, j0]
    if tj > 0.0:
        v0 = (1.0 - tj) * v0 + tj * vals[r0, j0 + 1]
    if tk > 0.0:
        v1 = vals[r0 + 1, j0]
        if tj > 0.0:
            v1 = (1.0 - tj) * v1 + tj * vals[r0 + 1, j0 + 1]
        v0 = (1.0 - tk) * v0 + tk * v1
    return v0


@njit(cache=True, nogil=True)
def interp_field(vals, n_s, n_x, ds, dx, s, x, w):
    """Multilinear interpolation; ``s``, ``x``, ``w`` must already be clamped into the grid."""
    fs = s / ds
    if fs >= n_s:
        return _slice_bilinear(vals, n_s, n_x, x / dx, w / ds)
    i0 = int(math.floor(fs))
    ts = fs - i0
    fx = x / dx
    fw = w / ds
    v = _slice_bilinear(vals, i0, n_x, fx, fw)
    if ts > 0.0:
        v = (1.0 - ts) * v + ts * _slice_bilinear(vals, i0 + 1, n_x, fx, fw)
    return v


@njit(cache=True, nogil=True)
def clamp_state(T, eta_p, s, x, w):
    """Clamp ``(s, x, w)`` into the closed domain; also returns the barrier at ``s``."""
    if s < 0.0:
        s = 0.0
    elif s > T:
        s = T
    bar = eta_p * (T - s)
    if w < 0.0:
        w = 0.0
    elif w > s:
        w = s
    if x < 0.0:
        x = 0.0
    elif x > bar:
        x = bar
    return s, x, w, bar
