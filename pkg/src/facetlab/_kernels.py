"""Compiled sweeps over flat, zero-padded lattice arrays.

Sites are addressed by flat indices into a C-ordered array padded by one
layer of zeros, and ``strides`` holds the flat offset of each unit vector.
Neighbour sums add the per-axis pairs ``v[i+s] + v[i-s]`` in sorted order,
which makes every sweep exactly equivariant under the lattice symmetries.
"""
import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _nsum(v, i, strides, buf):
    d = strides.shape[0]
    for k in range(d):
        s = strides[k]
        buf[k] = v[i + s] + v[i - s]
    if d >= 3:
        for a in range(1, d):
            x = buf[a]
            b = a - 1
            while b >= 0 and buf[b] > x:
                buf[b + 1] = buf[b]
                b -= 1
            buf[b + 1] = x
    t = 0.0
    for k in range(d):
        t += buf[k]
    return t


@nb.njit(cache=True)
def flow_sweep(v, out, sites, wet, strides, h):
    """One synchronous flow step ``v -> out``; returns the residual of ``v``.

    The residual is ``max(0, lap v - 1_{v=0})`` over the non-wetted sites.
    """
    d = strides.shape[0]
    two_d = 2.0 * d
    buf = np.empty(d)
    res = 0.0
    for j in range(sites.shape[0]):
        i = sites[j]
        if wet[j]:
            out[i] = h
            continue
        vi = v[i]
        lap = _nsum(v, i, strides, buf) - two_d * vi
        if vi == 0.0:
            lap -= 1.0
        if lap > 0.0:
            out[i] = vi + lap / two_d
            if lap > res:
                res = lap
        else:
            out[i] = vi
    return res


@nb.njit(cache=True)
def harmonic_residual(u, sites, strides):
    d = strides.shape[0]
    two_d = 2.0 * d
    buf = np.empty(d)
    res = 0.0
    for j in range(sites.shape[0]):
        i = sites[j]
        r = abs(_nsum(u, i, strides, buf) - two_d * u[i])
        if r > res:
            res = r
    return res


@nb.njit(cache=True)
def sor_solve(u, red, black, strides, omega, tol, max_sweeps, check_every):
    """Red-black SOR for ``lap u = 0`` on ``red`` and ``black``; other sites fixed.

    Returns ``(sweeps, residual)``; the residual is the max of ``|lap u|``.
    """
    d = strides.shape[0]
    two_d = 2.0 * d
    buf = np.empty(d)
    res = harmonic_residual(u, red, strides)
    res = max(res, harmonic_residual(u, black, strides))
    if res <= tol:
        return 0, res
    for sweep in range(1, max_sweeps + 1):
        for j in range(red.shape[0]):
            i = red[j]
            u[i] += omega * (_nsum(u, i, strides, buf) / two_d - u[i])
        for j in range(black.shape[0]):
            i = black[j]
            u[i] += omega * (_nsum(u, i, strides, buf) / two_d - u[i])
        if sweep % check_every == 0 or sweep == max_sweeps:
            res = max(harmonic_residual(u, red, strides), harmonic_residual(u, black, strides))
            if res <= tol:
                return sweep, res
    return max_sweeps, res
