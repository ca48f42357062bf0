"""Compiled inner loops of the projected red-black SOR iteration.

Each kernel works on the dt-multiplied complementarity system

    u >= 0,   (1 + 2·dim·lam) u - lam·Σ neighbours - u_prev + dt·f >= 0,

with ``lam = dt / h²`` and equality wherever ``u > 0``.  Boundary nodes are
never written.  Within one colour the updates read only the other colour, so
the result does not depend on the traversal order of same-colour nodes.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _sweep1d(u, uprev, fdt, lam, omega, color):
    n = u.shape[0]
    d = 1.0 + 2.0 * lam
    for i in range(1 + color, n - 1, 2):
        g = (uprev[i] - fdt[i] + lam * (u[i - 1] + u[i + 1])) / d
        v = (1.0 - omega) * u[i] + omega * g
        u[i] = v if v > 0.0 else 0.0


@numba.njit(cache=True)
def _resid1d(u, uprev, fdt, lam):
    n = u.shape[0]
    d = 1.0 + 2.0 * lam
    res = 0.0
    for i in range(1, n - 1):
        r = d * u[i] - lam * (u[i - 1] + u[i + 1]) - uprev[i] + fdt[i]
        m = abs(min(u[i], r))
        if m > res:
            res = m
    return res


@numba.njit(cache=True)
def _sweep2d(u, uprev, fdt, lam, omega, color):
    n0, n1 = u.shape
    d = 1.0 + 4.0 * lam
    for i in range(1, n0 - 1):
        j0 = 1 + ((i + 1 + color) % 2)
        for j in range(j0, n1 - 1, 2):
            s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
            g = (uprev[i, j] - fdt[i, j] + lam * s) / d
            v = (1.0 - omega) * u[i, j] + omega * g
            u[i, j] = v if v > 0.0 else 0.0


@numba.njit(cache=True)
def _resid2d(u, uprev, fdt, lam):
    n0, n1 = u.shape
    d = 1.0 + 4.0 * lam
    res = 0.0
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
            r = d * u[i, j] - lam * s - uprev[i, j] + fdt[i, j]
            m = abs(min(u[i, j], r))
            if m > res:
                res = m
    return res


@numba.njit(cache=True)
def psor1d(u, uprev, fdt, lam, omega, tol, max_sweeps, check_every):
    res = np.inf
    for it in range(1, max_sweeps + 1):
        _sweep1d(u, uprev, fdt, lam, omega, 0)
        _sweep1d(u, uprev, fdt, lam, omega, 1)
        if it % check_every == 0 or it == max_sweeps:
            res = _resid1d(u, uprev, fdt, lam)
            if res <= tol:
                return it, res
    return -1, res


@numba.njit(cache=True)
def psor2d(u, uprev, fdt, lam, omega, tol, max_sweeps, check_every):
    res = np.inf
    for it in range(1, max_sweeps + 1):
        _sweep2d(u, uprev, fdt, lam, omega, 0)
        _sweep2d(u, uprev, fdt, lam, omega, 1)
        if it % check_every == 0 or it == max_sweeps:
            res = _resid2d(u, uprev, fdt, lam)
            if res <= tol:
                return it, res
    return -1, res


def lcp_residual(u, uprev, fdt, lam) -> float:
    if u.ndim == 1:
        return float(_resid1d(u, uprev, fdt, lam))
    return float(_resid2d(u, uprev, fdt, lam))


def psor(u, uprev, fdt, lam, omega, tol, max_sweeps, check_every):
    """Run sweeps in place on ``u``; returns ``(sweeps, residual)``, sweeps = -1 on failure."""
    kern = psor1d if u.ndim == 1 else psor2d
    it, res = kern(u, uprev, fdt, float(lam), float(omega), float(tol), int(max_sweeps), int(check_every))
    return int(it), float(res)
