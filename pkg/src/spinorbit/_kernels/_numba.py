"""Numba-jitted kernels, same contracts as ``_numpy.py``.

Loop bodies are written pair-wise over the target bit so no temporary
copies of the state are made. Summations run in a fixed order, so results
are reproducible run to run.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def apply_axis_rotation(psi, L, theta, alpha):
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    u00 = c - 1j * s * np.sin(alpha)
    u01 = -1j * s * np.cos(alpha)
    u11 = c + 1j * s * np.sin(alpha)
    n = psi.shape[0]
    for j in range(L):
        step = 1 << j
        block = step << 1
        for base in range(0, n, block):
            for lo in range(step):
                i0 = base + lo
                i1 = i0 + step
                a0 = psi[i0]
                a1 = psi[i1]
                psi[i0] = u00 * a0 + u01 * a1
                psi[i1] = u01 * a0 + u11 * a1
    return psi


@njit(cache=True)
def apply_z_phase(psi, mz, phi):
    n = psi.shape[0]
    for i in range(n):
        psi[i] = psi[i] * (np.cos(phi * mz[i]) - 1j * np.sin(phi * mz[i]))
    return psi


@njit(cache=True)
def expect_xyz(psi, L, mz):
    n = psi.shape[0]
    ez = 0.0
    for i in range(n):
        a = psi[i]
        ez += (a.real * a.real + a.imag * a.imag) * mz[i]
    ex = 0.0
    ey = 0.0
    for j in range(L):
        step = 1 << j
        block = step << 1
        for base in range(0, n, block):
            for lo in range(step):
                i0 = base + lo
                z = np.conj(psi[i0]) * psi[i0 + step]
                ex += z.real
                ey += z.imag
    return ex, ey, ez
