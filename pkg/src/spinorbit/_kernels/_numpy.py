"""Pure-numpy reference kernels for state-vector updates.

These are the fallback implementations of the hot inner loops; the numba
variants in ``_numba.py`` must agree with them bit-for-bit wherever the
operation is deterministic (no parallel reductions are used).
"""

import numpy as np


def apply_axis_rotation(psi, L, theta, alpha):
    """Apply exp(-i*theta*(cos(a)*Ix + sin(a)*Iz)) in place.

    The collective rotation factorizes into identical single-qubit gates,
    so the cost is O(L * 2^L) instead of a full matrix product.
    """
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    u00 = c - 1j * s * np.sin(alpha)
    u01 = -1j * s * np.cos(alpha)
    u11 = c + 1j * s * np.sin(alpha)
    for j in range(L):
        v = psi.reshape(-1, 2, 1 << j)
        a0 = v[:, 0, :].copy()
        a1 = v[:, 1, :]
        v[:, 0, :] = u00 * a0 + u01 * a1
        v[:, 1, :] = u01 * a0 + u11 * a1
    return psi


def apply_z_phase(psi, mz, phi):
    """Multiply psi[i] by exp(-i*phi*mz[i]) in place (Iz is diagonal)."""
    psi *= np.exp(-1j * phi * mz)
    return psi


def expect_xyz(psi, L, mz):
    """Collective <Ix>, <Iy>, <Iz> of a state vector in one pass."""
    p = np.abs(psi) ** 2
    ez = float(np.dot(p, mz))
    ex = 0.0
    ey = 0.0
    for j in range(L):
        v = psi.reshape(-1, 2, 1 << j)
        cross = np.sum(np.conj(v[:, 0, :]) * v[:, 1, :])
        ex += cross.real
        ey += cross.imag
    return ex, ey, ez
