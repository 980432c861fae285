"""Hilbert-space primitives for spin-1/2 ensembles.

Conventions (fixed package-wide):
  * spin operators are I = sigma/2;
  * spin j maps to bit j of the computational-basis index, with bit
    value 0 = |up> (sigma_z eigenvalue +1), so spin 0 is the least
    significant bit;
  * operators are stored dense below ``SPARSE_THRESHOLD`` spins and as
    CSR above.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spsla

SPARSE_THRESHOLD = 8  # dense matrices below, CSR at or above

PROPAGATION_NORM_TOL = 1e-12


class PropagationError(RuntimeError):
    """Propagation failed to preserve the norm to tolerance."""


@lru_cache(maxsize=None)
def z_magnetization_diagonal(L):
    """Diagonal of collective Iz: (L - 2*popcount(i))/2, as float64."""
    idx = np.arange(1 << L, dtype=np.uint64)
    pop = np.zeros(1 << L, dtype=np.int64)
    for j in range(L):
        pop += ((idx >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
    mz = 0.5 * (L - 2 * pop)
    mz.setflags(write=False)
    return mz


@dataclass
class StateVector:
    """Normalized complex amplitudes on the 2^L Hilbert space."""

    amplitudes: np.ndarray
    L: int

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.L,):
            raise ValueError(
                f"amplitude vector of length {self.amplitudes.shape} "
                f"does not match L={self.L}"
            )

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def copy(self):
        return StateVector(self.amplitudes.copy(), self.L)


@dataclass
class SpinOperator:
    """Matrix plus bookkeeping; ``matrix`` is ndarray or scipy CSR."""

    matrix: object
    L: int
    hermitian: bool = False

    @property
    def dim(self):
        return 1 << self.L

    def toarray(self):
        if sps.issparse(self.matrix):
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def dot(self, vec):
        return self.matrix @ vec


def _finalize(matrix_coo, L, hermitian):
    if L >= SPARSE_THRESHOLD:
        return SpinOperator(matrix_coo.tocsr(), L, hermitian)
    return SpinOperator(matrix_coo.toarray(), L, hermitian)


def collective_operator(L, axis):
    """Collective spin operator I_axis = sum_j I_{j,axis}."""
    if L < 1:
        raise ValueError("L must be >= 1")
    dim = 1 << L
    if axis == "z":
        mz = z_magnetization_diagonal(L)
        mat = sps.diags(mz.astype(complex)).tocoo()
        return _finalize(mat, L, hermitian=True)
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    idx = np.arange(dim)
    rows = []
    cols = []
    vals = []
    for j in range(L):
        flipped = idx ^ (1 << j)
        bit = (idx >> j) & 1
        rows.append(flipped)
        cols.append(idx)
        if axis == "x":
            vals.append(np.full(dim, 0.5 + 0.0j))
        else:
            # <flipped|sigma_y|idx>: +i/2 when bit j of idx is 0, -i/2 when 1
            vals.append(np.where(bit == 0, 0.5j, -0.5j))
    mat = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return _finalize(mat, L, hermitian=True)


def dipolar_hamiltonian(graph):
    """Secular dipolar Hamiltonian sum b_nm (3 Inz Imz - In.Im).

    Diagonal in each pair's aligned subspace, flip-flop off-diagonal in
    the anti-aligned one; conserves collective Iz.
    """
    L = graph.L
    dim = 1 << L
    idx = np.arange(dim)
    bits = ((idx[:, None] >> np.arange(L)[None, :]) & 1).astype(np.int8)
    spins = 1 - 2 * bits  # +1 for up, -1 for down
    diag = np.zeros(dim)
    rows = []
    cols = []
    vals = []
    b = graph.couplings
    for n in range(L):
        for m in range(n + 1, L):
            bnm = b[n, m]
            if bnm == 0.0:
                continue
            prod = spins[:, n] * spins[:, m]
            diag += 0.5 * bnm * prod
            anti = prod == -1
            src = idx[anti]
            dst = src ^ ((1 << n) | (1 << m))
            rows.append(dst)
            cols.append(src)
            vals.append(np.full(src.size, -0.5 * bnm, dtype=complex))
    mat = sps.coo_matrix(
        (
            np.concatenate(vals) if vals else np.empty(0, dtype=complex),
            (
                np.concatenate(rows) if rows else np.empty(0, dtype=int),
                np.concatenate(cols) if cols else np.empty(0, dtype=int),
            ),
        ),
        shape=(dim, dim),
    )
    mat = mat + sps.diags(diag.astype(complex))
    return _finalize(mat.tocoo(), L, hermitian=True)


def product_state_x(L):
    """x-polarized pure product state, amplitudes 2^(-L/2)*(1,...,1)."""
    dim = 1 << L
    amp = np.full(dim, 2.0 ** (-0.5 * L), dtype=complex)
    return StateVector(amp, L)


def expectation(state, op):
    """<psi|A|psi> for hermitian A; the imaginary part is asserted away."""
    psi = state.amplitudes
    if op.dim != psi.shape[0]:
        raise ValueError(
            f"operator dimension {op.dim} does not match state {psi.shape[0]}"
        )
    val = complex(np.vdot(psi, op.dot(psi)))
    scale = max(1.0, abs(val))
    if abs(val.imag) > 1e-12 * scale:
        raise ValueError(f"expectation has imaginary part {val.imag:g}")
    return val.real


def propagate(state, op, t, norm_tol=PROPAGATION_NORM_TOL):
    """exp(-i*H*t)|psi> via Krylov-style matrix-exponential application.

    Norm preservation to ``norm_tol`` is asserted and the result is
    renormalized, so chained calls do not accumulate drift.
    """
    matrix = op.matrix if isinstance(op, SpinOperator) else op
    psi = state.amplitudes
    if t == 0.0:
        return state.copy()
    if sps.issparse(matrix):
        out = spsla.expm_multiply((-1j * t) * matrix, psi)
    else:
        out = spsla.expm_multiply((-1j * t) * sps.csr_matrix(matrix), psi)
    nrm = np.linalg.norm(out)
    if abs(nrm - 1.0) > max(norm_tol, 1e-10):
        raise PropagationError(
            f"norm drifted to {nrm!r} during propagation (t={t:g})"
        )
    return StateVector(out / nrm, state.L)
