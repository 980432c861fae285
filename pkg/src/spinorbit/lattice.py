"""Pseudo-random spin graphs and dipolar coupling scales.

Graphs are generated by an accept/reject scheme: a proposed position is
kept iff (i) it is farther than ``r_min`` from every existing spin and
(ii) closer than ``r_max`` to at least one of them. Every spin of the
final graph therefore has a nearest neighbor within ``r_max`` and no pair
is closer than ``r_min``. Positions are measured in units of
(mu0*hbar*gamma^2)^(1/3) so the coupling prefactor defaults to 1.
"""

import json
from dataclasses import dataclass, field

import numpy as np

MAGIC_ANGLE = float(np.arcsin(1.0 / np.sqrt(3.0)))


class GraphGenerationError(RuntimeError):
    """Raised when the accept/reject loop exceeds its rejection cap."""


@dataclass(frozen=True)
class SpinGraph:
    """A disorder realization: positions plus the derived coupling matrix."""

    L: int
    positions: np.ndarray  # (L, 3)
    couplings: np.ndarray  # (L, L) symmetric, zero diagonal, angular freq
    field_axis: np.ndarray  # unit 3-vector
    r_min: float
    r_max: float
    seed: int
    c_exp: float = 1.0

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.couplings.setflags(write=False)
        self.field_axis.setflags(write=False)

    @property
    def dim(self):
        return 1 << self.L

    def pair_distances(self):
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def connected_mask(self):
        """Pairs (n < m) within r_max of each other."""
        d = self.pair_distances()
        iu = np.triu_indices(self.L, k=1)
        return d[iu] < self.r_max

    def rescaled(self, scale):
        """Same geometry with all couplings multiplied by ``scale``."""
        return SpinGraph(
            L=self.L,
            positions=self.positions,
            couplings=self.couplings * scale,
            field_axis=self.field_axis,
            r_min=self.r_min,
            r_max=self.r_max,
            seed=self.seed,
            c_exp=self.c_exp * scale,
        )


@dataclass(frozen=True)
class CouplingScale:
    """Aggregate coupling strengths of a graph."""

    j_median: float
    j_fid: float  # 1/tau_d from the free-induction decay; nan if undefined
    h_dd: float
    flags: tuple = field(default_factory=tuple)


def dipolar_coupling(r, field_axis, c_exp=1.0):
    """Secular dipolar coupling c_exp*(3*cos^2(beta) - 1)/|r|^3."""
    r = np.asarray(r, dtype=float)
    axis = np.asarray(field_axis, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        raise ValueError("zero-length internuclear vector")
    cos_beta = float(np.dot(r, axis)) / (dist * float(np.linalg.norm(axis)))
    return c_exp * (3.0 * cos_beta**2 - 1.0) / dist**3


def coupling_matrix(positions, field_axis, c_exp=1.0):
    positions = np.asarray(positions, dtype=float)
    L = positions.shape[0]
    b = np.zeros((L, L))
    for n in range(L):
        for m in range(n + 1, L):
            b[n, m] = b[m, n] = dipolar_coupling(
                positions[m] - positions[n], field_axis, c_exp
            )
    return b


def generate_graph(
    L,
    r_min,
    r_max,
    seed,
    field_axis=(0.0, 0.0, 1.0),
    c_exp=1.0,
    box_packing=1.5,
    max_rejections=100_000,
):
    """Generate a pseudo-random interacting spin graph.

    Deterministic in all arguments. Proposals are drawn uniformly from a
    cube of side L^(1/3) * (r_min + r_max)/2 * box_packing; degenerate
    parameter choices (e.g. r_min == r_max) exhaust the rejection cap and
    raise :class:`GraphGenerationError`.
    """
    if L < 2:
        raise ValueError("need at least two spins")
    if not (0.0 < r_min < r_max):
        raise ValueError(f"require 0 < r_min < r_max, got ({r_min}, {r_max})")
    rng = np.random.default_rng(seed)
    side = L ** (1.0 / 3.0) * 0.5 * (r_min + r_max) * box_packing
    accepted = np.empty((L, 3))
    accepted[0] = rng.uniform(-0.5 * side, 0.5 * side, size=3)
    n_have = 1
    rejections = 0
    while n_have < L:
        pos = rng.uniform(-0.5 * side, 0.5 * side, size=3)
        dists = np.linalg.norm(accepted[:n_have] - pos, axis=1)
        if np.all(dists > r_min) and np.any(dists < r_max):
            accepted[n_have] = pos
            n_have += 1
            rejections = 0
        else:
            rejections += 1
            if rejections >= max_rejections:
                raise GraphGenerationError(
                    f"{max_rejections} consecutive rejections placing spin "
                    f"{n_have} of {L} (r_min={r_min}, r_max={r_max}, "
                    f"box side={side:.3g})"
                )
    axis = np.asarray(field_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return SpinGraph(
        L=L,
        positions=accepted,
        couplings=coupling_matrix(accepted, axis, c_exp),
        field_axis=axis,
        r_min=float(r_min),
        r_max=float(r_max),
        seed=int(seed),
        c_exp=float(c_exp),
    )


def normalized_graph(L, r_min, r_max, seed, **kwargs):
    """Graph rescaled so that the median connected coupling is exactly 1."""
    g = generate_graph(L, r_min, r_max, seed, **kwargs)
    jm = coupling_scales(g, with_fid=False).j_median
    if jm == 0.0:
        raise GraphGenerationError("graph has no connected couplings")
    return g.rescaled(1.0 / jm)


def h_dd_squared(graph, alpha=0.0):
    """Dipolar energy scale h_dd^2 = 2*(1 - 3 sin^2 alpha) * sum b^2 / L.

    Signed: negative beyond the magic angle.
    """
    iu = np.triu_indices(graph.L, k=1)
    s2 = np.sin(alpha) ** 2
    return 2.0 * (1.0 - 3.0 * s2) * float(np.sum(graph.couplings[iu] ** 2)) / graph.L


def coupling_scales(
    graph,
    alpha=0.0,
    connected_only=True,
    with_fid=True,
    fid_horizon=None,
    fid_samples=400,
):
    """Compute (J_median, J_fid, h_dd) for a graph.

    J_median is the median |b_nm| over pairs within r_max (set
    ``connected_only=False`` for the full-matrix median). J_fid = 1/tau_d
    with tau_d the 1/e crossing of <Ix>(t) under the bare dipolar
    Hamiltonian, located by linear interpolation between samples.
    """
    iu = np.triu_indices(graph.L, k=1)
    b = graph.couplings[iu]
    if connected_only:
        mask = graph.connected_mask()
        b_sel = b[mask]
    else:
        b_sel = b
    j_median = float(np.median(np.abs(b_sel))) if b_sel.size else 0.0

    flags = []
    h2 = h_dd_squared(graph, alpha)
    if h2 < 0.0:
        raise ValueError(
            f"h_dd^2 < 0 at alpha={alpha:.4f} (beyond the magic angle)"
        )
    h_dd = float(np.sqrt(h2))

    j_fid = float("nan")
    if with_fid:
        if np.allclose(graph.couplings, 0.0):
            flags.append("fid_undefined_noninteracting")
        else:
            from .propagation import fid_decay_time

            tau_d, fid_flags = fid_decay_time(
                graph, horizon=fid_horizon, samples=fid_samples
            )
            flags.extend(fid_flags)
            if np.isfinite(tau_d):
                j_fid = 1.0 / tau_d
    return CouplingScale(
        j_median=j_median, j_fid=j_fid, h_dd=h_dd, flags=tuple(flags)
    )


def graph_to_json(graph):
    """Serialize positions (canonical); couplings are recomputed on load."""
    return json.dumps(
        {
            "L": graph.L,
            "seed": graph.seed,
            "r_min": graph.r_min,
            "r_max": graph.r_max,
            "c_exp": graph.c_exp,
            "positions": graph.positions.tolist(),
            "field_axis": graph.field_axis.tolist(),
        },
        indent=1,
    )


def graph_from_json(text):
    doc = json.loads(text)
    positions = np.asarray(doc["positions"], dtype=float)
    axis = np.asarray(doc["field_axis"], dtype=float)
    c_exp = float(doc.get("c_exp", 1.0))
    return SpinGraph(
        L=int(doc["L"]),
        positions=positions,
        couplings=coupling_matrix(positions, axis, c_exp),
        field_axis=axis,
        r_min=float(doc["r_min"]),
        r_max=float(doc["r_max"]),
        seed=int(doc["seed"]),
        c_exp=c_exp,
    )
