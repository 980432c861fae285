"""Leading-order stroboscopic Floquet Hamiltonians and emergent fields.

For a resonant segment (N pulses per k full AC periods) the evolution over
one super-period T_F = N*tau is generated, to leading order in T_F, by

    H(0)_k = w_k . I  +  (t_acq/tau) * (1 - 3 sin^2 a) *
             sum_{n<m} b_nm (3/2 H_ff - I_n.I_m)

in the tilde basis that maps the pulse axis onto x. The emergent field
splits as w_k = v_x * xhat + u_k where u_k sums the per-window AC weights
f against the pulse-rotated z axis. Two normalizations of (v, u) are
kept: the bare geometric family (``u_tilde``; no duty-cycle factors,
matching the usual printed form) and the per-time generator actually
driving the stroboscopic dynamics (``u_rate``; AC windows occupy a
fraction t_acq/tau of the period and the N-window sum averages with
1/(N*tau)). Only the rate-normalized family reproduces exact evolution;
see ``validate_effective_hamiltonian``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .drive import window_phase_weight
from .lattice import SpinGraph
from .operators import SpinOperator, dipolar_hamiltonian, z_magnetization_diagonal
from .propagation import DipolarSectorPropagator, sector_indices

MAX_COMMENSURATE_N = 12


def commensurate_offset(theta, N):
    """Split theta into 2*pi*k/N + delta_theta with k the nearest integer."""
    k_c = round(N * theta / (2.0 * np.pi))
    return k_c, theta - 2.0 * np.pi * k_c / N


@dataclass(frozen=True)
class EmergentFieldFamily:
    """The N emergent micromotion fields of a resonant segment."""

    alpha: float
    theta: float
    delta_theta_eff: float  # theta minus the nearest commensurate angle
    N: int
    k_res: int
    duty: float  # t_acq / tau
    f_weights: np.ndarray  # (N,) window AC weights, index = absolute window mod N
    v_x: float  # geometric static part: delta*sin(a) + dtheta/tau
    u_tilde: np.ndarray  # (N, 3) geometric AC part, tilde frame
    w_tilde: np.ndarray  # (N, 3)
    v_x_rate: float  # per-time static part: (t_acq/tau)*delta*sin(a) + dtheta/tau
    u_rate: np.ndarray  # (N, 3) per-time AC part = u_tilde * t_acq/(N*tau)
    w_rate: np.ndarray  # (N, 3) physical generator field
    w_rot: np.ndarray  # (N, 3) geometric family in the unrotated frame
    w_rot_rate: np.ndarray  # (N, 3) physical family in the unrotated frame

    @property
    def n_hat(self):
        """Unrotated-frame axis the polygon is centered on."""
        return np.array([math.cos(self.alpha), 0.0, math.sin(self.alpha)])

    def to_json(self):
        return {
            "alpha": self.alpha,
            "v_x": self.v_x,
            "u_k": self.u_tilde[:, 1:].tolist(),  # (uy, uz) per k
            "w_rot": self.w_rot.tolist(),
            "norms": np.linalg.norm(self.w_tilde, axis=1).tolist(),
            "v_x_rate": self.v_x_rate,
            "w_rot_rate": self.w_rot_rate.tolist(),
            "f_weights": self.f_weights.tolist(),
            "N": self.N,
            "k_res": self.k_res,
        }


def _tilt_to_rotated(vectors, alpha):
    """Undo the tilde basis: x -> cos(a)x + sin(a)z, z -> cos(a)z - sin(a)x."""
    out = np.empty_like(vectors)
    ca, sa = math.cos(alpha), math.sin(alpha)
    out[..., 0] = ca * vectors[..., 0] - sa * vectors[..., 2]
    out[..., 1] = vectors[..., 1]
    out[..., 2] = sa * vectors[..., 0] + ca * vectors[..., 2]
    return out


def emergent_field(protocol, segment, max_delta_theta=None):
    """Emergent-field family w_k for a resonant segment.

    Raises ValueError off resonance (the leading-order theory assumes the
    AC period locks to the pulse train) or when theta is too far from any
    commensurate fraction 2*pi*k/N with N <= 12.
    """
    if not segment.is_resonant(protocol.tau):
        raise ValueError("emergent_field requires a resonant segment")
    N = segment.N
    theta = protocol.theta_total
    alpha = protocol.alpha
    _, dtheta = commensurate_offset(theta, N)
    if max_delta_theta is None:
        max_delta_theta = 0.9 * np.pi / N
    if abs(dtheta) > max_delta_theta:
        raise ValueError(
            f"flip angle {theta:.4f} deviates by {dtheta:.4f} from the nearest "
            f"commensurate angle (cap {max_delta_theta:.4f})"
        )

    f = np.array(
        [window_phase_weight(j, 0, segment, protocol) for j in range(N)]
    )
    b_ca = segment.ac_amplitude * math.cos(alpha)
    u = np.zeros((N, 3))
    for k in range(N):
        for n in range(1, N + 1):
            fw = f[(n + k) % N]
            u[k, 1] += math.sin(n * theta) * fw
            u[k, 2] += math.cos(n * theta) * fw
    u *= b_ca

    duty = protocol.t_acq / protocol.tau
    v_x = protocol.delta * math.sin(alpha) + dtheta / protocol.tau
    v_x_rate = duty * protocol.delta * math.sin(alpha) + dtheta / protocol.tau
    u_rate = u * (protocol.t_acq / (N * protocol.tau))

    w_tilde = u.copy()
    w_tilde[:, 0] += v_x
    w_rate = u_rate.copy()
    w_rate[:, 0] += v_x_rate

    return EmergentFieldFamily(
        alpha=alpha,
        theta=theta,
        delta_theta_eff=dtheta,
        N=N,
        k_res=segment.k,
        duty=duty,
        f_weights=f,
        v_x=v_x,
        u_tilde=u,
        w_tilde=w_tilde,
        v_x_rate=v_x_rate,
        u_rate=u_rate,
        w_rate=w_rate,
        w_rot=_tilt_to_rotated(w_tilde, alpha),
        w_rot_rate=_tilt_to_rotated(w_rate, alpha),
    )


def basis_rotation(alpha, L):
    """Global rotation V = exp(-i*alpha*Iy); V (cos(a)Ix + sin(a)Iz) V^dag = Ix."""
    c = math.cos(0.5 * alpha)
    s = math.sin(0.5 * alpha)
    u = np.array([[c, -s], [s, c]], dtype=complex)
    out = np.array([[1.0 + 0.0j]])
    for _ in range(L):
        out = np.kron(u, out)
    return SpinOperator(out, L, hermitian=False)


def _single_body(w, L):
    """Dense w . I for a 3-vector w."""
    from .operators import collective_operator

    dim = 1 << L
    mat = np.zeros((dim, dim), dtype=complex)
    for comp, axis in zip(w, "xyz"):
        if comp != 0.0:
            mat += comp * collective_operator(L, axis).toarray()
    return mat


def _pair_term(L, n, m, ops):
    """Dense sum of c * I_{n,a} I_{m,b} terms; ops = [(c, a, b), ...]."""
    sx = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
    sy = np.array([[0, -0.5j], [0.5j, 0]], dtype=complex)
    sz = np.array([[0.5, 0], [0, -0.5]], dtype=complex)
    single = {"x": sx, "y": sy, "z": sz}

    def site_op(j, a):
        out = np.array([[1.0 + 0.0j]])
        for site in range(L):
            out = np.kron(single[a] if site == j else np.eye(2), out)
        return out

    dim = 1 << L
    mat = np.zeros((dim, dim), dtype=complex)
    for c, a, b in ops:
        mat += c * (site_op(n, a) @ site_op(m, b))
    return mat


@dataclass(frozen=True)
class FloquetHamiltonian:
    """Stroboscopic generator H(0)_k; exp(-i*N*tau*H) approximates U_F;k.

    ``operator`` stores the physical per-time generator (duty-cycle
    factors included); ``interaction_scale`` = (t_acq/tau)*(1-3sin^2 a)
    is the prefactor multiplying the bare flip-flop combination, kept
    explicit so unit mismatches with exact propagators are visible.
    """

    k: int
    frame: str
    operator: SpinOperator
    w: np.ndarray
    interaction_scale: float
    period: float


def floquet_hamiltonian(graph, protocol, segment, k, frame="tilde"):
    """Assemble the leading-order Floquet Hamiltonian in the given frame."""
    if frame not in ("tilde", "rotated"):
        raise ValueError(f"frame must be 'tilde' or 'rotated', got {frame!r}")
    family = emergent_field(protocol, segment)
    L = graph.L
    alpha = family.alpha
    w = family.w_rate[k % family.N] if frame == "tilde" else family.w_rot_rate[k % family.N]
    mat = _single_body(w, L)

    g = family.duty * (1.0 - 3.0 * math.sin(alpha) ** 2)
    ca, sa = math.cos(alpha), math.sin(alpha)
    if frame == "tilde":
        # 3/2 (IzIz + IyIy) - I.I  =  1/2 IzIz + 1/2 IyIy - IxIx
        ops = [(0.5, "z", "z"), (0.5, "y", "y"), (-1.0, "x", "x")]
    else:
        # flip-flop with z conjugated back through the alpha tilt
        ops = [
            (1.5 * ca * ca - 1.0, "z", "z"),
            (1.5 * sa * sa - 1.0, "x", "x"),
            (0.5, "y", "y"),
            (-1.5 * ca * sa, "x", "z"),
            (-1.5 * ca * sa, "z", "x"),
        ]
    b = graph.couplings
    for n in range(L):
        for m in range(n + 1, L):
            if b[n, m] != 0.0:
                mat += g * b[n, m] * _pair_term(L, n, m, ops)
    return FloquetHamiltonian(
        k=k % family.N,
        frame=frame,
        operator=SpinOperator(mat, L, hermitian=True),
        w=w,
        interaction_scale=g,
        period=family.N * protocol.tau,
    )


def _dense_dd_propagator(graph, dt):
    """Dense exp(-i*dt*H_dd) assembled from the sector eigendecomposition."""
    prop = DipolarSectorPropagator(graph)
    dim = 1 << graph.L
    out = np.zeros((dim, dim), dtype=complex)
    for sel, lam, vec in zip(prop.sectors, prop._eigvals, prop._eigvecs):
        if vec is None:
            out[sel[0], sel[0]] = np.exp(-1j * dt * lam[0])
            continue
        out[np.ix_(sel, sel)] = (vec * np.exp(-1j * dt * lam)) @ vec.conj().T
    return out


def exact_floquet_unitary(graph, protocol, segment, k):
    """Exact one-period unitary U_F;k (dense; jitter and noise off).

    The period starts with the pulse preceding window k+1, matching the
    window bookkeeping of :func:`emergent_field`.
    """
    from .drive import sl_pulse_unitary

    L = graph.L
    N = segment.N
    u_pulse = sl_pulse_unitary(protocol, L).matrix
    w_dd = _dense_dd_propagator(graph, protocol.t_acq)
    mz = z_magnetization_diagonal(L)
    u = np.eye(1 << L, dtype=complex)
    for n in range(1, N + 1):
        f = window_phase_weight(n + k, 0, segment, protocol)
        coeff = protocol.delta + segment.ac_amplitude * f
        phases = np.exp(-1j * protocol.t_acq * coeff * mz)
        window = w_dd * phases[None, :]  # w_dd @ diag(phases); factors commute
        u = window @ (u_pulse @ u)
    return u


def spectral_norm(mat, iters=20, seed=0):
    """Largest singular value via power iteration on M^dag M."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=mat.shape[1]) + 1j * rng.normal(size=mat.shape[1])
    v /= np.linalg.norm(v)
    gram = mat.conj().T @ mat
    for _ in range(iters):
        v = gram @ v
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        v /= nrm
    return float(np.sqrt(np.real(np.vdot(v, gram @ v))))


def _phase_aligned_defect(u_exact, u_eff, iters=20):
    """Spectral and Frobenius defect between unitaries, modulo global phase.

    Commensurate pulses contribute exp(-2i*pi*k_c*(n.I)) over one period,
    a pure global phase; it is aligned away via the trace before comparing.
    """
    tr = np.trace(u_eff.conj().T @ u_exact)
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    diff = u_exact - phase * u_eff
    return spectral_norm(diff, iters=iters), float(np.linalg.norm(diff))


@dataclass(frozen=True)
class ConvergenceReport:
    """Defect of exp(-i*T_F*H(0)) against the exact one-period unitary."""

    periods: np.ndarray  # T_F at each halving level
    defects: np.ndarray  # spectral norm (phase-aligned)
    defects_frobenius: np.ndarray
    order: float  # fitted p in d ~ T_F^p
    k: int
    b_ac_fixed: bool

    def halving_ratios(self):
        return self.defects[:-1] / self.defects[1:]


def _scaled_copy(protocol, segment, scale, fix_b_ac):
    """Halve the timing (tau, t_pulse, t_acq) at fixed flip angle.

    fix_b_ac=True keeps the physical AC amplitude (the paper's
    high-frequency regime omega_AC >> {J, Omega, B_AC, delta}); otherwise
    B_AC/omega_AC is held fixed instead.
    """
    from .drive import DriveProtocol, ProtocolSegment

    tau = protocol.tau * scale
    proto = DriveProtocol.from_pulse_width(
        segments=(),
        tau=tau,
        t_pulse=protocol.t_pulse * scale,
        theta=protocol.theta_nominal,
        delta=protocol.delta,
        delta_theta=protocol.delta_theta,
    )
    b_ac = segment.ac_amplitude if fix_b_ac else segment.ac_amplitude / scale
    seg = ProtocolSegment.resonant(
        n_pulses=segment.n_pulses,
        ac_amplitude=b_ac,
        N=segment.N,
        k=segment.k,
        tau=tau,
        ac_phase=segment.ac_phase,
        waveform=segment.waveform,
    )
    return proto.with_segments((seg,)), seg


def validate_effective_hamiltonian(
    graph, protocol, segment, k, halvings=3, fix_b_ac=True, norm_iters=20
):
    """Convergence study of the leading-order Floquet Hamiltonian.

    Computes the per-period defect at successively halved periods
    (tau, t_pulse, t_acq scaled together at fixed flip angle) and fits
    d ~ T_F^p. First-order truncation gives p -> 2.
    """
    periods = []
    defects = []
    defects_f = []
    for level in range(halvings + 1):
        proto_s, seg_s = _scaled_copy(protocol, segment, 0.5**level, fix_b_ac)
        u_exact = exact_floquet_unitary(graph, proto_s, seg_s, k)
        h_eff = floquet_hamiltonian(graph, proto_s, seg_s, k, frame="rotated")
        lam, vec = np.linalg.eigh(h_eff.operator.toarray())
        u_eff = (vec * np.exp(-1j * h_eff.period * lam)) @ vec.conj().T
        d, d_f = _phase_aligned_defect(u_exact, u_eff, iters=norm_iters)
        periods.append(h_eff.period)
        defects.append(d)
        defects_f.append(d_f)
    periods = np.asarray(periods)
    defects = np.asarray(defects)
    slope = np.polyfit(np.log(periods), np.log(np.maximum(defects, 1e-300)), 1)[0]
    return ConvergenceReport(
        periods=periods,
        defects=defects,
        defects_frobenius=np.asarray(defects_f),
        order=float(slope),
        k=k,
        b_ac_fixed=fix_b_ac,
    )
