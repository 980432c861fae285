"""Drive protocol model and exact stroboscopic evolution.

A protocol is a pulse train (flip angle theta about the tilted axis
cos(a)x + sin(a)z, a = arctan(delta/Omega)) interleaved with acquisition
windows in which the spins evolve under H_dd + (delta + B_AC*f)Iz. All
window terms commute, so each window is a single exact exponential with
the window-averaged AC coefficient; there is no substepping error.

Timing conventions: pulse n starts at the nominal grid time n*tau and the
magnetization is recorded right after each pulse. Acquisition-window
jitter perturbs each window's duration (a different unitary every cycle)
while the AC waveform and the pulse grid stay on nominal time, so the
drive's phase relation does not random-walk over long runs.
"""

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from . import _kernels as kernels
from .lattice import generate_graph, normalized_graph
from .operators import (
    SpinOperator,
    StateVector,
    product_state_x,
    z_magnetization_diagonal,
)
from .propagation import DipolarSectorPropagator

NORM_ABORT_THRESHOLD = 1e-6


# ---------------------------------------------------------------------------
# waveforms

class SineWave:
    """Unit sinusoid sin(phase); the default AC shape."""

    def __call__(self, phase):
        return np.sin(phase)

    def phase_integral(self, a, b):
        """Integral of the shape over [a, b] in phase."""
        return np.cos(a) - np.cos(b)

    def to_json(self):
        return {"type": "sine"}


class HalfPeriodDistorted:
    """Sinusoid whose second half-period is scaled by ``ratio`` (A2 = ratio*A1)."""

    def __init__(self, ratio=5.0):
        self.ratio = float(ratio)

    def __call__(self, phase):
        u = np.mod(phase, 2.0 * np.pi)
        return np.where(u < np.pi, np.sin(u), self.ratio * np.sin(u))

    def _antiderivative(self, u):
        # F(0) = 0; F accumulates the (generally nonzero) DC component.
        if u <= np.pi:
            return 1.0 - np.cos(u)
        return 2.0 + self.ratio * (-np.cos(u) - 1.0)

    def phase_integral(self, a, b):
        period_val = 2.0 * (1.0 - self.ratio)
        ka, ra = divmod(a, 2.0 * np.pi)
        kb, rb = divmod(b, 2.0 * np.pi)
        return (
            (kb - ka) * period_val
            + self._antiderivative(rb)
            - self._antiderivative(ra)
        )

    def to_json(self):
        return {"type": "half_period_distorted", "ratio": self.ratio}


def waveform_from_json(doc):
    if doc is None:
        return SineWave()
    kind = doc.get("type", "sine")
    if kind == "sine":
        return SineWave()
    if kind == "half_period_distorted":
        return HalfPeriodDistorted(doc.get("ratio", 5.0))
    raise ValueError(f"unknown waveform type {kind!r}")


@dataclass(frozen=True)
class ChirpSpec:
    """Linear frequency ramp over one segment."""

    omega_start: float
    omega_end: float


# ---------------------------------------------------------------------------
# protocol types

@dataclass(frozen=True)
class ProtocolSegment:
    """One stretch of the drive with fixed AC parameters.

    ``N`` is the number of pulses per AC period and ``k`` the number of AC
    periods completed every N pulses; the segment is resonant when
    ac_omega = 2*pi*k/(N*tau).
    """

    n_pulses: int
    ac_amplitude: float
    ac_omega: object  # float or ChirpSpec
    ac_phase: float = 0.0
    waveform: object = field(default_factory=SineWave)
    N: int = 4
    k: int = 1

    @classmethod
    def resonant(cls, n_pulses, ac_amplitude, N, k, tau, ac_phase=0.0, waveform=None):
        omega = 2.0 * np.pi * k / (N * tau)
        return cls(
            n_pulses=n_pulses,
            ac_amplitude=ac_amplitude,
            ac_omega=omega,
            ac_phase=ac_phase,
            waveform=waveform if waveform is not None else SineWave(),
            N=N,
            k=k,
        )

    @property
    def is_chirped(self):
        return isinstance(self.ac_omega, ChirpSpec)

    def is_resonant(self, tau):
        if self.is_chirped:
            return False
        omega_res = 2.0 * np.pi * self.k / (self.N * tau)
        return math.isclose(float(self.ac_omega), omega_res, rel_tol=1e-12)

    def phase_at(self, dt_seg, duration=None):
        """Instantaneous AC phase at time dt_seg after the segment start."""
        if not self.is_chirped:
            return self.ac_phase + float(self.ac_omega) * dt_seg
        rate = (self.ac_omega.omega_end - self.ac_omega.omega_start) / duration
        return (
            self.ac_phase
            + self.ac_omega.omega_start * dt_seg
            + 0.5 * rate * dt_seg**2
        )

    def ac_time_integral(self, t0, t1, duration=None):
        """Integral of the waveform shape over [t0, t1] (segment-relative)."""
        if t1 <= t0:
            return 0.0
        if not self.is_chirped:
            omega = float(self.ac_omega)
            if omega == 0.0:
                return (t1 - t0) * float(self.waveform(self.ac_phase))
            a = self.ac_phase + omega * t0
            b = self.ac_phase + omega * t1
            return self.waveform.phase_integral(a, b) / omega
        val, _ = quad(
            lambda t: float(self.waveform(self.phase_at(t, duration))),
            t0,
            t1,
            epsabs=1e-13,
            epsrel=1e-10,
            limit=200,
        )
        return val

    def to_json(self):
        if self.is_chirped:
            omega = {
                "omega_start": self.ac_omega.omega_start,
                "omega_end": self.ac_omega.omega_end,
            }
        else:
            omega = float(self.ac_omega)
        return {
            "n_pulses": self.n_pulses,
            "ac_amplitude": self.ac_amplitude,
            "ac_omega": omega,
            "ac_phase": self.ac_phase,
            "waveform": self.waveform.to_json(),
            "N": self.N,
            "k": self.k,
        }

    @classmethod
    def from_json(cls, doc):
        omega = doc["ac_omega"]
        if isinstance(omega, dict):
            omega = ChirpSpec(float(omega["omega_start"]), float(omega["omega_end"]))
        else:
            omega = float(omega)
        return cls(
            n_pulses=int(doc["n_pulses"]),
            ac_amplitude=float(doc["ac_amplitude"]),
            ac_omega=omega,
            ac_phase=float(doc.get("ac_phase", 0.0)),
            waveform=waveform_from_json(doc.get("waveform")),
            N=int(doc.get("N", 4)),
            k=int(doc.get("k", 1)),
        )


@dataclass(frozen=True)
class DriveProtocol:
    """Full drive schedule: pulse-train parameters plus AC segments.

    The physically applied flip angle is theta_nominal + delta_theta and
    always satisfies theta = t_pulse*sqrt(Omega^2 + delta^2); use the
    ``from_*`` constructors to pick which quantities are primary.
    """

    segments: tuple
    tau: float
    t_pulse: float
    t_acq: float
    Omega: float
    delta: float
    theta_nominal: float
    delta_theta: float = 0.0
    eta_noise: float = 0.0
    acq_jitter: float = 0.0

    def __post_init__(self):
        if self.tau != self.t_pulse + self.t_acq:
            raise ValueError("tau must equal t_pulse + t_acq exactly")
        if not (0.0 <= self.eta_noise < 1.0 and 0.0 <= self.acq_jitter < 1.0):
            raise ValueError("eta_noise and acq_jitter must lie in [0, 1)")
        theta = self.t_pulse * math.sqrt(self.Omega**2 + self.delta**2)
        if not math.isclose(theta, self.theta_total, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                "inconsistent parameterization: t_pulse*sqrt(Omega^2+delta^2)"
                f"={theta:.12g} but theta_nominal+delta_theta={self.theta_total:.12g}"
            )

    @property
    def theta_total(self):
        return self.theta_nominal + self.delta_theta

    @property
    def alpha(self):
        return math.atan2(self.delta, self.Omega)

    @property
    def n_pulses_total(self):
        return sum(s.n_pulses for s in self.segments)

    @classmethod
    def from_pulse_width(
        cls, segments, tau, t_pulse, theta, delta,
        delta_theta=0.0, eta_noise=0.0, acq_jitter=0.0,
    ):
        """Primary quantities (tau, t_pulse, theta); Rabi frequency derived."""
        total = theta + delta_theta
        rate = total / t_pulse
        if rate <= abs(delta):
            raise ValueError("theta/t_pulse must exceed |delta|")
        omega = math.sqrt(rate**2 - delta**2)
        return cls(
            segments=tuple(segments),
            tau=tau,
            t_pulse=t_pulse,
            t_acq=tau - t_pulse,
            Omega=omega,
            delta=delta,
            theta_nominal=theta,
            delta_theta=delta_theta,
            eta_noise=eta_noise,
            acq_jitter=acq_jitter,
        )

    @classmethod
    def from_rabi(
        cls, segments, tau, t_pulse, Omega, delta,
        delta_theta=0.0, eta_noise=0.0, acq_jitter=0.0,
    ):
        """Primary quantities (tau, t_pulse, Omega); flip angle derived."""
        total = t_pulse * math.sqrt(Omega**2 + delta**2)
        return cls(
            segments=tuple(segments),
            tau=tau,
            t_pulse=t_pulse,
            t_acq=tau - t_pulse,
            Omega=Omega,
            delta=delta,
            theta_nominal=total - delta_theta,
            delta_theta=delta_theta,
            eta_noise=eta_noise,
            acq_jitter=acq_jitter,
        )

    @classmethod
    def from_angle(
        cls, segments, tau, theta, Omega, delta,
        delta_theta=0.0, eta_noise=0.0, acq_jitter=0.0,
    ):
        """Primary quantities (tau, theta, Omega); pulse width derived."""
        total = theta + delta_theta
        t_pulse = total / math.sqrt(Omega**2 + delta**2)
        if t_pulse >= tau:
            raise ValueError("derived t_pulse exceeds tau")
        return cls(
            segments=tuple(segments),
            tau=tau,
            t_pulse=t_pulse,
            t_acq=tau - t_pulse,
            Omega=Omega,
            delta=delta,
            theta_nominal=theta,
            delta_theta=delta_theta,
            eta_noise=eta_noise,
            acq_jitter=acq_jitter,
        )

    def with_segments(self, segments):
        return replace(
            self, segments=tuple(segments)
        )

    def to_json(self):
        return {
            "tau": self.tau,
            "t_pulse": self.t_pulse,
            "t_acq": self.t_acq,
            "Omega": self.Omega,
            "delta": self.delta,
            "theta_nominal": self.theta_nominal,
            "delta_theta": self.delta_theta,
            "eta_noise": self.eta_noise,
            "acq_jitter": self.acq_jitter,
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            segments=tuple(ProtocolSegment.from_json(s) for s in doc["segments"]),
            tau=float(doc["tau"]),
            t_pulse=float(doc["t_pulse"]),
            t_acq=float(doc["t_acq"]),
            Omega=float(doc["Omega"]),
            delta=float(doc["delta"]),
            theta_nominal=float(doc["theta_nominal"]),
            delta_theta=float(doc.get("delta_theta", 0.0)),
            eta_noise=float(doc.get("eta_noise", 0.0)),
            acq_jitter=float(doc.get("acq_jitter", 0.0)),
        )


def protocol_hash(protocol):
    payload = json.dumps(protocol.to_json(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


# ---------------------------------------------------------------------------
# record

@dataclass
class TrajectoryRecord:
    """Stroboscopic magnetization samples, one per pulse (per-spin units)."""

    times: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    segment_index: np.ndarray
    metadata: dict = field(default_factory=dict)
    valid: bool = True

    def __len__(self):
        return len(self.times)

    def magnetization(self):
        """(n, 3) array of (mx, my, mz)."""
        return np.column_stack([self.mx, self.my, self.mz])

    def to_csv(self, path_or_buf):
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w") if own else path_or_buf
        try:
            fh.write("pulse,time,mx,my,mz,segment\n")
            for i in range(len(self.times)):
                fh.write(
                    f"{i},{float(self.times[i])!r},{float(self.mx[i])!r},"
                    f"{float(self.my[i])!r},{float(self.mz[i])!r},"
                    f"{int(self.segment_index[i])}\n"
                )
        finally:
            if own:
                fh.close()

    def to_csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path_or_buf):
        data = np.genfromtxt(path_or_buf, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(
            times=np.asarray(data["time"], dtype=float),
            mx=np.asarray(data["mx"], dtype=float),
            my=np.asarray(data["my"], dtype=float),
            mz=np.asarray(data["mz"], dtype=float),
            segment_index=np.asarray(data["segment"], dtype=int),
        )


# ---------------------------------------------------------------------------
# operations

def sl_pulse_unitary(protocol, L, theta=None):
    """Spin-lock pulse unitary exp(-i*theta*(cos(a)Ix + sin(a)Iz)).

    Built as a Kronecker power of the single-qubit rotation; dense, so
    intended for analysis at small L (the evolution loop uses kernels).
    """
    if theta is None:
        theta = protocol.theta_total
    alpha = protocol.alpha
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    u = np.array(
        [
            [c - 1j * s * math.sin(alpha), -1j * s * math.cos(alpha)],
            [-1j * s * math.cos(alpha), c + 1j * s * math.sin(alpha)],
        ]
    )
    out = np.array([[1.0 + 0.0j]])
    for _ in range(L):
        out = np.kron(u, out)  # spin 0 is the least significant bit
    return SpinOperator(out, L, hermitian=False)


def window_phase_weight(n, k, segment, protocol):
    """Normalized AC integral f over acquisition window n + k.

    f = (1/t_acq) * integral of the waveform over the window
    [j*tau + t_pulse, (j+1)*tau], j = n + k, times measured from the
    segment start. Analytic for sinusoids, adaptive quadrature otherwise.
    """
    j = n + k
    t0 = j * protocol.tau + protocol.t_pulse
    t1 = (j + 1) * protocol.tau
    duration = segment.n_pulses * protocol.tau
    return segment.ac_time_integral(t0, t1, duration) / protocol.t_acq


def acquisition_propagator(graph, segment, window_index, protocol):
    """Exact window propagator exp(-i*t_acq*(H_dd + (delta + B*f_j)*Iz)).

    Single exponential: H_dd commutes with Iz, so the time-ordered
    exponential collapses once the AC coefficient is window-averaged.
    """
    from .operators import dipolar_hamiltonian

    f = window_phase_weight(window_index, 0, segment, protocol)
    coeff = protocol.delta + segment.ac_amplitude * f
    mz = z_magnetization_diagonal(graph.L)
    h = dipolar_hamiltonian(graph).toarray() + np.diag(coeff * mz)
    lam, vec = np.linalg.eigh(h)
    phases = np.exp(-1j * protocol.t_acq * lam)
    mat = (vec * phases) @ vec.conj().T
    return SpinOperator(mat, graph.L, hermitian=False)


def _noise_draws(protocol, seed):
    """Counter-based per-pulse draws: one Philox stream per run."""
    total = protocol.n_pulses_total
    rng = np.random.Generator(np.random.Philox(key=seed))
    zeta = (
        rng.uniform(-protocol.eta_noise, protocol.eta_noise, total)
        if protocol.eta_noise > 0.0
        else np.zeros(total)
    )
    jitter = (
        rng.uniform(-protocol.acq_jitter, protocol.acq_jitter, total)
        if protocol.acq_jitter > 0.0
        else np.zeros(total)
    )
    return zeta, jitter


def run_protocol(graph, protocol, state=None, seed=0):
    """Alternate pulses and acquisition windows, recording M after each pulse.

    Returns a TrajectoryRecord with per-spin magnetization (range
    [-1/2, 1/2]), nominal-grid timestamps, segment indices and metadata
    including the final norm drift. A catastrophic norm failure aborts
    with the partial record flagged invalid.
    """
    L = graph.L
    if state is None:
        state = product_state_x(L)
    if state.amplitudes.shape[0] != (1 << L):
        raise ValueError("state dimension does not match graph")
    psi = np.ascontiguousarray(state.amplitudes, dtype=complex).copy()
    prop = DipolarSectorPropagator(graph)
    mz = z_magnetization_diagonal(L)
    zeta, jitter = _noise_draws(protocol, seed)

    total = protocol.n_pulses_total
    times = np.empty(total)
    mx = np.empty(total)
    my = np.empty(total)
    mzrec = np.empty(total)
    seg_idx = np.empty(total, dtype=int)

    alpha = protocol.alpha
    theta0 = protocol.theta_total
    tau, t_pulse, t_acq = protocol.tau, protocol.t_pulse, protocol.t_acq
    valid = True
    p = 0
    t_seg_start = 0.0
    for s, segment in enumerate(protocol.segments):
        duration = segment.n_pulses * tau
        b_ac = segment.ac_amplitude
        for i in range(segment.n_pulses):
            kernels.apply_axis_rotation(psi, L, theta0 * (1.0 + zeta[p]), alpha)
            t_nominal = t_seg_start + i * tau + t_pulse
            ex, ey, ez = kernels.expect_xyz(psi, L, mz)
            times[p] = t_nominal
            mx[p] = ex / L
            my[p] = ey / L
            mzrec[p] = ez / L
            seg_idx[p] = s

            dt = t_acq * (1.0 + jitter[p])
            w0 = i * tau + t_pulse  # segment-relative window start
            z_phase = protocol.delta * dt
            if b_ac != 0.0:
                z_phase += b_ac * segment.ac_time_integral(w0, w0 + dt, duration)
            prop.evolve_window(psi, dt, z_phase, mz)
            p += 1
            if p % 512 == 0:
                nrm = np.linalg.norm(psi)
                if abs(nrm - 1.0) > NORM_ABORT_THRESHOLD:
                    valid = False
                    break
        if not valid:
            break
        t_seg_start += duration

    norm_drift = abs(float(np.linalg.norm(psi)) - 1.0)
    meta = {
        "protocol_hash": protocol_hash(protocol),
        "graph_seed": graph.seed,
        "run_seed": seed,
        "norm_drift": norm_drift,
        "kernel_backend": kernels.backend(),
    }
    record = TrajectoryRecord(
        times=times[:p] if not valid else times,
        mx=mx[:p] if not valid else mx,
        my=my[:p] if not valid else my,
        mz=mzrec[:p] if not valid else mzrec,
        segment_index=seg_idx[:p] if not valid else seg_idx,
        metadata=meta,
        valid=valid,
    )
    return record


def disorder_average(
    L, r_min, r_max, protocol, n_realizations, seed,
    normalize=True, state=None,
):
    """Average run_protocol over graphs with seeds seed, seed+1, ...

    Returns (averaged record, list of per-realization records). Couplings
    are rescaled to J_median = 1 per graph when ``normalize`` is set.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    records = []
    for i in range(n_realizations):
        if normalize:
            graph = normalized_graph(L, r_min, r_max, seed + i)
        else:
            graph = generate_graph(L, r_min, r_max, seed + i)
        records.append(run_protocol(graph, protocol, state=state, seed=seed + i))
    avg = TrajectoryRecord(
        times=np.mean([r.times for r in records], axis=0),
        mx=np.mean([r.mx for r in records], axis=0),
        my=np.mean([r.my for r in records], axis=0),
        mz=np.mean([r.mz for r in records], axis=0),
        segment_index=records[0].segment_index.copy(),
        metadata={
            "protocol_hash": protocol_hash(protocol),
            "n_realizations": n_realizations,
            "seed": seed,
        },
        valid=all(r.valid for r in records),
    )
    return avg, records
