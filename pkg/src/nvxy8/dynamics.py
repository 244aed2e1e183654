"""
Sensor response under a pulse program and an NV-axis RF field.

Three independent routes to the accumulated phase are provided:

* :func:`phase_closed_form` integrates y(t)*cos(...) analytically per segment,
* :func:`phase_numeric` applies the trapezoid rule per constant-sign segment,
* :func:`propagate_bloch` rotates a Bloch vector sample by sample under the
  rendered I/Q waveform (finite pulses, detuning and RF term included).

The RF phase ``phi0`` is referenced to the start of the sensing window (center
of the first pi/2 pulse), so ``phi0 = 0`` is the optimal phase at resonance.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .physics import coherence_envelope, ppm_to_volume_density, HBAR, MU0
from .pulses import modulation_function

FIXED = "fixed"
RANDOM_AVERAGED = "uniform_random_averaged"

# dipolar instantaneous-diffusion constant: (A/4)*gamma^2*n equals
# pi*mu0*hbar*gamma^2*n/(9*sqrt(3)) with gamma in rad/(s T)
DEFAULT_A_ID = 4 * np.pi * MU0 * HBAR / (9 * np.sqrt(3))

N_PHASE_QUADRATURE = 32


class AccuracyWarning(UserWarning):
    pass


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class RFField:
    amplitude: float = 0.0
    frequency: float = 19.23e6
    phase: float = 0.0
    phase_mode: str = FIXED

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("RF amplitude must be non-negative")
        if not self.frequency > 0:
            raise ValueError("RF frequency must be positive")
        if self.phase_mode not in (FIXED, RANDOM_AVERAGED):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")

    def with_phase(self, phase):
        return RFField(self.amplitude, self.frequency, phase, FIXED)


@dataclass(frozen=True)
class BlochState:
    x: float = 0.0
    y: float = 0.0
    z: float = 1.0

    def __post_init__(self):
        if self.norm > 1 + 1e-9:
            raise ValueError("Bloch vector norm exceeds 1")

    @property
    def vector(self):
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self):
        return float(np.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2))

    @property
    def population(self):
        """Bright-state (m_s = 0) population."""
        return 0.5 * (1.0 + self.z)


def _phase_integrals(seq, frequency):
    """Return (C, S) with int y(t) cos(w u + phi0) dt = C cos(phi0) - S sin(phi0).

    u is time measured from the sensing-window start.
    """
    mod = modulation_function(seq)
    w = 2 * np.pi * frequency
    c = s = 0.0
    for a, b, sign in mod.segments():
        ua, ub = a - mod.t_start, b - mod.t_start
        c += sign * (np.sin(w * ub) - np.sin(w * ua)) / w
        s += sign * (np.cos(w * ua) - np.cos(w * ub)) / w
    return c, s


def phase_closed_form(seq, field, consts):
    """Accumulated phase (rad) for ideal pulses and the field's fixed phase."""
    c, s = _phase_integrals(seq, field.frequency)
    integral = c * np.cos(field.phase) - s * np.sin(field.phase)
    return consts.gamma_angular * field.amplitude * integral


def phase_amplitude(seq, field, consts):
    """Largest phase over all RF phases, i.e. the optimal-phase value."""
    c, s = _phase_integrals(seq, field.frequency)
    return consts.gamma_angular * field.amplitude * np.hypot(c, s)


def resonant_phase(seq, amplitude, consts):
    """(2/pi) * gamma * B * N_pi * tau: ideal XY8 phase at resonance and optimal phase."""
    return 2 / np.pi * consts.gamma_angular * amplitude * seq.n_pi * seq.tau


def phase_numeric(seq, field, consts, step):
    """Trapezoid-rule oracle for :func:`phase_closed_form`.

    Each constant-sign segment of y(t) gets its own grid, so the error is
    O(step^2).  Steps coarser than tau/50 emit an :class:`AccuracyWarning`.
    """
    if seq.tau > 0 and step > seq.tau / 50:
        warnings.warn(f"step {step:g} s is coarser than tau/50; phase may be inaccurate",
                      AccuracyWarning, stacklevel=2)
    mod = modulation_function(seq)
    w = 2 * np.pi * field.frequency
    total = 0.0
    for a, b, sign in mod.segments():
        n = max(int(np.ceil((b - a) / step)), 1)
        u = np.linspace(a, b, n + 1) - mod.t_start
        total += sign * np.trapezoid(np.cos(w * u + field.phase), u)
    return consts.gamma_angular * field.amplitude * total


def bright_population(phi, seq, params):
    """p = (1 + E(T) cos(phi - readout_phase)) / 2 with E the echo envelope."""
    env = coherence_envelope(params, seq.sensing_time)
    return 0.5 * (1.0 + env * np.cos(np.asarray(phi) - seq.readout_phase))


def xy8_signal(phi, seq, params):
    """Signal difference p(no field) - p(field) for accumulated phase ``phi``."""
    return bright_population(0.0, seq, params) - bright_population(phi, seq, params)


def field_signal(seq, field, params):
    """xy8_signal for a field, averaging over RF phase in random-phase mode."""
    consts = params.consts
    if field.phase_mode == FIXED:
        return xy8_signal(phase_closed_form(seq, field, consts), seq, params)
    c, s = _phase_integrals(seq, field.frequency)
    phases = 2 * np.pi * np.arange(N_PHASE_QUADRATURE) / N_PHASE_QUADRATURE
    phis = consts.gamma_angular * field.amplitude * (c * np.cos(phases) - s * np.sin(phases))
    return float(np.mean(xy8_signal(phis, seq, params)))


def filter_function(seq, f):
    """Normalized filter weight |Y(f)|^2 / (2T/pi)^2.

    Y is the Fourier transform of y(t) over the sensing window of length T;
    the normalization puts the value 1 at f0 = 1/(2 tau) for CPMG timing.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    mod = modulation_function(seq)
    w = 2 * np.pi * f
    y = np.zeros(f.shape, dtype=complex)
    for a, b, sign in mod.segments():
        ua, ub = a - mod.t_start, b - mod.t_start
        y += sign * (np.exp(1j * w * ub) - np.exp(1j * w * ua)) / (1j * w)
    norm = 2 * seq.sensing_time / np.pi
    out = np.abs(y) ** 2 / norm ** 2
    return float(out) if out.ndim == 0 else out


def _rotation_matrices(omega, dt):
    """Rodrigues rotation matrices for rotation vectors ``omega * dt`` (n, 3)."""
    theta_vec = omega * dt
    theta = np.linalg.norm(theta_vec, axis=1)
    safe = np.where(theta > 0, theta, 1.0)
    k = theta_vec / safe[:, None]
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    c = np.cos(theta)
    s = np.sin(theta)
    v = 1.0 - c
    r = np.empty((len(theta), 3, 3))
    r[:, 0, 0] = c + kx * kx * v
    r[:, 0, 1] = kx * ky * v - kz * s
    r[:, 0, 2] = kx * kz * v + ky * s
    r[:, 1, 0] = ky * kx * v + kz * s
    r[:, 1, 1] = c + ky * ky * v
    r[:, 1, 2] = ky * kz * v - kx * s
    r[:, 2, 0] = kz * kx * v - ky * s
    r[:, 2, 1] = kz * ky * v + kx * s
    r[:, 2, 2] = c + kz * kz * v
    return r


def _chain_product(mats):
    """mats[n-1] @ ... @ mats[0] by pairwise reduction."""
    if len(mats) == 0:
        return np.eye(3)
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, np.eye(3)[None]])
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _bin_mean_cos(edges, w, phase, t_ref):
    a = edges[:-1] - t_ref
    b = edges[1:] - t_ref
    if w == 0:
        return np.full(len(a), np.cos(phase))
    return (np.sin(w * b + phase) - np.sin(w * a + phase)) / (w * (b - a))


def _propagator(wf, detuning, field, params, decoherence):
    dt = wf.dt
    n = len(wf)
    om_i, om_q = wf.rabi_iq()
    edges = np.arange(n + 1) * dt
    gamma = params.consts.gamma_e
    w = 2 * np.pi * field.frequency
    b = field.amplitude * _bin_mean_cos(edges, w, field.phase, wf.t_ref)
    om_z = detuning + gamma * b
    omega = 2 * np.pi * np.stack([om_i, om_q, om_z], axis=1)
    mats = _rotation_matrices(omega, dt)
    if not decoherence:
        return _chain_product(mats)
    if wf.t_readout is None:
        # no readout pulse: damp transverse components continuously
        elapsed = np.clip(edges - wf.t_ref, 0.0, None)
        env = coherence_envelope(params, elapsed)
        mats[:, 0:2, :] *= (env[1:] / env[:-1])[:, None, None]
        return _chain_product(mats)
    # pulses are decoherence-free: the whole sensing-window loss is applied
    # to the transverse components just before the readout pulse
    k = min(max(int(np.floor(wf.readout_start / dt + 1e-9)), 0), n)
    damp = np.diag([1.0, 1.0, 0.0])
    damp[:2, :2] *= coherence_envelope(params, max(wf.t_readout - wf.t_ref, 0.0))
    damp[2, 2] = 1.0
    return _chain_product(mats[k:]) @ damp @ _chain_product(mats[:k])


def propagate_bloch(wf, detuning, field, params, initial=None, decoherence=True):
    """Propagate a Bloch vector through a rendered waveform.

    Each sample is a piecewise-constant rotating-frame rotation about
    2*pi*(Omega_I, Omega_Q, detuning + gamma_e*B(t)), B averaged over the bin.
    With ``decoherence`` the transverse components lose the echo envelope
    E(T) of the sensing window.  Pulses are treated as decoherence-free, so
    for waveforms with a readout pulse the loss is applied once, just before
    it; otherwise the damping is continuous from ``t_ref``.

    Raises
    ------
    ResolutionError
        If the fastest precession is sampled with fewer than 10 points per period.
    """
    om_i, om_q = wf.rabi_iq()
    fastest = np.sqrt(np.max(om_i ** 2 + om_q ** 2, initial=0.0)
                      + (abs(detuning) + params.consts.gamma_e * field.amplitude) ** 2)
    if fastest * 10 > wf.sample_rate:
        raise ResolutionError(
            f"{wf.sample_rate:.3g} S/s resolves {fastest:.3g} Hz with fewer than 10 samples per period")
    start = np.array([0.0, 0.0, 1.0]) if initial is None else np.asarray(initial.vector, float)
    if field.phase_mode == RANDOM_AVERAGED:
        phases = 2 * np.pi * np.arange(N_PHASE_QUADRATURE) / N_PHASE_QUADRATURE
        total = sum(_propagator(wf, detuning, field.with_phase(p), params, decoherence) for p in phases)
        vec = (total / N_PHASE_QUADRATURE) @ start
    else:
        vec = _propagator(wf, detuning, field, params, decoherence) @ start
    norm = np.linalg.norm(vec)
    if norm > 1.0:
        # float round-off only
        vec = vec / norm
    return BlochState(*map(float, vec))


def lorentzian(f, center, fwhm):
    hw = fwhm / 2
    return hw ** 2 / ((f - center) ** 2 + hw ** 2)


def simulate_odmr(params, b_bias, freq_grid, linewidth, contrast=None, upper_branch=False):
    """Normalized photoluminescence with two Lorentzian dips at the hyperfine lines."""
    from .physics import resonance_frequencies

    f = np.asarray(freq_grid, dtype=float)
    if np.any(np.diff(f) <= 0):
        raise ValueError("freq_grid must be sorted ascending")
    widths = np.broadcast_to(np.asarray(linewidth, dtype=float), (2,))
    depth = params.contrast if contrast is None else contrast
    lines = resonance_frequencies(params, b_bias, upper_branch)
    out = np.ones_like(f)
    for center, width in zip(lines, widths):
        out -= depth * lorentzian(f, center, width)
    return out


def instantaneous_diffusion_rate(params, center_angle, a_id=DEFAULT_A_ID, n_nv_ppm=None):
    """Added echo decay rate (1/s): (A/4) gamma^2 n sin^2(theta/2)."""
    ppm = params.n_nv_ppm if n_nv_ppm is None else n_nv_ppm
    n = ppm_to_volume_density(ppm, params.consts)
    return a_id / 4 * params.consts.gamma_angular ** 2 * n * np.sin(np.asarray(center_angle) / 2) ** 2


def echo_rates(params, center_angle, a_id=DEFAULT_A_ID, reference_angle=np.pi):
    """Decay rates (fast, slow) in 1/s of the two echo components at ``center_angle``.

    The envelope time constants of ``params`` are taken as the decay measured
    with central angle ``reference_angle``; the instantaneous-diffusion rate
    at that angle is removed to get the angle-independent background, then
    the rate at ``center_angle`` is added back.
    """
    ref = instantaneous_diffusion_rate(params, reference_angle, a_id)
    background = np.array([1 / params.t2_fast, 1 / params.t2_slow]) - ref
    if np.any(background <= 0):
        raise ValueError("instantaneous-diffusion rate exceeds the measured decay rate; "
                         "background coherence would grow")
    added = instantaneous_diffusion_rate(params, center_angle, a_id)
    return background[0] + added, background[1] + added


def simulate_hahn_decay(params, tau_grid, center_angle, a_id=DEFAULT_A_ID, reference_angle=np.pi):
    """Echo amplitude versus the pi/2-to-pi/2 delay ``tau_grid``.

    Each envelope component decays at its background rate plus the
    instantaneous-diffusion rate (A/4) gamma^2 n sin^2(theta/2).  With the
    default ``reference_angle`` a standard pi echo reproduces
    :func:`coherence_envelope` exactly; ``reference_angle=0`` makes the
    envelope the pure background instead.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau <= 0) or np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be positive and ascending")
    r_fast, r_slow = echo_rates(params, center_angle, a_id, reference_angle)
    w = params.fast_weight
    return w * np.exp(-r_fast * tau) + (1 - w) * np.exp(-r_slow * tau)
