"""
Pulse programs and their IQ baseband rendering.

A :class:`SequenceSpec` is a symbolic list of shaped pulses whose centers are
real-valued times, not snapped to the AWG grid.  :func:`render_waveform`
turns it into signed 16-bit I/Q sample pairs.  Each sample holds the mean of
the analytic envelope over its 1/sample_rate bin, so the rendered rotation
area is exact before quantization and the amplitude-weighted centroid of a
pulse follows its center time with sub-picosecond resolution.

Time origin: t = 0 is the leading edge of the first pulse envelope.  Sample k
covers [k/fs, (k+1)/fs).
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

COSINE_SQUARE = "cosine_square"
RECTANGULAR = "rectangular"
ENVELOPES = (COSINE_SQUARE, RECTANGULAR)

PHASE_X = 0.0
PHASE_Y = np.pi / 2
XY8_PHASES = (PHASE_X, PHASE_Y, PHASE_X, PHASE_Y, PHASE_Y, PHASE_X, PHASE_Y, PHASE_X)

INT16_MAX = 32767
INT16_MIN = -32768

# slack for touching envelopes, well below the 1 ps timing scale
_TIME_EPS = 1e-15


class InfeasibleSequenceError(ValueError):
    pass


class UnsupportedSequenceError(ValueError):
    pass


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class PulseSpec:
    center_time: float
    duration: float
    phase: float = 0.0
    target_angle: float = np.pi
    envelope: str = COSINE_SQUARE

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        # zero angle is allowed for the degenerate Hahn point
        if not 0.0 <= self.target_angle <= 2 * np.pi + 1e-12:
            raise ValueError("target_angle must lie in [0, 2*pi]")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.start < -_TIME_EPS:
            raise InfeasibleSequenceError("pulse starts before t = 0")

    @property
    def start(self):
        return self.center_time - self.duration / 2

    @property
    def end(self):
        return self.center_time + self.duration / 2

    @property
    def peak_rabi(self):
        """Peak Rabi frequency (Hz) that yields ``target_angle``.

        The envelope integral is d/2 for cos^2 and d for a rectangle; the
        rotation angle is 2*pi times the Rabi-frequency integral.
        """
        area = self.target_angle / (2 * np.pi)
        if self.envelope == COSINE_SQUARE:
            return area / (self.duration / 2)
        return area / self.duration

    @property
    def rect_equivalent_length(self):
        """Length of a rectangular pulse with the same peak amplitude and angle."""
        return self.target_angle / (2 * np.pi) / self.peak_rabi if self.peak_rabi else 0.0

    def envelope_integral(self, t):
        """Integral of the unit-peak envelope from the pulse start to ``t``."""
        d = self.duration
        u = np.clip(np.asarray(t, dtype=float) - self.center_time, -d / 2, d / 2)
        if self.envelope == COSINE_SQUARE:
            return (u + d / 2) / 2 + d / (4 * np.pi) * np.sin(2 * np.pi * u / d)
        return u + d / 2

    def envelope_value(self, t):
        d = self.duration
        u = np.asarray(t, dtype=float) - self.center_time
        inside = np.abs(u) <= d / 2
        if self.envelope == COSINE_SQUARE:
            return np.where(inside, np.cos(np.pi * u / d) ** 2, 0.0)
        return np.where(inside, 1.0, 0.0)


@dataclass(frozen=True)
class SequenceSpec:
    """Ordered, non-overlapping pulse program.

    ``tau`` is the pi-pulse period (for Hahn sequences, the pi/2-to-pi delay)
    and ``n_reps`` the XY8 repetition count (0 for non-XY8 programs).
    ``readout_phase`` is measured from the axis that maps the unperturbed echo
    back to the bright state.
    """

    pulses: tuple
    total_time: float
    tau: float = 0.0
    n_reps: int = 0
    readout_phase: float = 0.0
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if self.total_time < 0:
            raise InfeasibleSequenceError("total_time must be non-negative")
        prev = None
        for i, p in enumerate(self.pulses):
            if p.end > self.total_time + _TIME_EPS:
                raise InfeasibleSequenceError(f"pulse {i} extends past total_time")
            if prev is not None:
                if p.center_time < prev.center_time:
                    raise InfeasibleSequenceError(f"pulse {i} is out of order")
                if p.start < prev.end - _TIME_EPS:
                    raise InfeasibleSequenceError(
                        f"pulse {i} overlaps pulse {i - 1} "
                        f"({(prev.end - p.start) * 1e12:.3f} ps overlap)")
            prev = p

    @property
    def pi_pulses(self):
        return self.pulses[1:-1]

    @property
    def sensing_window(self):
        """(start, stop): centers of the first and last pulse."""
        if len(self.pulses) < 2:
            raise UnsupportedSequenceError("sequence has no sensing window")
        return self.pulses[0].center_time, self.pulses[-1].center_time

    @property
    def sensing_time(self):
        a, b = self.sensing_window
        return b - a

    @property
    def n_pi(self):
        return len(self.pi_pulses)


def _pi_half(center, t_pi, envelope, phase):
    # same peak amplitude as the pi pulses, half the support -> half the area
    return PulseSpec(center, t_pi / 2, phase, np.pi / 2, envelope)


def build_xy8(n_reps, tau, t_pi, envelope=COSINE_SQUARE, readout_phase=0.0):
    """XY8-N program: pi/2_X, 8N pi pulses (XYXYYXYX), pi/2 readout.

    ``t_pi`` is the envelope support of each pi pulse.  pi-pulse centers sit at
    tau/2 + k*tau after the first pi/2 center, so the sensing time is 8*N*tau.
    The eight-pulse block is the identity rotation, hence the readout pi/2 is
    applied about -X (plus ``readout_phase``) to return the echo to +z.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    if not tau > t_pi:
        raise InfeasibleSequenceError(f"tau ({tau:g} s) must exceed t_pi ({t_pi:g} s)")
    if tau < 1.5 * t_pi:
        raise InfeasibleSequenceError(
            f"tau ({tau:g} s) leaves no room between the pi/2 and the first pi pulse; need >= 1.5 t_pi")
    c0 = t_pi / 4
    pulses = [_pi_half(c0, t_pi, envelope, PHASE_X)]
    for k in range(8 * n_reps):
        pulses.append(PulseSpec(c0 + tau / 2 + k * tau, t_pi, XY8_PHASES[k % 8], np.pi, envelope))
    c_end = c0 + 8 * n_reps * tau
    pulses.append(_pi_half(c_end, t_pi, envelope, np.pi + readout_phase))
    return SequenceSpec(tuple(pulses), c_end + t_pi / 4, tau, n_reps, readout_phase, "xy8")


def build_hahn(tau_half, center_angle, t_pi, envelope=COSINE_SQUARE, readout_phase=0.0):
    """pi/2 - tau_half - theta - tau_half - pi/2 echo with a variable central angle."""
    if not tau_half > t_pi:
        raise InfeasibleSequenceError("tau_half must exceed t_pi")
    c0 = t_pi / 4
    pulses = (
        _pi_half(c0, t_pi, envelope, PHASE_X),
        PulseSpec(c0 + tau_half, t_pi, PHASE_X, float(center_angle), envelope),
        _pi_half(c0 + 2 * tau_half, t_pi, envelope, readout_phase),
    )
    return SequenceSpec(pulses, c0 + 2 * tau_half + t_pi / 4, tau_half, 0, readout_phase, "hahn")


def shift_pulse_center(seq, pulse_index, delta):
    """Return a copy of ``seq`` with one pulse center moved by ``delta`` seconds."""
    pulses = list(seq.pulses)
    p = pulses[pulse_index]
    pulses[pulse_index] = replace(p, center_time=p.center_time + delta)
    return replace(seq, pulses=tuple(pulses))


@dataclass(frozen=True)
class WaveformIQ:
    sample_rate: float
    i_samples: np.ndarray
    q_samples: np.ndarray
    full_scale_rabi: float
    t_ref: float = 0.0
    # center and leading edge of the readout pulse, when the waveform has one
    t_readout: float = None
    readout_start: float = None

    def __post_init__(self):
        i = np.asarray(self.i_samples)
        q = np.asarray(self.q_samples)
        if i.shape != q.shape or i.ndim != 1:
            raise ValueError("I and Q must be 1-D arrays of equal length")
        for arr in (i, q):
            if arr.size and (arr.min() < INT16_MIN or arr.max() > INT16_MAX):
                raise ValueError("samples outside the signed 16-bit range")
        object.__setattr__(self, "i_samples", i.astype(np.int16))
        object.__setattr__(self, "q_samples", q.astype(np.int16))

    def __len__(self):
        return len(self.i_samples)

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def times(self):
        """Bin-center time of every sample."""
        return (np.arange(len(self)) + 0.5) / self.sample_rate

    def rabi_iq(self):
        """Dequantized (Omega_I, Omega_Q) in Hz."""
        scale = self.full_scale_rabi / INT16_MAX
        return self.i_samples * scale, self.q_samples * scale

    def __eq__(self, other):
        if not isinstance(other, WaveformIQ):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and self.full_scale_rabi == other.full_scale_rabi
                and self.t_ref == other.t_ref
                and self.t_readout == other.t_readout
                and self.readout_start == other.readout_start
                and np.array_equal(self.i_samples, other.i_samples)
                and np.array_equal(self.q_samples, other.q_samples))


def _quantize(x, full_scale):
    return np.clip(np.rint(x / full_scale * INT16_MAX), INT16_MIN, INT16_MAX).astype(np.int16)


def render_waveform(seq, sample_rate=1e9, full_scale_rabi=100e6):
    """Render a sequence into quantized I/Q samples.

    Parameters
    ----------
    seq : SequenceSpec
    sample_rate : float
        AWG sample rate in Hz.
    full_scale_rabi : float
        Rabi frequency (Hz) produced by a full-scale (32767) sample.

    Raises
    ------
    RenderError
        If any pulse needs a peak amplitude above full scale.
    """
    n = int(np.ceil(seq.total_time * sample_rate - 1e-9))
    dt = 1.0 / sample_rate
    i_acc = np.zeros(n)
    q_acc = np.zeros(n)
    for idx, p in enumerate(seq.pulses):
        peak = p.peak_rabi
        if peak > full_scale_rabi * (1 + 1e-12):
            raise RenderError(
                f"pulse {idx} (center {p.center_time * 1e9:.4f} ns) needs "
                f"{peak / 1e6:.3f} MHz peak Rabi, full scale is {full_scale_rabi / 1e6:.3f} MHz")
        if peak == 0:
            continue
        k0 = max(int(np.floor(p.start * sample_rate)), 0)
        k1 = min(int(np.ceil(p.end * sample_rate)), n)
        edges = np.arange(k0, k1 + 1) * dt
        mean_env = np.diff(p.envelope_integral(edges)) / dt
        amp = peak * mean_env
        i_acc[k0:k1] += amp * np.cos(p.phase)
        q_acc[k0:k1] += amp * np.sin(p.phase)
    t_ref, t_read, read_start = 0.0, None, None
    if len(seq.pulses) >= 2:
        t_ref = seq.pulses[0].center_time
        t_read, read_start = seq.pulses[-1].center_time, seq.pulses[-1].start
    return WaveformIQ(sample_rate, _quantize(i_acc, full_scale_rabi),
                      _quantize(q_acc, full_scale_rabi), full_scale_rabi, t_ref, t_read, read_start)


def constant_drive_waveform(duration, rabi, sample_rate=1e9, full_scale_rabi=100e6, phase=0.0):
    """Rectangular drive of arbitrary length, e.g. for Rabi nutation."""
    if rabi > full_scale_rabi:
        raise RenderError("drive amplitude exceeds full scale")
    n = int(np.ceil(duration * sample_rate - 1e-9))
    edges = np.arange(n + 1) / sample_rate
    frac = np.diff(np.clip(edges, 0.0, duration)) * sample_rate
    amp = rabi * frac
    return WaveformIQ(sample_rate, _quantize(amp * np.cos(phase), full_scale_rabi),
                      _quantize(amp * np.sin(phase), full_scale_rabi), full_scale_rabi)


def pulse_sample_span(wf, pulse):
    k0 = max(int(np.floor(pulse.start * wf.sample_rate)), 0)
    k1 = min(int(np.ceil(pulse.end * wf.sample_rate)), len(wf))
    return k0, k1


def pulse_areas(wf, seq):
    """Rendered rotation angle of every pulse, 2*pi*sum(|Omega|)*dt over its span."""
    om_i, om_q = wf.rabi_iq()
    mag = np.hypot(om_i, om_q)
    out = []
    for p in seq.pulses:
        k0, k1 = pulse_sample_span(wf, p)
        out.append(2 * np.pi * mag[k0:k1].sum() * wf.dt)
    return np.array(out)


def waveform_centroid(wf, t_start=None, t_stop=None):
    """Amplitude-weighted mean time of |I + iQ| over bins centered in [t_start, t_stop]."""
    t = wf.times
    mag = np.hypot(wf.i_samples.astype(float), wf.q_samples.astype(float))
    mask = np.ones(len(t), bool)
    if t_start is not None:
        mask &= t >= t_start
    if t_stop is not None:
        mask &= t <= t_stop
    w = mag[mask]
    if w.sum() == 0:
        raise ValueError("no signal in the requested window")
    return float((w * t[mask]).sum() / w.sum())


@dataclass(frozen=True)
class ModulationFunction:
    """Ideal-pulse toggling sign y(t) over the sensing window.

    ``flip_times`` are absolute times; y = +1 before the first flip and
    changes sign at each one.  Outside the window y = 0.
    """

    t_start: float
    t_stop: float
    flip_times: np.ndarray = field(repr=False)

    @property
    def n_flips(self):
        return len(self.flip_times)

    @property
    def relative_flip_times(self):
        return self.flip_times - self.t_start

    def segments(self):
        """List of (a, b, sign) constant pieces covering the window."""
        bounds = np.concatenate(([self.t_start], self.flip_times, [self.t_stop]))
        signs = (-1.0) ** np.arange(len(bounds) - 1)
        return [(float(a), float(b), float(s)) for a, b, s in zip(bounds[:-1], bounds[1:], signs)]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = np.searchsorted(self.flip_times, t, side="right")
        y = np.where(n % 2 == 0, 1.0, -1.0)
        return np.where((t >= self.t_start) & (t <= self.t_stop), y, 0.0)

    def integral(self):
        return sum(s * (b - a) for a, b, s in self.segments())


def modulation_function(seq):
    if len(seq.pulses) < 2:
        raise UnsupportedSequenceError("need at least the two pi/2 pulses")
    for i, p in enumerate(seq.pi_pulses, start=1):
        if not np.isclose(p.target_angle, np.pi, rtol=0, atol=1e-9):
            raise UnsupportedSequenceError(
                f"pulse {i} has angle {p.target_angle:.4f} rad; only pi pulses are supported")
    a, b = seq.sensing_window
    flips = np.array([p.center_time for p in seq.pi_pulses], dtype=float)
    return ModulationFunction(a, b, flips)


def bandwidth_estimate(wf, fraction=0.99, oversample=16):
    """Two-sided occupied bandwidth (Hz) holding ``fraction`` of the energy.

    The spectrum is the zero-padded DFT of I + iQ; the band runs between the
    (1 - fraction)/2 and (1 + fraction)/2 points of the cumulative energy.
    """
    x = wf.i_samples.astype(float) + 1j * wf.q_samples.astype(float)
    if not np.any(x):
        raise ValueError("bandwidth is undefined for an all-zero waveform")
    nfft = 1 << int(np.ceil(np.log2(max(oversample * len(x), 4096))))
    spec = np.fft.fftshift(np.abs(np.fft.fft(x, nfft)) ** 2)
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, d=wf.dt))
    cum = np.cumsum(spec)
    cum /= cum[-1]
    tail = (1.0 - fraction) / 2
    f_lo = np.interp(tail, cum, freqs)
    f_hi = np.interp(1.0 - tail, cum, freqs)
    return float(f_hi - f_lo)


# --- waveform files -------------------------------------------------------

def write_iq_text(path, wf):
    """Two-column text export: header lines, then one ``I Q`` pair per line."""
    path = Path(path)
    lines = [
        "# nvxy8 IQ waveform",
        f"# sample_rate = {wf.sample_rate!r}",
        f"# full_scale_rabi = {wf.full_scale_rabi!r}",
        f"# t_ref = {wf.t_ref!r}",
    ]
    if wf.t_readout is not None:
        lines += [f"# t_readout = {wf.t_readout!r}", f"# readout_start = {wf.readout_start!r}"]
    lines.append("# columns: I Q (signed 16-bit)")
    lines += [f"{i} {q}" for i, q in zip(wf.i_samples.tolist(), wf.q_samples.tolist())]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_iq_text(path):
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line:
                key, val = line[1:].split("=", 1)
                meta[key.strip()] = float(val)
            continue
        i, q = line.split()
        rows.append((int(i), int(q)))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return WaveformIQ(meta["sample_rate"], arr[:, 0], arr[:, 1],
                      meta["full_scale_rabi"], meta.get("t_ref", 0.0),
                      meta.get("t_readout"), meta.get("readout_start"))


def write_iq_binary(path, wf):
    """Little-endian interleaved int16 pairs (I0 Q0 I1 Q1 ...), no header."""
    inter = np.empty(2 * len(wf), dtype="<i2")
    inter[0::2] = wf.i_samples
    inter[1::2] = wf.q_samples
    Path(path).write_bytes(inter.tobytes())
    return Path(path)
