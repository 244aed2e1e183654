"""
Fits and reductions for ODMR, echo decay, instantaneous diffusion and XY8 sweeps.

Nonlinear fits use MINPACK Levenberg-Marquardt (``scipy.optimize.least_squares``
with ``method="lm"``) and analytic Jacobians, evaluated in rescaled
coordinates so that GHz carriers and microsecond time constants do not wreck
the conditioning.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .dynamics import DEFAULT_A_ID, resonant_phase
from .physics import coherence_envelope, volume_density_to_ppm

MAX_ITER = 200
XTOL = 1e-10


class FitError(ValueError):
    pass


class NonPhysicalDensityError(ValueError):
    pass


class BoundaryPeakError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class InversionError(ValueError):
    pass


@dataclass(frozen=True)
class SweepCurve:
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray = None
    x_label: str = "x"
    y_label: str = "y"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("abscissa and ordinate must be 1-D arrays of equal length")
        d = np.diff(x)
        if len(x) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("abscissa must be strictly monotone")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != x.shape:
                raise ValueError("sigma must match the abscissa length")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return len(self.x)


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_norm: float
    converged: bool
    n_iter: int
    flags: list = field(default_factory=list)
    message: str = ""

    def __getitem__(self, key):
        return self.params[key]

    def report_lines(self, prefix=""):
        lines = [f"{prefix}converged = {str(self.converged).lower()}",
                 f"{prefix}iterations = {self.n_iter}",
                 f"{prefix}residual_norm = {self.residual_norm:.10e}"]
        for k, v in self.params.items():
            lines.append(f"{prefix}{k} = {v:.10e}")
            if k in self.stderr:
                lines.append(f"{prefix}{k}_stderr = {self.stderr[k]:.10e}")
        lines.append(f"{prefix}flags = {','.join(self.flags) if self.flags else 'none'}")
        return lines


def _failed(names, message, n_iter=0, flags=()):
    nan = {k: float("nan") for k in names}
    return FitResult(nan, dict(nan), float("nan"), False, n_iter, list(flags), message)


def _lm(fun, jac, x0):
    res = optimize.least_squares(fun, x0, jac=jac, method="lm", xtol=XTOL,
                                 ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITER)
    return res


def _stderr(res, n_points):
    dof = max(n_points - len(res.x), 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        return np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        return np.full(len(res.x), np.inf)


# --- ODMR -----------------------------------------------------------------

def _lorentz_pair(p, u):
    b, a1, c1, g1, a2, c2, g2 = p
    out = np.full_like(u, b)
    cols = [np.ones_like(u)]
    for a, c, g in ((a1, c1, g1), (a2, c2, g2)):
        h = g / 2
        dx = u - c
        den = dx ** 2 + h ** 2
        lor = h ** 2 / den
        out -= a * lor
        cols += [-lor, -a * 2 * h ** 2 * dx / den ** 2, -a * h * dx ** 2 / den ** 2]
    return out, np.stack(cols, axis=1)


def _smooth(y, width=3):
    if len(y) < width:
        return y.copy()
    k = np.ones(width) / width
    return np.convolve(np.pad(y, width // 2, mode="edge"), k, mode="valid")


def _noise_level(y):
    return 1.4826 * np.median(np.abs(np.diff(y) - np.median(np.diff(y)))) / np.sqrt(2)


def _half_width(u, y, i, base):
    depth = base - y[i]
    half = base - depth / 2
    lo = i
    while lo > 0 and y[lo] < half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] < half:
        hi += 1
    return max(u[hi] - u[lo], 2 * (u[1] - u[0]))


def fit_lorentzian_pair(spectrum):
    """Fit baseline minus two Lorentzian dips.

    Returns a :class:`FitResult` with ``center1 < center2`` (Hz), ``fwhm1``,
    ``fwhm2`` (Hz), ``depth1``, ``depth2`` and ``baseline``.  Flags:
    ``degenerate`` when the centers lie within one linewidth,
    ``undersampled`` with fewer than 8 points per fitted FWHM.
    """
    names = ("baseline", "depth1", "center1", "fwhm1", "depth2", "center2", "fwhm2")
    f, y = spectrum.x, spectrum.y
    if len(f) < 8:
        raise ValueError("need at least 8 spectrum points")
    order = np.argsort(f)
    f, y = f[order], y[order]
    f0 = 0.5 * (f[0] + f[-1])
    scale = (f[-1] - f[0]) / 2
    u = (f - f0) / scale

    base = float(np.percentile(y, 90))
    ys = _smooth(y)
    noise = _noise_level(y)
    if base - ys.min() <= max(5 * noise, 1e-9 * abs(base)):
        return _failed(names, "no dip above the noise floor", flags=["no_signal"])

    interior = np.arange(1, len(ys) - 1)
    minima = interior[(ys[interior] <= ys[interior - 1]) & (ys[interior] <= ys[interior + 1])]
    minima = minima[np.argsort(ys[minima])]
    i1 = int(minima[0]) if len(minima) else int(np.argmin(ys))
    g1 = _half_width(u, ys, i1, base)
    i2 = None
    for m in minima[1:]:
        if abs(u[m] - u[i1]) > g1 / 2 and base - ys[m] > 5 * noise:
            i2 = int(m)
            break
    if i2 is None:
        c2, g2, a2 = u[i1] + g1 / 4, g1, (base - ys[i1]) / 2
        c1, a1 = u[i1] - g1 / 4, (base - ys[i1]) / 2
    else:
        g2 = _half_width(u, ys, i2, base)
        c1, a1, c2, a2 = u[i1], base - ys[i1], u[i2], base - ys[i2]
    x0 = np.array([base, a1, c1, g1, a2, c2, g2], dtype=float)

    def fun(p):
        return _lorentz_pair(p, u)[0] - y

    def jac(p):
        return _lorentz_pair(p, u)[1]

    res = _lm(fun, jac, x0)
    se = _stderr(res, len(u))
    b, a1, c1, g1, a2, c2, g2 = res.x
    s_b, s_a1, s_c1, s_g1, s_a2, s_c2, s_g2 = se
    g1, g2 = abs(g1), abs(g2)
    lines = [(c1, g1, a1, s_c1, s_g1, s_a1), (c2, g2, a2, s_c2, s_g2, s_a2)]
    lines.sort(key=lambda t: t[0])
    params = {"baseline": float(b)}
    stderr = {"baseline": float(s_b)}
    for k, (c, g, a, sc, sg, sa) in enumerate(lines, start=1):
        params[f"center{k}"] = float(f0 + c * scale)
        params[f"fwhm{k}"] = float(g * scale)
        params[f"depth{k}"] = float(a)
        stderr[f"center{k}"] = float(sc * scale)
        stderr[f"fwhm{k}"] = float(sg * scale)
        stderr[f"depth{k}"] = float(sa)
    flags = []
    if abs(lines[1][0] - lines[0][0]) < max(lines[0][1], lines[1][1]):
        flags.append("degenerate")
    if (f[1] - f[0]) > min(params["fwhm1"], params["fwhm2"]) / 8:
        flags.append("undersampled")
    converged = bool(res.success) and np.all(np.isfinite(res.x))
    return FitResult(params, stderr, float(np.sqrt(2 * res.cost)), converged, int(res.nfev),
                     flags, res.message)


# --- echo decay -----------------------------------------------------------

def _loglin(u, y):
    ok = y > 0
    if ok.sum() < 2:
        return None
    slope, icpt = np.polyfit(u[ok], np.log(y[ok]), 1)
    return -slope, np.exp(icpt)


def _fit_single(u, y):
    init = _loglin(u, y) or (1.0, y[0])

    def fun(p):
        return p[1] * np.exp(-p[0] * u) - y

    def jac(p):
        e = np.exp(-p[0] * u)
        return np.stack([-p[1] * u * e, e], axis=1)

    return _lm(fun, jac, np.array(init, float))


def fit_double_exponential(decay):
    """Fit a1*exp(-t/t_fast) + a2*exp(-t/t_slow) to a positive decay curve.

    Reported parameters: ``w`` (fast weight), ``t_fast``, ``t_slow``,
    ``amplitude``.  The flag ``effectively_single`` marks data that a single
    exponential describes as well; ``short_span`` marks an abscissa shorter
    than 2*t_slow.
    """
    names = ("w", "t_fast", "t_slow", "amplitude")
    t, y = decay.x, decay.y
    if len(t) == 0:
        raise ValueError("decay curve is empty")
    if len(t) < 5:
        raise ValueError("need at least 5 points for a double exponential")
    if np.any(y <= 0):
        raise ValueError("decay ordinates must be positive")
    t_scale = float(np.max(t))
    u = t / t_scale

    late = u >= np.median(u)
    k_s, a_s = _loglin(u[late], y[late])
    k_s = max(k_s, 1e-3)
    rest = y - a_s * np.exp(-k_s * u)
    early = (~late) & (rest > 0)
    guess = _loglin(u[early], rest[early]) if early.sum() >= 2 else None
    if guess is None or guess[0] <= k_s:
        k_f, a_f = 3 * k_s, 0.5 * y[0]
    else:
        k_f, a_f = guess

    def fun(p):
        a1, k1, a2, k2 = p
        return a1 * np.exp(-k1 * u) + a2 * np.exp(-k2 * u) - y

    def jac(p):
        a1, k1, a2, k2 = p
        e1 = np.exp(-k1 * u)
        e2 = np.exp(-k2 * u)
        return np.stack([e1, -a1 * u * e1, e2, -a2 * u * e2], axis=1)

    res = _lm(fun, jac, np.array([a_f, k_f, a_s, k_s], float))
    single = _fit_single(u, y)
    a1, k1, a2, k2 = res.x
    s_a1, s_k1, s_a2, s_k2 = _stderr(res, len(u))
    if k1 < k2:
        a1, k1, a2, k2 = a2, k2, a1, k1
        s_a1, s_k1, s_a2, s_k2 = s_a2, s_k2, s_a1, s_k1
    amp = a1 + a2
    w = a1 / amp if amp else float("nan")
    t_fast = t_scale / k1 if k1 > 0 else float("inf")
    t_slow = t_scale / k2 if k2 > 0 else float("inf")
    params = {"w": float(w), "t_fast": float(t_fast), "t_slow": float(t_slow), "amplitude": float(amp)}
    stderr = {
        "t_fast": float(t_fast * s_k1 / abs(k1)) if k1 else float("inf"),
        "t_slow": float(t_slow * s_k2 / abs(k2)) if k2 else float("inf"),
        "amplitude": float(np.hypot(s_a1, s_a2)),
        "w": float(np.hypot(a2 * s_a1, a1 * s_a2) / amp ** 2) if amp else float("inf"),
    }
    flags = []
    ss_double = 2 * res.cost
    ss_single = 2 * single.cost
    scale2 = float(np.sum(y ** 2))
    gain = (ss_single - ss_double) / ss_single if ss_single > 0 else 0.0
    if (ss_single <= 1e-20 * scale2 or gain < 0.01 or not 0.02 < w < 0.98
            or abs(t_slow - t_fast) < 0.05 * t_slow):
        flags.append("effectively_single")
        params["t_single"] = float(t_scale / single.x[0]) if single.x[0] > 0 else float("inf")
    if t[-1] - t[0] < 2 * t_slow:
        flags.append("short_span")
    converged = bool(res.success) and np.all(np.isfinite(res.x)) and amp > 0
    return FitResult(params, stderr, float(np.sqrt(ss_double)), converged, int(res.nfev),
                     flags, res.message)


# --- instantaneous diffusion ----------------------------------------------

@dataclass(frozen=True)
class DensityEstimate:
    density_ppm: float
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    linear: bool
    flags: tuple = ()

    def report_lines(self, prefix=""):
        return [f"{prefix}density_ppm = {self.density_ppm:.10e}",
                f"{prefix}slope_per_s = {self.slope:.10e}",
                f"{prefix}slope_stderr_per_s = {self.slope_stderr:.10e}",
                f"{prefix}intercept_per_s = {self.intercept:.10e}",
                f"{prefix}r_squared = {self.r_squared:.10f}",
                f"{prefix}linear = {str(self.linear).lower()}",
                f"{prefix}flags = {','.join(self.flags) if self.flags else 'none'}"]


def nv_density_from_id(rates, consts, a_id=DEFAULT_A_ID, r2_min=0.999, p_min=0.01):
    """NV density (ppm) from decay rates versus sin^2(theta/2).

    The slope of a weighted straight-line fit equals (A/4)*gamma^2*n.  The
    linear model is rejected when R^2 < ``r2_min`` (no sigma given) or when the
    chi-square p-value falls below ``p_min`` (sigma given).
    """
    s, r = rates.x, rates.y
    if len(np.unique(s)) < 3:
        raise ValueError("need at least 3 distinct sin^2(theta/2) values")
    w = None if rates.sigma is None else 1.0 / rates.sigma
    weights = np.ones_like(r) if w is None else w ** 2
    design = np.stack([s, np.ones_like(s)], axis=1)
    normal = design.T @ (weights[:, None] * design)
    slope, icpt = np.linalg.solve(normal, design.T @ (weights * r))
    resid = r - (slope * s + icpt)
    cov = np.linalg.inv(normal)
    if w is None:
        cov = cov * np.sum(resid ** 2) / max(len(s) - 2, 1)
    mean = np.average(r, weights=weights)
    ss_tot = np.sum(weights * (r - mean) ** 2)
    r2 = 1.0 - np.sum(weights * resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    if w is None:
        linear = r2 >= r2_min
    else:
        chi2 = float(np.sum((resid * w) ** 2))
        linear = stats.chi2.sf(chi2, len(s) - 2) >= p_min
    flags = []
    tol = 1e-12 * max(abs(icpt), 1.0)
    if abs(slope) <= tol:
        flags.append("zero_slope")
        density = 0.0
    elif slope < 0:
        raise NonPhysicalDensityError(f"negative slope {slope:g} 1/s implies negative density")
    else:
        n = slope / (a_id / 4 * consts.gamma_angular ** 2)
        density = float(volume_density_to_ppm(n, consts))
    if not linear:
        flags.append("nonlinear")
    return DensityEstimate(density, float(slope), float(icpt), float(np.sqrt(cov[0, 0])),
                           float(r2), bool(linear), tuple(flags))


# --- sweeps ---------------------------------------------------------------

def frequency_resolution(tau, delta_tau):
    """Frequency step (Hz) of f0 = 1/(2 tau) for a tau step ``delta_tau``."""
    if not tau > 0 or delta_tau < 0:
        raise ValueError("need tau > 0 and delta_tau >= 0")
    return delta_tau / (2 * tau ** 2)


@dataclass(frozen=True)
class PeakEstimate:
    tau: float
    amplitude: float
    uncertainty: float
    ambiguous: bool = False


def find_peak_tau(sweep, rtol=1e-9):
    """Locate the sweep maximum by three-point parabolic interpolation.

    Ties between separate local maxima resolve to the smallest abscissa and
    set ``ambiguous``.  Raises :class:`BoundaryPeakError` when the largest
    value sits at either end of the sweep.
    """
    x, y = sweep.x, sweep.y
    if len(x) < 5:
        raise ValueError("need at least 5 sweep points")
    if x[0] > x[-1]:
        x, y = x[::-1], y[::-1]
        sigma = None if sweep.sigma is None else sweep.sigma[::-1]
    else:
        sigma = sweep.sigma
    top = y.max()
    tol = rtol * max(abs(top), np.finfo(float).tiny)
    candidates = np.flatnonzero(y >= top - tol)
    i = int(candidates[0])
    if i == 0 or i == len(y) - 1:
        raise BoundaryPeakError("sweep maximum lies at the boundary")
    # separate peaks: candidates not contiguous with the first
    ambiguous = bool(np.any(np.diff(candidates) > 1))
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    h = x[i + 1] - x[i]
    den = y0 - 2 * y1 + y2
    offset = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    offset = float(np.clip(offset, -1.0, 1.0))
    tau = x[i] + offset * h
    amp = y1 - 0.25 * (y0 - y2) * offset
    if sigma is not None and den != 0:
        # derivatives of the vertex offset w.r.t. the three ordinates
        d0 = 0.5 * (den - (y0 - y2)) / den ** 2
        d1 = (y0 - y2) / den ** 2
        d2 = 0.5 * (-den - (y0 - y2)) / den ** 2
        unc = h * float(np.sqrt((d0 * sigma[i - 1]) ** 2 + (d1 * sigma[i]) ** 2 + (d2 * sigma[i + 1]) ** 2))
    else:
        unc = h / np.sqrt(12)
    return PeakEstimate(float(tau), float(amp), unc, ambiguous)


def repeat_statistics(traces, at):
    """Sample mean and standard deviation (n-1) of repeated traces at one abscissa."""
    if len(traces) < 2:
        raise ValueError("need at least two traces")
    ref = traces[0].x
    for tr in traces[1:]:
        if tr.x.shape != ref.shape or not np.allclose(tr.x, ref, rtol=0, atol=1e-6 * np.ptp(ref)):
            raise AlignmentError("traces do not share the same abscissa grid")
    idx = np.flatnonzero(np.isclose(ref, at, rtol=0, atol=1e-6 * max(np.ptp(ref), abs(at))))
    if len(idx) == 0:
        raise AlignmentError(f"abscissa {at!r} is not on the grid")
    vals = np.array([tr.y[idx[0]] for tr in traces])
    return float(vals.mean()), float(vals.std(ddof=1))


def contrast_to_field(delta_contrast, seq, params, clip=False):
    """Invert the XY8 signal difference to an NV-axis field amplitude (T).

    Readout phase 0 gives |B| through an arccos branch (0 <= delta <= E);
    readout phase pi/2 gives a signed B through arcsin (|delta| <= E/2).
    The phase-to-field slope is the ideal resonant XY8 slope.
    """
    delta = np.asarray(delta_contrast, dtype=float)
    env = coherence_envelope(params, seq.sensing_time)
    slope = resonant_phase(seq, 1.0, params.consts)
    psi = seq.readout_phase % (2 * np.pi)
    if np.isclose(psi, 0.0) or np.isclose(psi, 2 * np.pi):
        arg = 1.0 - 2.0 * delta / env
        lo, hi = -1.0, 1.0
        if not clip and (np.any(arg < lo - 1e-12) or np.any(arg > hi + 1e-12)):
            raise InversionError("contrast outside the invertible range [0, E(T)]")
        phi = np.arccos(np.clip(arg, lo, hi))
    elif np.isclose(psi, np.pi / 2):
        arg = -2.0 * delta / env
        if not clip and np.any(np.abs(arg) > 1 + 1e-12):
            raise InversionError("contrast outside the invertible range [-E/2, E/2]")
        phi = np.arcsin(np.clip(arg, -1.0, 1.0))
    else:
        raise InversionError("only readout phases 0 and pi/2 are invertible")
    out = phi / slope
    return float(out) if out.ndim == 0 else out
