"""
Experiment pipelines: ODMR, Rabi, Hahn decay, instantaneous-diffusion sweep,
XY8 tau sweep, XY8 image and waveform compilation.

Every pipeline is deterministic given (config, seed): a single
``numpy.random.Generator`` seeded from the config is consumed in a fixed order.
"""

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import (SweepCurve, contrast_to_field, find_peak_tau, fit_double_exponential,
                       fit_lorentzian_pair, frequency_resolution, nv_density_from_id,
                       repeat_statistics)
from .camera import bin_mean, camera_readout, population_sigma, region_readout
from .dynamics import (RFField, bright_population, echo_rates, field_signal,
                       phase_closed_form, propagate_bloch, resonant_phase, simulate_hahn_decay,
                       simulate_odmr)
from .geometry import FieldMap, calibrate_current, peak_position, projected_field
from .physics import bias_for_center, coherence_envelope, pi_length_from_rabi
from .pulses import (bandwidth_estimate, build_hahn, build_xy8, constant_drive_waveform,
                     pulse_areas, render_waveform)


@dataclass
class Table:
    """Named columns; names carry units as suffixes (``tau_s``, ``field_T``)."""

    names: list
    columns: list

    def __post_init__(self):
        self.columns = [np.asarray(c, dtype=float) for c in self.columns]
        if len(self.names) != len(self.columns) or len({len(c) for c in self.columns}) > 1:
            raise ValueError("table columns must be named and equally long")

    @classmethod
    def from_curve(cls, curve):
        names = [curve.x_label, curve.y_label]
        cols = [curve.x, curve.y]
        if curve.sigma is not None:
            names.append(f"sigma_{curve.y_label}")
            cols.append(curve.sigma)
        return cls(names, cols)

    def __getitem__(self, name):
        return self.columns[self.names.index(name)]


@dataclass
class RunResult:
    kind: str
    tables: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    waveform: object = None
    figure_data: dict = field(default_factory=dict)

    def report_lines(self):
        lines = [f"{k} = {v}" for k, v in self.provenance.items()]
        for k, v in self.report.items():
            lines.append(f"{k} = {_fmt(v)}")
        for name, fit in self.fits.items():
            lines += fit.report_lines(prefix=f"{name}.")
        return lines


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10e}"
    return str(v)


def _grid(start, stop, step):
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _rng(cfg):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed))


# --- ODMR -----------------------------------------------------------------

def run_odmr(cfg, rng):
    params = cfg.nv_params()
    o = cfg["odmr"]
    upper = cfg["nv"]["upper_branch"]
    b = bias_for_center(params, o["center"], upper)
    f = _grid(o["f_start"], o["f_stop"], o["f_step"])
    spec = simulate_odmr(params, b, f, (o["linewidth1"], o["linewidth2"]), upper_branch=upper)
    sigma = None
    if cfg["experiment"]["noise"]:
        cam = cfg.camera()
        n = cam.photons_per_frame * cam.frames * cam.pixels_in_square(cfg["camera"]["probe_size"])
        spec = rng.poisson(n * spec) / n
        sigma = np.sqrt(spec / n)
    curve = SweepCurve(f, spec, sigma, "freq_Hz", "pl_norm")
    fit = fit_lorentzian_pair(curve)
    res = RunResult("odmr", {"odmr": Table.from_curve(curve)}, fits={"odmr_fit": fit})
    res.report.update(bias_field_T=b, splitting_Hz=fit["center2"] - fit["center1"])
    res.figure_data["odmr"] = (curve, fit)
    return res


# --- Rabi -----------------------------------------------------------------

def run_rabi(cfg, rng):
    params = cfg.nv_params()
    r, s = cfg["rabi"], cfg["sequence"]
    durations = _grid(0.0, r["duration_stop"], r["duration_step"])[1:]
    det = cfg["rf"]["detuning"]
    pop = []
    for d in durations:
        wf = constant_drive_waveform(d, r["rabi_frequency"], s["sample_rate"], s["full_scale_rabi"])
        pop.append(propagate_bloch(wf, det, RFField(0.0), params, decoherence=False).population)
    pop = np.array(pop)
    if cfg["experiment"]["noise"]:
        cam = cfg.camera()
        n_pix = cam.pixels_in_square(cfg["camera"]["probe_size"])
        pop = region_readout(pop, n_pix, cam, params.contrast, rng)
    curve = SweepCurve(durations, pop, None, "duration_s", "population")
    res = RunResult("rabi", {"rabi": Table.from_curve(curve)})
    res.report.update(rabi_frequency_Hz=r["rabi_frequency"],
                      pi_length_s=pi_length_from_rabi(r["rabi_frequency"]))
    res.figure_data["rabi"] = curve
    return res


# --- Hahn decay and instantaneous diffusion --------------------------------

def _echo_readout(echo, cfg, params, rng):
    """Echo amplitude E -> measured (E_hat, sigma) through the camera model."""
    if not cfg["experiment"]["noise"]:
        return echo, None
    cam = cfg.camera()
    n_pix = cam.pixels_in_square(cfg["camera"]["probe_size"])
    p = 0.5 * (1.0 + echo)
    p_hat = region_readout(p, n_pix, cam, params.contrast, rng)
    n_photons = cam.photons_per_frame * cam.frames * n_pix
    return 2.0 * p_hat - 1.0, 2.0 * population_sigma(p, n_photons, params.contrast)


def _positive(curve):
    """Drop points whose noisy echo estimate fell to or below zero."""
    keep = curve.y > 0
    if keep.all():
        return curve, 0
    sig = None if curve.sigma is None else curve.sigma[keep]
    return SweepCurve(curve.x[keep], curve.y[keep], sig, curve.x_label, curve.y_label), int((~keep).sum())


def _tau_grid(cfg):
    h = cfg["hahn"]
    return np.linspace(h["tau_start"], h["tau_stop"], h["n_points"])


def run_hahn(cfg, rng):
    params = cfg.nv_params()
    tau = _tau_grid(cfg)
    echo = simulate_hahn_decay(params, tau, cfg["sequence"]["center_angle"], cfg["nv"]["a_id"],
                               cfg["nv"]["envelope_angle"])
    meas, sigma = _echo_readout(echo, cfg, params, rng)
    curve = SweepCurve(tau, meas, sigma, "tau_s", "echo")
    kept, dropped = _positive(curve)
    fit = fit_double_exponential(kept)
    res = RunResult("hahn-sweep", {"hahn": Table.from_curve(curve)}, fits={"decay_fit": fit})
    res.report["dropped_points"] = dropped
    res.figure_data["hahn"] = (curve, fit)
    return res


def id_decay(params, tau, angle, a_id, extrinsic_rate, reference_angle=np.pi):
    """Two-component echo with instantaneous diffusion on both components.

    The fast component also carries an extrinsic rate proportional to
    sin^2(theta), which is not linear in sin^2(theta/2).
    """
    r_fast, r_slow = echo_rates(params, angle, a_id, reference_angle)
    w = params.fast_weight
    extra = extrinsic_rate * np.sin(angle) ** 2
    return w * np.exp(-tau * (r_fast + extra)) + (1 - w) * np.exp(-tau * r_slow)


def run_id_sweep(cfg, rng):
    params = cfg.nv_params()
    h = cfg["hahn"]
    a_id = cfg["nv"]["a_id"]
    tau = _tau_grid(cfg)
    angles = np.linspace(0.0, np.pi, h["n_angles"])
    s2 = np.sin(angles / 2) ** 2
    slow, fast, slow_err, fast_err = [], [], [], []
    fits = {}
    for k, th in enumerate(angles):
        echo = id_decay(params, tau, th, a_id, h["fast_extrinsic_rate"], cfg["nv"]["envelope_angle"])
        meas, sigma = _echo_readout(echo, cfg, params, rng)
        kept, _ = _positive(SweepCurve(tau, meas, sigma, "tau_s", "echo"))
        fit = fit_double_exponential(kept)
        fits[f"decay_theta{k}"] = fit
        slow.append(1 / fit["t_slow"])
        fast.append(1 / fit["t_fast"])
        slow_err.append(fit.stderr["t_slow"] / fit["t_slow"] ** 2)
        fast_err.append(fit.stderr["t_fast"] / fit["t_fast"] ** 2)
    noisy = cfg["experiment"]["noise"]
    slow_curve = SweepCurve(s2, slow, np.array(slow_err) if noisy else None, "sin2_half_theta", "rate_slow_per_s")
    fast_curve = SweepCurve(s2, fast, np.array(fast_err) if noisy else None, "sin2_half_theta", "rate_fast_per_s")
    dens_slow = nv_density_from_id(slow_curve, params.consts, a_id)
    dens_fast = nv_density_from_id(fast_curve, params.consts, a_id)
    table = Table(["theta_rad", "sin2_half_theta", "rate_slow_per_s", "rate_fast_per_s"],
                  [angles, s2, slow, fast])
    res = RunResult("id-sweep", {"id_rates": table}, fits=fits)
    res.report.update({f"slow.{k}": v for k, v in _density_items(dens_slow)})
    res.report.update({f"fast.{k}": v for k, v in _density_items(dens_fast)})
    res.report["a_id"] = a_id
    res.report["seeded_density_ppm"] = params.n_nv_ppm
    res.figure_data["id"] = (slow_curve, fast_curve, dens_slow, dens_fast)
    return res


def _density_items(d):
    return [("density_ppm", d.density_ppm), ("slope_per_s", d.slope), ("intercept_per_s", d.intercept),
            ("r_squared", d.r_squared), ("linear", d.linear),
            ("flags", ",".join(d.flags) if d.flags else "none")]


# --- XY8 ------------------------------------------------------------------

def _xy8(cfg, tau, readout_phase=None):
    s = cfg["sequence"]
    psi = s["readout_phase"] if readout_phase is None else readout_phase
    return build_xy8(s["n_reps"], tau, s["t_pi"], s["envelope"], psi)


def xy8_populations(cfg, params, seq, rf):
    """(p_off, p_on) bright populations for one sequence, analytic or Bloch."""
    if cfg["experiment"]["model"] == "bloch":
        s = cfg["sequence"]
        wf = render_waveform(seq, s["sample_rate"], s["full_scale_rabi"])
        det = cfg["rf"]["detuning"]
        p_off = propagate_bloch(wf, det, RFField(0.0, rf.frequency), params).population
        p_on = propagate_bloch(wf, det, rf, params).population
        return p_off, p_on
    p_off = float(bright_population(0.0, seq, params))
    return p_off, p_off - field_signal(seq, rf, params)


def run_xy8_sweep(cfg, rng):
    params = cfg.nv_params()
    s = cfg["sequence"]
    rf = cfg.rf()
    taus = _grid(s["tau_start"], s["tau_stop"], s["tau_step"])
    seqs = [_xy8(cfg, t) for t in taus]
    pops = np.array([xy8_populations(cfg, params, q, rf) for q in seqs])
    noisy = cfg["experiment"]["noise"]
    repeats = cfg["experiment"]["repeats"]
    cam = cfg.camera()
    n_pix = cam.pixels_in_square(cfg["camera"]["probe_size"])
    traces = []
    for _ in range(repeats):
        if noisy:
            p_off = region_readout(pops[:, 0], n_pix, cam, params.contrast, rng)
            p_on = region_readout(pops[:, 1], n_pix, cam, params.contrast, rng)
        else:
            p_off, p_on = pops[:, 0], pops[:, 1]
        delta = p_off - p_on
        field_t = np.array([contrast_to_field(d, q, params, clip=True) for d, q in zip(delta, seqs)])
        traces.append(SweepCurve(taus, field_t, None, "tau_s", "field_T"))
    mean = np.mean([t.y for t in traces], axis=0)
    curve = SweepCurve(taus, mean, None, "tau_s", "field_T")
    peak = find_peak_tau(curve)
    tables = {"xy8_sweep": Table.from_curve(curve)}
    if repeats > 1:
        tables["xy8_sweep_repeats"] = Table(["tau_s"] + [f"field_T_r{k}" for k in range(repeats)],
                                            [taus] + [t.y for t in traces])
    res = RunResult("xy8-sweep", tables)
    res.report.update(peak_tau_s=peak.tau, peak_field_T=peak.amplitude,
                      peak_ambiguous=peak.ambiguous, expected_tau_s=1 / (2 * rf.frequency),
                      frequency_resolution_Hz=frequency_resolution(peak.tau, s["tau_step"]),
                      probe_pixels=n_pix)
    if repeats > 1:
        at = taus[np.argmin(np.abs(taus - peak.tau))]
        m, sd = repeat_statistics(traces, at)
        res.report.update(sigma_tau_s=at, sigma_mean_T=m, sigma_T=sd)
    res.figure_data["xy8_sweep"] = (curve, traces, peak)
    return res


def image_current(cfg, params):
    """Wire current: explicit, or calibrated so the map maximum equals the RF amplitude."""
    geom = cfg.wire()
    if cfg["wire"]["current"] is not None:
        return geom.current_amplitude
    x_peak = peak_position(geom, params.nv_axis, params.consts)
    return calibrate_current(cfg["rf"]["amplitude"], x_peak, geom, params.nv_axis, params.consts)


def run_xy8_image(cfg, rng):
    params = cfg.nv_params()
    img = cfg["image"]
    seq = _xy8(cfg, img["tau"], img["readout_phase"])
    rf = cfg.rf()
    current = image_current(cfg, params)
    geom = cfg.wire(current).with_current(current)
    cam = cfg.camera(frames=img["frames"])
    x, y = cam.raw_coordinates()
    xx, yy = np.meshgrid(x, y)
    b_raw = projected_field(xx, yy, geom, params.nv_axis, params.consts)
    k = phase_closed_form(seq, RFField(1.0, rf.frequency, rf.phase), params.consts)
    p_on = bright_population(k * b_raw, seq, params)
    p_off = np.full_like(p_on, bright_population(0.0, seq, params))
    if cfg["experiment"]["noise"]:
        est_off = camera_readout(p_off, cam, params.contrast, rng)
        est_on = camera_readout(p_on, cam, params.contrast, rng)
    else:
        est_off, est_on = bin_mean(p_off, cam.binning), bin_mean(p_on, cam.binning)
    recovered = contrast_to_field(est_off - est_on, seq, params, clip=True)
    truth = bin_mean(b_raw, cam.binning)
    xb, yb = cam.binned_coordinates()
    origin = (float(xb[0]), float(yb[0]))
    rec_map = FieldMap(cam.binned_pitch, origin, recovered)
    truth_map = FieldMap(cam.binned_pitch, origin, truth)

    # noise of one binned pixel in field units (small-signal slope)
    n_bin = cam.photons_per_frame * cam.frames * cam.binning ** 2
    p0 = float(bright_population(0.0, seq, params))
    sig_p = np.sqrt(2) * population_sigma(p0, n_bin, params.contrast)
    env = coherence_envelope(params, seq.sensing_time)
    slope = 0.5 * env * resonant_phase(seq, 1.0, params.consts)
    sigma_b = float(sig_p / slope)

    center_col = int(np.argmin(np.abs(xb - geom.lateral_offset)))
    vmax = float(np.max(np.abs(recovered)))
    profile = recovered.mean(axis=0)
    res = RunResult("xy8-image", {"image_profile": Table(["x_m", "field_T", "truth_T"],
                                                         [xb, profile, truth.mean(axis=0)])},
                    maps={"field_map": rec_map, "field_truth": truth_map})
    res.report.update(
        wire_current_A=current, binned_pixel_m=cam.binned_pitch, sigma_pixel_T=sigma_b,
        max_abs_field_T=vmax,
        center_line_max_abs_T=float(np.max(np.abs(recovered[:, center_col]))),
        center_line_fraction=float(np.max(np.abs(recovered[:, center_col])) / vmax),
        x_of_max_m=float(xb[np.argmax(profile)]), x_of_min_m=float(xb[np.argmin(profile)]),
        max_residual_sigma=float(np.max(np.abs(recovered - truth)) / sigma_b),
    )
    res.figure_data["xy8_image"] = (rec_map, geom)
    return res


# --- waveform compilation -------------------------------------------------

def run_compile(cfg, rng):
    s = cfg["sequence"]
    if s["type"] == "hahn":
        seq = build_hahn(s["tau"], s["center_angle"], s["t_pi"], s["envelope"], s["readout_phase"])
    else:
        seq = _xy8(cfg, s["tau"])
    wf = render_waveform(seq, s["sample_rate"], s["full_scale_rabi"])
    areas = pulse_areas(wf, seq)
    target = np.array([p.target_angle for p in seq.pulses])
    ok = target > 0
    err = float(np.max(np.abs(areas[ok] / target[ok] - 1))) if ok.any() else 0.0
    t = wf.times
    res = RunResult("compile-waveform", {"waveform": Table(["time_s", "i", "q"], [t, wf.i_samples, wf.q_samples])},
                    waveform=wf)
    res.report.update(n_samples=len(wf), n_pulses=len(seq.pulses), total_time_s=seq.total_time,
                      max_area_rel_error=err, bandwidth_Hz=bandwidth_estimate(wf),
                      pi_peak_rabi_Hz=seq.pulses[1].peak_rabi,
                      pi_rect_equivalent_s=seq.pulses[1].rect_equivalent_length)
    res.figure_data["waveform"] = wf
    return res


PIPELINES = {
    "odmr": run_odmr,
    "rabi": run_rabi,
    "hahn-sweep": run_hahn,
    "id-sweep": run_id_sweep,
    "xy8-sweep": run_xy8_sweep,
    "xy8-image": run_xy8_image,
    "compile-waveform": run_compile,
}


def run_scenario(cfg):
    """Dispatch ``cfg`` to its pipeline and attach provenance."""
    result = PIPELINES[cfg.kind](cfg, _rng(cfg))
    result.provenance = {"kind": cfg.kind, "config_sha256": cfg.digest(), "seed": cfg.seed,
                         "tool_version": __version__}
    return result
