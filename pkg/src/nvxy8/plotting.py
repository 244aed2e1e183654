"""
Summary figures for each experiment, rendered off-screen to PNG.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import lorentzian  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def _odmr(ax, data):
    curve, fit = data
    ax.plot(curve.x / 1e9, curve.y, ".", color="0.4", label="simulated")
    if fit.converged:
        p = fit.params
        model = p["baseline"] - p["depth1"] * lorentzian(curve.x, p["center1"], p["fwhm1"]) \
            - p["depth2"] * lorentzian(curve.x, p["center2"], p["fwhm2"])
        ax.plot(curve.x / 1e9, model, "C3", label="Lorentzian pair fit")
    ax.set(xlabel="microwave frequency (GHz)", ylabel="normalized PL")
    ax.legend()


def _rabi(ax, curve):
    ax.plot(curve.x * 1e9, curve.y, "o-")
    ax.set(xlabel="pulse duration (ns)", ylabel="bright population")


def _hahn(ax, data):
    curve, fit = data
    ax.semilogy(curve.x * 1e6, np.clip(curve.y, 1e-4, None), ".", color="0.4", label="echo")
    if fit.converged:
        p = fit.params
        t = curve.x
        model = p["amplitude"] * (p["w"] * np.exp(-t / p["t_fast"]) + (1 - p["w"]) * np.exp(-t / p["t_slow"]))
        ax.semilogy(t * 1e6, model, "C3",
                    label=f"fit {p['t_fast'] * 1e6:.1f} / {p['t_slow'] * 1e6:.1f} us")
    ax.set(xlabel="total free evolution (us)", ylabel="echo amplitude")
    ax.legend()


def _id(ax, data):
    slow, fast, d_slow, d_fast = data
    for curve, est, c, name in ((slow, d_slow, "C0", "slow"), (fast, d_fast, "C1", "fast")):
        ax.plot(curve.x, curve.y / 1e3, "o", color=c, label=f"{name} ({est.density_ppm:.3f} ppm)")
        ax.plot(curve.x, (est.slope * curve.x + est.intercept) / 1e3, "-", color=c)
    ax.set(xlabel=r"$\sin^2(\theta/2)$", ylabel="decay rate (1/ms)")
    ax.legend()


def _xy8_sweep(ax, data):
    curve, traces, peak = data
    for tr in traces:
        ax.plot(tr.x * 1e9, tr.y * 1e6, color="0.8", lw=0.6)
    ax.plot(curve.x * 1e9, curve.y * 1e6, "C0")
    ax.axvline(peak.tau * 1e9, color="C3", ls="--", lw=0.8)
    ax.set(xlabel=r"$\tau$ (ns)", ylabel="field (uT)")


def _xy8_image(ax, data):
    fmap, geom = data
    vmax = float(np.max(np.abs(fmap.values)))
    h = fmap.spacing / 2
    extent = [(fmap.x[0] - h) * 1e6, (fmap.x[-1] + h) * 1e6, (fmap.y[0] - h) * 1e6, (fmap.y[-1] + h) * 1e6]
    im = ax.imshow(fmap.values * 1e6, origin="lower", extent=extent, cmap="RdBu_r", vmin=-vmax * 1e6,
                   vmax=vmax * 1e6)
    for edge in (-geom.width / 2, geom.width / 2):
        ax.axvline((geom.lateral_offset + edge) * 1e6, color="k", lw=0.6, ls=":")
    ax.set(xlabel="x (um)", ylabel="y (um)")
    ax.figure.colorbar(im, ax=ax, label="projected field (uT)")


def _waveform(ax, wf):
    t = wf.times * 1e9
    ax.plot(t, wf.i_samples, lw=0.6, label="I")
    ax.plot(t, wf.q_samples, lw=0.6, label="Q")
    ax.set(xlabel="time (ns)", ylabel="DAC code")
    ax.legend()


PLOTTERS = {"odmr": _odmr, "rabi": _rabi, "hahn": _hahn, "id": _id, "xy8_sweep": _xy8_sweep,
            "xy8_image": _xy8_image, "waveform": _waveform}


def render_figures(result, out_dir):
    """One PNG per entry of ``result.figure_data``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(STYLE):
        for name, data in result.figure_data.items():
            fig, ax = plt.subplots()
            PLOTTERS[name](ax, data)
            paths.append(_save(fig, out / f"{name}.png"))
    return paths
