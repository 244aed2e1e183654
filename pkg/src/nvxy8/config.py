"""
Scenario configuration: a sectioned ``key = value`` text file (INI syntax).

Every key has a typed default, so a config file only lists what it changes.
Unknown sections or keys and unparsable values are collected and raised
together as a :class:`ConfigError`.
"""

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CALIBRATED_PHOTONS, CameraSpec
from .dynamics import DEFAULT_A_ID, RFField
from .geometry import WireGeometry
from .physics import DEFAULT_NV_AXIS, NVParams, PhysConsts

KINDS = ("odmr", "rabi", "hahn-sweep", "id-sweep", "xy8-sweep", "xy8-image", "compile-waveform")

# CLI verb -> experiment kind
VERBS = {"odmr": "odmr", "rabi": "rabi", "hahn": "hahn-sweep", "id-sweep": "id-sweep",
         "xy8-sweep": "xy8-sweep", "xy8-image": "xy8-image", "compile-waveform": "compile-waveform"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _vector(text):
    v = tuple(float(p) for p in str(text).replace(",", " ").split())
    if len(v) != 3:
        raise ValueError("expected three components")
    return v


def _float_or_auto(text):
    t = str(text).strip().lower()
    return None if t == "auto" else float(t)


def _angle(text):
    """Radians; a trailing 'deg' switches to degrees."""
    t = str(text).strip().lower()
    if t.endswith("deg"):
        return np.deg2rad(float(t[:-3]))
    if t.endswith("pi"):
        head = t[:-2].strip().rstrip("*")
        return (float(head) if head else 1.0) * np.pi
    return float(t)


SCHEMA = {
    "experiment": {
        "kind": ("xy8-sweep", str),
        "seed": (0, int),
        "model": ("analytic", str),
        "noise": (True, _bool),
        "repeats": (10, int),
    },
    "nv": {
        "D": (2.870e9, float),
        "gamma_e": (28.0249e9, float),
        "n_carbon": (PhysConsts().n_carbon, float),
        "hyperfine_A": (3.0e6, float),
        "t2_fast": (33e-6, float),
        "t2_slow": (77e-6, float),
        "fast_weight": (0.5, float),
        "contrast": (0.03, float),
        "nv_axis": (DEFAULT_NV_AXIS, _vector),
        "n_nv_ppm": (0.05, float),
        "a_id": (DEFAULT_A_ID, float),
        "upper_branch": (False, _bool),
        # central angle at which t2_fast/t2_slow were measured
        "envelope_angle": (np.pi, _angle),
    },
    "wire": {
        "width": (10e-6, float),
        "standoff": (2e-6, float),
        "current": (None, _float_or_auto),
        "lateral_offset": (0.0, float),
        "wire_axis": ((0.0, 1.0, 0.0), _vector),
    },
    "sequence": {
        "type": ("xy8", str),
        "n_reps": (16, int),
        "t_pi": (12.5e-9, float),
        "envelope": ("cosine_square", str),
        "tau": (26.0e-9, float),
        "tau_start": (20e-9, float),
        "tau_stop": (32e-9, float),
        "tau_step": (100e-12, float),
        "readout_phase": (0.0, _angle),
        "center_angle": (np.pi, _angle),
        "sample_rate": (1e9, float),
        "full_scale_rabi": (100e6, float),
    },
    "rf": {
        "frequency": (19.23e6, float),
        "amplitude": (0.44e-6, float),
        "phase": (0.0, _angle),
        "phase_mode": ("fixed", str),
        "detuning": (0.0, float),
    },
    "camera": {
        "pixels_x": (496, int),
        "pixels_y": (256, int),
        "pixel_pitch": (65e-9, float),
        "binning": (16, int),
        "exposure": (54e-3, float),
        "frames": (100, int),
        "photons_per_frame": (CALIBRATED_PHOTONS, float),
        "probe_size": (2e-6, float),
    },
    "odmr": {
        "f_start": (2.7520e9, float),
        "f_stop": (2.7620e9, float),
        "f_step": (10e3, float),
        "center": (2.7571e9, float),
        "linewidth1": (0.31e6, float),
        "linewidth2": (0.34e6, float),
    },
    "rabi": {
        "rabi_frequency": (40e6, float),
        "duration_stop": (100e-9, float),
        "duration_step": (1e-9, float),
    },
    "hahn": {
        "tau_start": (2e-6, float),
        "tau_stop": (250e-6, float),
        "n_points": (100, int),
        "n_angles": (7, int),
        "fast_extrinsic_rate": (2.0e4, float),
    },
    "image": {
        "tau": (26.0e-9, float),
        "readout_phase": (np.pi / 2, _angle),
        "frames": (1000, int),
    },
}


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    @property
    def kind(self):
        return self.values["experiment"]["kind"]

    @property
    def seed(self):
        return self.values["experiment"]["seed"]

    def __getitem__(self, section):
        return self.values[section]

    def canonical_text(self):
        lines = []
        for sec in sorted(self.values):
            lines.append(f"[{sec}]")
            for key in sorted(self.values[sec]):
                lines.append(f"{key} = {_plain(self.values[sec][key])!r}")
        return "\n".join(lines) + "\n"

    def digest(self):
        """SHA-256 of the canonical text; stable across write/load round trips."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    # typed views ---------------------------------------------------------

    def nv_params(self):
        nv = self["nv"]
        consts = PhysConsts(gamma_e=nv["gamma_e"], D=nv["D"], n_carbon=nv["n_carbon"])
        axis = np.asarray(nv["nv_axis"], float)
        return NVParams(consts, nv["hyperfine_A"], nv["t2_fast"], nv["t2_slow"], nv["fast_weight"],
                        nv["contrast"], tuple(axis / np.linalg.norm(axis)), nv["n_nv_ppm"])

    def wire(self, current=1e-3):
        w = self["wire"]
        cur = w["current"] if w["current"] is not None else current
        return WireGeometry(w["width"], cur, w["standoff"], w["wire_axis"], w["lateral_offset"])

    def camera(self, frames=None):
        c = self["camera"]
        return CameraSpec(c["pixels_x"], c["pixels_y"], c["pixel_pitch"], c["binning"], c["exposure"],
                          frames or c["frames"], c["photons_per_frame"])

    def rf(self):
        r = self["rf"]
        return RFField(r["amplitude"], r["frequency"], r["phase"], r["phase_mode"])


def default_config(kind="xy8-sweep"):
    values = {sec: {k: v[0] for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    values["experiment"]["kind"] = kind
    cfg = ScenarioConfig(values)
    validate(cfg)
    return cfg


def parse_config(text, source="<string>", kind=None, seed=None):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    problems = []
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    values = {sec: {k: v[0] for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            problems.append(f"[{sec}]: unknown section")
            continue
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                problems.append(f"[{sec}] {key}: unknown key")
                continue
            conv = SCHEMA[sec][key][1]
            try:
                values[sec][key] = conv(raw)
            except (TypeError, ValueError) as exc:
                problems.append(f"[{sec}] {key}: cannot parse {raw!r} ({exc})")
    if kind is not None:
        values["experiment"]["kind"] = kind
    if seed is not None:
        values["experiment"]["seed"] = seed
    if problems:
        raise ConfigError(problems)
    cfg = ScenarioConfig(values, source)
    validate(cfg)
    return cfg


def load_config(path, kind=None, seed=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    return parse_config(text, str(path), kind, seed)


def validate(cfg):
    """Range checks across blocks; raises ConfigError listing every offending key."""
    v = cfg.values
    problems = []

    def need(cond, where):
        if not cond:
            problems.append(where)

    need(v["experiment"]["kind"] in KINDS, f"[experiment] kind: must be one of {', '.join(KINDS)}")
    need(v["experiment"]["seed"] >= 0, "[experiment] seed: must be non-negative")
    need(v["experiment"]["model"] in ("analytic", "bloch"), "[experiment] model: analytic or bloch")
    need(v["experiment"]["repeats"] >= 1, "[experiment] repeats: must be >= 1")
    s = v["sequence"]
    need(s["n_reps"] >= 1, "[sequence] n_reps: must be >= 1")
    need(s["t_pi"] > 0, "[sequence] t_pi: must be positive")
    need(s["envelope"] in ("cosine_square", "rectangular"), "[sequence] envelope: cosine_square or rectangular")
    need(s["type"] in ("xy8", "hahn"), "[sequence] type: xy8 or hahn")
    need(0 < s["tau_start"] < s["tau_stop"], "[sequence] tau_start/tau_stop: need 0 < start < stop")
    need(s["tau_step"] > 0, "[sequence] tau_step: must be positive")
    need(s["sample_rate"] > 0 and s["full_scale_rabi"] > 0,
         "[sequence] sample_rate/full_scale_rabi: must be positive")
    r = v["rf"]
    need(r["frequency"] > 0, "[rf] frequency: must be positive")
    need(r["amplitude"] >= 0, "[rf] amplitude: must be non-negative")
    need(r["phase_mode"] in ("fixed", "uniform_random_averaged"), "[rf] phase_mode: fixed or uniform_random_averaged")
    c = v["camera"]
    for key in ("pixels_x", "pixels_y", "binning", "frames"):
        need(c[key] >= 1, f"[camera] {key}: must be >= 1")
    if c["binning"] >= 1:
        need(c["pixels_x"] % c["binning"] == 0 and c["pixels_y"] % c["binning"] == 0,
             "[camera] binning: must divide pixels_x and pixels_y")
    need(c["photons_per_frame"] > 0, "[camera] photons_per_frame: must be positive")
    need(c["pixel_pitch"] > 0 and c["exposure"] > 0 and c["probe_size"] > 0,
         "[camera] pixel_pitch/exposure/probe_size: must be positive")
    w = v["wire"]
    need(w["width"] > 0, "[wire] width: must be positive")
    need(w["standoff"] > 0, "[wire] standoff: must be positive")
    nv = v["nv"]
    need(0 < nv["contrast"] < 1, "[nv] contrast: must lie in (0, 1)")
    need(0 < nv["t2_fast"] <= nv["t2_slow"], "[nv] t2_fast/t2_slow: need 0 < fast <= slow")
    need(0 <= nv["fast_weight"] <= 1, "[nv] fast_weight: must lie in [0, 1]")
    need(np.linalg.norm(nv["nv_axis"]) > 0, "[nv] nv_axis: must be non-zero")
    need(abs(nv["gamma_e"] / 28.02e9 - 1) <= 0.01, "[nv] gamma_e: must lie within 1% of 28.02 GHz/T")
    o = v["odmr"]
    need(o["f_start"] < o["f_stop"] and o["f_step"] > 0, "[odmr] f_start/f_stop/f_step: bad grid")
    h = v["hahn"]
    need(0 < h["tau_start"] < h["tau_stop"], "[hahn] tau_start/tau_stop: need 0 < start < stop")
    need(h["n_points"] >= 5, "[hahn] n_points: must be >= 5")
    need(h["n_angles"] >= 3, "[hahn] n_angles: must be >= 3")
    need(v["rabi"]["rabi_frequency"] > 0 and v["rabi"]["duration_step"] > 0,
         "[rabi] rabi_frequency/duration_step: must be positive")
    need(v["image"]["frames"] >= 1, "[image] frames: must be >= 1")
    if problems:
        raise ConfigError(problems)
    return cfg


def _plain(val):
    if isinstance(val, tuple):
        return tuple(_plain(v) for v in val)
    return val.item() if isinstance(val, np.generic) else val


def write_config(cfg, path):
    """Write the fully resolved config as INI text."""
    lines = []
    for sec, keys in cfg.values.items():
        lines.append(f"[{sec}]")
        for k, val in keys.items():
            if isinstance(val, tuple):
                val = ", ".join(repr(float(x)) for x in val)
            elif val is None:
                val = "auto"
            lines.append(f"{k} = {val}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
    return Path(path)


def apply_overrides(cfg, items):
    """Apply ``section.key=value`` strings on top of ``cfg`` and re-validate."""
    problems = []
    for item in items:
        name, sep, raw = item.partition("=")
        sec, dot, key = name.strip().partition(".")
        if not sep or not dot:
            problems.append(f"{item!r}: expected section.key=value")
        elif sec not in SCHEMA or key not in SCHEMA[sec]:
            problems.append(f"{name.strip()}: unknown key")
        else:
            try:
                cfg.values[sec][key] = SCHEMA[sec][key][1](raw.strip())
            except (TypeError, ValueError) as exc:
                problems.append(f"[{sec}] {key}: cannot parse {raw.strip()!r} ({exc})")
    if problems:
        raise ConfigError(problems)
    return validate(cfg)
