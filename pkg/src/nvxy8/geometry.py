"""
Quasi-static field of a thin current strip and its projection on the NV axis.

Lab frame: x transverse to the wire in the chip plane, y along the wire, z the
surface normal pointing from the wire plane into the NV layer.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .physics import PhysConsts, DEFAULT_NV_AXIS


class UncalibratableError(ValueError):
    pass


@dataclass(frozen=True)
class WireGeometry:
    width: float = 10e-6
    current_amplitude: float = 1e-3
    standoff: float = 2e-6
    wire_axis: tuple = (0.0, 1.0, 0.0)
    lateral_offset: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not self.standoff > 0:
            raise ValueError("standoff must be positive")
        axis = np.asarray(self.wire_axis, dtype=float)
        if axis.shape != (3,) or abs(axis[2]) > 1e-12:
            raise ValueError("wire_axis must be an in-plane 3-vector")
        object.__setattr__(self, "wire_axis", tuple(float(a) for a in axis / np.linalg.norm(axis)))

    @property
    def transverse_axis(self):
        """In-plane unit vector perpendicular to the wire (x for a wire along y)."""
        return np.cross(self.wire_axis, (0.0, 0.0, 1.0))

    def with_current(self, current):
        return WireGeometry(self.width, current, self.standoff, self.wire_axis, self.lateral_offset)


@dataclass(frozen=True)
class FieldMap:
    """NV-projected field amplitudes on a regular grid, ``values[iy, ix]`` in T."""

    spacing: float
    origin: tuple
    values: np.ndarray

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field map contains non-finite values")

    @property
    def x(self):
        return self.origin[0] + self.spacing * np.arange(self.values.shape[1])

    @property
    def y(self):
        return self.origin[1] + self.spacing * np.arange(self.values.shape[0])


def strip_field(x, d, geom, consts=None):
    """Field (B_x, B_z) of a uniform sheet current of width w at height d.

    ``x`` is measured from the strip center along the transverse axis.  For
    current along +y the field above the strip points along +x at x = 0 and
    B_z is odd in x.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("height above the strip must be positive")
    consts = consts or PhysConsts()
    x = np.asarray(x, dtype=float)
    w = geom.width
    h = w / 2
    k = consts.mu0 * geom.current_amplitude / (np.pi * w)
    bx = k / 2 * (np.arctan((x + h) / d) - np.arctan((x - h) / d))
    bz = k / 4 * np.log(((x - h) ** 2 + d ** 2) / ((x + h) ** 2 + d ** 2))
    return bx, bz


def filament_field(x, d, current, consts=None):
    """Line-current field (B_x, B_z) at transverse offset x and height d."""
    consts = consts or PhysConsts()
    r2 = x ** 2 + d ** 2
    k = consts.mu0 * current / (2 * np.pi * r2)
    return k * d, -k * x


def project_to_nv(b, nv_axis):
    """Component of ``b`` (..., 3) along the unit NV axis."""
    axis = np.asarray(nv_axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError("nv_axis must have unit norm")
    return np.asarray(b, dtype=float) @ axis


def field_vector(points, geom, consts=None):
    """Lab-frame field vectors (..., 3) at in-plane points (..., 2) of the NV layer."""
    pts = np.asarray(points, dtype=float)
    u = geom.transverse_axis
    s = pts[..., 0] * u[0] + pts[..., 1] * u[1] - geom.lateral_offset
    bt, bz = strip_field(s, geom.standoff, geom, consts)
    return bt[..., None] * u + bz[..., None] * np.array([0.0, 0.0, 1.0])


def projected_field(x, y, geom, nv_axis=DEFAULT_NV_AXIS, consts=None):
    xx, yy = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    return project_to_nv(field_vector(np.stack([xx, yy], axis=-1), geom, consts), nv_axis)


def build_field_map(grid, geom, nv_axis=DEFAULT_NV_AXIS, consts=None):
    """Evaluate the projected field on ``grid = (x_coords, y_coords)``.

    Both coordinate arrays must be uniformly spaced with the same step.
    """
    xs, ys = (np.asarray(g, dtype=float) for g in grid)
    spacing = float(xs[1] - xs[0]) if len(xs) > 1 else float(ys[1] - ys[0])
    xx, yy = np.meshgrid(xs, ys)
    values = projected_field(xx, yy, geom, nv_axis, consts)
    return FieldMap(spacing, (float(xs[0]), float(ys[0])), values)


def calibrate_current(target, x, geom, nv_axis=DEFAULT_NV_AXIS, consts=None, y=0.0):
    """Current (A) that produces projected field ``target`` at lateral position ``x``.

    The standoff of ``geom`` sets the height.  Raises
    :class:`UncalibratableError` where the projection vanishes.
    """
    unit = float(projected_field(x, y, geom.with_current(1.0), nv_axis, consts))
    if abs(unit) < 1e-15:
        raise UncalibratableError(f"projected field vanishes at x = {x:g} m")
    return target / unit


def peak_position(geom, nv_axis=DEFAULT_NV_AXIS, consts=None, span=None, n=20001):
    """Transverse position of the largest positive projected field on a fine line scan."""
    span = span or 2 * geom.width
    xs = geom.lateral_offset + np.linspace(-span, span, n)
    vals = projected_field(xs, 0.0, geom.with_current(1.0), nv_axis, consts)
    return float(xs[np.argmax(vals)])


def write_pgm(path, values, vmin=None, vmax=None):
    """Write a 16-bit binary portable graymap plus a ``.scale`` sidecar.

    The sidecar holds the linear map from gray level back to the value.
    """
    path = Path(path)
    v = np.asarray(values, dtype=float)
    lo = float(v.min()) if vmin is None else vmin
    hi = float(v.max()) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    gray = np.clip(np.rint((v - lo) / span * 65535), 0, 65535).astype(">u2")
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode()
    path.write_bytes(header + gray[::-1].tobytes())
    scale = path.with_suffix(".scale")
    scale.write_text(
        "# value = offset + gain * gray; rows stored top = largest y\n"
        f"offset = {lo!r}\ngain = {span / 65535!r}\nmaxval = 65535\n")
    return path, scale


def read_pgm(path):
    """Inverse of :func:`write_pgm` using the sidecar scale file."""
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    gray = np.frombuffer(parts[3], dtype=">u2").reshape(h, w)[::-1]
    meta = {}
    for line in path.with_suffix(".scale").read_text().splitlines():
        if "=" in line and not line.startswith("#"):
            k, v = line.split("=", 1)
            meta[k.strip()] = float(v)
    return meta["offset"] + meta["gain"] * gray.astype(float)
