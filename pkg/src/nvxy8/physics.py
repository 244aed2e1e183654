"""
Physical constants and NV ensemble parameters.

All frequencies are in Hz (not rad/s) unless a name says otherwise, fields
in tesla, times in seconds.
"""

from dataclasses import dataclass, field

import numpy as np

AVOGADRO = 6.02214076e23
HBAR = 1.054571817e-34
MU0 = 1.25663706212e-6


def _carbon_density(mass_density, molar_mass):
    # mass_density in kg/m^3, molar_mass in kg/mol
    return mass_density / molar_mass * AVOGADRO


@dataclass(frozen=True)
class PhysConsts:
    """Constants shared by every module.

    ``gamma_e`` is the electron gyromagnetic ratio in Hz/T; the angular form
    used in phase integrals is ``2*pi*gamma_e``.  ``n_carbon`` defaults to the
    atomic density of diamond at 3.52 g/cm^3.
    """

    gamma_e: float = 28.0249e9
    mu0: float = MU0
    D: float = 2.870e9
    n_carbon: float = _carbon_density(3520.0, 12.011e-3)

    def __post_init__(self):
        for name in ("gamma_e", "mu0", "D", "n_carbon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if abs(self.gamma_e / 28.02e9 - 1.0) > 0.01:
            raise ValueError("gamma_e must lie within 1% of 28.02 GHz/T")

    @property
    def gamma_angular(self):
        """Gyromagnetic ratio in rad/(s T)."""
        return 2.0 * np.pi * self.gamma_e


DEFAULT_NV_AXIS = (0.0, np.sqrt(2.0 / 3.0), 1.0 / np.sqrt(3.0))


@dataclass(frozen=True)
class NVParams:
    consts: PhysConsts = field(default_factory=PhysConsts)
    hyperfine_A: float = 3.0e6
    t2_fast: float = 33e-6
    t2_slow: float = 77e-6
    fast_weight: float = 0.5
    contrast: float = 0.03
    nv_axis: tuple = DEFAULT_NV_AXIS
    n_nv_ppm: float = 0.05

    def __post_init__(self):
        axis = np.asarray(self.nv_axis, dtype=float)
        if axis.shape != (3,):
            raise ValueError("nv_axis must be a 3-vector")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("nv_axis must have unit norm")
        object.__setattr__(self, "nv_axis", tuple(float(a) for a in axis))
        if not 0 < self.t2_fast <= self.t2_slow:
            raise ValueError("need 0 < t2_fast <= t2_slow")
        if not 0.0 <= self.fast_weight <= 1.0:
            raise ValueError("fast_weight must lie in [0, 1]")
        if not 0.0 < self.contrast < 1.0:
            raise ValueError("contrast must lie in (0, 1)")
        if self.hyperfine_A < 0 or self.n_nv_ppm < 0:
            raise ValueError("hyperfine_A and n_nv_ppm must be non-negative")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


def resonance_frequencies(params, b_bias, upper_branch=False):
    """Return the two 15N hyperfine lines ``(f_minus, f_plus)`` in Hz.

    The lower branch (default) moves down with field, ``D - gamma_e*B``;
    ``upper_branch=True`` selects ``D + gamma_e*B``.
    """
    if b_bias < 0:
        raise ValueError("b_bias must be non-negative")
    c = params.consts
    sign = 1.0 if upper_branch else -1.0
    center = c.D + sign * c.gamma_e * b_bias
    half = params.hyperfine_A / 2.0
    return center - half, center + half


def bias_for_center(params, center, upper_branch=False):
    """Bias field that places the hyperfine doublet mean at ``center``."""
    c = params.consts
    b = (center - c.D) / c.gamma_e if upper_branch else (c.D - center) / c.gamma_e
    if b < 0:
        raise ValueError("requested center is not reachable on this branch")
    return b


def pi_length_from_rabi(omega_rabi):
    """Rectangular pi-pulse duration for a Rabi frequency given in Hz."""
    if not omega_rabi > 0:
        raise ValueError("Rabi frequency must be positive")
    return 0.5 / omega_rabi


def rabi_from_pi_length(t_pi):
    if not t_pi > 0:
        raise ValueError("pi length must be positive")
    return 0.5 / t_pi


def coherence_envelope(params, t):
    """Double-exponential echo envelope, 1 at t=0.

    Accepts scalars or arrays; negative times raise ``ValueError``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be non-negative")
    w = params.fast_weight
    env = w * np.exp(-t_arr / params.t2_fast) + (1.0 - w) * np.exp(-t_arr / params.t2_slow)
    return float(env) if env.ndim == 0 else env


def ppm_to_volume_density(ppm, consts=None):
    """Convert a number fraction in ppm of carbon sites to spins per m^3."""
    consts = consts or PhysConsts()
    if np.any(np.asarray(ppm) < 0):
        raise ValueError("ppm must be non-negative")
    return ppm * 1e-6 * consts.n_carbon


def volume_density_to_ppm(n, consts=None):
    consts = consts or PhysConsts()
    return n / (1e-6 * consts.n_carbon)
