"""NV-center XY8 RF magnetometry: pulse compilation, spin dynamics, field maps and fits."""

__version__ = "0.1.0"
