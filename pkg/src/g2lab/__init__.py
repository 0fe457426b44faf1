"""Numerical laboratory for calibrated geometry in seven dimensions."""

__version__ = "0.1.0"

from . import calib, cayley, cli, coassoc, config, dirac, instanton, kantor  # noqa: F401
