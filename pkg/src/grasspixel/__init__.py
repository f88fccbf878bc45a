"""grasspixel: simulate how a two-grass display pixel changes color.

A scene-linear pipeline from procedural grass geometry and measured-light
rigs to perceptual color-change curves (OGCD vs. grass length), checker-based
color correction, curve comparison metrics, and 8-bit calibration tables.
"""

__version__ = "0.1.0"

from . import colorimetry  # noqa: F401
