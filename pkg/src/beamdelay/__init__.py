"""Boundary stabilisation of a damped Euler-Bernoulli beam with a time-varying state delay.

Submodules
----------
spectral    closed-form eigenstructure, Riesz and Gram constants
model       truncated modal model and the mode-count small-gain test
control     pole-placement state feedback
robustness  LMI delay certification and small-gain delay bounds
sdp         small dense log-barrier solver for the LMI feasibility problems
simulate    modal delay-differential simulation and ISS diagnostics
config      scenario configuration and presets
cli         command-line front end
"""

from .spectral import BeamParams

__all__ = ["BeamParams"]
__version__ = "0.1.0"
