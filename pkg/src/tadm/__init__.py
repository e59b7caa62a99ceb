"""Temporally-aware diffusion for longitudinal phantom progression.

A conditional DDPM that predicts the residual between a baseline and a
follow-up scan, conditioned on the time gap, baseline age, and cognitive
status, with a frozen brain-age estimator steering generation.  Everything
runs on a small self-contained float32 tensor library and a deterministic
synthetic phantom dataset.
"""

__version__ = "0.1.0"
