"""htlab: a halftoning lab.

Classic dithers (ordered, error diffusion, direct binary search), an
HVS-weighted quality metric suite (HVS-MSE, SSIM, CSSIM), blue-noise
spectral analysis (periodogram, radially averaged spectrum, anisotropy),
and a one-step multi-agent policy-gradient halftoner trained from scratch
with hand-rolled convolution, backprop and Adam. Binary and multitone.
"""

__version__ = "0.1.0"

from . import classic, hvs, imagecore, metrics, multitone, nn, rl, spectral

__all__ = ["classic", "hvs", "imagecore", "metrics", "multitone", "nn",
           "rl", "spectral", "__version__"]
