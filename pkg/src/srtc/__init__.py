"""srtc: surrogate-teacher representation transfer for RSS-fingerprint
indoor localization.

Two phases: expert training fits one generative surrogate teacher per
source dataset inside a gradient-penalty Wasserstein game; expert
distilling aligns a target network's representations to the frozen
teachers through angular-similarity, mutual-information, and
spectral-norm (functional) constraints on top of the supervised
localization error.
"""

__version__ = "0.1.0"

from srtc._kernels import active_backend

__all__ = ["active_backend", "__version__"]
