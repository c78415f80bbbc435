"""Label recovery in the symmetric two-component Gaussian mixture.

Hollowed-Gram spectral initialization, sign-based Lloyd refinement, oracle
baselines and a Monte-Carlo engine for exact-recovery phase diagrams.
"""

__version__ = "0.1.0"
