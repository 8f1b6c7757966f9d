"""Adversarial physics-informed training with exact Wasserstein evaluation.

A generator network learns the distribution of PDE solutions under
uncertain boundary/initial data; a norm-constrained groupsort critic
drives boundary distribution matching while a PDE-residual penalty
constrains the interior.
"""

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
__version__ = "0.1.0"
