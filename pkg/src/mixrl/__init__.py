"""mixrl: mixed model/data reinforcement learning for additive-noise systems.

The training engine fuses a designer-supplied disturbance prior with measured
transition residuals through an iterative Bayesian estimator, and embeds the
resulting "mixed model" inside generalized policy iteration. Benchmarks cover
a linear-quadratic suite with a Riccati oracle, exact tabular policy
iteration, and a lane-change vehicle task.
"""

__version__ = "0.1.0"

from .numkit import Gaussian, RngStream

__all__ = ["Gaussian", "RngStream", "__version__"]
