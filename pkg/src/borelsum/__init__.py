"""Numerical Borel-Laplace resummation of singularly perturbed ODE systems.

The package solves ``ħ ∂_x f = F(x, ħ, f)`` in four stages: the formal power
series in ħ (:mod:`borelsum.formal`), Gevrey diagnostics and majorant
certificates (:mod:`borelsum.gevrey`), the Borel-plane convolution equation
(:mod:`borelsum.borel`) and Laplace resummation (:mod:`borelsum.resum`).
:class:`borelsum.estimator.BorelLaplaceSolver` wires them together.
"""

__version__ = "0.1.0"
