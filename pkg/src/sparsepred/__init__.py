"""Predictive densities and KL risk for sparsity priors."""
__version__ = "0.1.0"
