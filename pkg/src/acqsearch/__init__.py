"""Acquisition-function discovery for grid-based Bayesian optimization.

Subpackages / modules
---------------------
gp          exact GP regression with a fixed RBF/ARD kernel
objectives  benchmark functions, Sobol grids, presets, instances
acquisition builtin and discovered acquisition policies
afdsl       expression language for candidate acquisition functions
engine      BO evaluation loop, fitness score, regret curves
database    island-model programs database
mutation    prompt construction, remote and local mutators
search      the outer evolutionary loop
plotting    regret-curve figures
cli         command line entry point
"""

__version__ = "0.1.0"
