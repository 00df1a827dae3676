"""Bayesian online surrogate modeling of RF two-ports with uncertainty-aware frequency sampling.

Submodules: ``core`` (grids, responses, design spaces, metrics), ``vecfit``
(rational fitting and ensemble-based adaptive sampling), ``bnn`` (Bayesian
network and training), ``sampling`` (uncertainty field, geometry and
frequency selection), ``oracle`` (analytic S-parameter generators), ``loop``
(online learning and comparison settings), ``touchstone``, ``config`` and
``cli``.
"""

__version__ = "0.1.0"
