"""Renormalization-group analysis of the weakly self-avoiding walk on the
four dimensional hierarchical lattice.

Subpackages by task:

- ``lattice``: hierarchical group arithmetic, the heavy-tailed jump law,
  process constants.
- ``freegreen``: exact free Green's functions, scale and spectral routes.
- ``forms`` / ``gaussian``: exact differential-form calculus on C^Lambda
  and the self-normalizing Gaussian form integrals (quadrature engine).
- ``perturbation``: exact symbolic second-order perturbation theory on a
  single block, vertex-contraction identities, the small-field norm.
- ``flow``: coupling trajectories, critical-trajectory shooting, the
  effective-killing-rate Green's function prediction.
- ``montecarlo``: continuous-time walk simulator and Monte Carlo Green's
  function estimators (the independent oracle for the prediction).
"""

__version__ = "0.1.0"
