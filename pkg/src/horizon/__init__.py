"""Finite-time singularity analysis for autonomous ODEs.

Pipeline: compactify the phase space so infinity (or a degenerate level set)
becomes the horizon {r = 0}, desingularize the time scale, classify the
horizon equilibria, extract center-manifold asymptotics where linearization
fails, integrate the desingularized flow, reconstruct physical time from the
chained rescalings, and fit the resulting power-times-log-power singularity
rates against predictions.
"""

__version__ = "0.1.0"
