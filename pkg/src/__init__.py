"""
vortex-lab - numerical laboratory for interacting Lamb-Oseen vortices.

Point-vortex dynamics and their viscous regularization, asymptotic deformation
profiles of interacting vortices, and a pseudospectral Navier-Stokes solver used to
measure the predicted convergence rates.
"""

__version__ = "1.0.0"
__author__ = "vortex-lab developers"
