"""Regularized boundary-element operators for time-harmonic elastic waves.

All elastic layer potentials and their traces are assembled from weakly
singular Helmholtz single-layer integrals and tangential Guenter
derivatives; no hypersingular finite-part integration is performed
anywhere.
"""

__version__ = "0.1.0"
