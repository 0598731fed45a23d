"""Scar-function eigensolver for the quartic oscillator x^2 y^2 / 2 + (x^4 + y^4)/400.

Eigenstates inside an energy window are computed in a small basis of
wavefunctions localized on short unstable periodic orbits, and checked
against a harmonic-oscillator basis diagonalization.
"""
__version__ = "0.1.0"
