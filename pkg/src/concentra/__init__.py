"""Numerical toolkit for free boundary problems of whole-domain blow-up
solutions of Liouville-type equations: harmonic-measure free boundaries,
conformal modulus via capacity, flux-flow concentration curves, matched
asymptotic approximate solutions and their mass/profile diagnostics."""

__version__ = "0.1.0"
