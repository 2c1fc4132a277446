"""H(div)-conforming discretisation of coupled elasticity / Biot poroelasticity."""
__version__ = "0.1.0"
