"""Boundary-driven symmetric exclusion with non-reversible left boundaries.

Exact solvers, correlation boundary-value problems, forward and dual Monte
Carlo, and an experiment harness.  See the README for a tour.
"""

__version__ = "0.1.0"

from .core import (Configuration, DegreePreservingSpec, FlipBoundarySpec, LatticeGeometry,
                   ModelError, ModelSpec, SpeededBoundarySpec, load_spec)

__all__ = ["Configuration", "DegreePreservingSpec", "FlipBoundarySpec", "LatticeGeometry",
           "ModelError", "ModelSpec", "SpeededBoundarySpec", "load_spec", "__version__"]
