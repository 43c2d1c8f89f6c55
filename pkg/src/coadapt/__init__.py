"""Human-steerable iterative image refinement at desk scale."""

__version__ = "0.1.0"
