"""
Finsler Holonomy Lab

Numerical laboratory for the holonomy of projectively flat Finsler
2-manifolds: metrics, sprays, nonlinear parallel transport, curvature
vector fields and the Fourier algebra of vector fields on the circle.
"""

__version__ = "1.0.0"
