"""2D incompressible Euler on a smoothed stadium domain.

Boundary-integral potential theory, vortex-blob transport, and the numerical
certificate that a positive boundary vorticity value is carried to the cusp
point of the doubly reflected domain in finite time.
"""

__version__ = "0.1.0"
