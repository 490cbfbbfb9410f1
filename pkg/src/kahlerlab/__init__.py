"""Numerical laboratory for Kahler metrics whose symmetry is the gradient
flow of a distinguished potential function.

The package is organized in layers:

* ``jets``      truncated Taylor arithmetic (the differentiation substrate)
* ``charts``    complex charts and Kahler potentials, metric extraction
* ``riemann``   connection, curvature, geodesics, Jacobi fields
* ``profiles``  the one-variable ODE side: profile functions and their solutions
* ``catalog``   concrete model geometries (projective spaces, Grassmannians,
                disc bundles) with their structure data
* ``verify``    pointwise structural checks and eigenvalue bookkeeping
* ``suites``    randomized verification suites producing machine-readable reports
* ``cli``       command line front end
"""

__version__ = "0.1.0"
