"""Mixed finite element solver for incompressible flow in two dimensions.

The package assembles and advances discretizations of the incompressible
Navier-Stokes equations on triangulated rectangles.  Velocity spaces are
either continuous vector Lagrange elements (Taylor-Hood pairing) or
normal-continuous Brezzi-Douglas-Marini / Raviart-Thomas elements with
discontinuous pressures.  The viscous term supports the full symmetric
stress nu*(grad u + grad u^T - (2/3) div u I) alongside the classical
nu*grad u form, with interior-penalty face coupling on the H(div) spaces
and an upwind or central convective flux.
"""

__version__ = "0.1.0"
