"""Numerical experiments on eigenvalues of Schroedinger operators with complex
potentials on the round sphere S^2 and on flat tori.

Submodules
----------
basis          spherical harmonics, torus modes, quadrature grids
densela        dense eigensolvers, operator norms, winding numbers, mixed norms
potentials     potential specifications evaluated on grids
assembly       Galerkin matrices: Laplacian, potential, Hamiltonian, Birman-Schwinger, Gram
inclusion      exponents, inclusion disks, the region Xi, classification
saturation     eigenvalues driven to the edge of the cluster disks
torus_scaling  large tori and the Euclidean limit
experiments    shared experiment runners
cli            batch command-line runner
"""

from . import assembly, basis, densela, experiments, inclusion, potentials, saturation, torus_scaling

__all__ = ["assembly", "basis", "densela", "experiments", "inclusion", "potentials", "saturation",
           "torus_scaling"]

__version__ = "0.1.0"
