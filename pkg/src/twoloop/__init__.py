"""Two-saddle loop bifurcations of perturbed Hamiltonian foliations."""
