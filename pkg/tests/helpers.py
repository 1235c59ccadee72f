import numpy as np

from cqedtomo.fock import DensityMatrix


def random_density(dim, rng, rank=None):
    """Random full-rank (or given-rank) density matrix from a Ginibre draw."""
    r = rank or dim
    g = rng.normal(size=(dim, r)) + 1j * rng.normal(size=(dim, r))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)
