"""Seeded random ensembles: Haar unitaries, Haar pure states, random densities.

All generators take a ``numpy.random.Generator``; experiments pin PCG64 so
every sampled number is reproducible from the configured seed.
"""

from __future__ import annotations

import numpy as np

from .hilbert import CompositeSpace, DensityMatrix, StateVector


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian with phase fix."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def haar_state(space: CompositeSpace, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state on the full composite space."""
    n = space.total_dim
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return StateVector(z / np.linalg.norm(z), space)


def random_density(space: CompositeSpace, rng: np.random.Generator) -> DensityMatrix:
    """Full-rank random density matrix (Hilbert-Schmidt measure)."""
    n = space.total_dim
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    m = g @ g.conj().T
    m /= np.real(np.trace(m))
    return DensityMatrix(0.5 * (m + m.conj().T), space)


def random_product_state(space: CompositeSpace, rng: np.random.Generator) -> StateVector:
    """Product of independent Haar-random single-particle pure states."""
    amp = np.ones(1, dtype=np.complex128)
    for d in space.dims:
        z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        amp = np.kron(amp, z / np.linalg.norm(z))
    return StateVector(amp, space)


def random_product_density(space: CompositeSpace, rng: np.random.Generator) -> DensityMatrix:
    """Product of independent random single-particle density matrices."""
    mat = np.ones((1, 1), dtype=np.complex128)
    for d in space.dims:
        mat = np.kron(mat, random_density(CompositeSpace((d,)), rng).matrix)
    return DensityMatrix(mat, space)
