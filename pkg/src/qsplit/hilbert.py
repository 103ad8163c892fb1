"""States, operators and spectral functions on finite composite Hilbert spaces.

Basis convention: the product computational basis is ordered
lexicographically with particle 0 as the slowest-varying index, i.e. the
layout produced by ``numpy.kron`` with particle 0 as the left factor.

All spectral functions go through Hermitian eigendecomposition; at the
dimensions handled here (total_dim <= ~4096) this is exact to working
precision and needs no scaling-and-squaring machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Validity checks on constructed values.
VALIDITY_ATOL = 1e-12
# Agreement tolerance for derived quantities (documented per operation).
DERIVED_ATOL = 1e-10
# Allowed numerically-negative eigenvalue on density matrices.
POSITIVITY_ATOL = 1e-10


def _frozen_complex(a) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CompositeSpace:
    """An ordered tensor product of finite-dimensional local factors."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise ValueError("a composite space needs at least one factor")
        if any(d < 2 for d in dims):
            raise ValueError(f"every local dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(math.prod(self.dims))

    @property
    def n_particles(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on a composite space."""

    amplitudes: np.ndarray
    space: CompositeSpace

    def __post_init__(self):
        amp = _frozen_complex(self.amplitudes).reshape(-1)
        if amp.shape[0] != self.space.total_dim:
            raise ValueError(
                f"amplitude length {amp.shape[0]} != total_dim {self.space.total_dim}"
            )
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > VALIDITY_ATOL:
            raise ValueError(f"state vector norm {norm} deviates from 1")
        object.__setattr__(self, "amplitudes", amp)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.space)


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace positive-semidefinite Hermitian operator.

    ``positivity_atol`` loosens the minimum-eigenvalue check; non-Lindblad
    propagators legitimately produce slightly negative spectra and pass
    ``numpy.inf`` to skip the assertion while keeping Hermiticity and trace
    validation.
    """

    matrix: np.ndarray
    space: CompositeSpace
    positivity_atol: float = POSITIVITY_ATOL
    trace_atol: float = VALIDITY_ATOL

    def __post_init__(self):
        mat = _frozen_complex(self.matrix)
        n = self.space.total_dim
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} != ({n}, {n})")
        herm = np.max(np.abs(mat - mat.conj().T))
        if herm > VALIDITY_ATOL:
            raise ValueError(f"matrix not Hermitian within {VALIDITY_ATOL}: {herm}")
        tr = np.trace(mat)
        if abs(tr - 1.0) > self.trace_atol:
            raise ValueError(f"trace {tr} deviates from 1")
        if np.isfinite(self.positivity_atol):
            w = np.linalg.eigvalsh(mat)
            if w[0] < -self.positivity_atol:
                raise ValueError(f"minimum eigenvalue {w[0]} below -{self.positivity_atol}")
        object.__setattr__(self, "matrix", mat)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class HermitianOperator:
    """Hermitian operator on a composite space (observable or Hamiltonian)."""

    matrix: np.ndarray
    space: CompositeSpace

    def __post_init__(self):
        mat = _frozen_complex(self.matrix)
        n = self.space.total_dim
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} != ({n}, {n})")
        herm = np.max(np.abs(mat - mat.conj().T))
        if herm > VALIDITY_ATOL:
            raise ValueError(f"matrix not Hermitian within {VALIDITY_ATOL}: {herm}")
        object.__setattr__(self, "matrix", mat)


# ---------------------------------------------------------------------------
# raw array helpers (shared with the structure and projection modules)
# ---------------------------------------------------------------------------

def reorder_vector(vec: np.ndarray, dims, perm) -> np.ndarray:
    """Re-express a native-order vector in the particle order ``perm``."""
    return np.ascontiguousarray(vec.reshape(dims).transpose(perm).reshape(-1))


def reorder_matrix(mat: np.ndarray, dims, perm) -> np.ndarray:
    """Re-express a native-order operator in the particle order ``perm``."""
    n = len(dims)
    axes = list(perm) + [n + p for p in perm]
    total = int(math.prod(dims))
    return np.ascontiguousarray(
        mat.reshape(*dims, *dims).transpose(axes).reshape(total, total)
    )


def inverse_permutation(perm) -> list:
    inv = [0] * len(perm)
    for pos, p in enumerate(perm):
        inv[p] = pos
    return inv


def partial_trace_raw(mat: np.ndarray, dims, keep) -> np.ndarray:
    """Partial trace keeping particles ``keep`` in the given order."""
    keep = list(keep)
    n = len(dims)
    traced = [q for q in range(n) if q not in set(keep)]
    perm = keep + traced
    axes = perm + [n + p for p in perm]
    t = mat.reshape(*dims, *dims).transpose(axes)
    dk = int(math.prod(dims[q] for q in keep))
    dt = int(math.prod(dims[q] for q in traced))
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("ikjk->ij", t)


def trace_norm(op: np.ndarray) -> float:
    """Schatten-1 norm; for Hermitian input this is the sum of |eigenvalues|."""
    if np.max(np.abs(op - op.conj().T)) < 1e-10:
        return float(np.sum(np.abs(np.linalg.eigvalsh(op))))
    return float(np.sum(np.linalg.svd(op, compute_uv=False)))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two states or two operators, dims concatenated."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        space = CompositeSpace(a.space.dims + b.space.dims)
        return StateVector(np.kron(a.amplitudes, b.amplitudes), space)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        space = CompositeSpace(a.space.dims + b.space.dims)
        return DensityMatrix(np.kron(a.matrix, b.matrix), space)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        space = CompositeSpace(a.space.dims + b.space.dims)
        return HermitianOperator(np.kron(a.matrix, b.matrix), space)
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the particles ``keep`` (kept in the order given).

    ``keep`` must be a nonempty proper subset of the particle indices.
    """
    keep = list(keep)
    n = rho.space.n_particles
    if not keep or len(set(keep)) != len(keep):
        raise ValueError("keep must be a nonempty set of distinct particle indices")
    if any(q < 0 or q >= n for q in keep):
        raise ValueError(f"particle index out of range for {n} particles: {keep}")
    if len(keep) == n:
        raise ValueError("keep must be a proper subset of the particles")
    red = partial_trace_raw(rho.matrix, rho.space.dims, keep)
    red = 0.5 * (red + red.conj().T)
    space = CompositeSpace(tuple(rho.space.dims[q] for q in keep))
    return DensityMatrix(
        red, space, positivity_atol=rho.positivity_atol, trace_atol=rho.trace_atol
    )


def gibbs_state(h: HermitianOperator, beta: float) -> DensityMatrix:
    """Thermal state exp(-beta H)/Z via eigendecomposition.

    beta = 0 gives the maximally mixed state.  The spectrum is shifted by
    its minimum before exponentiation so large beta cannot overflow.
    """
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    w, v = np.linalg.eigh(h.matrix)
    weights = np.exp(-beta * (w - w[0]))
    weights /= weights.sum()
    rho = (v * weights) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.real(np.trace(rho))
    return DensityMatrix(rho, h.space)


def schmidt_decompose(psi: StateVector, cut):
    """Schmidt decomposition of ``psi`` across a bipartition of its particles.

    Returns ``(coeffs, left, right)`` with coefficients descending,
    sum(coeffs**2) = 1, and columns ``left[:, k]`` / ``right[:, k]`` such
    that  sum_k c_k |left_k> (x) |right_k>  reproduces ``psi`` in the
    (S-order, E-order) layout of the cut.  For degenerate coefficients the
    bases are non-unique; any valid orthonormal pair is returned.
    """
    dims = psi.space.dims
    perm = list(cut.s_particles) + list(cut.e_particles)
    if sorted(perm) != list(range(len(dims))):
        raise ValueError("cut does not partition the particles of psi's space")
    amp = reorder_vector(psi.amplitudes, dims, perm)
    d_s = int(math.prod(dims[q] for q in cut.s_particles))
    d_e = int(math.prod(dims[q] for q in cut.e_particles))
    u, s, vh = np.linalg.svd(amp.reshape(d_s, d_e), full_matrices=False)
    return s, u, vh.T


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2) ||a - b||_1; in [0, 1] for density matrices."""
    if a.space.dims != b.space.dims:
        raise ValueError(f"dimension mismatch: {a.space.dims} vs {b.space.dims}")
    return 0.5 * trace_norm(a.matrix - b.matrix)
