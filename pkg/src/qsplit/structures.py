"""Bipartitions and structural transformations of composite spaces.

A structural transformation is either a regrouping (one particle reassigned
between the two sides of a cut) or a global unitary re-factorization with a
declared pair of output factor dimensions.  Both preserve the total
dimension; they change only how the one Hilbert space is split in two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hilbert import (
    CompositeSpace,
    DensityMatrix,
    StateVector,
    reorder_matrix,
    reorder_vector,
)

S_TO_E = "s_to_e"
E_TO_S = "e_to_s"

UNITARITY_ATOL = 1e-10


@dataclass(frozen=True)
class Bipartition:
    """Assignment of every particle of a space to the open-system or
    environment side, with a fixed ordering on each side."""

    space: CompositeSpace
    s_particles: tuple
    e_particles: tuple

    def __post_init__(self):
        s = tuple(int(q) for q in self.s_particles)
        e = tuple(int(q) for q in self.e_particles)
        if not s or not e:
            raise ValueError("both sides of a bipartition must be nonempty")
        if sorted(s + e) != list(range(self.space.n_particles)):
            raise ValueError(
                f"sides must disjointly exhaust particles 0..{self.space.n_particles - 1}, "
                f"got S={s}, E={e}"
            )
        object.__setattr__(self, "s_particles", s)
        object.__setattr__(self, "e_particles", e)

    @property
    def dim_s(self) -> int:
        return int(math.prod(self.space.dims[q] for q in self.s_particles))

    @property
    def dim_e(self) -> int:
        return int(math.prod(self.space.dims[q] for q in self.e_particles))

    @property
    def layout(self) -> tuple:
        """Particle order placing the S side first; defines the |i>_S |a>_E basis."""
        return self.s_particles + self.e_particles

    def same_split(self, other: "Bipartition") -> bool:
        return (
            self.space.dims == other.space.dims
            and set(self.s_particles) == set(other.s_particles)
        )


def regroup(cut: Bipartition, particle: int, direction: str) -> Bipartition:
    """Move one particle across the cut; it is appended to the end of the
    destination side's ordering."""
    if direction not in (S_TO_E, E_TO_S):
        raise ValueError(f"direction must be {S_TO_E!r} or {E_TO_S!r}")
    if direction == S_TO_E:
        if particle not in cut.s_particles:
            raise ValueError(f"particle {particle} is not on the S side")
        if len(cut.s_particles) < 2:
            raise ValueError("moving the particle would empty the S side")
        s = tuple(q for q in cut.s_particles if q != particle)
        e = cut.e_particles + (particle,)
    else:
        if particle not in cut.e_particles:
            raise ValueError(f"particle {particle} is not on the E side")
        if len(cut.e_particles) < 2:
            raise ValueError("moving the particle would empty the E side")
        s = cut.s_particles + (particle,)
        e = tuple(q for q in cut.e_particles if q != particle)
    return Bipartition(cut.space, s, e)


@dataclass(frozen=True)
class Regrouping:
    """Structure map that reassigns one particle between the sides of a cut."""

    cut: Bipartition
    particle: int
    direction: str

    def __post_init__(self):
        # validates side membership and non-emptiness
        regroup(self.cut, self.particle, self.direction)

    @property
    def space(self) -> CompositeSpace:
        return self.cut.space

    @property
    def target(self) -> Bipartition:
        """The new cut, on the original space with original particle labels."""
        return regroup(self.cut, self.particle, self.direction)

    @property
    def target_space(self) -> CompositeSpace:
        """Space with dims permuted into the new (S-order, E-order) layout."""
        dims = self.space.dims
        return CompositeSpace(tuple(dims[q] for q in self.target.layout))

    @property
    def target_cut(self) -> Bipartition:
        """Contiguous cut on ``target_space`` (S particles come first)."""
        t = self.target
        k = len(t.s_particles)
        n = self.space.n_particles
        return Bipartition(self.target_space, tuple(range(k)), tuple(range(k, n)))


@dataclass(frozen=True)
class UnitaryRefactorization:
    """Global unitary on the native basis followed by a re-split of the
    index range into two new factor dimensions."""

    space: CompositeSpace
    u: np.ndarray
    new_dims: tuple

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.complex128)
        n = self.space.total_dim
        if u.shape != (n, n):
            raise ValueError(f"unitary shape {u.shape} != ({n}, {n})")
        dev = np.max(np.abs(u.conj().T @ u - np.eye(n)))
        if dev > UNITARITY_ATOL:
            raise ValueError(f"matrix not unitary within {UNITARITY_ATOL}: {dev}")
        nd = tuple(int(d) for d in self.new_dims)
        if len(nd) != 2 or math.prod(nd) != n:
            raise ValueError(f"new_dims {nd} must be two factors of {n}")
        u = u.copy()
        u.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "new_dims", nd)

    @property
    def target_space(self) -> CompositeSpace:
        return CompositeSpace(self.new_dims)

    @property
    def target_cut(self) -> Bipartition:
        return Bipartition(self.target_space, (0,), (1,))


def apply_structure_map(state, m):
    """Express a state on the factorization defined by the map ``m``.

    Regrouping is a pure permutation of tensor legs (values unchanged up to
    re-indexing); a unitary re-factorization acts with ``u`` and re-labels
    the result with the new factor dimensions.  Norm and trace are exactly
    preserved.
    """
    if state.space.dims != m.space.dims:
        raise ValueError(
            f"state space {state.space.dims} does not match map source {m.space.dims}"
        )
    if isinstance(m, Regrouping):
        perm = m.target.layout
        out_space = m.target_space
        if isinstance(state, StateVector):
            return StateVector(
                reorder_vector(state.amplitudes, state.space.dims, perm), out_space
            )
        return DensityMatrix(
            reorder_matrix(state.matrix, state.space.dims, perm),
            out_space,
            positivity_atol=state.positivity_atol,
            trace_atol=state.trace_atol,
        )
    if isinstance(m, UnitaryRefactorization):
        if isinstance(state, StateVector):
            return StateVector(m.u @ state.amplitudes, m.target_space)
        mat = m.u @ state.matrix @ m.u.conj().T
        return DensityMatrix(
            0.5 * (mat + mat.conj().T),
            m.target_space,
            positivity_atol=state.positivity_atol,
            trace_atol=state.trace_atol,
        )
    raise TypeError(f"unknown structure map {type(m).__name__}")


def _layout_index_map(dims, perm) -> np.ndarray:
    """Native basis index of each basis vector of the ``perm``-ordered layout."""
    pd = tuple(dims[p] for p in perm)
    multi = np.unravel_index(np.arange(int(math.prod(pd))), pd)
    native_multi = [None] * len(dims)
    for pos, p in enumerate(perm):
        native_multi[p] = multi[pos]
    return np.ravel_multi_index(tuple(native_multi), dims)


@dataclass(frozen=True)
class RefactorCoefficients:
    """Coefficients of the new product basis in terms of an old one.

    ``transfer`` is the unitary matrix T with T[m*dE' + n, i*dE + a] equal to
    the amplitude of old basis state |i>_S |a>_E on new basis state
    |m>_S' |n>_E'.  ``d_tensor[i, a, m, n]`` is the same data as a 4-index
    array; unitarity of T is the constraint
    sum_{m,n} D[i,a,m,n] conj(D[i',a',m,n]) = delta_ii' delta_aa'.
    """

    transfer: np.ndarray
    old_cut: Bipartition
    new_dims: tuple

    def __post_init__(self):
        t = np.asarray(self.transfer, dtype=np.complex128)
        n = self.old_cut.space.total_dim
        if t.shape != (n, n):
            raise ValueError(f"transfer shape {t.shape} != ({n}, {n})")
        dev = np.max(np.abs(t.conj().T @ t - np.eye(n)))
        if dev > UNITARITY_ATOL:
            raise ValueError(f"transfer not unitary within {UNITARITY_ATOL}: {dev}")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "transfer", t)
        object.__setattr__(self, "new_dims", tuple(int(d) for d in self.new_dims))

    @property
    def d_tensor(self) -> np.ndarray:
        d_sp, d_ep = self.new_dims
        d_s, d_e = self.old_cut.dim_s, self.old_cut.dim_e
        return np.ascontiguousarray(
            self.transfer.reshape(d_sp, d_ep, d_s, d_e).transpose(2, 3, 0, 1)
        )

    def map_vector(self, amplitudes: np.ndarray) -> np.ndarray:
        """Native-order amplitudes -> amplitudes in the new (S', E') layout."""
        dims = self.old_cut.space.dims
        return self.transfer @ reorder_vector(amplitudes, dims, self.old_cut.layout)

    def map_operator(self, mat: np.ndarray) -> np.ndarray:
        """Native-order operator -> operator in the new (S', E') layout."""
        dims = self.old_cut.space.dims
        old = reorder_matrix(mat, dims, self.old_cut.layout)
        return self.transfer @ old @ self.transfer.conj().T


def refactor_coefficients(old_cut: Bipartition, m) -> RefactorCoefficients:
    """Expansion of the mapped old-cut product basis in the new product basis."""
    dims = old_cut.space.dims
    if dims != m.space.dims:
        raise ValueError("map is not defined on the cut's space")
    nat_old = _layout_index_map(dims, old_cut.layout)
    if isinstance(m, Regrouping):
        nat_new = _layout_index_map(dims, m.target.layout)
        inv_new = np.empty_like(nat_new)
        inv_new[nat_new] = np.arange(nat_new.size)
        n = old_cut.space.total_dim
        transfer = np.zeros((n, n), dtype=np.complex128)
        transfer[inv_new[nat_old], np.arange(n)] = 1.0
        new_dims = (m.target_cut.dim_s, m.target_cut.dim_e)
    elif isinstance(m, UnitaryRefactorization):
        transfer = m.u[:, nat_old]
        new_dims = m.new_dims
    else:
        raise TypeError(f"unknown structure map {type(m).__name__}")
    return RefactorCoefficients(transfer, old_cut, new_dims)
