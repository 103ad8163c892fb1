"""Projection superoperators selecting the relevant part of a composite state.

Three variants are supported, each idempotent, linear and trace preserving:

  * :class:`BornProjection` -- relevant part is (reduced state) (x) fixed
    environment reference; the reference is fixed at scheme construction and
    is never recomputed from the state being projected.
  * :class:`CorrelatedProjection` -- a family of orthogonal system-side
    projectors, each paired with an environment state of mutually orthogonal
    support.
  * :class:`EnvironmentPinningProjection` -- a complete family of orthogonal
    environment-side projectors, each pinned in place with unit weight.

The residual functions quantify how much relevant information the
complementary (irrelevant) part carries about an alternative cut of the same
space, and how badly projectors adapted to different cuts fail to commute.
Residuals are trace norms; the Frobenius norm rides along for diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hilbert import (
    DensityMatrix,
    HermitianOperator,
    StateVector,
    inverse_permutation,
    partial_trace_raw,
    reorder_matrix,
    schmidt_decompose,
    trace_norm,
)
from .structures import (
    Bipartition,
    RefactorCoefficients,
    Regrouping,
    UnitaryRefactorization,
)

SCHEME_ATOL = 1e-10


def _trace_out_second(mat: np.ndarray, d1: int, d2: int) -> np.ndarray:
    return np.einsum("ikjk->ij", mat.reshape(d1, d2, d1, d2))


def _check_projector_family(ps, dim, label):
    total = np.zeros((dim, dim), dtype=np.complex128)
    for p in ps:
        p = np.asarray(p)
        if p.shape != (dim, dim):
            raise ValueError(f"{label} projector shape {p.shape} != ({dim}, {dim})")
        if np.max(np.abs(p - p.conj().T)) > SCHEME_ATOL:
            raise ValueError(f"{label} projector not Hermitian")
        if np.max(np.abs(p @ p - p)) > SCHEME_ATOL:
            raise ValueError(f"{label} operator is not a projector")
        total += p
    if np.max(np.abs(total - np.eye(dim))) > SCHEME_ATOL:
        raise ValueError(f"{label} projectors do not resolve the identity")


@dataclass(frozen=True)
class BornProjection:
    """Variant (i): relevant part = (reduced system state) (x) fixed reference."""

    cut: Bipartition
    rho_e_ref: DensityMatrix

    def __post_init__(self):
        expected = tuple(self.cut.space.dims[q] for q in self.cut.e_particles)
        if self.rho_e_ref.space.dims != expected:
            raise ValueError(
                f"reference dims {self.rho_e_ref.space.dims} != E factor dims {expected}"
            )


@dataclass(frozen=True)
class CorrelatedProjection:
    """Variant (ii): system-side projector family with paired environment states."""

    cut: Bipartition
    s_projectors: tuple
    e_states: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "s_projectors",
            tuple(np.asarray(p, dtype=np.complex128) for p in self.s_projectors),
        )
        object.__setattr__(self, "e_states", tuple(self.e_states))
        if len(self.s_projectors) != len(self.e_states):
            raise ValueError("need one environment state per system projector")
        _check_projector_family(self.s_projectors, self.cut.dim_s, "system")
        e_dims = tuple(self.cut.space.dims[q] for q in self.cut.e_particles)
        for st in self.e_states:
            if st.space.dims != e_dims:
                raise ValueError(f"environment state dims {st.space.dims} != {e_dims}")
        for a in range(len(self.e_states)):
            for b in range(a + 1, len(self.e_states)):
                overlap = abs(np.trace(self.e_states[a].matrix @ self.e_states[b].matrix))
                if overlap > SCHEME_ATOL:
                    raise ValueError(
                        f"environment states {a} and {b} have overlapping supports"
                    )


@dataclass(frozen=True)
class EnvironmentPinningProjection:
    """Variant (iii): complete orthogonal environment-side projector family."""

    cut: Bipartition
    e_projectors: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "e_projectors",
            tuple(np.asarray(p, dtype=np.complex128) for p in self.e_projectors),
        )
        _check_projector_family(self.e_projectors, self.cut.dim_e, "environment")
        for a in range(len(self.e_projectors)):
            for b in range(a + 1, len(self.e_projectors)):
                if np.max(np.abs(self.e_projectors[a] @ self.e_projectors[b])) > SCHEME_ATOL:
                    raise ValueError(f"environment projectors {a} and {b} not orthogonal")


ProjectionScheme = (BornProjection, CorrelatedProjection, EnvironmentPinningProjection)


def apply_projection(scheme, op: np.ndarray) -> np.ndarray:
    """Linear action of the relevant-part superoperator on a native-order
    operator (not necessarily a state)."""
    cut = scheme.cut
    dims = cut.space.dims
    n = cut.space.total_dim
    if op.shape != (n, n):
        raise ValueError(f"operator shape {op.shape} != ({n}, {n})")
    d_s, d_e = cut.dim_s, cut.dim_e
    layout = cut.layout
    layout_dims = tuple(dims[q] for q in layout)
    back = inverse_permutation(layout)

    if isinstance(scheme, BornProjection):
        red = partial_trace_raw(op, dims, cut.s_particles)
        out = np.kron(red, scheme.rho_e_ref.matrix)
        return reorder_matrix(out, layout_dims, back)

    op_cut = reorder_matrix(op, dims, layout)
    out = np.zeros_like(op_cut)
    if isinstance(scheme, CorrelatedProjection):
        eye_e = np.eye(d_e)
        for p, st in zip(scheme.s_projectors, scheme.e_states):
            big = np.kron(p, eye_e)
            red = _trace_out_second(big @ op_cut @ big, d_s, d_e)
            out += np.kron(red, st.matrix)
        return reorder_matrix(out, layout_dims, back)
    if isinstance(scheme, EnvironmentPinningProjection):
        eye_s = np.eye(d_s)
        for p in scheme.e_projectors:
            big = np.kron(eye_s, p)
            red = _trace_out_second(big @ op_cut @ big, d_s, d_e)
            out += np.kron(red, p / np.real(np.trace(p)))
        return reorder_matrix(out, layout_dims, back)
    raise TypeError(f"unknown projection scheme {type(scheme).__name__}")


def project(rho: DensityMatrix, scheme) -> DensityMatrix:
    """Relevant part of ``rho``; a density matrix on the same space."""
    if rho.space.dims != scheme.cut.space.dims:
        raise ValueError(
            f"state dims {rho.space.dims} != scheme dims {scheme.cut.space.dims}"
        )
    out = apply_projection(scheme, rho.matrix)
    return DensityMatrix(
        0.5 * (out + out.conj().T),
        rho.space,
        positivity_atol=rho.positivity_atol,
        trace_atol=rho.trace_atol,
    )


def irrelevant_part(rho: DensityMatrix, scheme) -> HermitianOperator:
    """Complementary part of ``rho``; traceless and Hermitian."""
    if rho.space.dims != scheme.cut.space.dims:
        raise ValueError(
            f"state dims {rho.space.dims} != scheme dims {scheme.cut.space.dims}"
        )
    q = rho.matrix - apply_projection(scheme, rho.matrix)
    return HermitianOperator(0.5 * (q + q.conj().T), rho.space)


@dataclass(frozen=True)
class LemmaResidualReport:
    residual: float           # trace norm
    frobenius: float          # diagnostic companion norm
    state_id: str
    scheme_s_particles: tuple
    alt_description: str
    tolerance: float


def lemma1_residual(rho: DensityMatrix, scheme, alt, state_id: str = "",
                    tolerance: float = 1e-12) -> LemmaResidualReport:
    """Trace norm of the irrelevant part reduced over an *alternative*
    environment.

    Zero exactly when the irrelevant part carries no information about the
    alternative open system; over the scheme's own cut the reduction
    vanishes identically, so that input is rejected as degenerate.
    """
    dims = rho.space.dims
    q = rho.matrix - apply_projection(scheme, rho.matrix)
    if isinstance(alt, Regrouping):
        alt = alt.target
    if isinstance(alt, Bipartition):
        if alt.space.dims != dims:
            raise ValueError("alternative cut lives on a different space")
        if alt.same_split(scheme.cut):
            raise ValueError(
                "alternative cut equals the scheme's own cut; the reduction "
                "vanishes identically"
            )
        reduced = partial_trace_raw(q, dims, alt.s_particles)
        alt_desc = f"regrouped S={alt.s_particles}"
    elif isinstance(alt, UnitaryRefactorization):
        if alt.space.dims != dims:
            raise ValueError("structure map lives on a different space")
        mapped = alt.u @ q @ alt.u.conj().T
        reduced = _trace_out_second(mapped, *alt.new_dims)
        alt_desc = f"unitary refactorization {alt.new_dims}"
    else:
        raise TypeError(f"unsupported alternative structure {type(alt).__name__}")
    return LemmaResidualReport(
        residual=trace_norm(reduced),
        frobenius=float(np.linalg.norm(reduced)),
        state_id=state_id,
        scheme_s_particles=scheme.cut.s_particles,
        alt_description=alt_desc,
        tolerance=tolerance,
    )


def lemma2_residual(rho: DensityMatrix, scheme, scheme_alt) -> float:
    """Trace norm of the commutator of two cut-adapted projections on ``rho``."""
    dims = rho.space.dims
    if scheme.cut.space.dims != dims or scheme_alt.cut.space.dims != dims:
        raise ValueError("schemes and state must share one composite space")
    ab = apply_projection(scheme, apply_projection(scheme_alt, rho.matrix))
    ba = apply_projection(scheme_alt, apply_projection(scheme, rho.matrix))
    return trace_norm(ab - ba)


# ---------------------------------------------------------------------------
# coefficient-level reduction conditions
# ---------------------------------------------------------------------------

def appendix_a_pure_condition(psi: StateVector, scheme: BornProjection,
                              coeffs: RefactorCoefficients) -> np.ndarray:
    """Coefficient-level matrix whose vanishing is equivalent to the
    irrelevant part of a pure state having zero reduction over the new
    environment.

    Built from the Schmidt data of ``psi`` across the scheme's cut, the
    eigenbasis of the reference state and the re-factorization coefficients;
    its diagonal always sums to zero (tracelessness of the irrelevant part).
    """
    cut = scheme.cut
    if psi.space.dims != cut.space.dims:
        raise ValueError("state and scheme live on different spaces")
    if coeffs.old_cut != cut:
        raise ValueError("coefficients were built for a different cut")
    c, s_basis, e_basis = schmidt_decompose(psi, cut)
    pi, ref_basis = np.linalg.eigh(scheme.rho_e_ref.matrix)
    # overlap of Schmidt E-vectors with the reference eigenbasis
    coefs_c = (ref_basis.conj().T @ e_basis).T            # (schmidt, alpha)
    d = coeffs.d_tensor
    # coefficients re-expressed in the Schmidt (x) reference-eigenbasis pair
    dt = np.einsum("ji,ba,jbmn->iamn", s_basis, ref_basis, d)
    lam = np.einsum("i,ia,iamn->mn", c, coefs_c, dt)
    p = c ** 2
    return np.einsum("mn,pn->mp", lam, lam.conj()) - np.einsum(
        "i,a,iamn,iapn->mp", p, pi, dt, dt.conj()
    )


@dataclass(frozen=True)
class SeparableDecomposition:
    """Convex combination of product states lambda_i rho_Si (x) rho_Ei."""

    weights: tuple
    s_factors: tuple
    e_factors: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != len(self.s_factors) or len(w) != len(self.e_factors):
            raise ValueError("need one S and one E factor per weight")
        if abs(sum(w) - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {sum(w)}, expected 1")
        if any(x < 0 for x in w):
            raise ValueError("weights must be nonnegative")
        s_dims = self.s_factors[0].space.dims
        e_dims = self.e_factors[0].space.dims
        for s in self.s_factors:
            if s.space.dims != s_dims:
                raise ValueError("inconsistent S factor dims")
        for e in self.e_factors:
            if e.space.dims != e_dims:
                raise ValueError("inconsistent E factor dims")
        object.__setattr__(self, "weights", w)

    def to_density(self, cut: Bipartition) -> DensityMatrix:
        """Assemble the native-order density matrix for the given cut."""
        mat = np.zeros((cut.space.total_dim,) * 2, dtype=np.complex128)
        for w, s, e in zip(self.weights, self.s_factors, self.e_factors):
            mat += w * np.kron(s.matrix, e.matrix)
        layout_dims = tuple(cut.space.dims[q] for q in cut.layout)
        native = reorder_matrix(mat, layout_dims, inverse_permutation(cut.layout))
        return DensityMatrix(0.5 * (native + native.conj().T), cut.space)

    def reduced_s(self) -> np.ndarray:
        mat = np.zeros_like(self.s_factors[0].matrix)
        for w, s in zip(self.weights, self.s_factors):
            mat += w * s.matrix
        return mat


def appendix_a_mixed_condition(sep: SeparableDecomposition, scheme: BornProjection,
                               coeffs: RefactorCoefficients) -> np.ndarray:
    """Mixed-state counterpart of :func:`appendix_a_pure_condition`.

    The separable decomposition is expanded in the spectral bases of its
    factors, each product basis vector is pushed through the
    re-factorization and the second factor is contracted away; the result
    equals the matrix elements of the reduced irrelevant part in the new
    system basis, with an identically-zero diagonal sum.
    """
    cut = scheme.cut
    if coeffs.old_cut != cut:
        raise ValueError("coefficients were built for a different cut")
    d_sp, d_ep = coeffs.new_dims
    t = coeffs.transfer
    n = cut.space.total_dim

    term1 = np.zeros((d_sp, d_sp), dtype=np.complex128)
    for w, s, e in zip(sep.weights, sep.s_factors, sep.e_factors):
        p_m, x = np.linalg.eigh(s.matrix)
        pi_n, f = np.linalg.eigh(e.matrix)
        mapped = (t @ np.kron(x, f)).reshape(d_sp, d_ep, n)
        weights = np.outer(p_m, pi_n).reshape(-1)
        term1 += w * np.einsum("abk,k,cbk->ac", mapped, weights, mapped.conj())

    kappa, v = np.linalg.eigh(sep.reduced_s())
    omega, u = np.linalg.eigh(scheme.rho_e_ref.matrix)
    mapped = (t @ np.kron(v, u)).reshape(d_sp, d_ep, n)
    weights = np.outer(kappa, omega).reshape(-1)
    term2 = np.einsum("abk,k,cbk->ac", mapped, weights, mapped.conj())
    return term1 - term2
