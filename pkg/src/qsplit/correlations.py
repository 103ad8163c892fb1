"""Entropy, mutual information and two-qubit discord across a chosen cut.

All entropies are in nats; conversion to bits is left to display code.
Eigenvalues below 1e-14 are treated as exact zeros in entropy sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hilbert import DensityMatrix, StateVector, partial_trace_raw
from .structures import Bipartition

EIGENVALUE_FLOOR = 1e-14


def von_neumann_entropy(rho) -> float:
    """Entropy in nats of a density matrix (or raw Hermitian unit-trace array)."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w = np.linalg.eigvalsh(mat)
    w = w[w > EIGENVALUE_FLOOR]
    return float(-np.sum(w * np.log(w)))


def entanglement_entropy(psi: StateVector, cut: Bipartition) -> float:
    """Entropy of either reduced state of a pure state; 0 iff product across the cut."""
    red = partial_trace_raw(psi.density_matrix().matrix, psi.space.dims, cut.s_particles)
    return von_neumann_entropy(red)


def mutual_information(rho: DensityMatrix, cut: Bipartition) -> float:
    """S(rho_S) + S(rho_E) - S(rho) across the cut, in nats."""
    dims = rho.space.dims
    s_red = partial_trace_raw(rho.matrix, dims, cut.s_particles)
    e_red = partial_trace_raw(rho.matrix, dims, cut.e_particles)
    return (
        von_neumann_entropy(s_red)
        + von_neumann_entropy(e_red)
        - von_neumann_entropy(rho)
    )


@dataclass(frozen=True)
class CorrelationReport:
    cut_s_particles: tuple
    entropy: float
    mutual_information: float
    discord: float | None
    state_id: str


def _bloch_projectors(theta: float, phi: float):
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    v0 = np.array([c, np.exp(1j * phi) * s])
    v1 = np.array([-np.exp(-1j * phi) * s, c])
    return np.outer(v0, v0.conj()), np.outer(v1, v1.conj())


def _conditional_entropy(rho4: np.ndarray, theta: float, phi: float) -> float:
    """sum_k q_k S(rho_first | outcome k) for a projective measurement of the
    second qubit along the Bloch direction (theta, phi)."""
    total = 0.0
    for proj in _bloch_projectors(theta, phi):
        big = np.kron(np.eye(2), proj)
        sub = big @ rho4 @ big
        q = float(np.real(np.trace(sub)))
        if q < EIGENVALUE_FLOOR:
            continue
        red = np.einsum("ikjk->ij", sub.reshape(2, 2, 2, 2)) / q
        total += q * von_neumann_entropy(red)
    return total


def discord_two_qubit(rho: DensityMatrix, measured_side: str = "e",
                      coarse_grid: int = 64, resolution: float = 1e-4) -> float:
    """One-sided quantum discord of a two-qubit state, in nats.

    The classical correlation is maximized over projective measurements of
    the ``measured_side`` qubit by a coarse Bloch-sphere grid (at least
    ``coarse_grid`` x ``coarse_grid`` cells) followed by deterministic local
    grid refinement down to angular ``resolution``.
    """
    if rho.space.dims != (2, 2):
        raise ValueError(f"discord is implemented for 2x2 states, got {rho.space.dims}")
    if measured_side not in ("s", "e"):
        raise ValueError("measured_side must be 's' or 'e'")
    mat = rho.matrix
    if measured_side == "s":
        mat = mat.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)

    measured = np.einsum("kikj->ij", mat.reshape(2, 2, 2, 2))
    s_meas = von_neumann_entropy(measured)
    s_total = von_neumann_entropy(mat)

    thetas = np.linspace(0.0, math.pi, coarse_grid)
    phis = np.linspace(0.0, 2.0 * math.pi, coarse_grid, endpoint=False)
    best = math.inf
    best_t, best_p = 0.0, 0.0
    for t in thetas:
        for p in phis:
            val = _conditional_entropy(mat, t, p)
            if val < best:
                best, best_t, best_p = val, t, p

    # shrinking local grid, 9 points per axis per pass
    dt = thetas[1] - thetas[0]
    dp = phis[1] - phis[0]
    while max(dt, dp) > resolution:
        for t in np.linspace(best_t - dt, best_t + dt, 9):
            for p in np.linspace(best_p - dp, best_p + dp, 9):
                tc = min(max(t, 0.0), math.pi)
                pc = p % (2 * math.pi)
                val = _conditional_entropy(mat, tc, pc)
                if val < best:
                    best, best_t, best_p = val, tc, pc
        dt /= 4.0
        dp /= 4.0

    discord = s_meas - s_total + best
    return max(discord, 0.0)
