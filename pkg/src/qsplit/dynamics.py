"""Truncated-oscillator Brownian-motion models and their propagators.

The composite model is a set of system particles (free, optionally coupled
pairwise by harmonic springs) bilinearly coupled through their center of
mass to a bath of independent harmonic oscillators.  Everything is
represented in truncated Fock bases, so exact closed-system evolution is a
single Hermitian eigendecomposition.

Master-equation propagators cover the position-decoherence-plus-friction
generator (not of Lindblad form; positivity is monitored, never asserted)
and its frictionless limit (Lindblad, positivity preserving).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .hilbert import (
    CompositeSpace,
    DensityMatrix,
    HermitianOperator,
    partial_trace_raw,
    trace_norm,
)
from .projections import BornProjection, apply_projection
from .structures import Bipartition


class ResourceLimitError(RuntimeError):
    """Requested composite dimension exceeds the configured ceiling."""


class IntegrationFailureError(RuntimeError):
    """Adaptive step-size control underflowed; diagnostics in the message."""


TRUNCATION_FLAG_THRESHOLD = 1e-4


@dataclass(frozen=True)
class QbmModel:
    """Truncated composite model: n_s system particles + n_e bath oscillators.

    System particles get a Fock basis at ``basis_frequency`` (a length-scale
    choice only; their self-Hamiltonian is purely kinetic plus harmonic pair
    springs of constant ``k_pair``).
    """

    n_s: int
    n_e: int
    masses_s: tuple
    masses_e: tuple
    omegas_e: tuple
    kappas: tuple
    k_pair: float
    d_s: int
    d_e: int
    hbar: float = 1.0
    basis_frequency: float = 1.0
    max_total_dim: int = 4096

    def __post_init__(self):
        for name, vals, count in (
            ("masses_s", self.masses_s, self.n_s),
            ("masses_e", self.masses_e, self.n_e),
            ("omegas_e", self.omegas_e, self.n_e),
            ("kappas", self.kappas, self.n_e),
        ):
            vals = tuple(float(v) for v in vals)
            if len(vals) != count:
                raise ValueError(f"{name} needs {count} entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        if any(v <= 0 for v in self.masses_s + self.masses_e + self.omegas_e):
            raise ValueError("masses and frequencies must be positive")
        if self.d_s < 2 or self.d_e < 2:
            raise ValueError("Fock cutoffs must be >= 2")
        if self.total_dim > self.max_total_dim:
            raise ResourceLimitError(
                f"total_dim {self.total_dim} exceeds ceiling {self.max_total_dim}"
            )

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace((self.d_s,) * self.n_s + (self.d_e,) * self.n_e)

    @property
    def total_dim(self) -> int:
        return self.d_s ** self.n_s * self.d_e ** self.n_e

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses_s))


def default_model() -> QbmModel:
    """Desk-scale composite: one d=6 particle, three d=4 bath modes (dim 384)."""
    return QbmModel(
        n_s=1,
        n_e=3,
        masses_s=(1.0,),
        masses_e=(1.0, 1.0, 1.0),
        omegas_e=(0.9, 1.1, 1.3),
        kappas=(0.12, 0.18, 0.15),
        k_pair=0.0,
        d_s=6,
        d_e=4,
    )


def position_momentum_ops(d: int, m: float, omega: float, hbar: float = 1.0):
    """Truncated ladder-built position and momentum on a single d-level factor.

    The canonical commutator is i*hbar on the lowest d-1 diagonal entries;
    the top entry is (1-d)*i*hbar, the unavoidable truncation artifact (the
    trace of the commutator is exactly zero for any finite matrices).
    """
    if d < 2:
        raise ValueError("need at least two Fock levels")
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(np.complex128)
    x = math.sqrt(hbar / (2.0 * m * omega)) * (a + a.conj().T)
    p = 1j * math.sqrt(hbar * m * omega / 2.0) * (a.conj().T - a)
    space = CompositeSpace((d,))
    return HermitianOperator(x, space), HermitianOperator(p, space)


def _embed(op: np.ndarray, dims, particle: int) -> np.ndarray:
    left = int(math.prod(dims[:particle]))
    right = int(math.prod(dims[particle + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


@dataclass(frozen=True)
class HamiltonianParts:
    """Total Hamiltonian plus its system/environment/interaction part-sums
    for every supported grouping of the same composite operator."""

    model: QbmModel
    total: HermitianOperator
    groupings: dict
    released_particle: int | None
    absorbed_mode: int | None
    x_ops: tuple          # embedded position operator per particle
    p_ops: tuple          # embedded momentum operator per particle
    mode_local_h: tuple   # single-oscillator Hamiltonians (d_e x d_e)


def _local_mode_h(model: QbmModel, alpha: int) -> np.ndarray:
    x, p = position_momentum_ops(
        model.d_e, model.masses_e[alpha], model.omegas_e[alpha], model.hbar
    )
    m, w = model.masses_e[alpha], model.omegas_e[alpha]
    return p.matrix @ p.matrix / (2.0 * m) + 0.5 * m * w ** 2 * x.matrix @ x.matrix


def build_hamiltonians(model: QbmModel, released_particle: int | None = None,
                       absorbed_mode: int | None = None) -> HamiltonianParts:
    """Assemble the composite Hamiltonian and its alternative groupings.

    Three groupings of one and the same total operator are returned (keys of
    ``groupings``, each a dict with "system"/"environment"/"interaction"):

      * "original" -- particles vs bath;
      * "released" -- one system particle reassigned to the environment
        (present when n_s >= 2);
      * "absorbed" -- one bath mode reassigned to the system
        (present when n_e >= 2).

    Part-sums of every grouping coincide with the total to rounding error.
    """
    space = model.space
    dims = space.dims
    n_s, n_e = model.n_s, model.n_e
    big_m = model.total_mass

    xs, ps = [], []
    for i in range(n_s):
        x, p = position_momentum_ops(
            model.d_s, model.masses_s[i], model.basis_frequency, model.hbar
        )
        xs.append(_embed(x.matrix, dims, i))
        ps.append(_embed(p.matrix, dims, i))
    for a in range(n_e):
        x, p = position_momentum_ops(
            model.d_e, model.masses_e[a], model.omegas_e[a], model.hbar
        )
        xs.append(_embed(x.matrix, dims, n_s + a))
        ps.append(_embed(p.matrix, dims, n_s + a))

    def kinetic_s(i):
        return ps[i] @ ps[i] / (2.0 * model.masses_s[i])

    def pair(i, j):
        d = xs[i] - xs[j]
        return model.k_pair * d @ d

    def osc(a):
        q = n_s + a
        m, w = model.masses_e[a], model.omegas_e[a]
        return ps[q] @ ps[q] / (2.0 * m) + 0.5 * m * w ** 2 * xs[q] @ xs[q]

    x_cm = sum(model.masses_s[i] * xs[i] for i in range(n_s)) / big_m
    bath_coupling = [model.kappas[a] * xs[n_s + a] for a in range(n_e)]

    h_s = sum(kinetic_s(i) for i in range(n_s))
    h_s = h_s + sum(pair(i, j) for i in range(n_s) for j in range(i + 1, n_s))
    h_e = sum(osc(a) for a in range(n_e))
    h_int = x_cm @ sum(bath_coupling)
    total = h_s + h_e + h_int

    groupings = {"original": {"system": h_s, "environment": h_e, "interaction": h_int}}

    if released_particle is None and n_s >= 2:
        released_particle = n_s - 1
    if released_particle is not None:
        if not (0 <= released_particle < n_s) or n_s < 2:
            raise ValueError("released particle must leave a nonempty system")
        io = released_particle
        rest = [i for i in range(n_s) if i != io]
        h_sp = sum(kinetic_s(i) for i in rest)
        h_sp = h_sp + sum(
            pair(i, j) for i in rest for j in rest if i < j
        )
        # the released particle keeps its mass-weighted share of the
        # center-of-mass coupling
        h_ep = h_e + kinetic_s(io) + (model.masses_s[io] / big_m) * xs[io] @ sum(bath_coupling)
        h_spep = sum(
            (model.masses_s[i] / big_m) * xs[i] @ sum(bath_coupling) for i in rest
        )
        h_spep = h_spep + sum(pair(io, j) for j in rest)
        groupings["released"] = {
            "system": h_sp, "environment": h_ep, "interaction": h_spep,
        }

    if absorbed_mode is None and n_e >= 2:
        absorbed_mode = 0
    if absorbed_mode is not None:
        if not (0 <= absorbed_mode < n_e) or n_e < 2:
            raise ValueError("absorbed mode must leave a nonempty environment")
        ao = absorbed_mode
        rest = [a for a in range(n_e) if a != ao]
        h_spp = h_s + osc(ao) + x_cm @ bath_coupling[ao]
        h_epp = sum(osc(a) for a in rest)
        h_sppepp = x_cm @ sum(bath_coupling[a] for a in rest)
        groupings["absorbed"] = {
            "system": h_spp, "environment": h_epp, "interaction": h_sppepp,
        }

    return HamiltonianParts(
        model=model,
        total=HermitianOperator(0.5 * (total + total.conj().T), space),
        groupings=groupings,
        released_particle=released_particle,
        absorbed_mode=absorbed_mode,
        x_ops=tuple(xs),
        p_ops=tuple(ps),
        mode_local_h=tuple(_local_mode_h(model, a) for a in range(n_e)),
    )


def thermal_mode_state(model: QbmModel, alpha: int, beta: float) -> np.ndarray:
    """Gibbs weights of a single bath oscillator, as a raw d_e x d_e matrix."""
    h = _local_mode_h(model, alpha)
    w, v = np.linalg.eigh(h)
    weights = np.exp(-beta * (w - w[0]))
    weights /= weights.sum()
    out = (v * weights) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def initial_state(model: QbmModel, beta: float, variant: str,
                  rho_s: DensityMatrix | None = None,
                  decomposition=None) -> DensityMatrix:
    """Composite initial state: system state times per-mode thermal bath.

    variant "thermal_product": ``rho_s`` on the system factor, every bath
    mode independently thermal.  variant "correlated_system": the system
    state is a convex mixture of products across the (rest | last particle)
    split, supplied as ``decomposition`` (a SeparableDecomposition); the
    bath is thermal as above.  variant "joined_mode_product" is numerically
    the same state as "thermal_product", provided for runs that read it
    against the absorbed-mode grouping.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    bath = np.ones((1, 1), dtype=np.complex128)
    for a in range(model.n_e):
        bath = np.kron(bath, thermal_mode_state(model, a, beta))

    if variant in ("thermal_product", "joined_mode_product"):
        if rho_s is None:
            raise ValueError("rho_s required for product variants")
        sys_mat = rho_s.matrix
    elif variant == "correlated_system":
        if decomposition is None:
            raise ValueError("decomposition required for the correlated variant")
        sys_mat = np.zeros((model.d_s ** model.n_s,) * 2, dtype=np.complex128)
        for w, rest, moved in zip(
            decomposition.weights, decomposition.s_factors, decomposition.e_factors
        ):
            sys_mat += w * np.kron(rest.matrix, moved.matrix)
    else:
        raise ValueError(f"unknown initial-state variant {variant!r}")

    full = np.kron(sys_mat, bath)
    return DensityMatrix(0.5 * (full + full.conj().T), model.space)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if len(self.states) != t.size:
            raise ValueError("one state per time required")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", tuple(self.states))


def top_level_occupation(rho: DensityMatrix) -> float:
    """Largest top-Fock-level population over all particles; values above
    1e-4 mark a run as truncation-unsafe."""
    occ = 0.0
    for q, d in enumerate(rho.space.dims):
        red = partial_trace_raw(rho.matrix, rho.space.dims, [q])
        occ = max(occ, float(np.real(red[d - 1, d - 1])))
    return occ


def evolve_exact(rho0: DensityMatrix, h: HermitianOperator, times,
                 hbar: float = 1.0) -> Trajectory:
    """Unitary evolution of the closed system via one eigendecomposition."""
    if rho0.space.dims != h.space.dims:
        raise ValueError("state and Hamiltonian live on different spaces")
    times = np.asarray(times, dtype=float)
    w, v = np.linalg.eigh(h.matrix)
    a = v.conj().T @ rho0.matrix @ v
    gaps = w[:, None] - w[None, :]
    states = []
    occ = 0.0
    for t in times:
        phase = np.exp(-1j * gaps * (t - times[0]) / hbar)
        mat = v @ (phase * a) @ v.conj().T
        state = DensityMatrix(0.5 * (mat + mat.conj().T), rho0.space)
        occ = max(occ, top_level_occupation(state))
        states.append(state)
    meta = {
        "top_level_occupation": occ,
        "truncation_safe": occ <= TRUNCATION_FLAG_THRESHOLD,
    }
    return Trajectory(times, states, meta)


@dataclass(frozen=True)
class MasterEqParams:
    """Constants of the Brownian-motion master equations."""

    m: float
    gamma: float
    temperature: float
    hbar: float = 1.0
    k_b: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def decoherence_rate(self) -> float:
        return 2.0 * self.m * self.gamma * self.k_b * self.temperature / self.hbar ** 2


def _rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(rhs, rho0: np.ndarray, times: np.ndarray, step_tol: float):
    """Fixed-formula RK4 with step-halving error control (Richardson
    estimate per step, fifth-order accepted value)."""
    span = times[-1] - times[0]
    h_min = max(span, 1.0) * 1e-12
    y = rho0.astype(np.complex128).copy()
    out = [y.copy()]
    h = span / (8.0 * (len(times) - 1))
    t = times[0]
    for target in times[1:]:
        while t < target - 1e-14 * max(abs(target), 1.0):
            step = min(h, target - t)
            y1 = _rk4_step(rhs, y, step)
            ymid = _rk4_step(rhs, y, 0.5 * step)
            y2 = _rk4_step(rhs, ymid, 0.5 * step)
            err = np.max(np.abs(y2 - y1)) / 15.0
            if err > step_tol:
                if step <= h_min:
                    raise IntegrationFailureError(
                        f"step underflow at t={t}: step={step}, error={err}, "
                        f"tolerance={step_tol}"
                    )
                h = 0.5 * step
                continue
            y = y2 + (y2 - y1) / 15.0
            y = 0.5 * (y + y.conj().T)
            t += step
            if err < step_tol / 64.0 and step == h:
                h = 2.0 * h
        out.append(y.copy())
        t = target
    return out


def _finish_trajectory(mats, times, space, positivity_atol):
    states, min_eigs, trace_errs = [], [], []
    for mat in mats:
        min_eigs.append(float(np.linalg.eigvalsh(mat)[0]))
        trace_errs.append(abs(complex(np.trace(mat)) - 1.0))
        states.append(
            DensityMatrix(mat, space, positivity_atol=positivity_atol, trace_atol=1e-9)
        )
    meta = {
        "min_eigenvalue": min(min_eigs),
        "max_trace_error": max(trace_errs),
    }
    return Trajectory(np.asarray(times, dtype=float), states, meta)


def integrate_caldeira_leggett(rho_s0: DensityMatrix, h_s: HermitianOperator | None,
                               x: np.ndarray, p: np.ndarray,
                               params: MasterEqParams, times,
                               step_tol: float = 1e-9) -> Trajectory:
    """Friction + position-decoherence generator.  Not of Lindblad form:
    the minimum eigenvalue along the run is reported in the trajectory
    metadata but never asserted."""
    times = np.asarray(times, dtype=float)
    hbar = params.hbar
    gamma = params.gamma
    d_rate = params.decoherence_rate
    h_mat = None if h_s is None else h_s.matrix

    def rhs(rho):
        drho = np.zeros_like(rho)
        if h_mat is not None:
            drho = drho - (1j / hbar) * (h_mat @ rho - rho @ h_mat)
        if gamma != 0.0:
            anti = p @ rho + rho @ p
            drho = drho - (1j * gamma / hbar) * (x @ anti - anti @ x)
        xr = x @ rho - rho @ x
        return drho - d_rate * (x @ xr - xr @ x)

    mats = _integrate(rhs, rho_s0.matrix, times, step_tol)
    return _finish_trajectory(mats, times, rho_s0.space, positivity_atol=np.inf)


def integrate_recoilless(rho_s0: DensityMatrix, h_s: HermitianOperator | None,
                         x: np.ndarray, params: MasterEqParams, times,
                         step_tol: float = 1e-9) -> Trajectory:
    """Frictionless limit: pure position decoherence, Lindblad form with a
    position jump operator.  Positivity is preserved and asserted."""
    times = np.asarray(times, dtype=float)
    hbar = params.hbar
    d_rate = params.decoherence_rate
    h_mat = None if h_s is None else h_s.matrix

    def rhs(rho):
        drho = np.zeros_like(rho)
        if h_mat is not None:
            drho = drho - (1j / hbar) * (h_mat @ rho - rho @ h_mat)
        xr = x @ rho - rho @ x
        return drho - d_rate * (x @ xr - xr @ x)

    mats = _integrate(rhs, rho_s0.matrix, times, step_tol)
    return _finish_trajectory(mats, times, rho_s0.space, positivity_atol=1e-9)


@dataclass(frozen=True)
class ProjectionComparison:
    times: np.ndarray
    reduction_distance: np.ndarray
    interior_times: np.ndarray
    derivative_distance: np.ndarray


def projection_derivative_compare(trajectory: Trajectory, scheme_original: BornProjection,
                                  scheme_joined: BornProjection) -> ProjectionComparison:
    """Compare the joined-system reductions of two cut-adapted projections
    along a composite trajectory.

    At each grid time the relevant parts under both schemes are reduced
    onto the joined system (original system + absorbed bath mode); the
    returned series are the trace distances of those reductions and of
    their central-finite-difference time derivatives (interior points).
    """
    times = trajectory.times
    if times.size < 3:
        raise ValueError("need at least 3 grid times for central differences")
    dims = trajectory.states[0].space.dims
    keep = scheme_joined.cut.s_particles

    a_list, b_list = [], []
    for state in trajectory.states:
        a_list.append(
            partial_trace_raw(apply_projection(scheme_original, state.matrix), dims, keep)
        )
        b_list.append(
            partial_trace_raw(apply_projection(scheme_joined, state.matrix), dims, keep)
        )

    dist = np.array([0.5 * trace_norm(a - b) for a, b in zip(a_list, b_list)])

    deriv_dist = []
    for k in range(1, times.size - 1):
        dt = times[k + 1] - times[k - 1]
        da = (a_list[k + 1] - a_list[k - 1]) / dt
        db = (b_list[k + 1] - b_list[k - 1]) / dt
        deriv_dist.append(0.5 * trace_norm(da - db))
    return ProjectionComparison(
        times=times,
        reduction_distance=dist,
        interior_times=times[1:-1],
        derivative_distance=np.array(deriv_dist),
    )


def system_projection_schemes(model: QbmModel, beta: float,
                              absorbed_mode: int = 0):
    """Reference projections for the original and the absorbed-mode cut,
    both with thermal bath references."""
    space = model.space
    n_s, n_e = model.n_s, model.n_e
    s_particles = tuple(range(n_s))
    e_particles = tuple(range(n_s, n_s + n_e))
    cut_original = Bipartition(space, s_particles, e_particles)

    thermals = [thermal_mode_state(model, a, beta) for a in range(n_e)]
    full_ref = np.ones((1, 1), dtype=np.complex128)
    for th in thermals:
        full_ref = np.kron(full_ref, th)
    ref_original = DensityMatrix(full_ref, CompositeSpace((model.d_e,) * n_e))

    joined_s = s_particles + (n_s + absorbed_mode,)
    joined_e = tuple(q for q in e_particles if q != n_s + absorbed_mode)
    cut_joined = Bipartition(space, joined_s, joined_e)
    rest_ref = np.ones((1, 1), dtype=np.complex128)
    for a in range(n_e):
        if a != absorbed_mode:
            rest_ref = np.kron(rest_ref, thermals[a])
    ref_joined = DensityMatrix(rest_ref, CompositeSpace((model.d_e,) * (n_e - 1)))

    return (
        BornProjection(cut_original, ref_original),
        BornProjection(cut_joined, ref_joined),
    )


def calibrate_friction(reference_states, times, h_s: HermitianOperator | None,
                       x: np.ndarray, params_template: MasterEqParams,
                       window: int | None = None,
                       bounds=(1e-4, 1.0)) -> float:
    """Fit the friction coefficient so the frictionless propagator tracks a
    reference reduced trajectory over an early window (least-squares in
    trace distance).  A calibration device, not a spectral-density
    derivation."""
    times = np.asarray(times, dtype=float)
    if window is None:
        window = min(len(times), max(5, len(times) // 3))
    ref = [np.asarray(r) for r in reference_states[:window]]
    space = CompositeSpace((ref[0].shape[0],))
    rho0 = DensityMatrix(ref[0], space, positivity_atol=1e-8)

    def cost(gamma):
        params = MasterEqParams(
            m=params_template.m,
            gamma=float(gamma),
            temperature=params_template.temperature,
            hbar=params_template.hbar,
            k_b=params_template.k_b,
        )
        traj = integrate_recoilless(rho0, h_s, x, params, times[:window], step_tol=1e-8)
        return sum(
            (0.5 * trace_norm(st.matrix - r)) ** 2
            for st, r in zip(traj.states, ref)
        )

    res = minimize_scalar(cost, bounds=bounds, method="bounded",
                          options={"xatol": 1e-5})
    return float(res.x)
