import math

import numpy as np
import pytest
from scipy.linalg import expm

from qsplit.dynamics import (
    IntegrationFailureError,
    MasterEqParams,
    QbmModel,
    ResourceLimitError,
    build_hamiltonians,
    calibrate_friction,
    default_model,
    evolve_exact,
    initial_state,
    integrate_caldeira_leggett,
    integrate_recoilless,
    position_momentum_ops,
    projection_derivative_compare,
    system_projection_schemes,
    thermal_mode_state,
    top_level_occupation,
)
from qsplit.hilbert import (
    CompositeSpace,
    DensityMatrix,
    HermitianOperator,
    partial_trace_raw,
    trace_norm,
)
from qsplit.projections import SeparableDecomposition
from qsplit.sampling import random_density

RNG = np.random.Generator(np.random.PCG64(6021))


def _small_model(**overrides):
    kw = dict(
        n_s=2, n_e=2, masses_s=(1.0, 1.5), masses_e=(1.0, 1.0),
        omegas_e=(0.9, 1.2), kappas=(0.2, 0.15), k_pair=0.3, d_s=3, d_e=3,
    )
    kw.update(overrides)
    return QbmModel(**kw)


def test_position_momentum_commutator_truncation_facts():
    for d in (2, 5, 16):
        x, p = position_momentum_ops(d, m=1.3, omega=0.7)
        comm = x.matrix @ p.matrix - p.matrix @ x.matrix
        diag = np.real(np.diagonal(comm / 1j))
        np.testing.assert_allclose(diag[:-1], np.ones(d - 1), atol=1e-12)
        assert diag[-1] == pytest.approx(1.0 - d, abs=1e-10)
        # the trace of any finite-dimensional commutator is exactly zero
        assert abs(np.trace(comm)) < 1e-10
        off = comm / 1j - np.diag(diag)
        assert np.max(np.abs(off)) < 1e-12


def test_default_model_dimensions():
    model = default_model()
    assert model.space.dims == (6, 4, 4, 4)
    assert model.total_dim == 384


def test_resource_ceiling():
    with pytest.raises(ResourceLimitError):
        _small_model(d_s=40, d_e=40)


def test_hamiltonian_groupings_sum_to_same_total():
    parts = build_hamiltonians(_small_model())
    total = parts.total.matrix
    assert set(parts.groupings) == {"original", "released", "absorbed"}
    for name, g in parts.groupings.items():
        s = g["system"] + g["environment"] + g["interaction"]
        assert np.max(np.abs(s - total)) < 1e-12, name
    # single-particle system has no released grouping
    parts1 = build_hamiltonians(default_model())
    assert "released" not in parts1.groupings
    assert "absorbed" in parts1.groupings


def test_thermal_mode_state_matches_gibbs():
    model = _small_model()
    for alpha in range(model.n_e):
        th = thermal_mode_state(model, alpha, beta=1.7)
        x, p = position_momentum_ops(
            model.d_e, model.masses_e[alpha], model.omegas_e[alpha]
        )
        m, w = model.masses_e[alpha], model.omegas_e[alpha]
        h = p.matrix @ p.matrix / (2 * m) + 0.5 * m * w ** 2 * x.matrix @ x.matrix
        ref = expm(-1.7 * h)
        ref /= np.trace(ref)
        np.testing.assert_allclose(th, ref, atol=1e-12)


def test_initial_state_variants():
    model = _small_model()
    rho_s = random_density(CompositeSpace((3, 3)), RNG)
    rho = initial_state(model, beta=2.0, variant="thermal_product", rho_s=rho_s)
    assert rho.space.dims == model.space.dims
    red = partial_trace_raw(rho.matrix, model.space.dims, [0, 1])
    np.testing.assert_allclose(red, rho_s.matrix, atol=1e-12)
    sep = SeparableDecomposition(
        (0.5, 0.5),
        tuple(random_density(CompositeSpace((3,)), RNG) for _ in range(2)),
        tuple(random_density(CompositeSpace((3,)), RNG) for _ in range(2)),
    )
    rho_c = initial_state(
        model, beta=2.0, variant="correlated_system", decomposition=sep
    )
    assert abs(np.trace(rho_c.matrix) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        initial_state(model, beta=2.0, variant="thermal_product")
    with pytest.raises(ValueError):
        initial_state(model, beta=-1.0, variant="thermal_product", rho_s=rho_s)
    with pytest.raises(ValueError):
        initial_state(model, beta=2.0, variant="nope", rho_s=rho_s)


def test_evolve_exact_matches_expm_oracle():
    model = _small_model(n_s=1, n_e=1, masses_s=(1.0,), masses_e=(1.0,),
                         omegas_e=(1.1,), kappas=(0.3,), k_pair=0.0)
    parts = build_hamiltonians(model, absorbed_mode=None)
    rho0 = initial_state(
        model, beta=1.0, variant="thermal_product",
        rho_s=random_density(CompositeSpace((3,)), RNG),
    )
    times = np.linspace(0.0, 3.0, 7)
    traj = evolve_exact(rho0, parts.total, times)
    for t, state in zip(times, traj.states):
        u = expm(-1j * parts.total.matrix * t)
        ref = u @ rho0.matrix @ u.conj().T
        np.testing.assert_allclose(state.matrix, ref, atol=1e-11)


def test_evolve_exact_conserves_purity_and_energy():
    model = _small_model()
    parts = build_hamiltonians(model)
    rho0 = initial_state(
        model, beta=2.0, variant="thermal_product",
        rho_s=random_density(CompositeSpace((3, 3)), RNG),
    )
    times = np.linspace(0.0, 5.0, 11)
    traj = evolve_exact(rho0, parts.total, times)
    p0 = rho0.purity()
    e0 = float(np.real(np.trace(parts.total.matrix @ rho0.matrix)))
    for state in traj.states:
        assert abs(state.purity() - p0) < 1e-10
        e = float(np.real(np.trace(parts.total.matrix @ state.matrix)))
        assert abs(e - e0) < 1e-10
    assert 0.0 <= traj.metadata["top_level_occupation"] <= 1.0


def test_top_level_occupation_flags():
    space = CompositeSpace((3,))
    top = DensityMatrix(np.diag([0.0, 0.0, 1.0]).astype(complex), space)
    assert top_level_occupation(top) == pytest.approx(1.0)
    ground = DensityMatrix(np.diag([1.0, 0.0, 0.0]).astype(complex), space)
    assert top_level_occupation(ground) == pytest.approx(0.0, abs=1e-14)


def test_recoilless_matches_dephasing_closed_form():
    # position-diagonal model with no self-Hamiltonian: coherences decay as
    # exp(-2 m gamma k_B T (x - x')^2 t / hbar^2), exactly
    d = 16
    grid = np.linspace(-1.0, 1.0, d)
    x = np.diag(grid).astype(complex)
    space = CompositeSpace((d,))
    rho0 = DensityMatrix(np.ones((d, d), dtype=complex) / d, space)
    params = MasterEqParams(m=1.0, gamma=0.05, temperature=5.0)
    times = np.linspace(0.0, 1.0, 50)
    traj = integrate_recoilless(rho0, None, x, params, times, step_tol=1e-10)
    rate = params.decoherence_rate
    rel_err = 0.0
    for t, state in zip(times, traj.states):
        decay = np.exp(-rate * (grid[:, None] - grid[None, :]) ** 2 * t)
        exact = rho0.matrix * decay
        rel_err = max(rel_err, float(np.max(np.abs(state.matrix - exact) / np.abs(exact))))
    assert rel_err <= 1e-6


def test_caldeira_leggett_approaches_recoilless_as_friction_vanishes():
    # hold the decoherence rate fixed (gamma * T constant) so the generators
    # differ only by the friction term, which is O(gamma)
    d = 6
    x, p = position_momentum_ops(d, m=1.0, omega=1.0)
    h = HermitianOperator(p.matrix @ p.matrix / 2.0, x.space)
    amp = np.zeros(d, dtype=complex)
    amp[0] = amp[1] = 1.0 / math.sqrt(2.0)
    rho0 = DensityMatrix(np.outer(amp, amp.conj()), x.space)
    times = np.linspace(0.0, 2.0, 6)
    gammas = (1e-2, 1e-3, 1e-4)
    dists = []
    for gamma in gammas:
        params = MasterEqParams(m=1.0, gamma=gamma, temperature=0.05 / gamma)
        ref = integrate_recoilless(rho0, h, x.matrix, params, times)
        cl = integrate_caldeira_leggett(rho0, h, x.matrix, p.matrix, params, times)
        dists.append(
            max(
                0.5 * trace_norm(a.matrix - b.matrix)
                for a, b in zip(cl.states, ref.states)
            )
        )
    assert dists[0] > dists[1] > dists[2]
    # linear scaling in gamma: each decade shrinks the gap about tenfold
    assert dists[1] < 0.2 * dists[0]
    assert dists[2] < 0.2 * dists[1]


def test_integrator_metadata_and_positivity():
    d = 6
    x, p = position_momentum_ops(d, m=1.0, omega=1.0)
    h = HermitianOperator(p.matrix @ p.matrix / 2.0, x.space)
    rho0 = random_density(x.space, RNG)
    params = MasterEqParams(m=1.0, gamma=0.05, temperature=0.5)
    times = np.linspace(0.0, 6.0, 13)
    rec = integrate_recoilless(rho0, h, x.matrix, params, times)
    assert rec.metadata["min_eigenvalue"] >= -1e-9
    assert rec.metadata["max_trace_error"] <= 1e-9
    cl = integrate_caldeira_leggett(rho0, h, x.matrix, p.matrix, params, times)
    assert cl.metadata["max_trace_error"] <= 1e-9
    assert "min_eigenvalue" in cl.metadata
    for state in cl.states + rec.states:
        assert np.max(np.abs(state.matrix - state.matrix.conj().T)) <= 1e-10


def test_integration_failure_on_impossible_tolerance():
    d = 4
    x, p = position_momentum_ops(d, m=1.0, omega=1.0)
    h = HermitianOperator(p.matrix @ p.matrix / 2.0, x.space)
    rho0 = random_density(x.space, RNG)
    params = MasterEqParams(m=1.0, gamma=0.1, temperature=1.0)
    with pytest.raises(IntegrationFailureError):
        integrate_recoilless(rho0, h, x.matrix, params, [0.0, 1.0], step_tol=0.0)


def test_calibrate_friction_recovers_known_coefficient():
    d = 6
    x, p = position_momentum_ops(d, m=1.0, omega=1.0)
    h = HermitianOperator(p.matrix @ p.matrix / 2.0, x.space)
    amp = np.zeros(d, dtype=complex)
    amp[0] = amp[1] = 1.0 / math.sqrt(2.0)
    rho0 = DensityMatrix(np.outer(amp, amp.conj()), x.space)
    times = np.linspace(0.0, 3.0, 10)
    true_gamma = 0.04
    params = MasterEqParams(m=1.0, gamma=true_gamma, temperature=0.8)
    ref = integrate_recoilless(rho0, h, x.matrix, params, times)
    fitted = calibrate_friction(
        [s.matrix for s in ref.states], times, h, x.matrix,
        MasterEqParams(m=1.0, gamma=0.5, temperature=0.8),
    )
    assert fitted == pytest.approx(true_gamma, abs=1e-3)


def test_projection_derivative_compare_uncoupled_control():
    model = _small_model(n_s=1, n_e=2, masses_s=(1.0,), kappas=(0.0, 0.0),
                         k_pair=0.0, d_s=3, d_e=3)
    parts = build_hamiltonians(model)
    rho0 = initial_state(
        model, beta=2.0, variant="thermal_product",
        rho_s=random_density(CompositeSpace((3,)), RNG),
    )
    times = np.linspace(0.0, 2.0, 5)
    traj = evolve_exact(rho0, parts.total, times)
    orig, joined = system_projection_schemes(model, beta=2.0)
    comp = projection_derivative_compare(traj, orig, joined)
    assert np.max(comp.reduction_distance) < 1e-10
    with pytest.raises(ValueError):
        projection_derivative_compare(
            evolve_exact(rho0, parts.total, [0.0, 1.0]), orig, joined
        )
