import numpy as np
import pytest
from scipy.linalg import expm

from qsplit.hilbert import (
    CompositeSpace,
    DensityMatrix,
    HermitianOperator,
    StateVector,
    gibbs_state,
    partial_trace,
    partial_trace_raw,
    reorder_matrix,
    reorder_vector,
    schmidt_decompose,
    tensor,
    trace_distance,
    trace_norm,
)
from qsplit.sampling import haar_state, random_density
from qsplit.structures import Bipartition

RNG = np.random.Generator(np.random.PCG64(1234))


def test_space_validation():
    assert CompositeSpace((2, 3, 2)).total_dim == 12
    assert CompositeSpace((4,)).n_particles == 1
    with pytest.raises(ValueError):
        CompositeSpace(())
    with pytest.raises(ValueError):
        CompositeSpace((2, 1))


def test_state_vector_validation():
    space = CompositeSpace((2, 2))
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 1.0, 0.0, 0.0]), space)
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 0.0]), space)
    psi = StateVector(np.array([1.0, 0.0, 0.0, 0.0]), space)
    rho = psi.density_matrix()
    assert rho.purity() == pytest.approx(1.0, abs=1e-14)


def test_density_matrix_validation():
    space = CompositeSpace((2,))
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.1j], [0.1j, 0.5]]), space)  # not Hermitian
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.6, 0.0], [0.0, 0.6]]), space)  # trace 1.2
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[1.2, 0.0], [0.0, -0.2]]), space)  # negative
    # loosened knobs accept what the strict constructor rejects
    DensityMatrix(np.array([[1.2, 0.0], [0.0, -0.2]]), space, positivity_atol=np.inf)
    DensityMatrix(np.diag([0.6, 0.6]), space, trace_atol=0.5)


def test_tensor_layout_matches_kron_convention():
    # particle 0 is the slowest index: |i>|j> sits at i*d1 + j
    a = StateVector(np.array([0.0, 1.0]), CompositeSpace((2,)))
    b = StateVector(np.array([1.0, 0.0, 0.0]), CompositeSpace((3,)))
    ab = tensor(a, b)
    assert ab.space.dims == (2, 3)
    expected = np.zeros(6)
    expected[1 * 3 + 0] = 1.0
    np.testing.assert_allclose(ab.amplitudes, expected)
    with pytest.raises(TypeError):
        tensor(a, b.density_matrix())


def test_partial_trace_against_elementwise_oracle():
    space = CompositeSpace((2, 3, 2))
    rho = random_density(space, RNG)
    # keep particles (2, 0) in that order; brute-force sum over particle 1
    dims = space.dims
    out = np.zeros((4, 4), dtype=np.complex128)
    for k in range(dims[2]):
        for i in range(dims[0]):
            for kp in range(dims[2]):
                for ip in range(dims[0]):
                    acc = 0.0
                    for j in range(dims[1]):
                        r = (i * dims[1] + j) * dims[2] + k
                        c = (ip * dims[1] + j) * dims[2] + kp
                        acc += rho.matrix[r, c]
                    out[k * dims[0] + i, kp * dims[0] + ip] = acc
    red = partial_trace(rho, [2, 0])
    assert red.space.dims == (2, 2)
    np.testing.assert_allclose(red.matrix, out, atol=1e-13)


def test_partial_trace_sequential_consistency():
    space = CompositeSpace((2, 2, 3))
    rho = random_density(space, RNG)
    once = partial_trace(rho, [0])
    twice = partial_trace(partial_trace(rho, [0, 2]), [0])
    np.testing.assert_allclose(once.matrix, twice.matrix, atol=1e-13)


def test_partial_trace_input_validation():
    rho = random_density(CompositeSpace((2, 2)), RNG)
    with pytest.raises(ValueError):
        partial_trace(rho, [])
    with pytest.raises(ValueError):
        partial_trace(rho, [0, 1])
    with pytest.raises(ValueError):
        partial_trace(rho, [2])


def test_reorder_roundtrip():
    dims = (2, 3, 2)
    vec = RNG.standard_normal(12) + 1j * RNG.standard_normal(12)
    perm = [2, 0, 1]
    back = [1, 2, 0]
    np.testing.assert_allclose(
        reorder_vector(reorder_vector(vec, dims, perm), (2, 2, 3), back), vec
    )
    mat = RNG.standard_normal((12, 12))
    np.testing.assert_allclose(
        reorder_matrix(reorder_matrix(mat, dims, perm), (2, 2, 3), back), mat
    )


def test_gibbs_state_against_expm_oracle():
    space = CompositeSpace((2, 3))
    h_raw = RNG.standard_normal((6, 6)) + 1j * RNG.standard_normal((6, 6))
    h = HermitianOperator(0.5 * (h_raw + h_raw.conj().T), space)
    for beta in (0.3, 2.0, 17.0):
        rho = gibbs_state(h, beta)
        ref = expm(-beta * h.matrix)
        ref /= np.trace(ref)
        np.testing.assert_allclose(rho.matrix, ref, atol=1e-12)
    uniform = gibbs_state(h, 0.0)
    np.testing.assert_allclose(uniform.matrix, np.eye(6) / 6, atol=1e-13)
    with pytest.raises(ValueError):
        gibbs_state(h, -1.0)


def test_gibbs_state_large_beta_stable():
    space = CompositeSpace((2,))
    h = HermitianOperator(np.diag([0.0, 1.0]), space)
    rho = gibbs_state(h, 5000.0)
    np.testing.assert_allclose(rho.matrix, np.diag([1.0, 0.0]), atol=1e-15)


def test_schmidt_decompose_reconstruction_and_spectrum():
    space = CompositeSpace((2, 2, 3))
    psi = haar_state(space, RNG)
    cut = Bipartition(space, (2, 0), (1,))
    c, left, right = schmidt_decompose(psi, cut)
    assert np.all(np.diff(c) <= 1e-14)
    assert np.sum(c ** 2) == pytest.approx(1.0, abs=1e-12)
    rebuilt = sum(
        c[k] * np.kron(left[:, k], right[:, k]) for k in range(c.size)
    )
    layout = reorder_vector(psi.amplitudes, space.dims, [2, 0, 1])
    np.testing.assert_allclose(rebuilt, layout, atol=1e-12)
    # Schmidt coefficients squared are the reduced-state eigenvalues
    red = partial_trace_raw(psi.density_matrix().matrix, space.dims, [2, 0])
    w = np.sort(np.linalg.eigvalsh(red))[::-1]
    np.testing.assert_allclose(np.sort(c ** 2)[::-1], w[: c.size], atol=1e-12)


def test_trace_norm_and_distance():
    a = random_density(CompositeSpace((2, 2)), RNG)
    b = random_density(CompositeSpace((2, 2)), RNG)
    diff = a.matrix - b.matrix
    sv = np.linalg.svd(diff, compute_uv=False)
    assert trace_norm(diff) == pytest.approx(np.sum(sv), abs=1e-12)
    d = trace_distance(a, b)
    assert 0.0 <= d <= 1.0
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-13)
    assert trace_distance(b, a) == pytest.approx(d, abs=1e-12)
    # non-Hermitian branch agrees with the singular value definition
    z = RNG.standard_normal((5, 5)) + 1j * RNG.standard_normal((5, 5))
    assert trace_norm(z) == pytest.approx(
        np.sum(np.linalg.svd(z, compute_uv=False)), rel=1e-12
    )
