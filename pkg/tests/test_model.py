import numpy as np
import pytest

from spintorus.linalg import TensorOperator, max_abs
from spintorus.model import (
    InvalidModelError,
    ModelSpec,
    Twist,
    build_g,
    build_h,
    build_hamiltonian_finite_difference,
    build_hamiltonian_from_transfer,
    build_hamiltonian_local,
    build_transfer,
    check_crossing_unitarity,
    check_gauge_invariance,
    check_hg_relation,
    check_periodicity,
    check_qybe,
    check_unitarity,
    check_yang_baxter_algebra,
    homogeneous,
    omega,
    r_matrix,
    r_matrix_derivative,
    swap,
    transfer_matrix,
    transfer_via_partial_trace,
)

from conftest import random_points


def test_su2_r_matrix_entries():
    eta, u = 0.3 + 0.1j, 0.4 - 0.2j
    R = r_matrix(2, eta, u)
    # basis |11>, |12>, |21>, |22>; for n = 2 the exchange weights carry no u dependence
    ref = np.array(
        [
            [np.sinh(u + eta), 0, 0, 0],
            [0, np.sinh(u), np.sinh(eta), 0],
            [0, np.sinh(eta), np.sinh(u), 0],
            [0, 0, 0, np.sinh(u + eta)],
        ]
    )
    assert np.allclose(R, ref, atol=1e-14)


def test_su3_exchange_weights():
    eta, u = 0.5, 0.3
    R = r_matrix(3, eta, u)
    idx = lambda k, l: 3 * k + l  # noqa: E731
    s = np.sinh(eta)
    # k<l: e^{(n - 2(l-k)) u / n}; k>l: e^{-(n - 2(k-l)) u / n}
    assert np.isclose(R[idx(0, 1), idx(1, 0)], s * np.exp(u / 3))
    assert np.isclose(R[idx(0, 2), idx(2, 0)], s * np.exp(-u / 3))
    assert np.isclose(R[idx(1, 0), idx(0, 1)], s * np.exp(-u / 3))
    assert np.isclose(R[idx(2, 0), idx(0, 2)], s * np.exp(u / 3))
    assert np.isclose(R[idx(0, 0), idx(0, 0)], np.sinh(u + eta))
    assert np.isclose(R[idx(0, 1), idx(0, 1)], np.sinh(u))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_regularity(n):
    eta = 0.45 + 0.2j
    assert np.allclose(r_matrix(n, eta, 0.0), np.sinh(eta) * swap(n).matrix, atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_derivative_matches_finite_difference(n):
    eta, u, h = 0.45, 0.2 + 0.1j, 1e-6
    fd = (r_matrix(n, eta, u + h) - r_matrix(n, eta, u - h)) / (2 * h)
    assert np.allclose(r_matrix_derivative(n, eta, u), fd, atol=1e-8)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_r_matrix_properties(n, rng):
    spec = ModelSpec(n, 1, 0.37 + 0.21j, [0.0])
    pts = random_points(rng, 5)
    assert check_qybe(spec, pts[0], pts[1], pts[2]) < 1e-11
    for u in pts:
        assert check_unitarity(spec, u) < 1e-11
        assert check_crossing_unitarity(spec, u) < 1e-11
        assert check_periodicity(spec, u) < 1e-11
        assert check_gauge_invariance(spec, u) < 1e-11
    assert check_hg_relation(n) < 1e-14


def test_g_and_h():
    n = 3
    g = build_g(n).matrix
    assert np.allclose(g, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    assert np.allclose(np.linalg.matrix_power(g, 3), np.eye(3))
    assert np.allclose(np.diag(build_h(n).matrix), [omega(n) ** k for k in range(n)])


def test_gauge_invariance_of_diagonal_times_shift(rng):
    # any diag(d) g^p is a symmetry of R; a generic matrix is not
    for power in (0, 1, 2):
        spec = ModelSpec(3, 1, 0.4, [0.0], Twist((1.0, 2.0, 0.5j), power))
        assert check_gauge_invariance(spec, 0.3 + 0.2j) < 1e-12
    spec = ModelSpec(3, 1, 0.4, [0.0])
    generic = TensorOperator((3,), rng.standard_normal((3, 3)))
    assert check_gauge_invariance(spec, 0.3 + 0.2j, generic) > 1e-6


def test_guards_name_the_problem():
    with pytest.raises(InvalidModelError, match="eta"):
        ModelSpec(3, 2, 0.0, [0.1, 0.2])
    with pytest.raises(InvalidModelError, match=r"theta\[0\] and theta\[2\]"):
        ModelSpec(3, 3, 0.5, [0.1, 0.2, 0.1])
    with pytest.raises(InvalidModelError):
        ModelSpec(3, 2, 0.5, [0.1])
    with pytest.raises(InvalidModelError):
        ModelSpec(1, 2, 0.5, [0.1, 0.2])


def test_json_round_trip():
    spec = ModelSpec(4, 2, 0.3 - 0.1j, [0.1 + 0.2j, -0.3], Twist((1, 1j, -1, 2), 1))
    again = ModelSpec.from_json(spec.to_json())
    assert again == spec
    data = spec.to_dict()
    assert set(data) == {"n", "N", "eta", "thetas", "twist"}


def test_transfer_routes_agree_and_commute(rng):
    spec = ModelSpec(3, 2, 0.6, [0.13, -0.27])
    u, v = random_points(rng, 2)
    assert max_abs(build_transfer(spec, u) - transfer_via_partial_trace(spec, u)) < 1e-12
    tu, tv = transfer_matrix(spec, u), transfer_matrix(spec, v)
    assert max_abs(tu @ tv - tv @ tu) < 1e-11
    assert check_yang_baxter_algebra(spec, u, v) < 1e-11


@pytest.mark.parametrize("n,N", [(2, 3), (3, 2), (3, 1), (4, 2)])
def test_hamiltonian_routes(n, N):
    spec = ModelSpec(n, N, 0.55 + 0.1j, list(np.linspace(0.1, 0.5, N)))
    local = build_hamiltonian_local(spec)
    exact = build_hamiltonian_from_transfer(spec)
    fd = build_hamiltonian_finite_difference(spec)
    assert max_abs(local - exact) < 1e-10
    assert max_abs(fd - exact) < 1e-6


def test_hamiltonian_commutes_with_transfer():
    spec = homogeneous(ModelSpec(3, 3, 0.6, [0.1, 0.2, 0.3]))
    H = build_hamiltonian_local(spec).matrix
    t = transfer_matrix(spec, 0.31 + 0.2j)
    assert np.max(np.abs(H @ t - t @ H)) < 1e-10
