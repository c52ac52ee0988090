import numpy as np
import pytest

from spintorus.model import ModelSpec, omega
from spintorus.tq import (
    POLE,
    TQAnsatz,
    TQEvaluator,
    Term,
    TermSum,
    a_function,
    admissible_sequences,
    check_tq_identities,
    count_admissible_brute_force,
    d_function,
    is_admissible,
    lambda_tq,
    ni_counts,
    q_function,
    sinh_adjusted_color,
    x_function,
    z_function,
)


def test_ni_counts():
    assert ni_counts(3, 1) == [1, 1, 1, 1]
    assert ni_counts(3, 4) == [4, 4, 4, 4]
    assert ni_counts(4, 2) == [3, 3, 4, 4, 3, 3]
    # odd N at n = 4: (3N+1)/2 on the outer colors, 2N+1 on the middle pair
    assert ni_counts(4, 1) == [2, 2, 3, 3, 2, 2]
    assert ni_counts(4, 3) == [5, 5, 7, 7, 5, 5]
    assert ni_counts(2, 2) == [1, 1]
    with pytest.raises(ValueError):
        ni_counts(1, 2)


def test_sinh_adjustment_color():
    assert sinh_adjusted_color(4, 1) == 2
    assert sinh_adjusted_color(4, 2) is None
    assert sinh_adjusted_color(3, 1) is None


@pytest.mark.parametrize("n,m,count", [(3, 1, 5), (3, 2, 5), (4, 1, 7), (4, 2, 13), (4, 3, 7)])
def test_sequence_counts(n, m, count):
    seqs = admissible_sequences(n, m)
    assert len(seqs) == count == count_admissible_brute_force(n, m)
    assert len({s.indices for s in seqs}) == count
    assert all(is_admissible(s.indices) for s in seqs)


def test_admissibility_rule():
    assert is_admissible((1, 4, 7))
    assert is_admissible((1, 3, 5))
    assert not is_admissible((1, 4, 5))
    assert not is_admissible((2, 4))
    assert not is_admissible((2, 2))
    assert not is_admissible((3, 2))


def test_term_shift_and_cancel():
    t = Term(2.0, 0.5, (0.1, 0.3), (0.3,))
    u, s = 0.7 + 0.2j, 0.25
    assert np.isclose(t.shifted(s).evaluate(u), t.evaluate(u - s))
    c = t.cancelled()
    assert c.num == (0.1,) and c.den == ()
    assert np.isclose(c.evaluate(u), t.evaluate(u))
    assert Term(1.0, 0.0, (), (0.2,)).evaluate(0.2) == POLE


def test_log_space_evaluation():
    t = TermSum([Term(1.5, 1.0, (0.1, 0.2), (0.3,)), Term(-0.5, -1.0, (0.4,))])
    u = 0.4 + 0.3j
    assert np.isclose(t.scaled_evaluate(u, 0.0), t.evaluate(u))
    big = 40.0 + 0.2j
    lead_rate, lead_coef = t.terms[0].leading(1)
    assert lead_rate == 2.0
    assert np.isclose(t.scaled_evaluate(big, 2.0), t.asymptotic_coefficient(1, 2.0), rtol=1e-12)


def test_residue_factor():
    t = TermSum([Term(1.0, 0.0, (0.5,), (0.2, -0.1))])
    lam, h = 0.2, 1e-7
    numeric = np.sinh(h) * t.evaluate(lam + h)
    assert np.isclose(t.residue_factor(lam), numeric, rtol=1e-6)


@pytest.fixture
def su3_ansatz():
    spec = ModelSpec(3, 2, 0.4 + 0.1j, [0.15, -0.3 + 0.05j])
    return TQAnsatz.random(spec, np.random.default_rng(11))


def test_building_blocks_su3(su3_ansatz):
    ans = su3_ansatz
    u, eta = 0.31 + 0.22j, ans.eta
    q = lambda i, x: q_function(ans, i, x)  # noqa: E731
    w = omega(3)
    phi = ans.phis[0]
    z1 = np.exp(phi) * np.exp(4 * u / 3) * a_function(ans, u) * q(1, u - eta) / q(2, u)
    z2 = np.exp(-phi) * w * np.exp(-2 * (u + eta) / 3) * d_function(ans, u) * q(2, u + eta) * q(3, u - eta) / (q(1, u) * q(4, u))
    z3 = w**2 * np.exp(-2 * (u + 2 * eta) / 3) * d_function(ans, u) * q(4, u + eta) / q(3, u)
    f1 = ans.f_plus_1 * np.exp(u) + ans.f_minus[0] * np.exp(-u)
    x1 = np.exp(u / 3) * a_function(ans, u) * d_function(ans, u) * q(3, u - eta) * f1 / (q(1, u) * q(2, u))
    assert np.isclose(z_function(ans, 1, u), z1)
    assert np.isclose(z_function(ans, 2, u), z2)
    assert np.isclose(z_function(ans, 3, u), z3)
    assert np.isclose(x_function(ans, 1, u), x1)
    assert np.isclose(lambda_tq(ans, 1, u), z1 + z2 + z3 + x1 + x_function(ans, 2, u))


def test_outside_colors_are_one(su3_ansatz):
    assert q_function(su3_ansatz, 0, 0.3) == 1
    assert q_function(su3_ansatz, 5, 0.3) == 1


def test_ansatz_json_round_trip(su3_ansatz):
    again = TQAnsatz.from_json(su3_ansatz.to_json())
    assert again == su3_ansatz
    assert set(su3_ansatz.to_dict()["roots"]) == {"1", "2", "3", "4"}


def test_ansatz_validates_counts():
    spec = ModelSpec(3, 1, 0.4, [0.1])
    with pytest.raises(ValueError, match="root counts"):
        TQAnsatz.for_spec(spec, [(0.1,), (0.2,), (0.3,), ()], 0, [0, 0], [0])


@pytest.mark.parametrize("n,N", [(3, 1), (3, 2), (4, 1), (4, 2), (2, 2)])
def test_structural_identities(n, N):
    spec = ModelSpec(n, N, 0.37 + 0.12j, list(np.linspace(-0.25, 0.3, N)))
    ans = TQAnsatz.random(spec, np.random.default_rng(n * 10 + N))
    report = check_tq_identities(ans)
    assert report.max_relative() < 1e-7, report.to_dict()


def test_evaluator_caches(su3_ansatz):
    ev = TQEvaluator(su3_ansatz)
    assert ev.terms(2) is ev.terms(2)
