import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iqccert.certify import (
    Certificate, LmiProblem, analytic_bound_qu_li, assemble_lmi, build_smoothness_iqc, build_supply_rate,
    centralized_feasibility_oracle, problem_for, verify_certificate, w_digest,
)
from iqccert.errors import AssemblyError, DomainError, ValidationError
from iqccert.model import (
    centralized_gd_realization, change_state_basis, dgt_realization, metropolis_w, permute_agents,
    two_node_w, xi2_sign_flip,
)
from iqccert.sdpfeas import solve_feasibility


def _cert(p, lam, eta=1.0, beta=1.0, n=1):
    return Certificate(np.atleast_2d(np.asarray(p, dtype=float)), (float(lam),), eta, beta, n, "x")


def test_supply_rate_centralized():
    s0 = build_supply_rate(centralized_gd_realization(0.7, 3.0)).s0
    np.testing.assert_array_equal(s0, [[0.0, -0.5], [-0.5, 0.0]])


def test_supply_rate_two_node_entries():
    r, _ = dgt_realization(two_node_w(0.5), 0.1, 1.0)
    s0 = build_supply_rate(r).s0
    assert s0.shape == (6, 6)
    assert s0[0, 0] == pytest.approx(-0.25, abs=1e-15)
    assert s0[0, 4] == pytest.approx(-0.125, abs=1e-15)
    np.testing.assert_array_equal(s0, s0.T)


def test_supply_rate_xi2_rows_vanish(rng, random_mixing):
    for n in (2, 3, 4):
        r, _ = dgt_realization(random_mixing(rng, n), 0.3, 2.0)
        s0 = build_supply_rate(r).s0
        np.testing.assert_array_equal(s0[n:2 * n], 0.0)
        np.testing.assert_array_equal(s0[:, n:2 * n], 0.0)


def test_supply_rate_quadratic_form_oracle(rng):
    # sigma0(x, u) = -(1/n)[beta |x - mean(x)|^2 + mean(x) * sum(u) / n]  per the block formula
    n, beta = 3, 1.7
    r, _ = dgt_realization(metropolis_w(np.ones((3, 3)) - np.eye(3)), 0.2, beta)
    s0 = build_supply_rate(r).s0
    for _ in range(20):
        x, u = rng.standard_normal(n), rng.standard_normal(n)
        z = np.r_[x, rng.standard_normal(n), u]
        expected = -(beta * np.sum((x - x.mean()) ** 2) + x.mean() * u.sum()) / n
        assert z @ s0 @ z == pytest.approx(expected, abs=1e-12)


def test_smoothness_iqc():
    np.testing.assert_array_equal(build_smoothness_iqc(1, 1.0).m, [[0, 1], [1, -2]])
    m = build_smoothness_iqc(2, 2.0).m
    np.testing.assert_array_equal(m[:2, 2:], 2 * np.eye(2))
    np.testing.assert_array_equal(m[2:, 2:], -2 * np.eye(2))
    np.testing.assert_array_equal(m[:2, :2], 0.0)
    beta, v = 3.0, 0.7
    z = np.array([v, beta * v])
    assert z @ build_smoothness_iqc(1, beta).m @ z == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        build_smoothness_iqc(1, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.95), st.floats(0.1, 5.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_centralized_lhs_closed_form(eta, beta, p, lam):
    lmi, _ = problem_for("centralized", None, eta, beta)
    lhs = lmi.evaluate([[p]], [lam])
    expected = np.array([[0.0, -eta * p + lam * beta + 0.5], [0.0, eta ** 2 * p - 2 * lam]])
    expected[1, 0] = expected[0, 1]
    np.testing.assert_allclose(lhs, expected, atol=1e-12 * (1 + p + lam))


def test_reduced_order_and_base():
    lmi, _ = problem_for("dgt", two_node_w(0.5), 0.3, 1.0)
    assert lmi.reduced_order == 5 and lmi.state_dim == 4 and lmi.input_dim == 2
    np.testing.assert_allclose(lmi.r.T @ lmi.r, np.eye(5), atol=1e-12)
    _, eq = dgt_realization(two_node_w(0.5), 0.3, 1.0)
    np.testing.assert_allclose(eq.stacked @ lmi.r, 0.0, atol=1e-14)
    r, _ = dgt_realization(two_node_w(0.5), 0.3, 1.0)
    s0 = build_supply_rate(r).s0
    np.testing.assert_allclose(lmi.evaluate(np.zeros((4, 4)), [0.0]), -lmi.r.T @ s0 @ lmi.r, atol=1e-15)


def test_centralized_has_identity_reduction():
    lmi, _ = problem_for("centralized", None, 0.5, 1.0)
    np.testing.assert_array_equal(lmi.r, np.eye(2))


def test_assemble_lmi_names_offending_block():
    r, eq = dgt_realization(two_node_w(0.5), 0.3, 1.0)
    s0 = build_supply_rate(r)
    with pytest.raises(AssemblyError, match="IQC 0"):
        assemble_lmi(r, eq, s0, [build_smoothness_iqc(3, 1.0)])
    with pytest.raises(AssemblyError, match="S0"):
        assemble_lmi(r, eq, np.eye(5), [build_smoothness_iqc(2, 1.0)])
    with pytest.raises(AssemblyError, match="F has"):
        from iqccert.model import EqualityConstraint
        assemble_lmi(r, EqualityConstraint(np.ones((1, 3)), np.zeros((1, 2))), s0, [])


def test_verify_examples():
    lmi, _ = problem_for("centralized", None, 1.0, 1.0)
    rep = verify_certificate(lmi, _cert(1.0, 0.5))
    assert rep.passed and rep.max_eig_lhs == 0.0
    lmi3, _ = problem_for("centralized", None, 3.0, 1.0)
    for p in (0.0, 0.1, 1.0, 10.0):
        for lam in (0.0, 0.5, 5.0):
            assert not verify_certificate(lmi3, _cert(p, lam, eta=3.0)).passed
    neg = verify_certificate(lmi, _cert(-1.0, 0.0))
    assert not neg.passed and "positive semidefinite" in neg.reason


def test_verify_negative_multiplier():
    lmi, _ = problem_for("centralized", None, 1.0, 1.0)
    rep = verify_certificate(lmi, _cert(1.0, -0.5))
    assert not rep.passed and "multiplier" in rep.reason


def test_verify_shape_mismatch():
    lmi, _ = problem_for("dgt", two_node_w(0.5), 1.0, 1.0)
    with pytest.raises(AssemblyError):
        verify_certificate(lmi, _cert(1.0, 0.5))


def test_analytic_bound():
    assert analytic_bound_qu_li(0.5, 1.0) == pytest.approx(1.5625e-3, rel=1e-15)
    assert analytic_bound_qu_li(0.0, 1.0) == pytest.approx(6.25e-3, rel=1e-15)
    assert analytic_bound_qu_li(1 - 1e-9, 1.0) < 1e-19
    with pytest.raises(DomainError):
        analytic_bound_qu_li(1.0, 1.0)


@pytest.mark.parametrize("eta, expected", [(1.9, True), (2.0, False), (0.0, False), (1e-9, True), (2.5, False)])
def test_centralized_oracle(eta, expected):
    assert centralized_feasibility_oracle(eta, 1.0) is expected


def test_w_digest_sensitivity():
    w = two_node_w(0.5).w
    assert w_digest(w) == w_digest(w.copy())
    w2 = w.copy()
    w2[0, 0] = np.nextafter(w2[0, 0], 1.0)
    assert w_digest(w) != w_digest(w2)
    assert w_digest(np.ones((1, 4))) != w_digest(np.ones((4, 1)))


def test_certificate_json_round_trip(cert_half):
    back = Certificate.from_json(cert_half.to_json())
    np.testing.assert_array_equal(back.p, cert_half.p)
    assert back.lambdas == cert_half.lambdas
    assert back.w_digest == cert_half.w_digest
    assert back.matches(w_digest(two_node_w(0.5).w), 1.0, 1.0)
    assert not back.matches(w_digest(two_node_w(0.5).w), 1.01, 1.0)
    data = json.loads(cert_half.to_json())
    assert set(data) >= {"n", "eta", "beta", "w_digest", "P", "lambda", "margins"}
    assert set(data["margins"]) == {"min_eig_P", "max_eig_lhs", "tol"}


def test_certificate_flat_p_accepted(cert_half):
    data = cert_half.to_dict()
    data["P"] = np.asarray(data["P"]).ravel().tolist()
    np.testing.assert_array_equal(Certificate.from_dict(data).p, cert_half.p)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("P"),
    lambda d: d.update(P=[1.0, 2.0, 3.0]),
    lambda d: d.update(P=[[1.0, 2.0]]),
    lambda d: d.update(eta="fast"),
    lambda d: d.pop("lambda"),
])
def test_certificate_malformed(cert_half, mutate):
    data = cert_half.to_dict()
    mutate(data)
    with pytest.raises(ValidationError):
        Certificate.from_dict(data)


def test_certificate_bad_json():
    with pytest.raises(ValidationError):
        Certificate.from_json('{"P": [[1')
    with pytest.raises(ValidationError):
        Certificate.from_json("[1, 2]")


def _verdict(lmi):
    res = solve_feasibility(lmi)
    assert res.status in ("feasible", "infeasible")
    return res.status


def _transformed_problem(w, eta, t):
    r, eq = dgt_realization(w, eta, 1.0)
    r2, eq2 = change_state_basis(r, eq, t(r) if callable(t) else t)
    return assemble_lmi(r2, eq2, build_supply_rate(r2), [build_smoothness_iqc(r2.n, 1.0)])


@pytest.mark.parametrize("sigma, eta", [(0.5, 0.5), (0.5, 1.0), (0.5, 1.3), (-0.5, 0.05), (-0.5, 0.5)])
def test_sign_flip_invariance(sigma, eta):
    w = two_node_w(sigma)
    base, _ = problem_for("dgt", w, eta, 1.0)
    flipped = _transformed_problem(w, eta, xi2_sign_flip)
    assert _verdict(base) == _verdict(flipped)


def test_sign_flip_maps_certificates(cert_half):
    # P' = T P T maps a certificate of one realization onto the other
    w = two_node_w(0.5)
    flipped = _transformed_problem(w, 1.0, xi2_sign_flip)
    r, _ = dgt_realization(w, 1.0, 1.0)
    t = xi2_sign_flip(r)
    moved = Certificate(t @ cert_half.p @ t, cert_half.lambdas, 1.0, 1.0, 2, cert_half.w_digest)
    assert verify_certificate(flipped, moved).passed


@pytest.mark.parametrize("eta", [0.3, 0.9, 2.0])
def test_permutation_invariance(eta):
    # 4-node ring; the 3-node ring is covered by the acceptance suite
    w = metropolis_w([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]])
    base, _ = problem_for("dgt", w, eta, 1.0)
    perm, _ = problem_for("dgt", permute_agents(w, [2, 0, 3, 1]), eta, 1.0)
    assert _verdict(base) == _verdict(perm)


@pytest.mark.parametrize("sigma, eta", [(0.3, 0.3), (0.3, 1.2), (0.7, 0.8), (0.7, 2.0)])
def test_kronecker_lift_verdict(sigma, eta):
    w = two_node_w(sigma)
    one, _ = problem_for("dgt", w, eta, 1.0)
    two, _ = problem_for("dgt", w, eta, 1.0, dim=2)
    assert two.state_dim == 8 and two.reduced_order == 10
    assert _verdict(one) == _verdict(two)


def test_kronecker_lift_certificate(cert_half):
    lifted, _ = problem_for("dgt", two_node_w(0.5), 1.0, 1.0, dim=2)
    cert = Certificate(np.kron(cert_half.p, np.eye(2)), cert_half.lambdas, 1.0, 1.0, 2, cert_half.w_digest)
    assert verify_certificate(lifted, cert).passed


def test_lmi_problem_shape_guards():
    lmi, _ = problem_for("centralized", None, 1.0, 1.0)
    assert isinstance(lmi, LmiProblem)
    with pytest.raises(AssemblyError):
        lmi.p_map(np.eye(2))
    with pytest.raises(AssemblyError):
        lmi.evaluate([[1.0]], [0.1, 0.2])


def test_problem_for_unknown_model():
    with pytest.raises(DomainError):
        problem_for("extra", two_node_w(0.5), 1.0, 1.0)
