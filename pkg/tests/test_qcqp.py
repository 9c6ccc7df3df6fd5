import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdisac import qcqp
from fdisac.errors import InvalidInputError

from oracles import crandn, qcqp_dual_oracle, random_psd, random_qcqp


def unit_objective(n=3):
    e1 = np.zeros(n, dtype=complex)
    e1[0] = 1.0
    return qcqp.QuadForm(np.eye(n), e1, 0.0), e1


class TestExamples:
    def test_unconstrained(self):
        obj, e1 = unit_objective()
        sol = qcqp.solve(qcqp.QcqpProblem(obj))
        assert sol.optimal
        np.testing.assert_allclose(sol.w_star, e1, atol=1e-12)
        assert sol.objective_value == pytest.approx(-1.0)

    def test_ball(self):
        obj, e1 = unit_objective()
        ball = qcqp.QuadForm(np.eye(3), np.zeros(3), -0.25)
        sol = qcqp.solve(qcqp.QcqpProblem(obj, [ball]))
        assert sol.optimal
        np.testing.assert_allclose(sol.w_star, 0.5 * e1, atol=1e-9)
        assert sol.objective_value == pytest.approx(-0.75, abs=1e-9)
        assert sol.dual_values[0] == pytest.approx(1.0, rel=1e-6)

    def test_ball_through_interior_point(self):
        # singular objective forces the general back end
        obj = qcqp.QuadForm(np.diag([1.0, 0.0]), np.array([1.0, 0.0]), 0.0)
        cons = [qcqp.QuadForm(np.eye(2), np.zeros(2), -0.25),
                qcqp.QuadForm(np.zeros((2, 2)), np.array([0.0, 0.5]), -0.5)]
        sol = qcqp.solve(qcqp.QcqpProblem(obj, cons))
        assert sol.optimal and sol.method == "interior-point"
        assert sol.objective_value == pytest.approx(-0.75, abs=1e-7)

    def test_infeasible(self):
        obj, _ = unit_objective(2)
        cons = [qcqp.QuadForm(np.eye(2), np.zeros(2), 1.0)]  # ||w||^2 + 1 <= 0
        assert qcqp.solve(qcqp.QcqpProblem(obj, cons)).status == qcqp.INFEASIBLE
        cons = [qcqp.QuadForm(np.eye(2), np.zeros(2), -1.0),
                qcqp.QuadForm(np.eye(2), np.array([-2.0, 0.0]), 3.5)]  # disjoint balls
        assert qcqp.solve(qcqp.QcqpProblem(obj, cons)).status == qcqp.INFEASIBLE

    def test_rejects_indefinite(self):
        obj = qcqp.QuadForm(np.diag([1.0, -1.0]), np.zeros(2), 0.0)
        with pytest.raises(InvalidInputError):
            qcqp.solve(qcqp.QcqpProblem(obj))

    def test_rejects_non_hermitian(self):
        obj = qcqp.QuadForm(np.array([[1.0, 1j], [1j, 1.0]]), np.zeros(2), 0.0)
        with pytest.raises(InvalidInputError):
            qcqp.solve(qcqp.QcqpProblem(obj))

    def test_rejects_unbounded(self):
        obj = qcqp.QuadForm(np.diag([1.0, 0.0]), np.array([0.0, 1.0]), 0.0)
        with pytest.raises(InvalidInputError):
            qcqp.solve(qcqp.QcqpProblem(obj))


@pytest.mark.parametrize("seed", range(12))
def test_against_dual_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 17))
    prob = random_qcqp(rng, n, 1 + seed % 2)
    ref, _ = qcqp_dual_oracle(prob)
    sol = qcqp.solve(prob)
    assert sol.optimal
    assert sol.kkt_residual <= 1e-8
    assert sol.objective_value == pytest.approx(ref, rel=1e-4)
    assert np.all(sol.dual_values >= 0)


@pytest.mark.parametrize("seed", range(4))
def test_against_cvxpy(seed):
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(100 + seed)
    n = 6
    prob = random_qcqp(rng, n, 2)
    w = cp.Variable(n, complex=True)

    def expr(f):
        ev, V = np.linalg.eigh(f.P)
        half = (V * np.sqrt(np.clip(ev, 0.0, None))).conj().T  # P = half^H half
        return cp.sum_squares(half @ w) - 2 * cp.real(f.r.conj() @ w) + f.s

    cvx = cp.Problem(cp.Minimize(expr(prob.objective)), [expr(c) <= 0 for c in prob.constraints])
    cvx.solve()
    sol = qcqp.solve(prob)
    assert sol.objective_value == pytest.approx(cvx.value, rel=1e-5, abs=1e-7)


def test_warm_start_not_worse():
    rng = np.random.default_rng(7)
    prob = random_qcqp(rng, 8, 2)
    w0 = np.zeros(8, dtype=complex)  # strictly feasible by construction
    sol = qcqp.solve(prob, warm_start=w0)
    assert sol.objective_value <= prob.objective(w0) + 1e-12
    again = qcqp.solve(prob, warm_start=w0)
    np.testing.assert_array_equal(sol.w_star, again.w_star)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    n = 5
    prob = random_qcqp(rng, n, 2)
    U, _ = np.linalg.qr(crandn(rng, n, n))

    def rot(f):
        # f(U^H v) expressed in v
        return qcqp.QuadForm(U @ f.P @ U.conj().T, U @ f.r, f.s)

    rotated = qcqp.QcqpProblem(rot(prob.objective), [rot(c) for c in prob.constraints])
    a, b = qcqp.solve(prob), qcqp.solve(rotated)
    assert abs(a.objective_value - b.objective_value) <= 2e-8 * max(1.0, abs(a.objective_value))


def test_single_constraint_solver_reuse():
    rng = np.random.default_rng(3)
    n = 6
    A = random_psd(rng, n) + np.eye(n)
    P = random_psd(rng, n, rank=2)
    solver = qcqp.SingleConstraintSolver(A, P)
    for _ in range(3):
        b, r = crandn(rng, n), 0.1 * crandn(rng, n)
        w, mu, status = solver.solve_raw(b, r, -0.1)
        assert status == qcqp.OPTIMAL
        prob = qcqp.QcqpProblem(qcqp.QuadForm(A, b, 0.0), [qcqp.QuadForm(P, r, -0.1)])
        ref = qcqp.solve(prob)
        np.testing.assert_allclose(w, ref.w_star, rtol=1e-7, atol=1e-9)
