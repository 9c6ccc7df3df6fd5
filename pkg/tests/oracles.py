"""Independent reference computations used by the tests.

Nothing here calls into the solver internals; each oracle solves its
problem from scratch with elementary numerics (bisection, grid search, dense
eigendecomposition).
"""

import numpy as np
from scipy import linalg

from fdisac import qcqp


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# convex QCQP through bisection on the dual
# ---------------------------------------------------------------------------

def _lagrangian_min(obj, cons, lams):
    A = obj.P + sum(l * c.P for l, c in zip(lams, cons))
    b = obj.r + sum(l * c.r for l, c in zip(lams, cons))
    return np.linalg.solve(A, b)


def _bisect_dual(g, lo=0.0, iters=200):
    """Largest-root search for a nonincreasing g on [0, inf): returns lambda
    with g(lambda) ~ 0, or 0 when g(0) <= 0."""
    if g(lo) <= 0:
        return lo
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e30:
            raise ValueError("dual bracket not found (infeasible instance?)")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def qcqp_dual_oracle(problem):
    """Optimal value of a convex QCQP with one or two constraints.

    The dual function is concave and its partial derivative in lambda_i is
    the i-th constraint at the Lagrangian minimizer, which decreases in
    lambda_i. One constraint: plain bisection. Two: bisection on lambda_2 of
    the dual already maximized over lambda_1 (envelope theorem). Requires the
    Lagrangian Hessian to be nonsingular for lambda > 0 and a Slater point.
    """
    obj, cons = problem.objective, problem.constraints
    if len(cons) == 1:
        lam = _bisect_dual(lambda l: cons[0](_lagrangian_min(obj, cons, [max(l, 1e-300)])))
        w = _lagrangian_min(obj, cons, [max(lam, 1e-300)])
        return obj(w), w
    if len(cons) == 2:
        def inner(l2):
            l1 = _bisect_dual(lambda l: cons[0](_lagrangian_min(obj, cons, [max(l, 1e-300), l2])))
            return max(l1, 1e-300)

        def g2(l2):
            return cons[1](_lagrangian_min(obj, cons, [inner(l2), max(l2, 1e-300)]))

        l2 = max(_bisect_dual(g2), 1e-300)
        w = _lagrangian_min(obj, cons, [inner(l2), l2])
        return obj(w), w
    raise ValueError("oracle handles one or two constraints")


def random_psd(rng, n, rank=None, cond=1e3):
    rank = n if rank is None else rank
    B = crandn(rng, n, rank)
    U, _ = np.linalg.qr(B)
    ev = np.logspace(0, -np.log10(cond), rank) * rng.uniform(0.5, 2.0)
    return (U * ev) @ U.conj().T


def random_qcqp(rng, n, m):
    """Random instance with a strictly feasible origin and active constraints."""
    A = random_psd(rng, n) + 1e-3 * np.eye(n)
    b = crandn(rng, n) * rng.uniform(1.0, 10.0)
    cons = []
    for i in range(m):
        if i == 0 and rng.random() < 0.5:
            P = np.eye(n)
        else:
            P = random_psd(rng, n, rank=int(rng.integers(1, n + 1)), cond=1e2)
        r = 0.1 * crandn(rng, n)
        cons.append(qcqp.QuadForm(P, r, -rng.uniform(0.05, 1.0)))
    return qcqp.QcqpProblem(qcqp.QuadForm(A, b, 0.0), cons)


# ---------------------------------------------------------------------------
# generalized eigenvector and angles
# ---------------------------------------------------------------------------

def dominant_generalized_eigvec(E2, E1):
    """Eigenvector of E2 v = mu E1 v with the largest mu (dense solve)."""
    mu, V = linalg.eig(E2, E1)
    v = V[:, np.argmax(mu.real)]
    return v / np.linalg.norm(v)


def subspace_angle(a, b):
    """Angle between span(a) and span(b), robust near zero."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    resid = b - np.vdot(a, b) * a
    return float(np.arctan2(np.linalg.norm(resid), abs(np.vdot(a, b))))


# ---------------------------------------------------------------------------
# power allocation grid search
# ---------------------------------------------------------------------------

def power_grid_oracle(a, b, d, c3_hat, p_max, step=1e-3, sensing=True):
    """Minimum of sum a t^2 + b t over the box grid with sum d t^2 <= c3_hat.

    Uses a fully vectorized grid for K <= 2 and a coordinate-separable grid
    otherwise (valid when d = 0 or the radar constraint is slack).
    """
    K = a.size
    axes = [np.arange(0.0, np.sqrt(p) + step / 2, step * np.sqrt(p)) for p in p_max]
    if K <= 2:
        mesh = np.meshgrid(*axes, indexing="ij")
        T = np.stack([m.ravel() for m in mesh], axis=1)
        f = (T ** 2) @ a + T @ b
        if sensing:
            f = np.where((T ** 2) @ d <= c3_hat, f, np.inf)
        i = int(np.argmin(f))
        return float(f[i]), T[i]
    best = np.zeros(K)
    total = 0.0
    for k in range(K):
        fk = a[k] * axes[k] ** 2 + b[k] * axes[k]
        j = int(np.argmin(fk))
        best[k] = axes[k][j]
        total += fk[j]
    if sensing and best ** 2 @ d > c3_hat:
        raise ValueError("separable grid needs a slack radar constraint")
    return float(total), best
