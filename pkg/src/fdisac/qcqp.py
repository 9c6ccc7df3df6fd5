"""Convex complex QCQP solver.

Solves

    minimize    w^H A w - 2 Re(b^H w) + c
    subject to  w^H P_i w - 2 Re(r_i^H w) + s_i <= 0,   i = 1..m

with A and every P_i Hermitian positive semidefinite. Two back ends are used:

* one constraint and a positive definite objective: the constraint is
  whitened by the objective's Cholesky factor and diagonalized, after which
  the Lagrangian minimizer is explicit in the multiplier and the
  complementary multiplier is a root of a scalar monotone function;
* anything else: a primal-dual interior-point method on the real embedding,
  started from a strictly feasible point (phase I if needed).

Each function is divided by a positive constant before solving so that all
tolerances are relative to the data magnitude; the reported KKT residual is
measured on the normalized problem, multipliers are mapped back to the
original scaling.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import InvalidInputError

__all__ = ["QuadForm", "QcqpProblem", "QcqpSolution", "solve", "SingleConstraintSolver"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_CAP = "iteration_cap"


@dataclass
class QuadForm:
    """f(w) = w^H P w - 2 Re(r^H w) + s."""

    P: np.ndarray
    r: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=complex))
        self.r = np.asarray(self.r, dtype=complex).reshape(-1)
        self.s = float(np.real(self.s))
        if self.P.shape != (self.r.size, self.r.size):
            raise InvalidInputError(f"P has shape {self.P.shape}, r has size {self.r.size}")

    @property
    def n(self):
        return self.r.size

    def __call__(self, w):
        return float(np.real(np.vdot(w, self.P @ w)) - 2.0 * np.real(np.vdot(self.r, w)) + self.s)

    def grad(self, w):
        """Complex (Wirtinger) gradient ``P w - r``; the real gradient is twice this."""
        return self.P @ w - self.r

    def scale(self):
        return max(np.linalg.norm(self.P, 2), np.linalg.norm(self.r), abs(self.s))

    def scaled(self, factor):
        return QuadForm(self.P / factor, self.r / factor, self.s / factor)

    def check_psd(self, name):
        P = self.P
        herm_err = np.max(np.abs(P - P.conj().T)) if P.size else 0.0
        ref = max(1.0, np.max(np.abs(P))) if P.size else 1.0
        if herm_err > 1e-10 * ref:
            raise InvalidInputError(f"{name} is not Hermitian (error {herm_err:.3g})")
        Ph = 0.5 * (P + P.conj().T)
        if P.size:
            lam_min = np.linalg.eigvalsh(Ph)[0]
            if lam_min < -1e-8 * max(np.trace(Ph).real, np.finfo(float).tiny):
                raise InvalidInputError(f"{name} is not positive semidefinite (min eig {lam_min:.3g})")
        self.P = Ph


@dataclass
class QcqpProblem:
    objective: QuadForm
    constraints: list = field(default_factory=list)
    tolerance: float = 1e-8
    max_iterations: int = 500

    def validate(self):
        self.objective.check_psd("objective matrix")
        n = self.objective.n
        for i, con in enumerate(self.constraints):
            if con.n != n:
                raise InvalidInputError(f"constraint {i} has dimension {con.n}, expected {n}")
            con.check_psd(f"constraint matrix {i}")
        return self


@dataclass
class QcqpSolution:
    w_star: np.ndarray
    objective_value: float
    kkt_residual: float
    dual_values: np.ndarray
    status: str
    iterations: int = 0
    method: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# KKT certificate
# ---------------------------------------------------------------------------

def kkt_residual(objective, constraints, w, duals):
    """max(stationarity / (1 + ||b||), primal violation, complementarity)."""
    stat = objective.grad(w)
    viol = 0.0
    comp = 0.0
    for lam, con in zip(duals, constraints):
        stat = stat + lam * con.grad(w)
        g = con(w)
        viol = max(viol, g)
        comp = max(comp, abs(lam * g))
    stat_res = np.linalg.norm(stat) / (1.0 + np.linalg.norm(objective.r))
    return float(max(stat_res, viol, comp))


# ---------------------------------------------------------------------------
# one constraint, positive definite objective
# ---------------------------------------------------------------------------

class SingleConstraintSolver:
    """Factorization of (A, P) reused across right-hand sides.

    Solves min f(w) s.t. g(w) <= 0 for fixed quadratic parts ``A`` (positive
    definite) and ``P`` (PSD or ``None`` for the unconstrained case) and
    arbitrary linear/constant terms. With A = L L^H and
    L^{-1} P L^{-H} = V diag(p) V^H, the Lagrangian minimizer in the
    rotated coordinates y = V^H L^H w is y(mu) = (beta + mu gamma) / (1 + mu p).
    """

    def __init__(self, A, P=None):
        A = np.asarray(A, dtype=complex)
        self.n = A.shape[0]
        self.L = linalg.cholesky(0.5 * (A + A.conj().T), lower=True)
        if P is None:
            self.p = None
            self.V = np.eye(self.n)
        else:
            P = np.asarray(P, dtype=complex)
            B = linalg.solve_triangular(self.L, P, lower=True)
            B = linalg.solve_triangular(self.L, B.conj().T, lower=True).conj().T
            p, V = np.linalg.eigh(0.5 * (B + B.conj().T))
            self.p = np.clip(p, 0.0, None)
            self.V = V
        # w = T y with T = L^{-H} V, and y = R v with R = T^H
        self.T = linalg.solve_triangular(self.L.conj().T, self.V, lower=False)
        self.R = self.T.conj().T

    def _rotate(self, v):
        return self.R @ v

    def solve_raw(self, b, r=None, s=0.0):
        """Return ``(w, mu, status)``."""
        beta = self._rotate(np.asarray(b, dtype=complex))
        if self.p is None or r is None:
            return self.T @ beta, 0.0, OPTIMAL
        gamma = self._rotate(np.asarray(r, dtype=complex))
        p = self.p

        def y_of(mu):
            return (beta + mu * gamma) / (1.0 + mu * p)

        def g_of(mu):
            y = y_of(mu)
            return float(np.sum(p * np.abs(y) ** 2) - 2.0 * np.real(np.vdot(gamma, y)) + s)

        g0 = g_of(0.0)
        if g0 <= 0.0:
            return self.T @ y_of(0.0), 0.0, OPTIMAL
        hi = 1.0
        while g_of(hi) > 0.0:
            hi *= 4.0
            if hi > 1e300:
                return self.T @ y_of(hi), hi, INFEASIBLE
        lo = 0.0 if hi == 1.0 else hi / 4.0
        mu = optimize.brentq(g_of, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        # land on the feasible side of the root
        if g_of(mu) > 0.0:
            mu = np.nextafter(mu, np.inf)
            while g_of(mu) > 0.0 and mu < hi:
                mu = mu + max(abs(mu) * 1e-15, 1e-300)
        return self.T @ y_of(mu), float(mu), OPTIMAL


# ---------------------------------------------------------------------------
# primal-dual interior point on the real embedding
# ---------------------------------------------------------------------------

def _real_form(form):
    P = form.P
    Pr = np.block([[P.real, -P.imag], [P.imag, P.real]])
    rr = np.concatenate([form.r.real, form.r.imag])
    return Pr, rr, form.s


class _RealQuad:
    __slots__ = ("H", "r", "s")

    def __init__(self, H, r, s):
        self.H = H  # f(x) = x^T H x - 2 r^T x + s
        self.r = r
        self.s = s

    def value(self, x):
        return float(x @ (self.H @ x) - 2.0 * self.r @ x + self.s)

    def grad(self, x):
        return 2.0 * (self.H @ x - self.r)


def _pd_ipm(obj, cons, x0, tol, max_iter, stop_early=None):
    """Primal-dual interior point (Boyd & Vandenberghe 11.7 style).

    ``x0`` must be strictly feasible. Returns ``(x, lam, iterations, converged)``.
    """
    m = len(cons)
    N = x0.size
    x = x0.copy()
    f = np.array([c.value(x) for c in cons])
    lam = np.clip(1.0 / np.maximum(-f, 1e-12), 1e-6, 1e6)
    hess_obj = 2.0 * obj.H
    hess_cons = [2.0 * c.H for c in cons]
    mu_factor = 10.0
    alpha_ls, beta_ls = 0.01, 0.5
    ridge = 1e-13 * max(1.0, np.trace(hess_obj) / max(N, 1))

    def residual(x, lam, f, t):
        grads = np.array([c.grad(x) for c in cons])
        r_dual = obj.grad(x) + lam @ grads
        r_cent = -lam * f - 1.0 / t
        return r_dual, r_cent, grads

    it = 0
    for it in range(1, max_iter + 1):
        gap = float(-f @ lam)
        t = mu_factor * m / max(gap, 1e-300)
        r_dual, r_cent, grads = residual(x, lam, f, t)
        if stop_early is not None and stop_early(x, f):
            return x, lam, it, True
        # the complex stationarity residual is half the real gradient
        if 0.5 * np.linalg.norm(r_dual) <= 0.1 * tol and gap <= 0.1 * tol:
            return x, lam, it, True
        w = lam / (-f)
        Hpd = hess_obj + np.tensordot(lam, hess_cons, axes=1) + (grads.T * w) @ grads
        rhs = -r_dual + grads.T @ (r_cent / (-f))
        Hpd[np.diag_indices_from(Hpd)] += ridge
        try:
            # the Newton system becomes ill-conditioned near the optimum by design
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                dx = linalg.solve(Hpd, rhs, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            dx = np.linalg.lstsq(Hpd, rhs, rcond=None)[0]
        dlam = (r_cent - lam * (grads @ dx)) / f
        neg = dlam < 0
        s = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if np.any(neg) else 1.0
        s *= 0.99
        res_norm = np.sqrt(np.sum(r_dual ** 2) + np.sum(r_cent ** 2))
        while True:
            x_new = x + s * dx
            f_new = np.array([c.value(x_new) for c in cons])
            if np.all(f_new < 0.0):
                break
            s *= beta_ls
            if s < 1e-20:
                return x, lam, it, False
        while True:
            x_new = x + s * dx
            lam_new = lam + s * dlam
            f_new = np.array([c.value(x_new) for c in cons])
            rd, rc, _ = residual(x_new, lam_new, f_new, t)
            if np.all(f_new < 0.0) and np.sqrt(np.sum(rd ** 2) + np.sum(rc ** 2)) <= (1.0 - alpha_ls * s) * res_norm:
                break
            s *= beta_ls
            if s < 1e-20:
                break
        if s < 1e-20:
            return x, lam, it, False
        x, lam, f = x_new, lam_new, f_new
    return x, lam, it, False


def _barrier(obj, cons, x0, tol, max_iter):
    """Primal log-barrier method with damped Newton centering.

    Slower than the primal-dual iteration but free of its jamming when a
    multiplier collapses while its constraint sits on the boundary. ``x0``
    must be strictly feasible. Returns ``(x, lam, newton_steps)``.
    """
    m = len(cons)
    x = x0.copy()
    f = np.array([c.value(x) for c in cons])
    t = 1.0  # data are normalized to unit scale
    hess_obj = 2.0 * obj.H
    hess_cons = [2.0 * c.H for c in cons]
    steps = 0
    t_final = 10.0 * m / (0.1 * tol)
    while steps < max_iter:
        for _ in range(100):
            grads = np.array([c.grad(x) for c in cons])
            inv = 1.0 / (-f)
            g = t * obj.grad(x) + grads.T @ inv
            Hb = t * hess_obj + np.tensordot(inv, hess_cons, axes=1) + (grads.T * inv ** 2) @ grads
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                try:
                    dx = -linalg.solve(Hb, g, assume_a="pos")
                except (linalg.LinAlgError, ValueError):
                    dx = -np.linalg.lstsq(Hb, g, rcond=None)[0]
            decrement = float(-g @ dx)
            steps += 1
            if decrement <= 1e-14 or steps >= max_iter:
                break
            phi0 = t * obj.value(x) - np.sum(np.log(-f))
            s = 1.0
            while s > 1e-20:
                x_new = x + s * dx
                f_new = np.array([c.value(x_new) for c in cons])
                if np.all(f_new < 0.0):
                    phi1 = t * obj.value(x_new) - np.sum(np.log(-f_new))
                    if phi1 <= phi0 - 0.01 * s * decrement:
                        break
                s *= 0.5
            if s <= 1e-20:
                break
            x, f = x_new, f_new
        if t >= t_final:
            break
        t *= 10.0
    return x, _stationary_duals(obj, cons, x, f, 1.0 / (t * (-f))), steps


def _stationary_duals(obj, cons, x, f, lam_barrier):
    """Multipliers of the near-active constraints fitted to stationarity.

    The barrier estimate 1/(t |f_i|) is useless once f_i reaches rounding
    level, so the multipliers are refit by nonnegative least squares on the
    gradient equation and kept if that lowers the residual.
    """
    grads = np.array([c.grad(x) for c in cons])
    g0 = obj.grad(x)
    active = f >= -1e-6
    lam = np.zeros(len(cons))
    if np.any(active):
        lam[active], _ = optimize.nnls(grads[active].T, -g0)

    def resid(l):
        return max(np.linalg.norm(g0 + l @ grads), float(np.max(np.abs(l * f))))

    return lam if resid(lam) < resid(lam_barrier) else lam_barrier


def _active_set_polish(obj, cons, x, lam, iters=30):
    """Newton iteration on the KKT equations of the constraints with
    positive multipliers, treated as equalities. Returns ``(x, lam)``."""
    active = np.flatnonzero(lam > 0)
    k = active.size
    N = x.size
    for _ in range(iters):
        grads = np.array([cons[i].grad(x) for i in active]).reshape(k, N)
        F = np.concatenate([obj.grad(x) + lam[active] @ grads,
                            [cons[i].value(x) for i in active]])
        J = np.zeros((N + k, N + k))
        J[:N, :N] = 2.0 * obj.H + sum(2.0 * lam[i] * cons[i].H for i in active)
        J[:N, N:] = grads.T
        J[N:, :N] = grads
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        x = x + step[:N]
        lam = lam.copy()
        lam[active] = np.maximum(lam[active] + step[N:], 0.0)
        if np.linalg.norm(step[:N]) <= 1e-15 * max(1.0, np.linalg.norm(x)):
            break
    return x, lam


def _phase_one(cons, x0, tol, max_iter):
    """Find x with every constraint strictly negative, or ``None``.

    Minimizes s subject to f_i(x) <= s and s >= -1 in the variables (x, s).
    """
    N = x0.size
    f0 = max(c.value(x0) for c in cons)
    if f0 < 0.0:
        return x0
    z0 = np.concatenate([x0, [f0 + 1.0]])
    aug = []
    for c in cons:
        H = np.zeros((N + 1, N + 1))
        H[:N, :N] = c.H
        r = np.concatenate([c.r, [0.5]])  # -2 r^T z contributes -s
        aug.append(_RealQuad(H, r, c.s))
    aug.append(_RealQuad(np.zeros((N + 1, N + 1)), np.concatenate([np.zeros(N), [0.5]]), -1.0))
    obj = _RealQuad(np.zeros((N + 1, N + 1)), np.concatenate([np.zeros(N), [-0.5]]), 0.0)

    def deep_enough(z, f):
        fx = max(c.value(z[:N]) for c in cons)
        return fx < -1e-3

    z, _, _, _ = _pd_ipm(obj, aug, z0, tol, max_iter, stop_early=deep_enough)
    x = z[:N]
    if max(c.value(x) for c in cons) < 0.0:
        return x
    return None


def _to_complex(x, n):
    return x[:n] + 1j * x[n:]


def _to_real(w):
    return np.concatenate([w.real, w.imag])


# ---------------------------------------------------------------------------
# public entry point
# ---------------------------------------------------------------------------

def _normalize(problem):
    obj_scale = max(np.linalg.norm(problem.objective.P, 2), np.linalg.norm(problem.objective.r))
    obj_scale = obj_scale if obj_scale > 0 else 1.0
    obj = problem.objective.scaled(obj_scale)
    cons, con_scales = [], []
    for con in problem.constraints:
        sc = con.scale()
        sc = sc if sc > 0 else 1.0
        cons.append(con.scaled(sc))
        con_scales.append(sc)
    return obj, obj_scale, cons, np.array(con_scales)


def _min_eig_ratio(A):
    ev = np.linalg.eigvalsh(A)
    return ev[0] / max(ev[-1], np.finfo(float).tiny)


def _substitute(form, sigma):
    """The form in x with w = sigma * x (values are unchanged)."""
    return QuadForm(sigma ** 2 * form.P, sigma * form.r, form.s)


def solve(problem, warm_start=None):
    """Solve a convex QCQP and certify the result through its KKT residual.

    Raises :class:`InvalidInputError` for non-Hermitian or indefinite data
    and for unbounded problems. Deterministic in ``(problem, warm_start)``.
    A nonzero warm start also fixes the variable scale: the problem is solved
    in x = w / ||warm_start||, which keeps tiny or huge budgets well scaled.
    """
    problem.validate()
    sigma = float(np.linalg.norm(warm_start)) if warm_start is not None else 0.0
    if np.isfinite(sigma) and sigma > 0 and sigma != 1.0:
        scaled = QcqpProblem(_substitute(problem.objective, sigma),
                             [_substitute(c, sigma) for c in problem.constraints],
                             problem.tolerance, problem.max_iterations)
        sol = _solve(scaled, np.asarray(warm_start, dtype=complex) / sigma)
        sol.w_star = sigma * sol.w_star
        sol.objective_value = problem.objective(sol.w_star)
        return sol
    return _solve(problem, warm_start)


def _solve(problem, warm_start):
    n = problem.objective.n
    tol = problem.tolerance
    obj, obj_scale, cons, con_scales = _normalize(problem)
    m = len(cons)

    if m == 0:
        A, b = obj.P, obj.r
        w, *_ = np.linalg.lstsq(A, b, rcond=None)
        if np.linalg.norm(A @ w - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
            raise InvalidInputError("objective is unbounded below")
        res = kkt_residual(obj, cons, w, [])
        return QcqpSolution(w, problem.objective(w), res, np.zeros(0),
                            OPTIMAL if res <= tol else ITERATION_CAP, 1, "direct")

    if m == 1 and _min_eig_ratio(obj.P) > 1e-12:
        solver = SingleConstraintSolver(obj.P, cons[0].P)
        w, mu, status = solver.solve_raw(obj.r, cons[0].r, cons[0].s)
        if status == INFEASIBLE:
            return QcqpSolution(w, problem.objective(w), np.inf, np.array([np.inf]),
                                INFEASIBLE, 1, "dual-root")
        res = kkt_residual(obj, cons, w, [mu])
        duals = np.array([mu * obj_scale / con_scales[0]])
        return QcqpSolution(w, problem.objective(w), res, duals,
                            OPTIMAL if res <= tol else ITERATION_CAP, 1, "dual-root")

    robj = _RealQuad(*_real_form(obj))
    rcons = [_RealQuad(*_real_form(c)) for c in cons]
    x0 = _to_real(np.asarray(warm_start, dtype=complex)) if warm_start is not None else np.zeros(2 * n)
    start = _phase_one(rcons, x0, tol, problem.max_iterations)
    if start is None:
        return QcqpSolution(_to_complex(x0, n), problem.objective(_to_complex(x0, n)), np.inf,
                            np.full(m, np.nan), INFEASIBLE, 0, "interior-point")
    x, lam, iters, _ = _pd_ipm(robj, rcons, start, tol, problem.max_iterations)
    w = _to_complex(x, n)
    res = kkt_residual(obj, cons, w, lam)
    if res > tol:
        xb, lamb, steps = _barrier(robj, rcons, start, tol, 10 * problem.max_iterations)
        wb = _to_complex(xb, n)
        res_b = kkt_residual(obj, cons, wb, lamb)
        iters += steps
        if res_b < res:
            x, lam, w, res = xb, lamb, wb, res_b
    if res > tol:
        xp, lamp = _active_set_polish(robj, rcons, x, lam)
        wp = _to_complex(xp, n)
        res_p = kkt_residual(obj, cons, wp, lamp)
        if res_p < res:
            x, lam, w, res = xp, lamp, wp, res_p
    duals = lam * obj_scale / con_scales
    status = OPTIMAL if res <= tol else ITERATION_CAP
    return QcqpSolution(w, problem.objective(w), res, duals, status, iters, "interior-point")
