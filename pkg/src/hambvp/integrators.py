"""One-step integrators and their composition into flow maps.

All steps work on a state list ``z = [q_1..q_n, p_1..p_n]`` whose entries are
floats, numpy arrays (batched scans) or :class:`~hambvp.jets.Jet2` objects, so
a single code path yields the numerical flow together with its first and
second derivatives.

Implicit stages are solved by Newton iteration on the primal values first;
the converged stage values are then pushed through two chord sweeps in jet
arithmetic, which is enough to make first and second derivatives exact up to
round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets
from .jets import Jet2
from .mesh import Mesh, make_mesh
from .systems import HamiltonianSystem, PhasePoint, eval_system

INNER_TOL = 1e-13
INNER_MAX_ITER = 50


class StepFailure(RuntimeError):
    """Inner Newton iteration of an implicit step did not converge."""

    def __init__(self, t, h, residual):
        super().__init__(f"implicit step failed at t={t:.6g}, h={h:.3g}, residual={residual:.3e}")
        self.t = t
        self.h = h
        self.residual = residual


class FlowDivergenceError(FloatingPointError):
    def __init__(self, step_index, t):
        super().__init__(f"non-finite state after step {step_index} (t={t:.6g})")
        self.step_index = step_index
        self.t = t


@dataclass(frozen=True)
class Method:
    id: str
    order: int
    symplectic: bool
    implicit: bool
    description: str = ""


METHODS = {
    m.id: m for m in [
        Method("stormer-verlet", 2, True, False,
               "Stormer-Verlet (leapfrog); implicit three-substep form for non-separable H"),
        Method("implicit-midpoint", 2, True, True, "implicit midpoint rule"),
        Method("rk2", 2, False, False, "explicit midpoint Runge-Kutta"),
        Method("rk4", 4, False, False, "classical four-stage Runge-Kutta"),
        Method("lobatto3a", 4, False, True, "three-stage Lobatto IIIA collocation"),
    ]
}


def get_method(method) -> Method:
    if isinstance(method, Method):
        return method
    try:
        return METHODS[method]
    except KeyError:
        raise KeyError(f"unknown method {method!r}; known: {', '.join(METHODS)}") from None


# ---------------------------------------------------------------------------
# small helpers on state lists

def _has_jets(items):
    return any(isinstance(x, Jet2) for x in items)


def _primal_list(items):
    return [jets.primal(x) for x in items]


def _axpy(z, h, k):
    return [a + h * b for a, b in zip(z, k)]


def _field(sys, mu, z):
    n = sys.n
    dq, dp = sys.vector_field(z[:n], z[n:], mu)
    return dq + dp


def _batch_shape(items):
    shapes = [np.shape(jets.primal(x)) for x in items]
    return np.broadcast_shapes(*shapes) if shapes else ()


def _hess(sys, mu, z):
    """Hessian of ``H`` at primal ``z`` with batch axes first: ``B + (2n, 2n)``."""
    mu = [jets.primal(m) for m in mu]
    arrs = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in z],
                               *[np.asarray(m, dtype=float) for m in mu])
    zv = np.array(arrs[:len(z)])
    _, _, hess = eval_system(sys, zv, mu)
    return np.moveaxis(hess, (0, 1), (-2, -1))


def _field_jacobian(sys, mu, z):
    """Jacobian of the Hamiltonian vector field at primal ``z``, batch axes first."""
    hess = _hess(sys, mu, z)
    n = sys.n
    return np.concatenate([hess[..., n:, :], -hess[..., :n, :]], axis=-2)


def _newton(residual, jacobian, x0, t, h):
    """Primal Newton on a list-valued residual; returns the converged list."""
    dtype = np.result_type(*x0, np.float64)
    x = [np.asarray(v, dtype=dtype) for v in x0]
    k = len(x)
    res = np.inf
    for _ in range(INNER_MAX_ITER):
        r = np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=dtype) for v in residual(x)]))
        res = float(np.max(np.abs(r))) if r.size else 0.0
        if not np.isfinite(res):
            raise StepFailure(t, h, res)
        if res <= INNER_TOL:
            return x
        J = jacobian(x)
        rb = np.moveaxis(r, 0, -1)[..., None]
        # linear algebra in double precision; extended-precision states keep their dtype
        dx = np.linalg.solve(np.asarray(J, dtype=float), np.asarray(rb, dtype=float))[..., 0]
        dx = dx.astype(dtype)
        dx = np.moveaxis(dx, -1, 0)
        x = [x[i] - dx[i] for i in range(k)]
        scale = max(1.0, max(float(np.max(np.abs(v))) for v in x))
        if float(np.max(np.abs(dx))) <= 4e-16 * scale and res <= 1e3 * INNER_TOL * scale:
            # converged to round-off level for large states
            return x
    raise StepFailure(t, h, res)


def _jet_sweeps(residual, J, x_primal, s, order, sweeps=2):
    """Lift a converged primal root to jets with chord steps ``x -= J^{-1} F(x)``."""
    Jinv = np.linalg.inv(np.asarray(J, dtype=float))
    x = [Jet2.constant(v, s, order) for v in x_primal]
    for _ in range(sweeps):
        r = [jets.as_jet(v, s, order) for v in residual(x)]
        corr = jets.matvec(Jinv, r)
        x = [a - b for a, b in zip(x, corr)]
    return x


def _jet_info(items):
    for x in items:
        if isinstance(x, Jet2):
            return x.s, x.order
    return None


# ---------------------------------------------------------------------------
# step maps

def _step_sv_explicit(sys, mu, h, z):
    n = sys.n
    q, p = z[:n], z[n:]
    gq = sys.dH_dq(q, p, mu)
    p = [pi - (0.5 * h) * gi for pi, gi in zip(p, gq)]
    gp = sys.dH_dp(q, p, mu)
    q = [qi + h * gi for qi, gi in zip(q, gp)]
    gq = sys.dH_dq(q, p, mu)
    p = [pi - (0.5 * h) * gi for pi, gi in zip(p, gq)]
    return q + p


def _step_sv_implicit(sys, mu, h, z, t):
    n = sys.n
    q, p = z[:n], z[n:]
    info = _jet_info(list(z) + list(mu))
    qv, pv, muv = _primal_list(q), _primal_list(p), _primal_list(mu)
    eye = np.eye(n)

    # p_half = p - h/2 H_q(q, p_half)
    def r1(P, q=q, p=p, mu=mu):
        g = sys.dH_dq(q, P, mu)
        return [P[i] - p[i] + (0.5 * h) * g[i] for i in range(n)]

    def j1(P):
        H = _hess(sys, muv, qv + list(P))
        return eye + 0.5 * h * H[..., :n, n:]

    g0 = sys.dH_dq(qv, pv, muv)
    P0 = [pv[i] - 0.5 * h * g0[i] for i in range(n)]
    Pv = _newton(lambda P: r1(P, qv, pv, muv), j1, P0, t, h)
    if info:
        Pj = _jet_sweeps(r1, j1(Pv), Pv, *info)
    else:
        Pj = Pv

    # q_new = q + h/2 (H_p(q, p_half) + H_p(q_new, p_half))
    def r2(Q, q=q, P=Pj, mu=mu):
        a = sys.dH_dp(q, P, mu)
        b = sys.dH_dp(Q, P, mu)
        return [Q[i] - q[i] - (0.5 * h) * (a[i] + b[i]) for i in range(n)]

    def j2(Q):
        H = _hess(sys, muv, list(Q) + list(Pv))
        return eye - 0.5 * h * H[..., n:, :n]

    a0 = sys.dH_dp(qv, Pv, muv)
    Q0 = [qv[i] + h * a0[i] for i in range(n)]
    Qv = _newton(lambda Q: r2(Q, qv, Pv, muv), j2, Q0, t, h)
    if info:
        Qj = _jet_sweeps(r2, j2(Qv), Qv, *info)
    else:
        Qj = Qv

    g = sys.dH_dq(Qj, Pj, mu)
    p_new = [Pj[i] - (0.5 * h) * g[i] for i in range(n)]
    return list(Qj) + p_new


def _step_midpoint(sys, mu, h, z, t):
    m = 2 * sys.n
    info = _jet_info(list(z) + list(mu))
    zv, muv = _primal_list(z), _primal_list(mu)
    eye = np.eye(m)

    def res(Z, z=z, mu=mu):
        mid = [0.5 * (a + b) for a, b in zip(z, Z)]
        f = _field(sys, mu, mid)
        return [Z[i] - z[i] - h * f[i] for i in range(m)]

    def jac(Z):
        mid = [0.5 * (a + b) for a, b in zip(zv, Z)]
        return eye - 0.5 * h * _field_jacobian(sys, muv, mid)

    Z0 = _axpy(zv, h, _field(sys, muv, zv))
    Zv = _newton(lambda Z: res(Z, zv, muv), jac, Z0, t, h)
    if info:
        return _jet_sweeps(res, jac(Zv), Zv, *info)
    return Zv


def _step_rk2(sys, mu, h, z):
    k1 = _field(sys, mu, z)
    k2 = _field(sys, mu, _axpy(z, 0.5 * h, k1))
    return _axpy(z, h, k2)


def _step_rk4(sys, mu, h, z):
    k1 = _field(sys, mu, z)
    k2 = _field(sys, mu, _axpy(z, 0.5 * h, k1))
    k3 = _field(sys, mu, _axpy(z, 0.5 * h, k2))
    k4 = _field(sys, mu, _axpy(z, h, k3))
    return [zi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for zi, a, b, c, d in zip(z, k1, k2, k3, k4)]


# three-stage Lobatto IIIA: c = (0, 1/2, 1)
_LOB_A = np.array([[0.0, 0.0, 0.0],
                   [5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0],
                   [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]])


def _step_lobatto(sys, mu, h, z, t):
    m = 2 * sys.n
    A = _LOB_A
    info = _jet_info(list(z) + list(mu))
    zv, muv = _primal_list(z), _primal_list(mu)

    def res(X, z=z, mu=mu):
        Z2, Z3 = X[:m], X[m:]
        f1 = _field(sys, mu, z)
        f2 = _field(sys, mu, Z2)
        f3 = _field(sys, mu, Z3)
        out = []
        for row, Z in ((1, Z2), (2, Z3)):
            a1, a2, a3 = A[row]
            out += [Z[i] - z[i] - h * (a1 * f1[i] + a2 * f2[i] + a3 * f3[i]) for i in range(m)]
        return out

    def jac(X):
        D2 = _field_jacobian(sys, muv, X[:m])
        D3 = _field_jacobian(sys, muv, X[m:])
        top = np.concatenate([-h * A[1, 1] * D2, -h * A[1, 2] * D3], axis=-1)
        bot = np.concatenate([-h * A[2, 1] * D2, -h * A[2, 2] * D3], axis=-1)
        return np.eye(2 * m) + np.concatenate([top, bot], axis=-2)

    f1 = _field(sys, muv, zv)
    X0 = _axpy(zv, 0.5 * h, f1) + _axpy(zv, h, f1)
    Xv = _newton(lambda X: res(X, zv, muv), jac, X0, t, h)
    if info:
        X = _jet_sweeps(res, jac(Xv), Xv, *info)
    else:
        X = Xv
    return list(X[m:])


def step(method, sys: HamiltonianSystem, mu, h: float, z, t: float = 0.0):
    """Advance the state list ``z`` by one step of size ``h``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    method = get_method(method)
    mu = list(mu)
    z = list(z)
    mid = method.id
    if mid == "stormer-verlet":
        if sys.separable:
            return _step_sv_explicit(sys, mu, h, z)
        return _step_sv_implicit(sys, mu, h, z, t)
    if mid == "implicit-midpoint":
        return _step_midpoint(sys, mu, h, z, t)
    if mid == "rk2":
        return _step_rk2(sys, mu, h, z)
    if mid == "rk4":
        return _step_rk4(sys, mu, h, z)
    if mid == "lobatto3a":
        return _step_lobatto(sys, mu, h, z, t)
    raise KeyError(mid)


# ---------------------------------------------------------------------------
# flows

def flow_states(method, sys, mu, mesh: Mesh, z0, record=True):
    """Compose steps over ``mesh`` starting from the state list ``z0``.

    Returns ``(z_end, trajectory)`` where the trajectory holds the primal
    states at all mesh times, shape ``(N + 1, 2n) + B``.
    """
    method = get_method(method)
    z = list(z0)
    mu = list(mu)
    traj = [np.array(np.broadcast_arrays(*[np.asarray(jets.primal(v), dtype=float) for v in z]))] \
        if record else None
    t = 0.0
    for j, h in enumerate(mesh.steps):
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                z = step(method, sys, mu, h, z, t)
            except FloatingPointError:
                raise FlowDivergenceError(j, t) from None
        t += h
        vals = np.array(np.broadcast_arrays(*[np.asarray(jets.primal(v), dtype=float) for v in z]))
        if not np.all(np.isfinite(vals)):
            raise FlowDivergenceError(j, t)
        if record:
            traj.append(vals)
    return z, (np.array(traj) if record else None)


@dataclass
class FlowResult:
    end: np.ndarray
    jac: np.ndarray | None = None
    hess: np.ndarray | None = None
    trajectory: np.ndarray | None = None

    @property
    def point(self) -> PhasePoint:
        return PhasePoint.from_array(self.end)


def flow(method, sys: HamiltonianSystem, mu, mesh: Mesh, z0, seed="state", order=1):
    """Numerical time-``tau`` map with derivatives.

    ``seed`` selects the differentiation directions: ``None`` (values only),
    ``"state"`` (the ``2n`` initial coordinates), ``"params"`` (the ``mu``
    components) or ``"state+params"``.  ``jac`` has shape ``(2n, s)`` and
    ``hess`` (when ``order=2``) shape ``(2n, s, s)``.
    """
    if isinstance(z0, PhasePoint):
        z0 = z0.as_array()
    z0 = np.asarray(z0, dtype=float)
    mu = [float(v) for v in mu]
    n = sys.n
    if z0.shape[0] != 2 * n:
        raise ValueError(f"initial state must have length {2 * n}")
    if len(mu) != sys.param_count:
        raise ValueError(f"{sys.id} takes {sys.param_count} parameters")
    k = len(mu)
    seed_state = seed in ("state", "state+params")
    seed_params = seed in ("params", "state+params")
    if seed not in (None, "none", "state", "params", "state+params"):
        raise ValueError(f"unknown seed spec {seed!r}")
    s = (2 * n if seed_state else 0) + (k if seed_params else 0)
    if s == 0:
        z_end, traj = flow_states(method, sys, mu, mesh, list(z0))
        return FlowResult(np.asarray(z_end, dtype=float), None, None, traj)
    zj = [Jet2.variable(z0[i], i, s, order) if seed_state else Jet2.constant(z0[i], s, order)
          for i in range(2 * n)]
    off = 2 * n if seed_state else 0
    muj = [Jet2.variable(mu[i], off + i, s, order) if seed_params else mu[i] for i in range(k)]
    z_end, traj = flow_states(method, sys, muj, mesh, zj)
    z_end = [jets.as_jet(v, s, order) for v in z_end]
    value, grad, hess = jets.stack(z_end)
    return FlowResult(value, grad, hess, traj)


def omega(n2: int) -> np.ndarray:
    n = n2 // 2
    om = np.zeros((n2, n2))
    om[:n, n:] = np.eye(n)
    om[n:, :n] = -np.eye(n)
    return om


def symplectic_defect(jac) -> float:
    """Frobenius norm of ``J^T Omega J - Omega``."""
    J = np.asarray(jac, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("symplectic defect needs a square matrix")
    if J.shape[0] % 2:
        raise ValueError("symplectic defect needs an even dimension")
    om = omega(J.shape[0])
    return float(np.linalg.norm(J.T @ om @ J - om))


def harmonic_exact(z0, t):
    """Exact harmonic-oscillator flow: rotation of ``(q, p)`` by angle ``t``."""
    q, p = z0
    c, s = math.cos(t), math.sin(t)
    return np.array([c * q + s * p, -s * q + c * p])


def order_slope(method, sys, mu, tau, N_list, z0, reference=None):
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    ``reference`` is the exact end state; by default the closed form is used
    for the harmonic oscillator and a Stormer-Verlet run with ``2**16`` steps
    otherwise.
    """
    N_list = list(N_list)
    if len(N_list) < 3:
        raise ValueError("need at least three step counts for a slope fit")
    z0 = np.asarray(z0, dtype=float)
    if reference is None:
        if sys.id == "harmonic":
            reference = harmonic_exact(z0, tau)
        else:
            reference = flow("stormer-verlet", sys, mu, make_mesh("uniform", 2 ** 16, tau),
                             z0, seed=None).end
    errs, hs = [], []
    for N in N_list:
        end = flow(method, sys, mu, make_mesh("uniform", N, tau), z0, seed=None).end
        errs.append(float(np.max(np.abs(end - reference))))
        hs.append(tau / N)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope)
