"""Shooting residuals for Lagrangian boundary conditions and their Newton solves.

A *residual family* is any object with integer attributes ``m`` (unknowns)
and ``param_count`` and a method ``residual_jets(x, params, seed_x, seed_params,
order)``.  It returns the ``m`` residual components as jets seeded on the
unknowns first and then on the selected parameter indices.  Shooting problems
and the normal-form models in :mod:`hambvp.singularity` both implement it, so
Newton, multistart and continuation are shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jets
from .integrators import FlowDivergenceError, StepFailure, flow_states, get_method
from .jets import Jet2
from .mesh import Mesh
from .systems import DimensionError, HamiltonianSystem, PhasePoint, get_system

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 40
MAX_HALVINGS = 10
COND_LIMIT = 1e12
DEDUP_TOL = 1e-6


class NonConvergenceError(RuntimeError):
    def __init__(self, message, x=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual_norm = residual_norm
        self.iterations = iterations


class ShootingDivergence(FloatingPointError):
    """Flow divergence during a residual evaluation, with the offending unknown."""

    def __init__(self, x, cause):
        super().__init__(f"flow diverged for x={np.asarray(x).tolist()}: {cause}")
        self.x = x
        self.cause = cause


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    left: tuple = ()
    right: tuple = ()
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "periodic"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")
        object.__setattr__(self, "left", tuple(float(v) for v in self.left))
        object.__setattr__(self, "right", tuple(float(v) for v in self.right))
        if self.kind == "periodic" and (self.left or self.right):
            raise ValueError("periodic boundary conditions take no boundary data")
        if self.kind != "periodic" and len(self.left) != len(self.right):
            raise DimensionError("left and right boundary data differ in length")


@dataclass(frozen=True)
class ParamTarget:
    """Where a problem parameter goes: ``mu``, ``left``, ``right`` or ``inert``."""

    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in ("mu", "left", "right", "inert"):
            raise ValueError(f"unknown parameter target {self.kind!r}")


def bind(*specs) -> tuple:
    """Parse bindings such as ``"mu:0"``, ``"left:1"`` or ``"inert"``."""
    out = []
    for s in specs:
        if isinstance(s, ParamTarget):
            out.append(s)
            continue
        kind, _, idx = s.partition(":")
        out.append(ParamTarget(kind, int(idx) if idx else 0))
    return tuple(out)


@dataclass(frozen=True)
class ShootingProblem:
    """System + integrator + mesh + boundary condition, reduced to ``m`` unknowns.

    ``mu`` holds the base parameter vector of the system; entries listed in
    ``binding`` are overwritten by the problem parameters passed to
    :meth:`residual_jets`.
    """

    system: HamiltonianSystem
    method: str
    mesh: Mesh
    bc: BoundaryCondition
    binding: tuple = ()
    mu: tuple = ()
    name: str = ""

    def __post_init__(self):
        if isinstance(self.system, str):
            object.__setattr__(self, "system", get_system(self.system))
        get_method(self.method)
        n = self.system.n
        if self.bc.kind != "periodic" and len(self.bc.left) != n:
            raise DimensionError(f"boundary data must have length {n}")
        if self.bc.tau is not None and abs(self.bc.tau - self.mesh.tau) > 1e-12 * max(1.0, self.bc.tau):
            raise ValueError("mesh duration does not match the boundary condition")
        mu = tuple(float(v) for v in (self.mu if self.mu else self.system.default_mu))
        if len(mu) != self.system.param_count:
            raise DimensionError(f"{self.system.id} takes {self.system.param_count} parameters")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "binding", bind(*self.binding))
        for t in self.binding:
            lim = {"mu": len(mu), "left": len(self.bc.left), "right": len(self.bc.right)}.get(t.kind)
            if lim is not None and not 0 <= t.index < lim:
                raise DimensionError(f"parameter target {t} out of range")

    @property
    def m(self) -> int:
        return 2 * self.system.n if self.bc.kind == "periodic" else self.system.n

    @property
    def param_count(self) -> int:
        return len(self.binding)

    def _apply(self, params):
        params = list(params)
        if len(params) != len(self.binding):
            raise DimensionError(f"expected {len(self.binding)} problem parameters, got {len(params)}")
        mu, left, right = list(self.mu), list(self.bc.left), list(self.bc.right)
        for v, t in zip(params, self.binding):
            if t.kind == "mu":
                mu[t.index] = v
            elif t.kind == "left":
                left[t.index] = v
            elif t.kind == "right":
                right[t.index] = v
        return mu, left, right

    def initial_state(self, x, params):
        """Full initial phase state (list) for unknown ``x``."""
        _, left, _ = self._apply(params)
        x = list(x)
        if self.bc.kind == "dirichlet":
            return left + x
        if self.bc.kind == "neumann":
            return x + left
        return x

    def end_state_jets(self, x, params, seed_x=True, seed_params=(), order=1, record=False):
        """Seed jets, run the flow and return ``(z0, z_end, mu, right, trajectory)``."""
        x = list(x)
        if len(x) != self.m:
            raise DimensionError(f"unknown must have length {self.m}")
        seed_params = tuple(seed_params)
        s = (self.m if seed_x else 0) + len(seed_params)
        if s:
            xs = [Jet2.variable(v, i, s, order) if seed_x else v for i, v in enumerate(x)]
            params = list(params)
            off = self.m if seed_x else 0
            for j, k in enumerate(seed_params):
                params[k] = Jet2.variable(params[k], off + j, s, order)
        else:
            xs = x
        mu, _, right = self._apply(params)
        z0 = self.initial_state(xs, params)
        try:
            z_end, traj = flow_states(self.method, self.system, mu, self.mesh, z0, record=record)
        except (FlowDivergenceError, StepFailure) as exc:
            raise ShootingDivergence([jets.primal(v) for v in x], exc) from exc
        return z0, z_end, mu, right, traj

    def residual_jets(self, x, params, seed_x=True, seed_params=(), order=1, record=False):
        z0, z_end, _, right, traj = self.end_state_jets(x, params, seed_x, seed_params, order, record)
        n = self.system.n
        if self.bc.kind == "dirichlet":
            r = [z_end[i] - right[i] for i in range(n)]
        elif self.bc.kind == "neumann":
            r = [z_end[n + i] - right[i] for i in range(n)]
        else:
            r = [z_end[i] - z0[i] for i in range(2 * n)]
        if record:
            return r, traj
        return r

    def conjugate_jets(self, z_end):
        """End-state block paired with the residual by the symplectic form."""
        n = self.system.n
        if self.bc.kind == "dirichlet":
            return list(z_end[n:])
        if self.bc.kind == "neumann":
            return [-v for v in z_end[:n]]
        raise ValueError("no conjugate block for periodic problems")


# ---------------------------------------------------------------------------
# residual evaluation helpers shared with continuation and singularity

def _to_arrays(r, s, batch_shape=()):
    """Stack residual jets into ``value (m,)+B``, ``jac B+(m, s)``, ``hess B+(m,s,s)``."""
    rr = [jets.as_jet(v, s, 2 if any(isinstance(u, Jet2) and u.hess is not None for u in r) else 1)
          for v in r]
    shape = np.broadcast_shapes(batch_shape, *[np.shape(v.value) for v in rr])
    value = np.stack([np.broadcast_to(np.asarray(v.value, dtype=float), shape) for v in rr])
    grad = np.stack([np.broadcast_to(v.grad, shape + (s,)) for v in rr], axis=-2)
    hess = None
    if all(v.hess is not None for v in rr):
        hess = np.stack([np.broadcast_to(v.hess, shape + (s, s)) for v in rr], axis=-3)
    return value, grad, hess


def residual_value(prob, x, params):
    """Plain residual values, shape ``(m,) + B`` for batched ``x`` of shape ``(m,) + B``."""
    r = prob.residual_jets(list(x), params, seed_x=False)
    shape = np.broadcast_shapes(*[np.shape(v) for v in x], *[np.shape(jets.primal(v)) for v in r])
    return np.stack([np.broadcast_to(np.asarray(jets.primal(v), dtype=float), shape) for v in r])


def residual(prob, x, params, param_index=(), order=1):
    """Residual and its Jacobian ``[D_x r | D_params r]`` (and Hessian if ``order=2``).

    ``x`` may be batched as ``(m,) + B``; the Jacobian then has shape ``B + (m, m + k)``.
    """
    x = [np.asarray(v, dtype=float) if np.ndim(v) else float(v) for v in x]
    param_index = tuple(param_index)
    s = prob.m + len(param_index)
    r = prob.residual_jets(x, params, seed_x=True, seed_params=param_index, order=order)
    bshape = np.broadcast_shapes(*[np.shape(v) for v in x])
    value, grad, hess = _to_arrays(r, s, bshape)
    if order == 2:
        return value, grad, hess
    return value, grad


# ---------------------------------------------------------------------------
# Newton

@dataclass
class BvpSolution:
    x: np.ndarray
    params: tuple
    z0: PhasePoint | None
    residual_norm: float
    iterations: int
    jac: np.ndarray
    trajectory: np.ndarray | None = None
    history: list = field(default_factory=list)
    warning: str | None = None


def _solve_step(J, r):
    """Newton step, switching to a pseudo-inverse step for ill-conditioned J."""
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        return np.linalg.pinv(J) @ r, True
    return np.linalg.solve(J, r), False


def newton_solve(prob, x0, params=(), tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
                 damping=True, max_halvings=MAX_HALVINGS) -> BvpSolution:
    """Damped Newton iteration for ``r(x; params) = 0``."""
    x = np.array(x0, dtype=float).reshape(-1)
    params = tuple(params)
    history = []
    warning = None
    r, J = residual(prob, x, params)
    norm = float(np.linalg.norm(r))
    history.append(norm)
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"Newton did not converge in {max_iter} iterations "
                                      f"(residual {norm:.3e})", x, norm, it)
        if not np.all(np.isfinite(J)):
            raise NonConvergenceError("non-finite residual Jacobian", x, norm, it)
        dx, singular = _solve_step(J, r)
        if singular:
            warning = "near-bifurcation: residual Jacobian condition number exceeds 1e12"
        lam = 1.0
        for _ in range(max_halvings + 1):
            xt = x - lam * dx
            try:
                rt, Jt = residual(prob, xt, params)
                nt = float(np.linalg.norm(rt))
            except (ShootingDivergence, ArithmeticError):
                nt = math.inf
            if np.isfinite(nt) and (nt < norm or not damping):
                break
            lam *= 0.5
        else:
            raise NonConvergenceError(f"damped Newton stalled at residual {norm:.3e}", x, norm, it)
        x, r, J, norm = xt, rt, Jt, nt
        history.append(norm)
        it += 1
    traj = None
    z0 = None
    if isinstance(prob, ShootingProblem):
        _, traj = prob.residual_jets(list(x), params, seed_x=False, record=True)
        z0 = PhasePoint.from_array(np.array(prob.initial_state(list(x), params), dtype=float))
    jac = np.asarray(J, dtype=float)[:, :prob.m]
    return BvpSolution(x, params, z0, norm, it, jac, traj, history, warning)


def newton_batch(prob, X0, params=(), tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
                 max_halvings=MAX_HALVINGS):
    """Damped Newton on many starts at once.

    ``X0`` has shape ``(m, B)``.  Each column is iterated independently (the
    batching is purely for speed), so results do not depend on the order of
    the starts.  Returns ``(X, converged_mask)``.
    """
    X = np.array(X0, dtype=float)
    m, B = X.shape
    status = np.zeros(B, dtype=int)   # 0 active, 1 converged, -1 failed

    def evaluate(Xs):
        r, J = residual(prob, [Xs[i] for i in range(m)], params)
        return r, J

    def values(Xs):
        return (residual_value(prob, [Xs[i] for i in range(m)], params),)

    for _ in range(max_iter + 1):
        idx = np.flatnonzero(status == 0)
        if idx.size == 0:
            break
        r, J = _batch_eval(evaluate, X[:, idx],
                           lambda B: (np.full((m, B), np.nan), np.full((B, m, m), np.nan)))
        norm = np.linalg.norm(r, axis=0)
        bad = ~np.isfinite(norm) | ~np.all(np.isfinite(J), axis=(-2, -1))
        conv = (norm <= tol) & ~bad
        status[idx[bad]] = -1
        status[idx[conv]] = 1
        keep = ~bad & ~conv
        idx, r, J, norm = idx[keep], r[:, keep], J[keep][:, :, :m], norm[keep]
        if idx.size == 0:
            break
        cond = np.linalg.cond(J)
        dx = np.empty((m, idx.size))
        good = np.isfinite(cond) & (cond <= COND_LIMIT)
        if np.any(good):
            dx[:, good] = np.linalg.solve(J[good], r[:, good].T[..., None])[..., 0].T
        if np.any(~good):
            dx[:, ~good] = (np.linalg.pinv(J[~good]) @ r[:, ~good].T[..., None])[..., 0].T
        lam = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        newX = X[:, idx].copy()
        for _h in range(max_halvings + 1):
            pj = np.flatnonzero(pending)
            if pj.size == 0:
                break
            trial = X[:, idx[pj]] - lam[pj] * dx[:, pj]
            (rt,) = _batch_eval(values, trial, lambda B: (np.full((m, B), np.nan),))
            nt = np.linalg.norm(rt, axis=0)
            ok = np.isfinite(nt) & (nt < norm[pj])
            newX[:, pj[ok]] = trial[:, ok]
            pending[pj[ok]] = False
            lam[pj[~ok]] *= 0.5
        status[idx[pending]] = -1
        X[:, idx] = newX
    status[status == 0] = -1
    return X, status == 1


def _batch_eval(fn, Xs, blank):
    """Run ``fn`` on columns of ``Xs``; failing columns come back as NaN.

    ``blank(B)`` builds the all-NaN output for ``B`` columns.
    """
    errors = (ShootingDivergence, StepFailure, FlowDivergenceError, ArithmeticError,
              np.linalg.LinAlgError)
    try:
        with np.errstate(all="ignore"):
            return fn(Xs)
    except errors:
        pass
    outs = []
    for b in range(Xs.shape[1]):
        try:
            with np.errstate(all="ignore"):
                outs.append(fn(Xs[:, b:b + 1]))
        except errors:
            outs.append(blank(1))
    return tuple(np.concatenate(parts, axis=1 if parts[0].ndim == 2 else 0)
                 for parts in zip(*outs))


@dataclass
class MultistartResult:
    solutions: list
    failed: int

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def dedupe_points(points, tol=DEDUP_TOL):
    """Sort points lexicographically and merge those within ``tol`` of a kept point."""
    pts = sorted((tuple(float(v) for v in p) for p in points))
    kept = []
    for p in pts:
        if all(max(abs(a - b) for a, b in zip(p, k)) > tol for k in kept):
            kept.append(p)
    return [np.array(k) for k in kept]


def multistart_sweep(prob, params, grid, tol=NEWTON_TOL, dedup_tol=DEDUP_TOL) -> MultistartResult:
    """Newton from every start in ``grid``; distinct converged solutions sorted by ``x[0]``."""
    grid = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grid]
    if not grid:
        raise ValueError("multistart grid is empty")
    X0 = np.stack(grid, axis=1)
    X, ok = newton_batch(prob, X0, params, tol=tol)
    roots = [X[:, b] for b in np.flatnonzero(ok)]
    failed = int(np.count_nonzero(~ok))
    sols = []
    for x in dedupe_points(roots, dedup_tol):
        try:
            sols.append(newton_solve(prob, x, params, tol=tol))
        except (NonConvergenceError, ShootingDivergence):
            failed += 1
    sols.sort(key=lambda s: tuple(s.x))
    return MultistartResult(sols, failed)


def dirichlet_problem(system, method, mesh, left, right, binding=("mu:0",), mu=(), name=""):
    bc = BoundaryCondition("dirichlet", left, right, mesh.tau)
    return ShootingProblem(system if not isinstance(system, str) else get_system(system),
                           method, mesh, bc, binding, mu, name)


def neumann_problem(system, method, mesh, left, right, binding=("mu:0",), mu=(), name=""):
    bc = BoundaryCondition("neumann", left, right, mesh.tau)
    return ShootingProblem(system if not isinstance(system, str) else get_system(system),
                           method, mesh, bc, binding, mu, name)
