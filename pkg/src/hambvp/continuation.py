"""Pseudo-arclength continuation, fold refinement and bifurcation diagrams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .shooting import (NonConvergenceError, ShootingDivergence, ShootingProblem, dedupe_points,
                       multistart_sweep, newton_solve, residual)
from .systems import eval_system

CORRECTOR_TOL = 1e-10
CORRECTOR_MAX_ITER = 12
MAX_STEP_HALVINGS = 5
FOLD_TOL = 1e-10


class ContinuationError(RuntimeError):
    pass


class EmptyDiagramError(ContinuationError):
    pass


@dataclass
class BranchPoint:
    lam: float
    x: np.ndarray
    tangent: np.ndarray          # unit vector (dlam/ds, dx/ds)
    det: float
    residual_norm: float
    functionals: dict = field(default_factory=dict)
    tag: str = "regular"

    @property
    def y(self):
        return np.concatenate([[self.lam], self.x])


@dataclass
class Branch:
    points: list
    problem: object
    params: tuple
    lam_index: int = 0
    ds: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def lams(self):
        return np.array([p.lam for p in self.points])

    @property
    def xs(self):
        return np.array([p.x for p in self.points])

    @property
    def ys(self):
        return np.array([p.y for p in self.points])

    @property
    def folds(self):
        return [p for p in self.points if p.tag == "fold"]


# ---------------------------------------------------------------------------
# evaluation helpers

def _params_with(params, lam_index, lam):
    p = list(params)
    p[lam_index] = lam
    return tuple(p)


def _ext_jacobian(prob, x, lam, params, lam_index, order=1):
    out = residual(prob, list(x), _params_with(params, lam_index, lam), (lam_index,), order=order)
    return out


def _null_vector(J, prev=None, direction=1.0):
    """Unit kernel vector of the ``m x (m+1)`` matrix ``J`` in ``(lam, x)`` ordering."""
    # J columns are (x_1..x_m, lam); reorder to (lam, x)
    Jr = np.concatenate([J[:, -1:], J[:, :-1]], axis=1)
    _, _, vt = np.linalg.svd(Jr)
    t = vt[-1]
    if prev is not None:
        if np.dot(t, prev) < 0:
            t = -t
    elif t[0] * direction < 0 or (t[0] == 0 and direction < 0):
        t = -t
    return t


def _make_point(prob, y, J, r, tangent, functionals, params, lam_index, tag="regular"):
    m = prob.m
    det = float(np.linalg.det(J[:, :m]))
    fvals = evaluate_functionals(prob, y[1:], _params_with(params, lam_index, y[0]), functionals)
    return BranchPoint(float(y[0]), np.array(y[1:], dtype=float), np.asarray(tangent, dtype=float),
                       det, float(np.linalg.norm(r)), fvals, tag)


def evaluate_functionals(prob, x, params, functionals):
    """Functionals of a solution: ``l2norm-q``, ``energy`` or ``x<k>``."""
    out = {}
    traj = None
    for name in functionals:
        if name.startswith("x") and name[1:].isdigit():
            out[name] = float(x[int(name[1:])])
        elif name == "l2norm-q":
            if traj is None:
                traj = _trajectory(prob, x, params)
            out[name] = l2norm_q(prob.mesh.times, traj[:, :prob.system.n])
        elif name == "energy":
            z0 = np.array(prob.initial_state(list(x), params), dtype=float)
            mu, _, _ = prob._apply(params)
            out[name] = float(eval_system(prob.system, z0, [float(v) for v in mu])[0])
        else:
            raise KeyError(f"unknown functional {name!r}")
    return out


def _trajectory(prob, x, params):
    _, traj = prob.residual_jets([float(v) for v in x], params, seed_x=False, record=True)
    return traj


def l2norm_q(times, q):
    """``sqrt(int |q|^2 dt)`` by the trapezoidal rule over mesh samples."""
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    return float(math.sqrt(max(0.0, np.trapezoid(np.sum(q * q, axis=1), np.asarray(times)))))


# ---------------------------------------------------------------------------
# correctors

def _correct(prob, y_pred, t, params, lam_index, tol=CORRECTOR_TOL, max_iter=CORRECTOR_MAX_ITER):
    """Newton on ``r(y) = 0``, ``t . (y - y_pred) = 0``; ``None`` on failure or divergence."""
    try:
        return _correct_raw(prob, y_pred, t, params, lam_index, tol, max_iter)
    except (ShootingDivergence, ArithmeticError):
        return None


def _correct_raw(prob, y_pred, t, params, lam_index, tol, max_iter):
    y = y_pred.copy()
    prev = math.inf
    for _ in range(max_iter):
        r, J = _ext_jacobian(prob, y[1:], y[0], params, lam_index)
        norm = float(np.linalg.norm(r))
        if not np.isfinite(norm) or norm > 1e3 * prev + 1e-8:
            return None
        Jr = np.concatenate([J[:, -1:], J[:, :-1]], axis=1)
        A = np.vstack([Jr, t[None, :]])
        g = np.concatenate([r, [np.dot(t, y - y_pred)]])
        try:
            dy = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            return None
        y = y - dy
        if norm <= tol and np.max(np.abs(dy)) <= 1e-9:
            r, J = _ext_jacobian(prob, y[1:], y[0], params, lam_index)
            if float(np.linalg.norm(r)) <= tol:
                return y, r, J
        prev = norm
    r, J = _ext_jacobian(prob, y[1:], y[0], params, lam_index)
    if float(np.linalg.norm(r)) <= tol:
        return y, r, J
    return None


def _solve_at_lam(prob, x0, lam, params, lam_index, tol=CORRECTOR_TOL):
    try:
        sol = newton_solve(prob, x0, _params_with(params, lam_index, lam), tol=tol, max_iter=20)
    except (NonConvergenceError, ShootingDivergence, ArithmeticError):
        return None
    y = np.concatenate([[lam], sol.x])
    r, J = _ext_jacobian(prob, sol.x, lam, params, lam_index)
    return y, r, J


# ---------------------------------------------------------------------------
# branch tracing

def trace_branch(prob, seed, lam_range, ds=0.05, max_points=2000, params=None, lam_index=0,
                 direction=1, functionals=(), refine_folds=True) -> Branch:
    """Trace a solution branch through ``seed`` over ``lam_range``.

    ``seed`` is a :class:`~hambvp.shooting.BvpSolution` or a pair
    ``(x, params)``.  ``direction`` is ``+1`` or ``-1`` (initial sign of
    ``dlam/ds``) or ``0`` for both directions joined through the seed.
    """
    if not ds > 0:
        raise ValueError("ds must be positive")
    lo, hi = sorted(float(v) for v in lam_range)
    if hasattr(seed, "x"):
        x0, seed_params = np.asarray(seed.x, dtype=float), tuple(seed.params)
    else:
        x0, seed_params = np.asarray(seed[0], dtype=float), tuple(seed[1])
    params = tuple(seed_params if params is None else params)
    lam0 = float(seed_params[lam_index])
    if direction == 0:
        back = _trace_one(prob, x0, lam0, params, lam_index, lo, hi, ds, max_points, -1, functionals)
        pts = back[::-1]
        for p in pts:
            p.tangent = -p.tangent
        if not (len(back) > 3 and np.linalg.norm(back[-1].y - back[0].y) <= ds):
            fwd = _trace_one(prob, x0, lam0, params, lam_index, lo, hi, ds, max_points, 1,
                             functionals)
            pts = pts[:-1] + fwd
    else:
        pts = _trace_one(prob, x0, lam0, params, lam_index, lo, hi, ds, max_points, direction,
                         functionals)
    branch = Branch(pts, prob, params, lam_index, ds,
                    {"problem": getattr(prob, "name", ""), "method": getattr(prob, "method", ""),
                     "N": getattr(getattr(prob, "mesh", None), "N", None)})
    if refine_folds:
        folds = detect_fold(branch, functionals=functionals)
        _insert_folds(branch, folds)
    return branch


def _trace_one(prob, x0, lam0, params, lam_index, lo, hi, ds, max_points, direction, functionals):
    start = _solve_at_lam(prob, x0, lam0, params, lam_index)
    if start is None:
        raise ContinuationError("corrector failed at the seed point")
    y, r, J = start
    t = _null_vector(J, direction=direction)
    pts = [_make_point(prob, y, J, r, t, functionals, params, lam_index)]
    h = ds
    prev_y = None
    while len(pts) < max_points:
        pred_dir = t if prev_y is None else (y - prev_y) / np.linalg.norm(y - prev_y)
        if np.dot(pred_dir, t) < 0:
            pred_dir = t
        res = None
        for _ in range(MAX_STEP_HALVINGS + 1):
            y_pred = y + h * pred_dir
            res = _correct(prob, y_pred, pred_dir, params, lam_index)
            if res is not None and np.linalg.norm(res[0] - y) <= 2.0 * ds and \
                    np.linalg.norm(res[0] - y) > 0.1 * h:
                break
            res = None
            h *= 0.5
        if res is None:
            break
        y_new, r_new, J_new = res
        t_new = _null_vector(J_new, prev=t)
        if not lo <= y_new[0] <= hi:
            lam_b = hi if y_new[0] > hi else lo
            frac = (lam_b - y[0]) / (y_new[0] - y[0])
            guess = y[1:] + frac * (y_new[1:] - y[1:])
            end = _solve_at_lam(prob, guess, lam_b, params, lam_index)
            if end is not None and np.linalg.norm(end[0] - y) <= 2.0 * ds:
                yb, rb, Jb = end
                tb = _null_vector(Jb, prev=t)
                pts.append(_make_point(prob, yb, Jb, rb, tb, functionals, params, lam_index))
            break
        closed = len(pts) > 3 and _passes_near(y, y_new, pts[0].y, 0.5 * ds) and \
            np.dot(t_new, pts[0].tangent) > 0
        prev_y, y, t = y, y_new, t_new
        pts.append(_make_point(prob, y, J_new, r_new, t, functionals, params, lam_index))
        if closed:
            # isola: the branch returned to its first point
            break
        h = min(ds, 2.0 * h)
    return pts


def _passes_near(a, b, c, tol):
    d = b - a
    s = float(np.clip(np.dot(c - a, d) / max(np.dot(d, d), 1e-300), 0.0, 1.0))
    return float(np.linalg.norm(a + s * d - c)) <= tol


# ---------------------------------------------------------------------------
# folds

def refine_fold(prob, x, lam, v, params, lam_index=0, tol=1e-12, max_iter=30):
    """Newton on ``r = 0``, ``r_x v = 0``, ``c . v = 1``; returns ``(x, lam, v)`` or ``None``."""
    m = prob.m
    x = np.asarray(x, dtype=float).copy()
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    c = v.copy()
    for _ in range(max_iter):
        r, J, Hs = _ext_jacobian(prob, x, lam, params, lam_index, order=2)
        Jx = J[:, :m]
        Jl = J[:, m]
        F = np.concatenate([r, Jx @ v, [c @ v - 1.0]])
        # d(r_x v)/d(x, lam)
        Dv = np.einsum("ikj,k->ij", Hs[:, :m, :], v)
        A = np.zeros((2 * m + 1, 2 * m + 1))
        A[:m, :m] = Jx
        A[:m, m] = Jl
        A[m:2 * m, :m] = Dv[:, :m]
        A[m:2 * m, m] = Dv[:, m]
        A[m:2 * m, m + 1:] = Jx
        A[2 * m, m + 1:] = c
        try:
            d = np.linalg.solve(A, F)
        except np.linalg.LinAlgError:
            return None
        x = x - d[:m]
        lam = lam - d[m]
        v = v - d[m + 1:]
        if not np.all(np.isfinite(x)) or not np.isfinite(lam):
            return None
        if np.max(np.abs(F)) <= tol or np.max(np.abs(d)) <= 1e-14 * (1 + np.max(np.abs(x))):
            return x, float(lam), v
    r, J = _ext_jacobian(prob, x, lam, params, lam_index)
    if np.linalg.norm(r) <= 1e-9 and np.linalg.norm(J[:, :m] @ v) <= 1e-9:
        return x, float(lam), v
    return None


def detect_fold(branch: Branch, functionals=()):
    """Folds between consecutive points where ``dlam/ds`` changes sign, refined by Newton."""
    pts = [p for p in branch.points if p.tag != "fold"]
    if len(pts) < 3:
        return []
    prob, params, li = branch.problem, branch.params, branch.lam_index
    out = []
    for a, b in zip(pts, pts[1:]):
        if a.tangent[0] * b.tangent[0] >= 0:
            continue
        w = abs(a.tangent[0]) / (abs(a.tangent[0]) + abs(b.tangent[0]))
        y0 = a.y + w * (b.y - a.y)
        v0 = a.tangent[1:] + w * (b.tangent[1:] - a.tangent[1:])
        if np.linalg.norm(v0) == 0:
            continue
        try:
            res = refine_fold(prob, y0[1:], y0[0], v0, params, li)
        except (ShootingDivergence, ArithmeticError):
            res = None
        if res is None:
            continue
        x, lam, v = res
        r, J = _ext_jacobian(prob, x, lam, params, li)
        t = _null_vector(J, prev=a.tangent + b.tangent)
        pt = _make_point(prob, np.concatenate([[lam], x]), J, r, t, functionals, params, li, "fold")
        out.append(pt)
    return out


def _insert_folds(branch, folds):
    for f in folds:
        pts = branch.points
        # place between the bracketing pair (nearest consecutive pair)
        best, where = math.inf, None
        for i in range(len(pts) - 1):
            if pts[i].tangent[0] * pts[i + 1].tangent[0] < 0:
                d = np.linalg.norm(pts[i].y - f.y) + np.linalg.norm(pts[i + 1].y - f.y)
                if d < best:
                    best, where = d, i + 1
        if where is not None:
            pts.insert(where, f)


def fold_singular_values(branch_point, prob, params, lam_index=0):
    _, J = _ext_jacobian(prob, branch_point.x, branch_point.lam, params, lam_index)
    return np.linalg.svd(J[:, :prob.m], compute_uv=False)


# ---------------------------------------------------------------------------
# branch geometry

def densify(branch: Branch, samples=16, scale=None):
    """Cubic Hermite resampling of a branch in ``(lam, x)`` using stored tangents."""
    ys = branch.ys
    if scale is not None:
        ys = ys / scale
    ts = np.array([p.tangent for p in branch.points])
    if scale is not None:
        ts = ts / scale
        ts /= np.linalg.norm(ts, axis=1, keepdims=True)
    if len(ys) < 2:
        return ys
    out = [ys[:1]]
    s = np.linspace(0.0, 1.0, samples + 1)[1:, None]
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    for k in range(len(ys) - 1):
        L = np.linalg.norm(ys[k + 1] - ys[k])
        out.append(h00 * ys[k] + h10 * L * ts[k] + h01 * ys[k + 1] + h11 * L * ts[k + 1])
    return np.vstack(out)


def _point_to_polyline(P, Q):
    """Distance from each row of ``P`` to the polyline through rows of ``Q``."""
    if len(Q) == 1:
        return np.linalg.norm(P - Q[0], axis=1)
    A, B = Q[:-1], Q[1:]
    AB = B - A
    L2 = np.maximum(np.sum(AB * AB, axis=1), 1e-300)
    out = np.empty(len(P))
    for i, p in enumerate(P):
        tt = np.clip(np.sum((p - A) * AB, axis=1) / L2, 0.0, 1.0)
        d = A + tt[:, None] * AB - p
        out[i] = np.sqrt(np.min(np.sum(d * d, axis=1)))
    return out


def branch_distance(a: Branch, b: Branch, samples=16):
    """Symmetric Hausdorff distance between two branches in ``(lam, x)``.

    Each branch's points are compared with the other's Hermite-interpolated
    curve, so branches sampled at different step sizes can be compared.
    """
    da = _point_to_polyline(a.ys, densify(b, samples))
    db = _point_to_polyline(b.ys, densify(a, samples))
    return float(max(np.max(da), np.max(db)))


# ---------------------------------------------------------------------------
# diagrams

@dataclass
class Diagram:
    branches: list
    functional: str
    lam_range: tuple
    seeds: list = field(default_factory=list)

    def rows(self):
        """``(branch_id, point_index, lam, functional, tag)`` in deterministic order."""
        out = []
        for bid, br in enumerate(self.branches):
            for i, p in enumerate(br.points):
                out.append((bid, i, p.lam, p.functionals[self.functional], p.tag))
        return out

    @property
    def folds(self):
        return [(bid, p) for bid, br in enumerate(self.branches) for p in br.folds]


def _on_branches(y, branches, tol):
    for br in branches:
        if len(br) < 2:
            if np.linalg.norm(br.ys[0] - y) <= tol:
                return True
            continue
        if _point_to_polyline(y[None, :], densify(br, 8))[0] <= tol:
            return True
    return False


def diagram(prob, lam_range, functional="l2norm-q", params=(), lam_index=0, seed_lams=None,
            grid=None, ds=0.05, max_points=2000, tol=1e-4) -> Diagram:
    """Multistart at several parameter values, trace every new seed, merge branches.

    Branch ids follow the sorted seed order ``(lam, x)``.
    """
    lo, hi = sorted(float(v) for v in lam_range)
    if seed_lams is None:
        seed_lams = np.linspace(lo, hi, 5)
    if grid is None:
        raise ValueError("diagram needs a multistart grid")
    params = tuple(params) if params else (0.0,) * prob.param_count
    seeds = []
    for lam in seed_lams:
        ps = _params_with(params, lam_index, float(lam))
        for sol in multistart_sweep(prob, ps, grid):
            seeds.append((float(lam), sol))
    if not seeds:
        raise EmptyDiagramError("no seed solutions found")
    seeds.sort(key=lambda s: (s[0], tuple(s[1].x)))
    fnames = [functional] if functional else []
    branches = []
    for lam, sol in seeds:
        y = np.concatenate([[lam], sol.x])
        if _on_branches(y, branches, tol):
            continue
        try:
            br = trace_branch(prob, sol, (lo, hi), ds, max_points, params=sol.params,
                              lam_index=lam_index, direction=0, functionals=fnames)
        except ContinuationError:
            continue
        branches.append(br)
    return Diagram(branches, functional, (lo, hi), [(lam, s.x) for lam, s in seeds])
