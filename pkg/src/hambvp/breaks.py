"""Break magnitudes of numerically perturbed pitchfork bifurcations.

A perfect pitchfork of a one-parameter residual ``r(x, mu)`` is a cusp point
(corank 1, vanishing second derivative along the kernel) that also lies on
the solution set.  A discretisation generically moves the solution set off
the cusp by ``rho = w . r`` at the cusp.  The branch that detaches then turns
at a fold whose parameter distance from the cusp behaves like ``|rho|^(2/3)``.

The break magnitude reported here is that distance, ``|mu_fold - mu_cusp|``,
divided by the width of the plotted parameter range.  Cusp and fold are
solved in extended precision (``numpy.longdouble``) because for symplectic
methods on uniform meshes ``rho`` falls below double round-off already at
moderate step counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet2

EXT = np.longdouble


class UnmeasurableBreakError(ValueError):
    """Diagram does not show a broken or perfect pitchfork."""


class CuspNotFoundError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# evaluation in a chosen precision (batched over columns of Y)

def eval_order2(prob, Y, params=None, lam_index=0, dtype=EXT):
    """Residual, Jacobian ``[r_x | r_lam]`` and Hessian at the columns of ``Y``.

    ``Y`` has shape ``(m + 1, B)`` holding ``(x, lam)``.  Returns ``r (m, B)``,
    ``G (B, m, m + 1)`` and ``H (B, m, m + 1, m + 1)`` in ``dtype``.
    """
    m = prob.m
    Y = np.asarray(Y, dtype=dtype)
    params = list(params) if params is not None else [0.0] * prob.param_count
    params = [dtype(v) for v in params]
    params[lam_index] = Y[m]
    r = prob.residual_jets([Y[i] for i in range(m)], params, seed_x=True,
                           seed_params=(lam_index,), order=2)
    s = m + 1
    B = Y.shape[1]
    r = [jets.as_jet(v, s, 2) for v in r]
    value = np.array([np.broadcast_to(v.value, (B,)) for v in r], dtype=dtype)
    grad = np.stack([np.broadcast_to(v.grad, (B, s)) for v in r], axis=1).astype(dtype)
    hess = np.stack([np.broadcast_to(v.hess, (B, s, s)) for v in r], axis=1).astype(dtype)
    return value, grad, hess


def _kernel_pair(J):
    """Unit right and left kernel vectors of nearly singular ``(B, m, m)`` matrices."""
    B, m, _ = J.shape
    if m == 1:
        one = np.ones((B, 1), dtype=J.dtype)
        return one, one
    if m == 2:
        adj = np.empty_like(J)
        adj[:, 0, 0], adj[:, 0, 1] = J[:, 1, 1], -J[:, 0, 1]
        adj[:, 1, 0], adj[:, 1, 1] = -J[:, 1, 0], J[:, 0, 0]
        idx = np.arange(B)
        ci = np.argmax(np.sum(adj * adj, axis=1), axis=1)
        ri = np.argmax(np.sum(adj * adj, axis=2), axis=1)
        v = adj[idx, :, ci]
        w = adj[idx, ri, :]
        v = v / np.sqrt(np.sum(v * v, axis=1, keepdims=True))
        w = w / np.sqrt(np.sum(w * w, axis=1, keepdims=True))
        # deterministic orientation: largest component positive
        v *= np.where(v[idx, np.argmax(np.abs(v), axis=1)] < 0, -1, 1)[:, None]
        w *= np.where(w[idx, np.argmax(np.abs(w), axis=1)] < 0, -1, 1)[:, None]
        return v, w
    raise NotImplementedError("kernel vectors implemented for m <= 2")


def _det(J):
    m = J.shape[-1]
    if m == 1:
        return J[..., 0, 0]
    if m == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    raise NotImplementedError("determinants implemented for m <= 2")


def _complement(w):
    """Orthogonal complement rows of unit vectors ``w (B, m)``: shape ``(B, m - 1, m)``."""
    B, m = w.shape
    if m == 1:
        return np.zeros((B, 0, 1), dtype=w.dtype)
    if m == 2:
        return np.stack([-w[:, 1], w[:, 0]], axis=1)[:, None, :]
    raise NotImplementedError


def cusp_equations(prob, Y, params=None, lam_index=0, dtype=EXT, frame=None):
    """Cusp system ``(det r_x, w . r_xx[v, v], P_perp r)`` and ``rho = w . r`` per column.

    ``frame`` fixes ``(v, w)`` (shape ``(m,)`` each) instead of recomputing
    them from ``r_x``, which keeps finite-difference Jacobians smooth.
    """
    m = prob.m
    r, G, H = eval_order2(prob, Y, params, lam_index, dtype)
    J = G[:, :, :m]
    if frame is None:
        v, w = _kernel_pair(J)
    else:
        B = J.shape[0]
        v = np.broadcast_to(frame[0], (B, m))
        w = np.broadcast_to(frame[1], (B, m))
    kappa = np.einsum("bi,bijk,bj,bk->b", w, H[:, :, :m, :m], v, v)
    perp = np.einsum("bki,ib->kb", _complement(w), r)
    E = np.concatenate([_det(J)[None, :], kappa[None, :], perp], axis=0)
    rho = np.einsum("bi,ib->b", w, r)
    return E, rho, (r, G, H, v, w)


def _newton_fd(fun, y0, dtype, tol, max_iter=40, step=None):
    """Damped Newton with a batched central-difference Jacobian.

    ``fun`` maps columns ``(k, B)`` to residual columns ``(k, B)``.  Residuals
    are evaluated in ``dtype``; linear solves run in double precision.
    """
    y = np.array(y0, dtype=dtype)
    k = y.size
    h = dtype(step if step is not None else (1e-7 if dtype == EXT else 1e-5))
    eps = float(np.finfo(dtype).eps)

    def stencil(yc):
        e = h * np.maximum(dtype(1), np.abs(yc))
        cols = [yc]
        for j in range(k):
            d = np.zeros(k, dtype=dtype)
            d[j] = e[j]
            cols += [yc + d, yc - d]
        with np.errstate(all="ignore"):
            try:
                F = fun(np.stack(cols, axis=1))
            except (FloatingPointError, ArithmeticError):
                return None, None
        if not np.all(np.isfinite(np.asarray(F, dtype=float))):
            return None, None
        A = np.stack([(F[:, 1 + 2 * j] - F[:, 2 + 2 * j]) / (2 * e[j]) for j in range(k)], axis=1)
        return F[:, 0], A

    F, A = stencil(y)
    if F is None:
        raise FloatingPointError("residual not finite at the initial guess")
    best = (float(np.max(np.abs(F))), y.copy())
    for _ in range(max_iter):
        nF = float(np.max(np.abs(F)))
        if nF <= tol:
            break
        try:
            d = np.linalg.solve(np.asarray(A, dtype=float), np.asarray(F, dtype=float)).astype(dtype)
        except np.linalg.LinAlgError:
            break
        lam = dtype(1)
        for _h in range(12):
            yt = y - lam * d
            Ft, At = stencil(yt)
            if Ft is not None and float(np.max(np.abs(Ft))) < max(nF, 1e3 * tol):
                break
            lam = lam / 2
        else:
            break
        if Ft is None:
            break
        small = float(np.max(np.abs(y - yt))) <= 4 * eps * max(1.0, float(np.max(np.abs(yt))))
        y, F, A = yt, Ft, At
        nF = float(np.max(np.abs(F)))
        if nF < best[0]:
            best = (nF, y.copy())
        if small:
            break
    return best[1], best[0]


def solve_cusp(prob, guess, params=None, lam_index=0, dtype=EXT, tol=None):
    """Solve the cusp equations from ``guess = (x..., lam)``; returns ``(y, rho, info)``."""
    tol = tol if tol is not None else (1e-16 if dtype == EXT else 1e-12)
    fun = lambda Y: cusp_equations(prob, Y, params, lam_index, dtype)[0]
    try:
        y, res = _newton_fd(fun, guess, dtype, tol)
    except FloatingPointError as exc:
        raise CuspNotFoundError(str(exc)) from None
    if not res <= 1e3 * tol:
        raise CuspNotFoundError(f"cusp equations not solved (residual {res:.3e})")
    E, rho, info = cusp_equations(prob, y[:, None], params, lam_index, dtype)
    r, G, H, v, w = info
    return y, rho[0], (r[:, 0], G[0], H[0], v[0], w[0])


def fold_equations(prob, Y, params=None, lam_index=0, dtype=EXT):
    """``(r, det r_x)`` and its analytic Jacobian, per column of ``Y``."""
    m = prob.m
    r, G, H = eval_order2(prob, Y, params, lam_index, dtype)
    J = G[:, :, :m]
    F = np.concatenate([r, _det(J)[None, :]], axis=0)
    B = Y.shape[1]
    A = np.zeros((B, m + 1, m + 1), dtype=dtype)
    A[:, :m, :] = G
    if m == 1:
        A[:, m, :] = H[:, 0, 0, :]
    elif m == 2:
        adj = np.empty_like(J)
        adj[:, 0, 0], adj[:, 0, 1] = J[:, 1, 1], -J[:, 0, 1]
        adj[:, 1, 0], adj[:, 1, 1] = -J[:, 1, 0], J[:, 0, 0]
        A[:, m, :] = np.einsum("bji,bijk->bk", adj, H[:, :, :m, :])
    else:
        raise NotImplementedError("fold refinement supports m <= 2")
    return F, A


def solve_fold(prob, guess, params=None, lam_index=0, dtype=EXT, tol=None, max_iter=40):
    """Damped Newton on ``r = 0``, ``det r_x = 0`` in ``(x, lam)``."""
    tol = tol if tol is not None else (1e-17 if dtype == EXT else 1e-13)
    eps = float(np.finfo(dtype).eps)
    y = np.array(guess, dtype=dtype)

    def ev(yy):
        with np.errstate(all="ignore"):
            try:
                F, A = fold_equations(prob, yy[:, None], params, lam_index, dtype)
            except (FloatingPointError, ArithmeticError):
                return None, None
        if not np.all(np.isfinite(np.asarray(F, dtype=float))):
            return None, None
        return F[:, 0], A[0]

    F, A = ev(y)
    if F is None:
        return y, math.inf
    best = (float(np.max(np.abs(F))), y.copy())
    for _ in range(max_iter):
        nF = float(np.max(np.abs(F)))
        if nF <= tol:
            break
        try:
            d = np.linalg.solve(np.asarray(A, dtype=float), np.asarray(F, dtype=float)).astype(dtype)
        except np.linalg.LinAlgError:
            break
        lam = dtype(1)
        for _h in range(12):
            yt = y - lam * d
            Ft, At = ev(yt)
            if Ft is not None and float(np.max(np.abs(Ft))) < max(nF, 1e3 * tol):
                break
            lam = lam / 2
        else:
            break
        small = float(np.max(np.abs(y - yt))) <= 4 * eps * max(1.0, float(np.max(np.abs(yt))))
        y, F, A = yt, Ft, At
        if float(np.max(np.abs(F))) < best[0]:
            best = (float(np.max(np.abs(F))), y.copy())
        if small:
            break
    return best[1], best[0]


# ---------------------------------------------------------------------------
# break magnitude from a cusp

@dataclass
class BreakResult:
    magnitude: float
    mu_cusp: float
    x_cusp: np.ndarray
    rho: float
    mu_fold: float | None
    x_fold: np.ndarray | None
    width: float


def _curve_point(prob, yc, v, perp, s, guess, params, lam_index, dtype):
    """Point on ``det r_x = 0``, ``P_perp r = 0`` with ``v . (x - x_c) = s``."""
    m = prob.m

    def fun(Y):
        r, G, _ = eval_order2(prob, Y, params, lam_index, dtype)
        along = v @ (Y[:m] - yc[:m, None]) - s
        return np.concatenate([_det(G[:, :, :m])[None, :], perp @ r, along[None, :]], axis=0)

    y, res = _newton_fd(fun, guess, dtype, 1e-16 if dtype == EXT else 1e-12)
    return y, res


def pitchfork_break(prob, guess, params=None, lam_index=0, width=1.0, dtype=EXT,
                    crossing_tol=None) -> BreakResult:
    """Cusp near ``guess`` and the fold of the detached branch.

    Returns the break magnitude ``|mu_fold - mu_cusp| / width``; zero when
    ``rho`` vanishes to working precision (perfect pitchfork).
    """
    m = prob.m
    yc, rho, info = solve_cusp(prob, guess, params, lam_index, dtype)
    r, G, H, v, w = info
    scale = max(1.0, float(np.max(np.abs(np.asarray(G, dtype=float)))))
    eps = float(np.finfo(dtype).eps)
    crossing_tol = crossing_tol if crossing_tol is not None else 64 * eps * scale
    mu_c = float(yc[m])
    if abs(float(rho)) <= crossing_tol:
        return BreakResult(0.0, mu_c, np.asarray(yc[:m], dtype=float), float(rho), mu_c,
                           np.asarray(yc[:m], dtype=float), width)
    perp = _complement(w[None, :])[0]

    def phi(s, guess_y):
        y, res = _curve_point(prob, yc, v, perp, s, guess_y, params, lam_index, dtype)
        rr = eval_order2(prob, y[:, None], params, lam_index, dtype)[0][:, 0]
        return w @ rr, y

    # cubic coefficient of the reduced function along the fold curve
    delta = dtype(1e-2)
    guess_p = yc.copy()
    guess_p[:m] += delta * v
    guess_m = yc.copy()
    guess_m[:m] -= delta * v
    fp, _ = phi(delta, guess_p)
    fm, _ = phi(-delta, guess_m)
    a = -(fp - fm) / (4 * delta ** 3)
    if a == 0:
        raise UnmeasurableBreakError("degenerate cusp (vanishing cubic term)")
    s_target = float(np.cbrt(float(rho / (2 * a))))
    # march along the fold curve to the predicted fold, then secant on phi
    nsub = max(1, int(math.ceil(abs(s_target) / 0.05)))
    y = yc.copy()
    for k in range(1, nsub + 1):
        s = dtype(s_target * k / nsub)
        g = y.copy()
        f, y = phi(s, g)
    s0, f0 = dtype(s_target), f
    s1 = s0 * dtype(1.0 + 1e-3)
    f1, y1 = phi(s1, y)
    for _ in range(30):
        if f1 == f0:
            break
        s2 = s1 - f1 * (s1 - s0) / (f1 - f0)
        s0, f0 = s1, f1
        s1 = s2
        f1, y1 = phi(s1, y1)
        if abs(float(f1)) <= 1e-17 * scale or abs(float(s1 - s0)) <= 1e-18:
            break
    yf, res = solve_fold(prob, y1, params, lam_index, dtype)
    mu_f = float(yf[m])
    mag = abs(float(yf[m] - yc[m])) / width
    return BreakResult(mag, mu_c, np.asarray(yc[:m], dtype=float), float(rho), mu_f,
                       np.asarray(yf[:m], dtype=float), width)


def break_magnitude(branches, prob=None, params=None, lam_index=0, width=None, dtype=EXT,
                    tol=1e-6) -> float:
    """Break magnitude of a diagram near a pitchfork.

    ``branches`` is a list of :class:`~hambvp.continuation.Branch` (or a
    diagram).  The fold points of the branches seed the cusp solve; the break
    is ``|mu_fold - mu_cusp|`` over the parameter range width, minimised over
    folds whose cusp-predicted fold matches the traced fold.  A diagram
    without folds but with two crossing branches is a perfect pitchfork and
    returns 0.
    """
    if hasattr(branches, "branches"):
        if width is None:
            width = branches.lam_range[1] - branches.lam_range[0]
        branches = branches.branches
    branches = list(branches)
    if not branches:
        raise UnmeasurableBreakError("no branches")
    prob = prob if prob is not None else branches[0].problem
    params = params if params is not None else branches[0].params
    lam_index = branches[0].lam_index
    if width is None:
        lams = np.concatenate([b.lams for b in branches])
        width = float(lams.max() - lams.min()) or 1.0
    best = None
    for br in branches:
        for f in br.folds:
            guess = np.concatenate([f.x, [f.lam]])
            try:
                res = pitchfork_break(prob, guess, params, lam_index, width, dtype)
            except (CuspNotFoundError, UnmeasurableBreakError, np.linalg.LinAlgError):
                continue
            if res.mu_fold is None:
                continue
            dist = abs(res.mu_fold - f.lam) + float(np.max(np.abs(res.x_fold - f.x)))
            if res.magnitude == 0.0 or dist <= tol * max(1.0, width):
                if best is None or res.magnitude < best:
                    best = res.magnitude
    if best is not None:
        return best
    if _branches_cross(branches):
        return 0.0
    raise UnmeasurableBreakError("diagram has neither a detached fold near a cusp nor a crossing")


def _branches_cross(branches, tol=1e-12):
    from .continuation import _point_to_polyline
    for i, a in enumerate(branches):
        for b in branches[i + 1:]:
            if len(a) and len(b) and np.min(_point_to_polyline(a.ys, b.ys)) <= tol:
                return True
    return False


# ---------------------------------------------------------------------------
# locating cusps by grid scan (one unknown)

def locate_cusps(prob, x_range, lam_range, params=None, lam_index=0, grid=64):
    """Cusp candidates of a one-unknown family: sign changes of ``r_x`` and ``r_xx`` on a grid."""
    if prob.m != 1:
        raise NotImplementedError("grid cusp location supports one unknown")
    xs = np.linspace(*x_range, grid)
    ls = np.linspace(*lam_range, grid)
    X, Lm = np.meshgrid(xs, ls, indexing="ij")
    params = list(params) if params is not None else [0.0] * prob.param_count
    ps = list(params)
    ps[lam_index] = Jet2.variable(Lm, 1, 2, 2)
    with np.errstate(all="ignore"):
        try:
            r = prob.residual_jets([Jet2.variable(X, 0, 2, 2)], ps, seed_x=False, order=2)[0]
        except (FloatingPointError, ArithmeticError):
            return []
    rx = r.grad[..., 0]
    rxx = r.hess[..., 0, 0]
    out = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            a = rx[i:i + 2, j:j + 2]
            b = rxx[i:i + 2, j:j + 2]
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                continue
            if a.min() < 0 < a.max() and b.min() < 0 < b.max():
                out.append(np.array([0.5 * (xs[i] + xs[i + 1]), 0.5 * (ls[j] + ls[j + 1])]))
    return out


# ---------------------------------------------------------------------------
# scaling fits

@dataclass
class ScalingFit:
    model: str
    rate: float
    residual_exponential: float
    residual_power: float
    beta: float
    kappa: float


def scaling_fit(N_list, breaks, tau=1.0) -> ScalingFit:
    """Compare ``log b ~ alpha + beta N`` with ``log b ~ alpha + kappa log h``.

    The model with the smaller sum of squared residuals wins; its rate
    (``beta`` or ``kappa``) is reported.
    """
    N = np.asarray(N_list, dtype=float)
    b = np.asarray(breaks, dtype=float)
    if N.size != b.size:
        raise ValueError("N_list and breaks differ in length")
    if N.size < 4:
        raise ValueError("scaling fit needs at least four data points")
    if np.any(~(b > 0)):
        raise ValueError("break magnitudes must be positive")
    y = np.log(b)
    h = tau / N
    ce, re_, *_ = np.polyfit(N, y, 1, full=True)
    cp, rp, *_ = np.polyfit(np.log(h), y, 1, full=True)
    res_e = float(re_[0]) if len(re_) else 0.0
    res_p = float(rp[0]) if len(rp) else 0.0
    beta, kappa = float(ce[0]), float(cp[0])
    if res_e < res_p:
        return ScalingFit("exponential", beta, res_e, res_p, beta, kappa)
    return ScalingFit("power", kappa, res_e, res_p, beta, kappa)
