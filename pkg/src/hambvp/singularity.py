"""Catastrophe classification of residual singularities.

Corank-1 points are classified as folds, cusps and swallowtails (A2, A3, A4)
from derivatives of the Lyapunov-Schmidt reduced residual along the kernel.
Corank-2 points are classified as hyperbolic or elliptic umbilics (D4plus,
D4minus) by the discriminant of their cubic form.

Level bifurcation sets are computed by grid scans over a *level family*:
two phase coordinates ``(u1, u2)`` plus one slice coordinate ``s``, with a
push-forward to parameter space that makes the residual vanish.  Normal-form
models and Dirichlet/Neumann shooting problems both provide such families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .jets import Jet2
from .breaks import (BreakResult, ScalingFit, UnmeasurableBreakError, break_magnitude,  # noqa: F401
                     locate_cusps, pitchfork_break, scaling_fit, solve_cusp, solve_fold)

CORANK_RTOL = 1e-6
ZERO_TOL = 1e-5
DISC_TOL = 1e-10


class WrongClassifierError(ValueError):
    """The point does not have the corank the classifier expects."""


class DegenerateInputError(ValueError):
    pass


@dataclass
class SingularityRecord:
    cls: str
    phase: np.ndarray
    params: np.ndarray
    corank: int
    kernel: np.ndarray
    derivs: tuple = ()
    cubic: tuple | None = None
    discriminant: float | None = None
    residual: float | None = None


# ---------------------------------------------------------------------------
# discriminant

def umbilic_discriminant(a, b, c, d, tol=DISC_TOL):
    """Discriminant of ``a x^3 + b x^2 y + c x y^2 + d y^3`` and the umbilic class.

    Negative means one real linear factor (hyperbolic, ``D4plus``); positive
    means three distinct real factors (elliptic, ``D4minus``).
    """
    coeffs = np.array([a, b, c, d], dtype=float)
    scale = float(np.max(np.abs(coeffs)))
    if scale <= 1e-10:
        raise DegenerateInputError("cubic form vanishes")
    disc = 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d
    if abs(disc) <= tol * scale ** 4:
        return float(disc), "degenerate"
    return float(disc), ("D4plus" if disc < 0 else "D4minus")


def cubic_from_tensor(T):
    """Coefficients ``(a, b, c, d)`` of ``sum T_ljk v_l v_j v_k / 6`` for a 2x2x2 tensor."""
    T = np.asarray(T, dtype=float)
    # symmetrise; exact for gradient problems
    S = (T + T.transpose(0, 2, 1) + T.transpose(1, 0, 2) + T.transpose(1, 2, 0)
         + T.transpose(2, 0, 1) + T.transpose(2, 1, 0)) / 6.0
    return S[0, 0, 0] / 6.0, S[0, 0, 1] / 2.0, S[0, 1, 1] / 2.0, S[1, 1, 1] / 6.0


# ---------------------------------------------------------------------------
# corank-1 classification

# fourth-order accurate central stencils on s = k*delta, k = -3..3
_STENCILS = {
    1: np.array([0, 1, -8, 0, 8, -1, 0]) / 12.0,
    2: np.array([0, -1, 16, -30, 16, -1, 0]) / 12.0,
    3: np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0,
    4: np.array([-1, 12, -39, 56, -39, 12, -1]) / 6.0,
}


def _fd_jacobian(F, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(F(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * max(1.0, abs(x[j]))
        J[:, j] = (np.atleast_1d(F(x + e)) - np.atleast_1d(F(x - e))) / (2 * e[j])
    return J


def reduced_derivatives(F, x, J=None, step=1e-2, v=None, w=None):
    """Derivatives ``d1..d4`` of the Lyapunov-Schmidt reduced residual along the kernel.

    ``g(s) = w . F(x + s v + u(s))`` where ``u(s)`` is orthogonal to ``v``
    and solves the complementary equations.  Derivatives use fourth-order
    central differences with spacing ``step``.
    """
    x = np.asarray(x, dtype=float)
    m = x.size
    if J is None:
        J = _fd_jacobian(F, x)
    if v is None or w is None:
        U, S, Vt = np.linalg.svd(J)
        v, w = Vt[-1], U[:, -1]
    Vp = _orth_complement(v)
    Wp = _orth_complement(w)

    def g(s):
        base = x + s * v
        if m == 1:
            return float(w @ np.atleast_1d(F(base)))
        c = np.zeros(m - 1)
        for _ in range(30):
            y = base + Vp.T @ c
            val = np.atleast_1d(F(y))
            res = Wp @ val
            if np.max(np.abs(res)) <= 1e-15 * max(1.0, np.max(np.abs(val))):
                break
            A = Wp @ _fd_jacobian(F, y) @ Vp.T
            c = c - np.linalg.solve(A, res)
        return float(w @ np.atleast_1d(F(base + Vp.T @ c)))

    samples = np.array([g(k * step) for k in range(-3, 4)])
    return tuple(float(_STENCILS[k] @ samples) / step ** k for k in (1, 2, 3, 4))


def _orth_complement(v):
    v = np.asarray(v, dtype=float)
    m = v.size
    if m == 1:
        return np.zeros((0, 1))
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(m)]))
    return q[:, 1:m].T


def classify_corank1(F, x, jac=None, scale=None, step=1e-2, params=None, tol=ZERO_TOL):
    """Classify a corank-1 root of ``F`` as ``A2``, ``A3``, ``A4`` or ``degenerate``.

    ``F`` maps an ``m``-vector to an ``m``-vector.  ``jac`` is the Jacobian at
    ``x`` (finite differences if omitted).  A derivative counts as zero when
    ``|d_k| <= tol * scale`` with ``scale = max(1, |J|)`` by default.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    J = np.atleast_2d(np.asarray(jac, dtype=float)) if jac is not None else _fd_jacobian(F, x)
    U, S, Vt = np.linalg.svd(J)
    smax = float(S[0])
    thresh = CORANK_RTOL * max(smax, 1.0)
    corank = int(np.count_nonzero(S <= thresh))
    if corank != 1:
        raise WrongClassifierError(f"expected corank 1, found corank {corank}")
    v, w = Vt[-1], U[:, -1]
    scale = scale if scale is not None else max(1.0, smax)
    _, d2, d3, d4 = reduced_derivatives(F, x, J, step, v, w)
    zero = tol * scale
    if abs(d2) > zero:
        cls = "A2"
    elif abs(d3) > zero:
        cls = "A3"
    elif abs(d4) > zero:
        cls = "A4"
    else:
        cls = "degenerate"
    return SingularityRecord(cls, x, np.asarray(params if params is not None else [], dtype=float),
                             1, v[:, None], (d2, d3, d4))


# ---------------------------------------------------------------------------
# normal forms

NORMAL_FORMS = {
    "D4plus": "x^3 + x y^2 + mu3 (x^2 + y^2) + mu2 y + mu1 x, perturbed by eps (-y, x)",
    "D4minus": "x^3 - x y^2 + mu3 (x^2 + y^2) + mu2 y + mu1 x, perturbed by eps (-y, x)",
    "cusp": "x^4 + mu2 x^2 + mu1 x",
}


@dataclass(frozen=True)
class NormalFormProblem:
    """Gradient field of a universal unfolding plus the non-gradient term ``eps (-y, x)``.

    Residual ``F = grad g_mu + f_eps`` with parameters ``(mu1, mu2, mu3)`` for
    the umbilics and ``(mu1, mu2)`` for the cusp.
    """

    type: str
    epsilon: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.type not in NORMAL_FORMS:
            raise ValueError(f"unknown normal form {self.type!r}")

    @property
    def sign(self):
        return 1.0 if self.type == "D4plus" else -1.0

    @property
    def m(self):
        return 1 if self.type == "cusp" else 2

    @property
    def param_count(self):
        return 2 if self.type == "cusp" else 3

    # generic arithmetic (floats, arrays, jets)
    def field(self, x, params):
        if self.type == "cusp":
            (u,) = x
            mu1, mu2 = params
            return [4.0 * u * u * u + 2.0 * mu2 * u + mu1]
        u, v = x
        mu1, mu2, mu3 = params
        s, e = self.sign, self.epsilon
        return [3.0 * u * u + s * v * v + 2.0 * mu3 * u + mu1 - e * v,
                2.0 * s * u * v + 2.0 * mu3 * v + mu2 + e * u]

    def residual_jets(self, x, params, seed_x=True, seed_params=(), order=1, record=False):
        x = list(x)
        params = list(params)
        seed_params = tuple(seed_params)
        s = (self.m if seed_x else 0) + len(seed_params)
        if s:
            if seed_x:
                x = [Jet2.variable(v, i, s, order) for i, v in enumerate(x)]
            off = self.m if seed_x else 0
            for j, k in enumerate(seed_params):
                params[k] = Jet2.variable(params[k], off + j, s, order)
        r = self.field(x, params)
        return (r, None) if record else r

    def F(self, params):
        """Plain residual map ``x -> F(x; params)`` for the classifier."""
        return lambda x: np.array([float(jets.primal(v)) for v in self.field(list(x), list(params))])

    def jacobian(self, x, params):
        if self.type == "cusp":
            return np.array([[12.0 * x[0] ** 2 + 2.0 * params[1]]])
        u, v = x
        mu3 = params[2]
        s, e = self.sign, self.epsilon
        return np.array([[6.0 * u + 2.0 * mu3, 2.0 * s * v - e],
                         [2.0 * s * v + e, 2.0 * s * u + 2.0 * mu3]])

    def second(self):
        """Constant second-derivative tensor ``T[l, j, k] = d_j d_k F_l`` (umbilics)."""
        s = self.sign
        T = np.zeros((2, 2, 2))
        T[0, 0, 0] = 6.0
        T[0, 1, 1] = 2.0 * s
        T[1, 0, 1] = T[1, 1, 0] = 2.0 * s
        return T

    def asymmetry(self, x, params):
        """``(DF)_21 - (DF)_12``; equals ``2 eps`` for the umbilic models."""
        J = self.jacobian(x, params)
        return float(J[1, 0] - J[0, 1])

    # level-family interface: phase (u1, u2), slice mu3, push-forward to (mu1, mu2, mu3)
    def level_data(self, U1, U2, S):
        """Jacobian ``J (..., 2, 2)`` and its phase derivatives ``dJ (..., 2, 2, 2)``."""
        s, e = self.sign, self.epsilon
        U1, U2, S = np.broadcast_arrays(np.asarray(U1, float), np.asarray(U2, float),
                                        np.asarray(S, float))
        J = np.empty(U1.shape + (2, 2))
        J[..., 0, 0] = 6.0 * U1 + 2.0 * S
        J[..., 0, 1] = 2.0 * s * U2 - e
        J[..., 1, 0] = 2.0 * s * U2 + e
        J[..., 1, 1] = 2.0 * s * U1 + 2.0 * S
        dJ = np.broadcast_to(self.second(), U1.shape + (2, 2, 2))
        return J, dJ

    def push(self, U1, U2, S):
        U1, U2, S = np.broadcast_arrays(np.asarray(U1, float), np.asarray(U2, float),
                                        np.asarray(S, float))
        G = self.field([U1, U2], [0.0, 0.0, S])
        return np.stack([-G[0], -G[1], S], axis=-1)

    def third_reduced(self, U1, U2, S):
        """Smooth version of the reduced third derivative along the kernel.

        ``-3 w . D2F[v, z]`` with ``z`` from the bordered system
        ``DF z + t w = D2F[v, v]``, ``v . z = 0`` (``D3F`` vanishes here).
        """
        J, _ = self.level_data(U1, U2, S)
        T = self.second()
        A, B, C, D = J[..., 0, 0], J[..., 0, 1], J[..., 1, 0], J[..., 1, 1]
        v = _pick_kernel(np.stack([-B, A], -1), np.stack([D, -C], -1))
        w = _pick_kernel(np.stack([-C, A], -1), np.stack([D, -B], -1))
        u = np.einsum("ljk,...j,...k->...l", T, v, v)
        M = np.zeros(J.shape[:-2] + (3, 3))
        M[..., :2, :2] = J
        M[..., :2, 2] = w
        M[..., 2, :2] = v
        rhs = np.concatenate([u, np.zeros(u.shape[:-1] + (1,))], axis=-1)
        z = (np.linalg.pinv(M) @ rhs[..., None])[..., :2, 0]
        return -3.0 * np.einsum("...l,ljk,...j,...k->...", w, T, v, z)


def _pick_kernel(a, b):
    """Choose the longer of two (parallel at singular points) candidate vectors, normalised."""
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    out = np.where(na >= nb, a, b)
    n = np.maximum(np.linalg.norm(out, axis=-1, keepdims=True), 1e-300)
    return out / n


def cusp_fold_locus(t):
    """Fold curve ``(mu1, mu2) = (8 t^3, -6 t^2)`` of ``x^4 + mu2 x^2 + mu1 x`` (witness ``x = t``)."""
    t = np.asarray(t, dtype=float)
    return 8.0 * t ** 3, -6.0 * t ** 2


def cusp_locus_residual(t):
    """``(g'(t), g''(t))`` on the fold curve; both vanish identically."""
    mu1, mu2 = cusp_fold_locus(t)
    t = np.asarray(t, dtype=float)
    return 4 * t ** 3 + 2 * mu2 * t + mu1, 12 * t ** 2 + 2 * mu2


# ---------------------------------------------------------------------------
# shooting problems as level families

class ShootingLevelFamily:
    """Dirichlet/Neumann shooting problem with ``m = 2`` viewed as a level family.

    Phase coordinates are the two unknowns, the slice coordinate is problem
    parameter ``slice_index`` and every parameter bound to right-hand
    boundary data is pushed forward to the value that makes the residual
    vanish.
    """

    def __init__(self, prob, params, slice_index):
        if prob.m != 2 or prob.bc.kind == "periodic":
            raise ValueError("level families need a Dirichlet or Neumann problem with two unknowns")
        self.prob = prob
        self.params = tuple(float(v) for v in params)
        self.slice_index = slice_index

    def _params(self, S):
        p = list(self.params)
        p[self.slice_index] = S
        return p

    def _seeded(self, U1, U2, S, order):
        p = self._params(S)
        z0, z_end, _, right, _ = self.prob.end_state_jets([U1, U2], p, seed_x=True, order=order)
        return z0, z_end

    def _end_block(self, z_end):
        n = self.prob.system.n
        return z_end[:n] if self.prob.bc.kind == "dirichlet" else z_end[n:]

    def level_data(self, U1, U2, S):
        U1, U2, S = np.broadcast_arrays(np.asarray(U1, float), np.asarray(U2, float),
                                        np.asarray(S, float))
        shape = U1.shape
        with np.errstate(all="ignore"):
            _, z_end = self._seeded(U1.ravel(), U2.ravel(), S.ravel(), 2)
        blk = [jets.as_jet(v, 2, 2) for v in self._end_block(z_end)]
        J = np.stack([np.broadcast_to(b.grad, (U1.size, 2)) for b in blk], axis=1)
        dJ = np.stack([np.broadcast_to(b.hess, (U1.size, 2, 2)) for b in blk], axis=1)
        return J.reshape(shape + (2, 2)), dJ.reshape(shape + (2, 2, 2))

    def push(self, U1, U2, S):
        U1, U2, S = np.broadcast_arrays(np.asarray(U1, float), np.asarray(U2, float),
                                        np.asarray(S, float))
        shape = U1.shape
        p = self._params(S.ravel())
        with np.errstate(all="ignore"):
            z0, z_end, _, _, _ = self.prob.end_state_jets([U1.ravel(), U2.ravel()], p, seed_x=False)
        end = [np.broadcast_to(np.asarray(jets.primal(v), float), (U1.size,))
               for v in self._end_block(z_end)]
        out = []
        for k, t in enumerate(self.prob.binding):
            if k == self.slice_index:
                out.append(S.ravel())
            elif t.kind == "right":
                out.append(end[t.index])
            else:
                out.append(np.full(U1.size, self.params[k]))
        return np.stack(out, axis=-1).reshape(shape + (len(out),))

    def F(self, params):
        prob = self.prob
        return lambda x: np.array([float(jets.primal(v))
                                   for v in prob.residual_jets(list(x), params, seed_x=False)])


# ---------------------------------------------------------------------------
# corank-2 search

@dataclass
class _Corank2Target:
    """Matrix-valued map ``X -> M(X)`` (2x2) with derivatives in the three scan variables."""

    entries: object        # X (3, B) -> (E (B, 4), DE (B, 4, 3))
    record: object         # X (3,) -> SingularityRecord


def normal_form_corank2_target(nf: NormalFormProblem):
    def entries(X):
        u1, u2, s = X
        J, dJ = nf.level_data(u1, u2, s)
        B = J.shape[0]
        E = J.reshape(B, 4)
        D = np.zeros((B, 4, 3))
        D[:, :, :2] = dJ.reshape(B, 4, 2)
        D[:, 0, 2] = 2.0
        D[:, 3, 2] = 2.0
        return E, D

    def record(X):
        T = nf.second()
        a, b, c, d = cubic_from_tensor(T)
        disc, cls = umbilic_discriminant(a, b, c, d)
        params = nf.push(X[0], X[1], X[2])
        return SingularityRecord(cls, np.array(X[:2]), np.asarray(params), 2, np.eye(2),
                                 (), (a, b, c, d), disc)

    return _Corank2Target(entries, record)


def shooting_corank2_target(prob, params, scan_index):
    """Corank-2 target for a two-unknown shooting problem: scan ``(x1, x2, params[scan_index])``."""
    if prob.m != 2:
        raise ValueError("corank-2 search needs two unknowns")
    params = tuple(float(v) for v in params)

    def entries(X):
        x1, x2, s = (np.asarray(v, float) for v in X)
        p = list(params)
        p[scan_index] = s
        with np.errstate(all="ignore"):
            r = prob.residual_jets([x1, x2], p, seed_x=True, seed_params=(scan_index,), order=2)
        r = [jets.as_jet(v, 3, 2) for v in r]
        B = x1.size
        grad = np.stack([np.broadcast_to(v.grad, (B, 3)) for v in r], axis=1)   # (B, 2, 3)
        hess = np.stack([np.broadcast_to(v.hess, (B, 3, 3)) for v in r], axis=1)
        E = grad[:, :, :2].reshape(B, 4)
        D = hess[:, :, :2, :].reshape(B, 4, 3)
        return E, D

    def record(X):
        p = list(params)
        p[scan_index] = float(X[2])
        a, b, c, d = shooting_cubic(prob, X[:2], p)
        disc, cls = umbilic_discriminant(a, b, c, d)
        pushed = ShootingLevelFamily(prob, params, scan_index).push(
            np.array([X[0]]), np.array([X[1]]), np.array([X[2]]))[0]
        return SingularityRecord(cls, np.array(X[:2], dtype=float), pushed, 2, np.eye(2),
                                 (), (a, b, c, d), disc)

    return _Corank2Target(entries, record)


def shooting_cubic(prob, x, params):
    """Cubic form of the generating-function reduction at a point where ``D_x r = 0``.

    ``C_ljk = sum_i (D_x Z)_il d_j d_k r_i`` where ``Z`` is the end-state block
    conjugate to the residual (``P`` for Dirichlet, ``-Q`` for Neumann).
    """
    _, z_end, _, _, _ = prob.end_state_jets(list(x), params, seed_x=True, order=2)
    n = prob.system.n
    if prob.bc.kind == "dirichlet":
        res_blk, conj = z_end[:n], prob.conjugate_jets(z_end)
    else:
        res_blk, conj = z_end[n:], prob.conjugate_jets(z_end)
    m = prob.m
    conj = [jets.as_jet(v, m, 2) for v in conj]
    res_blk = [jets.as_jet(v, m, 2) for v in res_blk]
    DZ = np.array([c.grad for c in conj])            # (i, l)
    Hr = np.array([r.hess for r in res_blk])         # (i, j, k)
    C = np.einsum("il,ijk->ljk", DZ, Hr)
    return cubic_from_tensor(C)


def find_corank2(target, box, seeds=10, tol=1e-8, max_iter=60, keep=40, dedup=1e-6):
    """Gauss-Newton on the four entries of a 2x2 matrix family over a 3D box.

    ``target`` is a :class:`NormalFormProblem`, or a target built by
    :func:`shooting_corank2_target`.  Seeds are the grid points of smallest
    matrix norm.  A point is accepted when every entry is at most ``tol``.
    Returns :class:`SingularityRecord` objects sorted by location.
    """
    if isinstance(target, NormalFormProblem):
        if target.m != 2:
            raise ValueError("corank-2 search needs a two-dimensional normal form")
        target = normal_form_corank2_target(target)
    box = [tuple(map(float, b)) for b in box]
    axes = [np.linspace(lo, hi, seeds) for lo, hi in box]
    G = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in G])
    E, _ = target.entries(X)
    norm = np.linalg.norm(E, axis=1)
    norm[~np.isfinite(norm)] = np.inf
    order = np.argsort(norm, kind="stable")[:keep]
    order = order[np.isfinite(norm[order])]
    Xs = X[:, order].copy()
    active = np.ones(Xs.shape[1], dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        E, D = target.entries(Xs[:, idx])
        ok = np.all(np.isfinite(E), axis=1) & np.all(np.isfinite(D), axis=(1, 2))
        done = ok & (np.max(np.abs(np.where(np.isfinite(E), E, np.inf)), axis=1) <= tol * 1e-3)
        active[idx[~ok]] = False
        active[idx[done]] = False
        sel = ok & ~done
        if not np.any(sel):
            break
        step = np.stack([np.linalg.lstsq(D[b], E[b], rcond=None)[0] for b in np.flatnonzero(sel)],
                        axis=1)
        Xs[:, idx[sel]] -= step
        small = np.max(np.abs(step), axis=0) <= 1e-15 * np.maximum(1.0, np.max(np.abs(Xs[:, idx[sel]]), axis=0))
        active[idx[sel][small]] = False
    E, _ = target.entries(Xs)
    err = np.max(np.abs(E), axis=1)
    good = np.isfinite(err) & (err <= tol)
    inside = np.all([(Xs[i] >= box[i][0] - 1e-9) & (Xs[i] <= box[i][1] + 1e-9) for i in range(3)],
                    axis=0)
    pts = [Xs[:, b] for b in np.flatnonzero(good & inside)]
    from .shooting import dedupe_points
    out = []
    for x in dedupe_points(pts, dedup):
        rec = target.record(x)
        rec.residual = float(np.max(np.abs(target.entries(x[:, None])[0])))
        rec.phase = np.asarray(x[:2], dtype=float)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# level bifurcation sets

@dataclass
class LevelPoint:
    params: np.ndarray
    cls: str
    witness: np.ndarray       # (u1, u2, slice)
    det_residual: float


@dataclass
class LevelBifurcationSet:
    points: list = field(default_factory=list)
    corank2: list = field(default_factory=list)
    param_names: tuple = ()
    witness_names: tuple = ()

    def count(self, cls):
        return sum(1 for p in self.points if p.cls == cls) + \
            sum(1 for r in self.corank2 if r.cls == cls)

    def of_class(self, cls):
        return [p for p in self.points if p.cls == cls]

    def rows(self):
        """``(params..., class, witness..., det_residual)`` sorted lexicographically."""
        rows = [tuple(float(v) for v in p.params) + (p.cls,) + tuple(float(v) for v in p.witness[:2])
                + (float(p.det_residual),) for p in self.points]
        for r in self.corank2:
            rows.append(tuple(float(v) for v in r.params) + (r.cls,)
                        + tuple(float(v) for v in r.phase) + (0.0,))
        rows.sort(key=lambda r: (r[:len(self.param_names)], r[len(self.param_names)]))
        return rows


def _det2(J):
    return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]


def _grad_det(J, dJ):
    """Phase gradient of ``det J`` from ``dJ[..., i, j, k] = d_k J_ij``."""
    adj = np.stack([np.stack([J[..., 1, 1], -J[..., 0, 1]], -1),
                    np.stack([-J[..., 1, 0], J[..., 0, 0]], -1)], -2)
    return np.einsum("...ji,...ijk->...k", adj, dJ)


def _kappas(J, dJ):
    """Two smooth cusp indicators ``grad det . v`` with unnormalised kernel candidates."""
    g = _grad_det(J, dJ)
    A, B, C, D = J[..., 0, 0], J[..., 0, 1], J[..., 1, 0], J[..., 1, 1]
    k1 = -B * g[..., 0] + A * g[..., 1]
    k2 = D * g[..., 0] - C * g[..., 1]
    return k1, k2


def _fold_points(family, u1, u2, s, iters=30):
    """Zeros of ``det`` along grid lines of one slice, polished by safeguarded 1D Newton."""
    U1, U2 = np.meshgrid(u1, u2, indexing="ij")
    J, _ = family.level_data(U1, U2, np.full_like(U1, s))
    det = _det2(J)
    found = []
    for axis in (0, 1):
        a = det
        sl0 = (slice(None, -1), slice(None)) if axis == 0 else (slice(None), slice(None, -1))
        sl1 = (slice(1, None), slice(None)) if axis == 0 else (slice(None), slice(1, None))
        ch = np.isfinite(a[sl0]) & np.isfinite(a[sl1]) & (np.sign(a[sl0]) * np.sign(a[sl1]) < 0)
        ii, jj = np.nonzero(ch)
        if ii.size == 0:
            continue
        if axis == 0:
            lo, hi = u1[ii], u1[ii + 1]
            fixed = u2[jj]
        else:
            lo, hi = u2[jj], u2[jj + 1]
            fixed = u1[ii]
        flo = a[sl0][ii, jj]
        t = lo - flo * (hi - lo) / (a[sl1][ii, jj] - flo)
        for _ in range(iters):
            P1, P2 = (t, fixed) if axis == 0 else (fixed, t)
            Jt, dJt = family.level_data(P1, P2, np.full_like(t, s))
            f = _det2(Jt)
            df = _grad_det(Jt, dJt)[..., axis]
            with np.errstate(all="ignore"):
                tn = t - f / df
            bad = ~np.isfinite(tn) | (tn < lo) | (tn > hi)
            # bisection fallback keeps the bracket
            fl = _det2(family.level_data(*((lo, fixed) if axis == 0 else (fixed, lo)),
                                         np.full_like(t, s))[0])
            same = np.sign(f) == np.sign(fl)
            lo = np.where(same, t, lo)
            hi = np.where(same, hi, t)
            tn = np.where(bad, 0.5 * (lo + hi), tn)
            if np.all(np.abs(tn - t) <= 1e-15 * np.maximum(1.0, np.abs(t))):
                t = tn
                break
            t = tn
        P1, P2 = (t, fixed) if axis == 0 else (fixed, t)
        found.append(np.stack([P1, P2], axis=-1))
    if not found:
        return np.zeros((0, 2))
    return np.concatenate(found)


def _cusp_points(family, u1, u2, s, tol):
    """Common zeros of ``det`` and a cusp indicator in one slice (2D cell bracketing + Newton)."""
    U1, U2 = np.meshgrid(u1, u2, indexing="ij")
    J, dJ = family.level_data(U1, U2, np.full_like(U1, s))
    det = _det2(J)
    k1, k2 = _kappas(J, dJ)
    cands = []
    for which, kap in ((0, k1), (1, k2)):
        cells = []
        for f in (det, kap):
            corners = np.stack([f[:-1, :-1], f[1:, :-1], f[:-1, 1:], f[1:, 1:]])
            cells.append((np.nanmin(corners, axis=0) < 0) & (np.nanmax(corners, axis=0) > 0))
        ii, jj = np.nonzero(cells[0] & cells[1])
        if ii.size == 0:
            continue
        X = np.stack([0.5 * (u1[ii] + u1[ii + 1]), 0.5 * (u2[jj] + u2[jj + 1])])
        hx, hy = u1[1] - u1[0], u2[1] - u2[0]

        def fun(P, which=which):
            Jp, dJp = family.level_data(P[0], P[1], np.full_like(P[0], s))
            kk = _kappas(Jp, dJp)[which]
            return np.stack([_det2(Jp), kk])

        for _ in range(25):
            f0 = fun(X)
            h = 1e-7
            fx = (fun(X + np.array([[h], [0]])) - fun(X - np.array([[h], [0]]))) / (2 * h)
            fy = (fun(X + np.array([[0], [h]])) - fun(X - np.array([[0], [h]]))) / (2 * h)
            Jm = np.stack([fx, fy], axis=-1).transpose(1, 0, 2)   # (B, 2, 2)
            with np.errstate(all="ignore"):
                try:
                    d = np.linalg.solve(Jm, f0.T[..., None])[..., 0].T
                except np.linalg.LinAlgError:
                    d = np.stack([np.linalg.lstsq(Jm[b], f0[:, b], rcond=None)[0]
                                  for b in range(Jm.shape[0])], axis=1)
            X = X - d
            if np.all(np.abs(d) <= 1e-14):
                break
        f0 = fun(X)
        near = (np.abs(X[0] - 0.5 * (u1[ii] + u1[ii + 1])) <= 2 * abs(hx)) & \
               (np.abs(X[1] - 0.5 * (u2[jj] + u2[jj + 1])) <= 2 * abs(hy))
        Jp, dJp = family.level_data(X[0], X[1], np.full_like(X[0], s))
        other = _kappas(Jp, dJp)[1 - which]
        scale = np.maximum(1.0, np.max(np.abs(Jp), axis=(-2, -1)))
        ok = near & np.all(np.isfinite(f0), axis=0) & (np.abs(f0[0]) <= tol * scale ** 2) & \
            (np.abs(f0[1]) <= tol * scale ** 3) & (np.abs(other) <= 1e-6 * scale ** 3)
        cands += [X[:, b] for b in np.flatnonzero(ok)]
    from .shooting import dedupe_points
    return dedupe_points(cands, 1e-7)


def _solve_a4(family, seed, tol=1e-12, max_iter=40):
    """Newton on ``(det, kappa, third_reduced) = 0`` in ``(u1, u2, s)``."""

    def fun(X, which):
        J, dJ = family.level_data(X[0], X[1], X[2])
        kap = _kappas(J, dJ)[which]
        return np.array([_det2(J), kap, family.third_reduced(X[0], X[1], X[2])])

    best = None
    for which in (0, 1):
        X = np.array(seed, dtype=float)
        for _ in range(max_iter):
            f = fun(X, which)
            if not np.all(np.isfinite(f)):
                break
            A = np.empty((3, 3))
            for j in range(3):
                e = np.zeros(3)
                e[j] = 1e-7
                A[:, j] = (fun(X + e, which) - fun(X - e, which)) / 2e-7
            try:
                d = np.linalg.lstsq(A, f, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            X = X - d
            if np.max(np.abs(d)) <= 1e-15:
                break
        f = fun(X, which)
        if np.all(np.isfinite(f)) and np.max(np.abs(f)) <= tol:
            if best is None or np.max(np.abs(f)) < best[1]:
                best = (X, float(np.max(np.abs(f))))
    return None if best is None else best[0]


def level_bifurcation_set(family, phase_box, slice_range, grid=128, slices=None,
                          cusps=True, swallowtails=True, corank2=True, tol=1e-10):
    """Grid scan of a level family.

    ``phase_box`` is ``((u1_lo, u1_hi), (u2_lo, u2_hi))`` and ``slice_range``
    the range of the slice coordinate.  Fold points (A2) come from sign
    changes of ``det`` along grid lines; cusps (A3) from common zeros of
    ``det`` and the cusp indicator; swallowtails (A4) are solved where the
    number of cusps changes between slices (families exposing
    ``third_reduced`` only); corank-2 points by :func:`find_corank2`.
    """
    if grid < 32:
        raise ValueError("grid resolution must be at least 32 per axis")
    slices = slices or grid
    u1 = np.linspace(*phase_box[0], grid)
    u2 = np.linspace(*phase_box[1], grid)
    ss = np.linspace(*slice_range, slices)
    out = LevelBifurcationSet()
    cusp_by_slice = []
    for s in ss:
        fp = _fold_points(family, u1, u2, s)
        if len(fp):
            J, _ = family.level_data(fp[:, 0], fp[:, 1], np.full(len(fp), s))
            det = _det2(J)
            P = family.push(fp[:, 0], fp[:, 1], np.full(len(fp), s))
            for k in range(len(fp)):
                if np.all(np.isfinite(P[k])):
                    out.points.append(LevelPoint(P[k], "A2", np.array([fp[k, 0], fp[k, 1], s]),
                                                 float(abs(det[k]))))
        cs = _cusp_points(family, u1, u2, s, 1e-9) if cusps else []
        cusp_by_slice.append(cs)
        for c in cs:
            P = family.push(np.array([c[0]]), np.array([c[1]]), np.array([s]))[0]
            J, _ = family.level_data(c[0], c[1], s)
            out.points.append(LevelPoint(P, "A3", np.array([c[0], c[1], s]), float(abs(_det2(J)))))
    if swallowtails and cusps and hasattr(family, "third_reduced"):
        out.points += _swallowtails(family, ss, cusp_by_slice, max(u1[1] - u1[0], u2[1] - u2[0]))
    if corank2:
        box = [phase_box[0], phase_box[1], slice_range]
        for rec in find_corank2(_family_target(family), box, seeds=max(8, grid // 8)):
            out.corank2.append(rec)
    return out


def _family_target(family):
    if isinstance(family, NormalFormProblem):
        return normal_form_corank2_target(family)
    if isinstance(family, ShootingLevelFamily):
        return shooting_corank2_target(family.prob, family.params, family.slice_index)
    raise TypeError("no corank-2 target for this family")


def _swallowtails(family, ss, cusp_by_slice, cell, dedup=1e-6):
    """A4 points near slices where the cusp set changes abruptly (count, location or g3)."""
    seeds = []
    for k in range(len(ss) - 1):
        a, b = cusp_by_slice[k], cusp_by_slice[k + 1]
        mid = 0.5 * (ss[k] + ss[k + 1])
        changed = len(a) != len(b)
        if not changed and len(a):
            ga = [family.third_reduced(c[0], c[1], ss[k]) for c in a]
            gb = [family.third_reduced(c[0], c[1], ss[k + 1]) for c in b]
            for c, g in zip(a, ga):
                d = [np.max(np.abs(c - e)) for e in b]
                j = int(np.argmin(d))
                ratio = abs(g) / max(abs(gb[j]), 1e-300)
                if d[j] > cell or np.sign(g) != np.sign(gb[j]) or not 0.5 <= ratio <= 2.0:
                    changed = True
        if changed:
            seeds += [np.array([c[0], c[1], mid]) for c in list(a) + list(b)]
    found = []
    for seed in seeds:
        X = _solve_a4(family, seed)
        if X is None or not ss[0] - 1e-9 <= X[2] <= ss[-1] + 1e-9:
            continue
        J, dJ = family.level_data(X[0], X[1], X[2])
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[0] <= 1e-6:
            continue        # corank 2
        P = family.push(np.array([X[0]]), np.array([X[1]]), np.array([X[2]]))[0]
        # difference step scaled to the local curvature of the family
        step = min(1e-2, 5e-3 * sv[0] / max(1.0, float(np.max(np.abs(dJ)))))
        try:
            rec = classify_corank1(family.F(P), X[:2], jac=J, step=step)
        except WrongClassifierError:
            continue
        if rec.cls == "A4":
            found.append(X)
    from .shooting import dedupe_points
    out = []
    for X in dedupe_points(found, dedup):
        J, _ = family.level_data(X[0], X[1], X[2])
        P = family.push(np.array([X[0]]), np.array([X[1]]), np.array([X[2]]))[0]
        out.append(LevelPoint(P, "A4", X, float(abs(_det2(J)))))
    return out


def cusp_level_set(nf: NormalFormProblem, x_range, mu2_range, grid=200):
    """Fold curve of the cusp normal form by scanning ``(x, mu2)``; returns ``(mu1, mu2, x)`` rows."""
    if nf.type != "cusp":
        raise ValueError("cusp_level_set needs the cusp normal form")
    if grid < 32:
        raise ValueError("grid resolution must be at least 32 per axis")
    xs = np.linspace(*x_range, grid)
    rows = []
    for mu2 in np.linspace(*mu2_range, grid):
        det = 12 * xs ** 2 + 2 * mu2
        idx = np.flatnonzero(np.sign(det[:-1]) * np.sign(det[1:]) < 0)
        for i in idx:
            lo, hi = xs[i], xs[i + 1]
            t = 0.5 * (lo + hi)
            for _ in range(50):
                f, df = 12 * t * t + 2 * mu2, 24 * t
                tn = t - f / df if df != 0 else 0.5 * (lo + hi)
                if not lo <= tn <= hi:
                    tn = 0.5 * (lo + hi)
                if abs(tn - t) <= 1e-16:
                    t = tn
                    break
                t = tn
            mu1 = -(4 * t ** 3 + 2 * mu2 * t)
            rows.append((mu1, mu2, t))
    return rows
