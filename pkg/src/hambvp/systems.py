"""Hamiltonian systems evaluated in generic scalar arithmetic.

Every registered system supplies the energy and both partial gradients as
plain Python functions of ``(q, p, mu)`` sequences.  They are written only with
``+ - * / **`` and the dispatching functions from :mod:`hambvp.jets`, so the
same code runs on floats, on numpy arrays (grid scans) and on jets (flow
derivatives).  The gradients are hand-written rather than derived from the
energy because flow Hessians need the vector field itself in jet arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .jets import Jet2


class DimensionError(ValueError):
    """Argument sizes do not match the system."""


@dataclass(frozen=True)
class PhasePoint:
    q: tuple
    p: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        p = tuple(float(v) for v in self.p)
        if len(q) != len(p):
            raise DimensionError(f"len(q)={len(q)} != len(p)={len(p)}")
        if not all(np.isfinite(q + p)):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return len(self.q)

    def as_array(self):
        return np.array(self.q + self.p)

    @classmethod
    def from_array(cls, z):
        z = np.asarray(z, dtype=float)
        n = z.size // 2
        return cls(tuple(z[:n]), tuple(z[n:]))


@dataclass(frozen=True)
class HamiltonianSystem:
    """A named Hamiltonian ``H(q, p; mu)`` with ``n`` degrees of freedom."""

    id: str
    n: int
    param_count: int
    energy: Callable
    dH_dq: Callable
    dH_dp: Callable
    separable: bool = False
    default_mu: tuple = ()
    description: str = ""
    param_names: tuple = field(default=())

    def eval(self, q, p, mu):
        return self.energy(q, p, mu)

    def vector_field(self, q, p, mu):
        """Hamilton's equations: ``(dq/dt, dp/dt) = (H_p, -H_q)``."""
        return list(self.dH_dp(q, p, mu)), [-g for g in self.dH_dq(q, p, mu)]


def _check(sys, q, p, mu):
    if len(q) != sys.n or len(p) != sys.n:
        raise DimensionError(f"{sys.id}: expected n={sys.n}, got len(q)={len(q)}, len(p)={len(p)}")
    if len(mu) != sys.param_count:
        raise DimensionError(f"{sys.id}: expected {sys.param_count} parameters, got {len(mu)}")


def eval_system(sys: HamiltonianSystem, z, mu: Sequence[float] = ()):
    """Energy, gradient and Hessian of ``H`` at a phase point.

    ``z`` is a :class:`PhasePoint` or a flat array ``(q, p)``.  Returns
    ``(H, grad, hess)`` with ``grad`` of length ``2n`` and ``hess`` of shape
    ``(2n, 2n)``, all computed by evaluating the energy on seeded jets.
    Batched arrays of shape ``(2n,) + B`` are accepted as well.
    """
    if isinstance(z, PhasePoint):
        z = z.as_array()
    z = np.asarray(z, dtype=float)
    n = sys.n
    if z.shape[0] != 2 * n:
        raise DimensionError(f"{sys.id}: phase point must have length {2 * n}")
    mu = tuple(mu)
    _check(sys, [0] * n, [0] * n, mu)
    v = jets.seed([z[i] for i in range(2 * n)])
    h = sys.energy(v[:n], v[n:], mu)
    if not isinstance(h, Jet2):
        h = Jet2.constant(h, 2 * n)
    value = h.value
    grad = np.moveaxis(h.grad, -1, 0)
    hess = np.moveaxis(h.hess, (-2, -1), (0, 1))
    return value, grad, hess


def hessian_blocks(sys, q, p, mu):
    """``(H_qq, H_qp, H_pq, H_pp)`` as float arrays, batched if inputs are."""
    z = np.array([jets.primal(x) for x in list(q) + list(p)], dtype=float)
    _, _, hess = eval_system(sys, z, mu)
    n = sys.n
    return hess[:n, :n], hess[:n, n:], hess[n:, :n], hess[n:, n:]


# ---------------------------------------------------------------------------
# registered systems

def _bratu_H(q, p, mu):
    return 0.5 * p[0] * p[0] + mu[0] * jets.exp(q[0])


def _bratu_Hq(q, p, mu):
    return [mu[0] * jets.exp(q[0])]


def _bratu_Hp(q, p, mu):
    return [p[0]]


HH_COUPLING = -10.0


def _hh_H(q, p, mu):
    q1, q2 = q
    return (0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.5 * (q1 * q1 + q2 * q2)
            + HH_COUPLING * (q1 * q1 * q2 - q2 * q2 * q2 / 3.0))


def _hh_Hq(q, p, mu):
    q1, q2 = q
    return [q1 + 2.0 * HH_COUPLING * q1 * q2,
            q2 + HH_COUPLING * (q1 * q1 - q2 * q2)]


def _hh_Hp(q, p, mu):
    return [p[0], p[1]]


def _pf_H(q, p, mu):
    x, y = q[0], p[0]
    return (y * y + 0.1 * y * y * y - 0.01 * jets.cos(y)
            + x * x * x - 0.01 * x * x + mu[0] * x)


def _pf_Hq(q, p, mu):
    x = q[0]
    return [3.0 * x * x - 0.02 * x + mu[0]]


def _pf_Hp(q, p, mu):
    y = p[0]
    return [2.0 * y + 0.3 * y * y + 0.01 * jets.sin(y)]


# linear-invariant system: q = M qbar, pbar = M^T p
LINEAR_M = np.array([[-1.0, 2.0], [3.0, 1.0]])
_MINV = np.linalg.inv(LINEAR_M)


def _li_bar(q, p):
    qb1 = _MINV[0, 0] * q[0] + _MINV[0, 1] * q[1]
    pb1 = LINEAR_M[0, 0] * p[0] + LINEAR_M[1, 0] * p[1]
    pb2 = LINEAR_M[0, 1] * p[0] + LINEAR_M[1, 1] * p[1]
    return qb1, pb1, pb2


def _li_H(q, p, mu):
    qb1, pb1, pb2 = _li_bar(q, p)
    return (qb1 * qb1 * qb1 + mu[0] * qb1 + pb1 * pb2 + pb1 * pb1
            + 0.1 * (pb1 * pb1 * pb1 + pb2 * pb2 * pb2))


def _li_Hq(q, p, mu):
    qb1, _, _ = _li_bar(q, p)
    g1 = 3.0 * qb1 * qb1 + mu[0]
    # dH/dq = M^{-T} dH/dqbar, and dH/dqbar_2 = 0
    return [_MINV[0, 0] * g1, _MINV[0, 1] * g1]


def _li_Hp(q, p, mu):
    _, pb1, pb2 = _li_bar(q, p)
    g1 = pb2 + 2.0 * pb1 + 0.3 * pb1 * pb1
    g2 = pb1 + 0.3 * pb2 * pb2
    # dH/dp = M dH/dpbar
    return [LINEAR_M[0, 0] * g1 + LINEAR_M[0, 1] * g2,
            LINEAR_M[1, 0] * g1 + LINEAR_M[1, 1] * g2]


def linear_invariant(q, p):
    """The conserved momentum ``pbar_2 = (M^T p)_2`` of the linear-invariant system."""
    return LINEAR_M[0, 1] * p[0] + LINEAR_M[1, 1] * p[1]


# torus system: qbar1 = q1 + 0.1 cos q2, qbar2 = q2 + 0.1 cos q1 (cotangent lift)
TORUS_EPS = 0.1


def torus_pbar(q, p):
    s1, s2 = jets.sin(q[0]), jets.sin(q[1])
    d = 1.0 - TORUS_EPS * TORUS_EPS * s1 * s2
    pb1 = (p[0] + TORUS_EPS * s1 * p[1]) / d
    pb2 = (TORUS_EPS * s2 * p[0] + p[1]) / d
    return pb1, pb2, s1, s2, d


def _tor_H(q, p, mu):
    pb1, pb2, *_ = torus_pbar(q, p)
    return pb1 * pb1 * pb1 + mu[0] * pb1 + pb2 * pb2


def _tor_Hq(q, p, mu):
    pb1, pb2, s1, s2, d = torus_pbar(q, p)
    c1, c2 = jets.cos(q[0]), jets.cos(q[1])
    e, e2 = TORUS_EPS, TORUS_EPS * TORUS_EPS
    g1 = 3.0 * pb1 * pb1 + mu[0]
    g2 = 2.0 * pb2
    dpb1_dq1 = (e * c1 * p[1] + e2 * c1 * s2 * pb1) / d
    dpb1_dq2 = (e2 * s1 * c2 * pb1) / d
    dpb2_dq1 = (e2 * c1 * s2 * pb2) / d
    dpb2_dq2 = (e * c2 * p[0] + e2 * s1 * c2 * pb2) / d
    return [g1 * dpb1_dq1 + g2 * dpb2_dq1, g1 * dpb1_dq2 + g2 * dpb2_dq2]


def _tor_Hp(q, p, mu):
    pb1, pb2, s1, s2, d = torus_pbar(q, p)
    g1 = 3.0 * pb1 * pb1 + mu[0]
    g2 = 2.0 * pb2
    # pbar = A^{-1} p, so dH/dp = A^{-T} dH/dpbar
    return [(g1 + TORUS_EPS * s2 * g2) / d, (TORUS_EPS * s1 * g1 + g2) / d]


def _ho_H(q, p, mu):
    return 0.5 * p[0] * p[0] + 0.5 * q[0] * q[0]


def _ho_Hq(q, p, mu):
    return [q[0]]


def _ho_Hp(q, p, mu):
    return [p[0]]


SYSTEMS: dict[str, HamiltonianSystem] = {}


def register(system: HamiltonianSystem, replace: bool = False) -> HamiltonianSystem:
    if system.id in SYSTEMS and not replace:
        raise ValueError(f"system {system.id!r} already registered")
    SYSTEMS[system.id] = system
    return system


def get_system(name: str) -> HamiltonianSystem:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(sorted(SYSTEMS))}") from None


register(HamiltonianSystem(
    "bratu", 1, 1, _bratu_H, _bratu_Hq, _bratu_Hp, separable=True, default_mu=(1.0,),
    param_names=("C",), description="H = p^2/2 + C e^q (steady Bratu problem)"))
register(HamiltonianSystem(
    "henon-heiles", 2, 0, _hh_H, _hh_Hq, _hh_Hp, separable=True,
    description="H = |p|^2/2 + |q|^2/2 - 10 (q1^2 q2 - q2^3/3)"))
register(HamiltonianSystem(
    "pitchfork", 1, 1, _pf_H, _pf_Hq, _pf_Hp, separable=True, default_mu=(-6.5,),
    param_names=("mu",),
    description="H = p^2 + 0.1 p^3 - 0.01 cos p + q^3 - 0.01 q^2 + mu q"))
register(HamiltonianSystem(
    "linear-invariant-4d", 2, 1, _li_H, _li_Hq, _li_Hp, separable=True, default_mu=(0.0,),
    param_names=("mu",),
    description="cubic system with a linear invariant, lifted by q = M qbar"))
register(HamiltonianSystem(
    "torus-4d", 2, 1, _tor_H, _tor_Hq, _tor_Hp, separable=False, default_mu=(0.0,),
    param_names=("mu",),
    description="Hbar = pbar1^3 + mu pbar1 + pbar2^2 under a nonlinear torus change of variables"))
register(HamiltonianSystem(
    "harmonic", 1, 0, _ho_H, _ho_Hq, _ho_Hp, separable=True,
    description="H = (p^2 + q^2)/2, closed-form test system"))
