import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp import jets
from hambvp.jets import Jet2, JetDomainError

reals = st.floats(-2.0, 2.0, allow_nan=False)


def _fd_grad_hess(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = x.size
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        for j in range(n):
            d = np.zeros(n)
            d[j] = h
            H[i, j] = (f(x + e + d) - f(x + e - d) - f(x - e + d) + f(x - e - d)) / (4 * h * h)
    return g, H


def _model(v):
    x, y = v
    return jets.exp(x * y) + jets.sin(x) * jets.cos(y) + x ** 3 / (2.0 + y * y) + jets.tanh(y) * x


@given(reals, reals)
def test_jet_matches_finite_differences(x, y):
    jx, jy = jets.seed([x, y])
    out = _model([jx, jy])
    g, H = _fd_grad_hess(lambda v: float(_model(list(v))), [x, y])
    scale = max(1.0, float(np.max(np.abs(out.grad))))
    assert np.allclose(out.grad, g, rtol=1e-6, atol=1e-6 * scale)
    hscale = max(1.0, float(np.max(np.abs(out.hess))))
    assert np.allclose(out.hess, H, rtol=1e-5, atol=1e-5 * hscale)


@given(reals, reals)
def test_hessian_is_symmetric(x, y):
    out = _model(jets.seed([x, y]))
    assert np.allclose(out.hess, out.hess.T, atol=1e-12)


def test_batched_jets_match_scalar_jets():
    xs = np.linspace(-1, 1, 7)
    batched = _model([Jet2.variable(xs, 0, 2), Jet2.variable(0.3 * xs, 1, 2)])
    for k, x in enumerate(xs):
        single = _model(jets.seed([x, 0.3 * x]))
        assert batched.grad[k] == pytest.approx(single.grad, abs=1e-13)
        assert batched.hess[k] == pytest.approx(single.hess, abs=1e-13)


def test_first_order_mode_drops_hessian():
    x = Jet2.variable(0.5, 0, 1, order=1)
    y = jets.exp(x) * x
    assert y.hess is None
    assert y.grad[0] == pytest.approx(math.exp(0.5) * 1.5)


def test_domain_errors():
    with pytest.raises(JetDomainError):
        Jet2.variable(0.0, 0, 1).reciprocal()
    with pytest.raises(JetDomainError):
        jets.log(Jet2.variable(-1.0, 0, 1))
    with pytest.raises(JetDomainError):
        jets.sqrt(Jet2.variable(0.0, 0, 1))


def test_dispatch_on_plain_numbers():
    assert jets.exp(0.0) == 1.0
    assert np.allclose(jets.sin(np.array([0.0, math.pi / 2])), [0.0, 1.0])
    assert jets.primal(3.0) == 3.0
