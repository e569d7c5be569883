import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp.integrators import (METHODS, flow, get_method, harmonic_exact, order_slope, step,
                                symplectic_defect)
from hambvp.mesh import make_mesh
from hambvp.systems import get_system

SYMPLECTIC = ("stormer-verlet", "implicit-midpoint")
NONSYMPLECTIC = ("rk2", "rk4", "lobatto3a")


def test_registry_flags():
    for mid in SYMPLECTIC:
        assert METHODS[mid].symplectic
    for mid in NONSYMPLECTIC:
        assert not METHODS[mid].symplectic
    with pytest.raises(KeyError):
        get_method("euler")


@pytest.mark.parametrize("mid", list(METHODS))
def test_harmonic_flow_is_close_to_rotation(mid):
    ho = get_system("harmonic")
    res = flow(mid, ho, [], make_mesh("uniform", 200, 1.0), [1.0, 0.0], seed=None)
    assert res.end == pytest.approx(harmonic_exact([1.0, 0.0], 1.0), abs=1e-4)


@pytest.mark.parametrize("mid", list(METHODS))
def test_flow_jacobian_matches_differences(mid):
    hh = get_system("henon-heiles")
    mesh = make_mesh("uniform", 8, 0.5)
    z0 = np.array([0.1, -0.05, 0.2, 0.1])
    res = flow(mid, hh, [], mesh, z0, seed="state")
    h = 1e-6
    fd = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd[:, j] = (flow(mid, hh, [], mesh, z0 + e, seed=None).end
                    - flow(mid, hh, [], mesh, z0 - e, seed=None).end) / (2 * h)
    assert res.jac == pytest.approx(fd, abs=1e-7)


def test_parameter_seeds():
    pf = get_system("pitchfork")
    mesh = make_mesh("uniform", 10, 1.0)
    res = flow("rk4", pf, [-6.0], mesh, [0.2, 0.1], seed="state+params", order=2)
    assert res.jac.shape == (2, 3)
    assert res.hess.shape == (2, 3, 3)
    h = 1e-6
    fd = (flow("rk4", pf, [-6.0 + h], mesh, [0.2, 0.1], seed=None).end
          - flow("rk4", pf, [-6.0 - h], mesh, [0.2, 0.1], seed=None).end) / (2 * h)
    assert res.jac[:, 2] == pytest.approx(fd, abs=1e-7)


@given(st.floats(-7.0, -5.0), st.sampled_from(["uniform", "warped"]), st.integers(5, 40))
def test_symplectic_methods_have_zero_defect(mu, kind, N):
    pf = get_system("pitchfork")
    mesh = make_mesh(kind, N, 1.0)
    for mid in SYMPLECTIC:
        res = flow(mid, pf, [mu], mesh, [0.1, 0.3], seed="state")
        assert symplectic_defect(res.jac) <= 1e-9


def test_symplectic_defect_rejects_odd_dimension():
    with pytest.raises(ValueError):
        symplectic_defect(np.eye(3))


@pytest.mark.parametrize("mid,order,tol", [("stormer-verlet", 2, 0.2), ("rk2", 2, 0.2),
                                           ("rk4", 4, 0.3), ("lobatto3a", 4, 0.3),
                                           ("implicit-midpoint", 2, 0.2)])
def test_order_slopes(mid, order, tol):
    ho = get_system("harmonic")
    slope = order_slope(mid, ho, [], 1.0, [10, 20, 40, 80], [1.0, 0.5])
    assert abs(slope - order) <= tol


def test_step_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        step("rk2", get_system("harmonic"), [], 0.0, [1.0, 0.0])


def test_harmonic_exact_is_rotation():
    assert harmonic_exact([1.0, 0.0], math.pi / 2) == pytest.approx([0.0, -1.0], abs=1e-15)
