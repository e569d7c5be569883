import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp.mesh import MeshError, as_array, exp_sine_warp, make_mesh, step_sum


@given(st.integers(1, 500), st.floats(0.1, 10.0))
def test_uniform_steps_sum_to_tau(N, tau):
    m = make_mesh("uniform", N, tau)
    assert m.N == N
    assert step_sum(m) == pytest.approx(tau, rel=1e-14)
    assert m.times[-1] == tau


def test_warped_mesh_is_monotone_and_anchored():
    m = make_mesh("warped", 225, 1.7)
    t = as_array(m)
    assert len(t) == 226
    assert t[0] == 0.0 and t[-1] == 1.7
    assert np.all(np.diff(t) > 0)
    assert exp_sine_warp(0.0) == 0.0
    assert exp_sine_warp(1.0) == pytest.approx(1.0)


def test_warped_mesh_concentrates_points():
    steps = np.diff(as_array(make_mesh("warped", 100, 1.0)))
    assert steps.max() / steps.min() > 10


def test_explicit_mesh():
    m = make_mesh("explicit", times=(0.0, 0.3, 1.0))
    assert m.N == 2
    assert m.tau == 1.0
    with pytest.raises(MeshError):
        make_mesh("explicit")


def test_bad_meshes():
    with pytest.raises(MeshError):
        make_mesh("uniform", 0, 1.0)
    with pytest.raises(MeshError):
        make_mesh("chebyshev", 10, 1.0)
    with pytest.raises(MeshError):
        make_mesh("warped", 10, 1.0, warp="nope")
    with pytest.raises(MeshError):
        make_mesh("warped", 10, 1.0, warp=lambda s: math.sin(3 * s))
