import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp.systems import (SYSTEMS, DimensionError, PhasePoint, eval_system, get_system,
                            linear_invariant, register)

coords = st.floats(-0.8, 0.8)


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_gradient_matches_hand_written_derivatives(name):
    sys = SYSTEMS[name]
    rng = np.random.default_rng(1)
    z = rng.uniform(-0.5, 0.5, 2 * sys.n)
    mu = [0.7] * sys.param_count
    _, grad, hess = eval_system(sys, z, mu)
    q, p = list(z[:sys.n]), list(z[sys.n:])
    hq = [float(v) for v in sys.dH_dq(q, p, mu)]
    hp = [float(v) for v in sys.dH_dp(q, p, mu)]
    assert grad == pytest.approx(hq + hp, abs=1e-12)
    assert hess == pytest.approx(hess.T, abs=1e-12)


@given(coords, coords, coords, coords)
def test_linear_invariant_is_conserved_by_the_vector_field(q1, q2, p1, p2):
    sys = get_system("linear-invariant-4d")
    dq, dp = sys.vector_field([q1, q2], [p1, p2], [-0.05])
    # the invariant is linear in p, so its time derivative is the invariant of dp
    assert abs(linear_invariant(dq, dp)) <= 1e-12


def test_phase_point_validation():
    pt = PhasePoint((0.0, 1.0), (2.0, 3.0))
    assert pt.n == 2
    assert PhasePoint.from_array(pt.as_array()) == pt
    with pytest.raises(DimensionError):
        PhasePoint((0.0,), (1.0, 2.0))
    with pytest.raises(ValueError):
        PhasePoint((float("nan"),), (1.0,))


def test_eval_system_checks_sizes():
    with pytest.raises(DimensionError):
        eval_system(get_system("bratu"), [0.0, 1.0], [])
    with pytest.raises(DimensionError):
        eval_system(get_system("bratu"), [0.0, 1.0, 2.0], [1.0])


def test_registry():
    with pytest.raises(KeyError):
        get_system("kepler")
    with pytest.raises(ValueError):
        register(get_system("bratu"))
