import numpy as np
import pytest

from hambvp.breaks import (UnmeasurableBreakError, break_magnitude, locate_cusps, pitchfork_break,
                           scaling_fit, solve_cusp)
from hambvp.experiments import pitchfork_problem
from hambvp.singularity import NormalFormProblem


@pytest.mark.parametrize("mu1", [1e-3, 1e-2, 5e-2])
def test_cusp_normal_form_break_closed_form(mu1):
    # x^4 + mu2 x^2 + mu1 x: the detached fold sits at mu2 = -1.5 mu1^(2/3), the cusp at 0
    nf = NormalFormProblem("cusp")
    res = pitchfork_break(nf, np.array([0.0, 0.0]), (mu1, 0.0), lam_index=1, width=1.0)
    assert res.mu_cusp == pytest.approx(0.0, abs=1e-12)
    assert res.magnitude == pytest.approx(1.5 * mu1 ** (2 / 3), rel=1e-8)


def test_unbroken_cusp_has_zero_break():
    nf = NormalFormProblem("cusp")
    res = pitchfork_break(nf, np.array([0.01, 0.01]), (0.0, 0.0), lam_index=1)
    assert res.magnitude == 0.0


def test_solve_cusp_on_the_normal_form():
    nf = NormalFormProblem("cusp")
    yc, rho, _ = solve_cusp(nf, np.array([0.05, -0.02]), (0.003, 0.0), lam_index=1)
    assert float(yc[0]) == pytest.approx(0.0, abs=1e-12)
    assert abs(float(rho)) == pytest.approx(0.003, rel=1e-10)


def test_locate_cusps_finds_the_pitchfork():
    prob = pitchfork_problem("lobatto3a", 20)
    cands = locate_cusps(prob, (-1.5, 1.5), (-9.5, -4.5), [0.0], grid=64)
    assert any(abs(c[0]) < 0.2 and abs(c[1] + 6.3) < 0.3 for c in cands)


def test_rk2_break_shrinks_with_h():
    big = pitchfork_break(pitchfork_problem("rk2", 100), np.array([0.0, -6.3]), [-6.3], 0, 3.0)
    small = pitchfork_break(pitchfork_problem("rk2", 200), np.array([0.0, -6.3]), [-6.3], 0, 3.0)
    assert 0 < small.magnitude < big.magnitude
    assert big.magnitude / small.magnitude == pytest.approx(4.0, rel=0.2)


def test_scaling_fit_models():
    N = np.array([10, 20, 40, 80])
    power = scaling_fit(N, 3.0 * (1.0 / N) ** 2)
    assert power.model == "power"
    assert power.kappa == pytest.approx(2.0)
    expo = scaling_fit(N[:4] // 2 + np.arange(4), np.exp(-0.7 * (N[:4] // 2 + np.arange(4))))
    assert expo.model == "exponential"
    assert expo.beta == pytest.approx(-0.7)
    with pytest.raises(ValueError):
        scaling_fit([1, 2, 3], [1.0, 0.5, 0.2])
    with pytest.raises(ValueError):
        scaling_fit([1, 2, 3, 4], [1.0, 0.0, 0.2, 0.1])


def test_break_magnitude_needs_branches():
    with pytest.raises(UnmeasurableBreakError):
        break_magnitude([])
