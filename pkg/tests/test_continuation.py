import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hambvp.breaks import break_magnitude
from hambvp.continuation import (EmptyDiagramError, branch_distance, diagram, evaluate_functionals,
                                 fold_singular_values, l2norm_q, trace_branch)
from hambvp.experiments import bratu_fold_reference
from hambvp.mesh import make_mesh
from hambvp.shooting import dirichlet_problem, newton_solve
from hambvp.singularity import NormalFormProblem


def bratu(N):
    return dirichlet_problem("bratu", "stormer-verlet", make_mesh("uniform", N, 1.0), [0.0], [0.0])


@pytest.fixture(scope="module")
def bratu_branch():
    prob = bratu(50)
    seed = newton_solve(prob, [1.0], [3.0])
    return prob, seed, trace_branch(prob, seed, (3.0, 4.0), ds=0.05)


def test_bratu_fold_is_found_and_refined(bratu_branch):
    prob, _, br = bratu_branch
    folds = br.folds
    assert len(folds) == 1
    f = folds[0]
    assert abs(f.lam - bratu_fold_reference()) < 2e-3
    # the refined fold is a genuine singular point of the residual Jacobian
    assert fold_singular_values(f, prob, br.params)[0] <= 1e-8
    assert abs(f.tangent[0]) <= 1e-8


def test_branch_turns_at_the_fold(bratu_branch):
    _, _, br = bratu_branch
    lams = br.lams
    assert lams.max() <= bratu_fold_reference() + 1e-6
    assert br.xs[:, 0].min() < 3.9 < br.xs[:, 0].max()


def test_step_halving_consistency(bratu_branch):
    prob, seed, br = bratu_branch
    half = trace_branch(prob, seed, (3.0, 4.0), ds=0.025)
    assert branch_distance(br, half) <= 1e-6


@settings(max_examples=6)
@given(st.floats(0.03, 0.08))
def test_step_halving_property(ds):
    prob = bratu(25)
    seed = newton_solve(prob, [1.0], [3.2])
    a = trace_branch(prob, seed, (3.2, 3.6), ds=ds, refine_folds=False)
    b = trace_branch(prob, seed, (3.2, 3.6), ds=ds / 2, refine_folds=False)
    assert branch_distance(a, b) <= 1e-6


def test_functionals():
    prob = bratu(40)
    sol = newton_solve(prob, [1.0], [1.0])
    vals = evaluate_functionals(prob, sol.x, sol.params, ["x0", "l2norm-q", "energy"])
    assert vals["x0"] == pytest.approx(sol.x[0])
    assert vals["l2norm-q"] > 0
    with pytest.raises(KeyError):
        evaluate_functionals(prob, sol.x, sol.params, ["curvature"])


def test_l2norm_trapezoid():
    t = np.linspace(0.0, 1.0, 1001)
    assert l2norm_q(t, np.ones_like(t)) == pytest.approx(1.0)
    assert l2norm_q(t, t) == pytest.approx(np.sqrt(1 / 3), rel=1e-6)


def test_cusp_normal_form_break_is_exact():
    nf = NormalFormProblem("cusp")
    grid = [[v] for v in np.linspace(-1, 1, 21)]
    mu1 = 0.02
    d = diagram(nf, (-0.5, 0.5), "x0", (mu1, 0.0), lam_index=1, grid=grid, ds=0.02)
    b = break_magnitude(d, nf, (mu1, 0.0), lam_index=1)
    assert b == pytest.approx(1.5 * mu1 ** (2 / 3), rel=1e-8)
    d0 = diagram(nf, (-0.5, 0.5), "x0", (0.0, 0.0), lam_index=1, grid=grid, ds=0.02)
    assert break_magnitude(d0, nf, (0.0, 0.0), lam_index=1) == 0.0


def test_cusp_folds_along_mu1():
    nf = NormalFormProblem("cusp")
    seed = newton_solve(nf, [1.2], (0.0, -1.0))
    br = trace_branch(nf, seed, (-1.0, 1.0), ds=0.02, params=(0.0, -1.0), lam_index=0,
                      direction=0)
    folds = sorted(f.lam for f in br.folds)
    assert folds == pytest.approx([-8 / 6 ** 1.5, 8 / 6 ** 1.5], abs=1e-10)


def test_isola_closes():
    # x^2 + lam^2 = 1 traced from (0, 1) returns to its start
    class Circle:
        m, param_count = 1, 1

        def residual_jets(self, x, params, seed_x=True, seed_params=(), order=1, record=False):
            from hambvp.jets import Jet2
            s = (1 if seed_x else 0) + len(seed_params)
            xx = Jet2.variable(x[0], 0, s, order) if seed_x else x[0]
            lam = Jet2.variable(params[0], s - 1, s, order) if seed_params else params[0]
            return [xx * xx + lam * lam - 1.0]

    c = Circle()
    br = trace_branch(c, (np.array([1.0]), (0.0,)), (-2.0, 2.0), ds=0.05, direction=0)
    assert len(br) < 200
    assert len(br.folds) == 2


def test_empty_diagram_raises():
    prob = bratu(20)
    with pytest.raises(EmptyDiagramError):
        diagram(prob, (5.0, 6.0), "x0", (5.0,), grid=[[1.0], [2.0]])
