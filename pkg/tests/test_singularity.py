import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp.singularity import (DegenerateInputError, NormalFormProblem, WrongClassifierError,
                                classify_corank1, cubic_from_tensor, cusp_fold_locus,
                                cusp_level_set, cusp_locus_residual, find_corank2,
                                level_bifurcation_set, umbilic_discriminant)

coef = st.floats(-2.0, 2.0)


def _tensor(a, b, c, d):
    S = np.zeros((2, 2, 2))
    S[0, 0, 0] = 6 * a
    S[0, 0, 1] = S[0, 1, 0] = S[1, 0, 0] = 2 * b
    S[0, 1, 1] = S[1, 0, 1] = S[1, 1, 0] = 2 * c
    S[1, 1, 1] = 6 * d
    return S


@given(coef, coef, coef, coef, st.floats(0.0, 2 * math.pi))
def test_discriminant_is_rotation_invariant(a, b, c, d, theta):
    if max(abs(a), abs(b), abs(c), abs(d)) < 0.1:
        return
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    T = np.einsum("abc,ai,bj,ck->ijk", _tensor(a, b, c, d), R, R, R)
    d0, _ = umbilic_discriminant(a, b, c, d)
    d1, _ = umbilic_discriminant(*cubic_from_tensor(T))
    assert d1 == pytest.approx(d0, abs=1e-9 * max(1.0, abs(d0)))


def test_umbilic_classes():
    assert umbilic_discriminant(1, 0, 1, 0) == (-4.0, "D4plus")
    assert umbilic_discriminant(1, 0, -1, 0) == (4.0, "D4minus")
    assert umbilic_discriminant(1, 0, 0, 0)[1] == "degenerate"
    with pytest.raises(DegenerateInputError):
        umbilic_discriminant(0, 0, 0, 0)


@pytest.mark.parametrize("k,cls", [(2, "A2"), (3, "A3"), (4, "A4"), (5, "degenerate")])
def test_corank1_classes(k, cls):
    F = lambda v: np.array([v[0] ** k, v[1] + v[0] * v[1]])
    rec = classify_corank1(F, [0.0, 0.0])
    assert rec.cls == cls
    assert rec.corank == 1


def test_classifier_rejects_corank_two():
    with pytest.raises(WrongClassifierError):
        classify_corank1(lambda v: np.array([v[0] ** 2, v[1] ** 2]), [0.0, 0.0])


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.floats(-0.5, 0.5), st.floats(0.0, 0.2), st.sampled_from(["D4plus", "D4minus"]))
def test_gradient_asymmetry_is_two_eps(x, y, m1, m2, m3, eps, kind):
    nf = NormalFormProblem(kind, eps)
    assert abs(nf.asymmetry((x, y), (m1, m2, m3)) - 2 * eps) <= 1e-10
    # the jet Jacobian agrees with the closed form
    r = nf.residual_jets([x, y], [m1, m2, m3])
    J = np.array([v.grad for v in r])
    assert J == pytest.approx(nf.jacobian((x, y), (m1, m2, m3)), abs=1e-12)


@pytest.mark.parametrize("kind", ["D4plus", "D4minus"])
def test_unperturbed_witnesses_are_singular_roots(kind):
    nf = NormalFormProblem(kind, 0.0)
    L = level_bifurcation_set(nf, ((-0.6, 0.6), (-0.6, 0.6)), (-0.3, 0.3), grid=48, slices=12,
                              corank2=False, swallowtails=False)
    assert L.count("A2") > 100
    for p in L.points[::7]:
        x = p.witness[:2]
        assert np.max(np.abs(nf.F(p.params)(x))) <= 1e-12
        assert abs(np.linalg.det(nf.jacobian(x, p.params))) <= 1e-8


@pytest.mark.parametrize("kind,eps,expected", [("D4plus", 0.0, ["D4plus"]),
                                               ("D4minus", 0.0, ["D4minus"]),
                                               ("D4plus", 0.05, []), ("D4minus", 0.05, [])])
def test_corank_two_points(kind, eps, expected):
    nf = NormalFormProblem(kind, eps)
    recs = find_corank2(nf, [(-0.6, 0.6), (-0.6, 0.6), (-0.3, 0.3)])
    assert [r.cls for r in recs] == expected
    for r in recs:
        assert np.max(np.abs(r.params)) <= 1e-12


def test_swallowtails_of_the_perturbed_hyperbolic_umbilic():
    eps = 0.05
    nf = NormalFormProblem("D4plus", eps)
    L = level_bifurcation_set(nf, ((-0.6, 0.6), (-0.6, 0.6)), (-0.3, 0.3), grid=64, slices=41,
                              corank2=False)
    a4 = sorted(L.of_class("A4"), key=lambda p: p.witness[2])
    assert len(a4) == 2
    # closed form: x = -+eps/sqrt(3), y = 0, mu3 = +-sqrt(3) eps / 2
    for p, sgn in zip(a4, (-1, 1)):
        assert p.witness == pytest.approx([-sgn * eps / math.sqrt(3), 0.0, sgn * math.sqrt(3) * eps / 2],
                                          abs=1e-9)


def test_cusp_locus_matches_the_discriminant_curve():
    nf = NormalFormProblem("cusp")
    rows = cusp_level_set(nf, (-1.0, 1.0), (-1.0, 0.0), grid=200)
    assert len(rows) >= 300
    for mu1, mu2, x in rows:
        # the derivative cubic 4x^3 + 2 mu2 x + mu1 has a double root iff 27 mu1^2 + 8 mu2^3 = 0
        assert abs(27 * mu1 ** 2 + 8 * mu2 ** 3) <= 1e-12
        assert (mu1, mu2) == pytest.approx(cusp_fold_locus(x), abs=1e-12)
    # an independent scan of the discriminant sign on a 200 x 200 grid
    m1 = np.linspace(-1.0, 1.0, 200)
    m2 = np.linspace(-1.0, 0.0, 200)
    for b in m2[::10]:
        disc = -128 * b ** 3 - 432 * m1 ** 2
        crossings = m1[:-1][np.sign(disc[:-1]) != np.sign(disc[1:])]
        ours = [r[0] for r in rows if r[1] == b]
        for c in crossings:
            assert min(abs(c - o) for o in ours) <= m1[1] - m1[0]


@given(st.floats(-2.0, 2.0))
def test_cusp_locus_residual_vanishes(t):
    g1, g2 = cusp_locus_residual(t)
    assert abs(g1) <= 1e-12 * max(1.0, abs(t) ** 3)
    assert abs(g2) <= 1e-12 * max(1.0, t * t)


def test_normal_form_validation():
    with pytest.raises(ValueError):
        NormalFormProblem("E6")
    with pytest.raises(ValueError):
        level_bifurcation_set(NormalFormProblem("D4plus"), ((-1, 1), (-1, 1)), (-1, 1), grid=16)


def test_shooting_level_family_push_and_jacobian():
    from hambvp.experiments import henon_heiles_problem
    from hambvp.shooting import residual
    from hambvp.singularity import ShootingLevelFamily
    prob = henon_heiles_problem()
    fam = ShootingLevelFamily(prob, (1.4, 0.0, 0.0), 0)
    u = np.array([0.1, -0.2]), np.array([1.8, 2.0]), np.array([1.3, 1.5])
    P = fam.push(*u)
    J, dJ = fam.level_data(*u)
    for k in range(2):
        x = [u[0][k], u[1][k]]
        r, Jr = residual(prob, x, P[k])
        assert np.max(np.abs(r)) <= 1e-13
        assert J[k] == pytest.approx(Jr, abs=1e-12)
    assert dJ.shape == (2, 2, 2, 2)
