import numpy as np
import pytest

from sctorus.anosov import (
    ConeSpec,
    MapSpec,
    apply_map,
    certify_cones,
    default_cat_map,
    invert_map,
    jacobian,
)
from sctorus.errors import ConeViolationError

CAT_LAMBDA = (3 + np.sqrt(5)) / 2
CAT_NU = (3 - np.sqrt(5)) / 2


def test_linear_fixed_point(cat_map):
    np.testing.assert_allclose(apply_map(cat_map, (0.0, 0.0)), [0.0, 0.0])


def test_linear_wraps(cat_map):
    np.testing.assert_allclose(apply_map(cat_map, (0.5, 0.5)), [0.5, 0.0])


def test_perturbed_evaluation(perturbed_map):
    # A(0.25, 0) = (0.5, 0.25); p(0.25, 0) = (sin 0, sin(pi/2)) = (0, 1)
    np.testing.assert_allclose(
        apply_map(perturbed_map, (0.25, 0.0)), [0.5, 0.26], atol=1e-14
    )


def test_jacobian_constant_for_linear(cat_map, rng):
    pts = rng.random((10, 2))
    jac = jacobian(cat_map, pts)
    np.testing.assert_array_equal(jac, np.broadcast_to([[2.0, 1.0], [1.0, 1.0]], jac.shape))


def test_jacobian_analytic_derivative(perturbed_map):
    expected = np.array([[2.0, 1.0], [1.0, 1.0]]) + 0.01 * np.array(
        [[0.0, 2 * np.pi], [2 * np.pi, 0.0]]
    )
    np.testing.assert_allclose(jacobian(perturbed_map, (0.0, 0.0)), expected, atol=1e-14)


def test_jacobian_determinant_stays_near_one(perturbed_map, rng):
    # Monte-Carlo oracle: averaged det over random points stays near det A = 1
    pts = rng.random((10_000, 2))
    dets = np.linalg.det(jacobian(perturbed_map, pts))
    band = 4 * dets.std() / 100 + 0.02 * (2 * np.pi) ** 2 * 0.01**2
    assert abs(dets.mean() - 1.0) < band


def test_invert_linear_exact(cat_map):
    np.testing.assert_allclose(invert_map(cat_map, (0.5, 0.0)), [0.5, 0.5], atol=1e-15)


def test_invert_roundtrip(perturbed_map, rng):
    pts = rng.random((1000, 2))
    back = perturbed_map.invert(perturbed_map.apply(pts))
    d = np.abs(back - pts)
    d = np.minimum(d, 1.0 - d)
    assert d.max() < 1e-10
    fwd = perturbed_map.apply(perturbed_map.invert(pts))
    d = np.abs(fwd - pts)
    d = np.minimum(d, 1.0 - d)
    assert d.max() < 1e-10


def test_newton_residual_after_convergence(perturbed_map, rng):
    # oracle: run the Newton inversion and check the lift residual directly
    pts = rng.random((1000, 2))
    inv = perturbed_map.invert(pts)
    resid = perturbed_map.lift(inv) - pts
    resid -= np.round(resid)
    assert np.max(np.abs(resid)) < 1e-12


def test_mapspec_rejects_nonhyperbolic():
    with pytest.raises(ValueError, match="trace"):
        MapSpec(matrix=((1, 0), (0, 1)))
    with pytest.raises(ValueError, match="trace"):
        MapSpec(matrix=((1, 1), (0, 1)))


def test_mapspec_rejects_nonunimodular():
    with pytest.raises(ValueError, match="determinant"):
        MapSpec(matrix=((2, 0), (0, 2)))


def test_mapspec_rejects_excessive_delta():
    with pytest.raises(ValueError, match="diffeomorphism"):
        default_cat_map(0.5)


def test_mapspec_config_roundtrip(perturbed_map):
    assert MapSpec.from_config(perturbed_map.to_config()) == perturbed_map


# --- cone certification ------------------------------------------------------


def test_cat_map_rates_exact(cat_map):
    cone = ConeSpec.for_map(cat_map)
    rep = certify_cones([cat_map], cone, samples=50, depth=30, seed=0)
    assert rep.invariance_violations == 0
    assert abs(rep.fitted_lambda - CAT_LAMBDA) < 1e-9
    assert abs(rep.fitted_nu - CAT_NU) < 1e-9
    assert 0.0 < rep.fitted_c <= 1.0


def test_perturbed_sequence_certifies(perturbed_map):
    cone = ConeSpec.for_map(perturbed_map)
    # 20 distinct small perturbations of the cat matrix
    maps = [default_cat_map(0.01 * (k + 1) / 20) for k in range(20)]
    rep = certify_cones(maps, cone, samples=100, depth=20, seed=3)
    assert rep.invariance_violations == 0
    assert abs(rep.fitted_lambda - CAT_LAMBDA) / CAT_LAMBDA < 0.05
    assert abs(rep.fitted_nu - CAT_NU) / CAT_NU < 0.05


def test_cone_monotone_in_delta():
    cone = ConeSpec.for_map(default_cat_map(0.0))
    for delta in (0.04, 0.02, 0.01):
        rep = certify_cones([default_cat_map(delta)], cone, samples=50, depth=10, seed=4)
        assert rep.invariance_violations == 0


def test_cone_violation_raises_with_witness(cat_map):
    # a cone around the unstable axis cannot be invariant under the inverse
    bad = ConeSpec(tuple(cat_map.eigenvector(stable=False)), np.deg2rad(15.0))
    with pytest.raises(ConeViolationError):
        certify_cones([cat_map], bad, samples=20, depth=5, seed=5, strict=True)
    rep = certify_cones([cat_map], bad, samples=20, depth=5, seed=5)
    assert rep.invariance_violations > 0


def test_cone_spec_validation(cat_map):
    with pytest.raises(ValueError):
        ConeSpec((1.0, 0.0), np.pi / 2)
    with pytest.raises(ValueError):
        ConeSpec((0.0, 0.0), 0.1)


def test_certify_cones_input_validation(cat_map):
    cone = ConeSpec.for_map(cat_map)
    with pytest.raises(ValueError):
        certify_cones([], cone, samples=10, depth=5)
    with pytest.raises(ValueError):
        certify_cones([cat_map], cone, samples=0, depth=5)
