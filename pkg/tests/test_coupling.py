import numpy as np
import pytest

from sctorus.coupling import (
    CoupledMap,
    CouplingSpec,
    apply_phi,
    certify_assumptions,
    coupling_field,
    example_convolution_coupling,
    example_separable_coupling,
    invert_phi,
    meanzero_separable_coupling,
    measure_mean,
    zero_coupling,
)
from sctorus.errors import CouplingAdmissibilityError
from sctorus.particles import Ensemble, histogram_ensemble, sample_from_density
from sctorus.torus import TorusDensity
from sctorus.trig import TrigField2, TrigPolynomial


def _torus_gap(a, b):
    d = np.abs(a - b)
    return np.max(np.minimum(d, 1.0 - d))


def test_zero_field(uniform_64, rng):
    spec = zero_coupling(0.3)
    pts = rng.random((20, 2))
    np.testing.assert_array_equal(coupling_field(spec, uniform_64, pts), np.zeros((20, 2)))


def test_separable_mean_zero_kernel_vanishes(uniform_64, rng):
    # K2 = (cos 2pi u, cos 2pi v) integrates to zero against Lebesgue
    spec = meanzero_separable_coupling(0.02)
    pts = rng.random((50, 2))
    g = coupling_field(spec, uniform_64, pts)
    assert np.max(np.abs(g)) < 1e-12


def test_convolution_single_point_mass():
    kappa = TrigField2.from_terms({"u": [{"k": [1, 0], "sin": 1.0}], "v": []})
    spec = CouplingSpec(kind="convolution", eps=0.05, kappa=kappa)
    delta = Ensemble(positions=np.array([[0.25, 0.0]]), seed=0)
    g = coupling_field(spec, delta, np.array([0.5, 0.0]))
    np.testing.assert_allclose(g, [1.0, 0.0], atol=1e-14)


def test_apply_phi_identity_at_zero_strength(uniform_64, rng):
    spec = example_separable_coupling(0.0)
    pts = rng.random((1000, 2))
    np.testing.assert_array_equal(apply_phi(spec, uniform_64, pts), pts)


def test_apply_phi_constant_displacement():
    # kernels chosen so mu(K2) = (1, 1) and K1 = (1, 1): pure shift by eps
    const = TrigPolynomial.constant(1.0)
    spec = CouplingSpec(
        kind="separable",
        eps=0.1,
        k1=TrigField2(const, const),
        k2=TrigField2(const, const),
    )
    out = apply_phi(spec, TorusDensity.uniform(16), np.array([0.0, 0.0]))
    np.testing.assert_allclose(out, [0.1, 0.1], atol=1e-15)


def test_invert_phi_trivial_at_zero(uniform_64, rng):
    spec = example_separable_coupling(0.0)
    pts = rng.random((100, 2))
    np.testing.assert_array_equal(invert_phi(spec, uniform_64, pts), pts)


def test_invert_phi_roundtrip(rng):
    spec = example_separable_coupling(0.05)
    mu = TorusDensity.bump((0.3, 0.6), 0.2, 64)
    pts = rng.random((1000, 2))
    fwd = apply_phi(spec, mu, pts)
    back = invert_phi(spec, mu, fwd)
    assert _torus_gap(back, pts) < 1e-11
    again = apply_phi(spec, mu, invert_phi(spec, mu, pts))
    assert _torus_gap(again, pts) < 1e-11


def test_admissibility_rejected_at_construction():
    # choose eps so that eps * Lip(G) = 0.9, above the 0.5 diffeomorphism bound
    lip = example_separable_coupling(0.01).lip_bound()
    with pytest.raises(CouplingAdmissibilityError):
        example_separable_coupling(0.9 / lip)


def test_field_linear_in_measure(rng):
    for spec in (example_separable_coupling(0.03), example_convolution_coupling(0.03)):
        h1 = TorusDensity.bump((0.2, 0.2), 0.15, 32)
        h2 = TorusDensity.bump((0.7, 0.5), 0.2, 32)
        mix = TorusDensity.from_cells(0.5 * (h1.cells + h2.cells))
        pts = rng.random((200, 2))
        lhs = coupling_field(spec, mix, pts)
        rhs = 0.5 * (coupling_field(spec, h1, pts) + coupling_field(spec, h2, pts))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_ensemble_vs_histogram_agreement(rng):
    # same particles: the only gap is the within-cell quantization, O(1/n)
    spec = example_separable_coupling(0.05)
    ens = sample_from_density(TorusDensity.bump((0.4, 0.4), 0.2, 64), 100_000, seed=9)
    pts = rng.random((100, 2))
    errs = {}
    for n in (32, 64, 128):
        hist = histogram_ensemble(ens, n)
        g_e = coupling_field(spec, ens, pts)
        g_h = coupling_field(spec, hist, pts)
        errs[n] = np.max(np.abs(g_e - g_h))
        k2_lip = max(spec.k2.u.partial(0).sup_bound() + spec.k2.u.partial(1).sup_bound(),
                     spec.k2.v.partial(0).sup_bound() + spec.k2.v.partial(1).sup_bound())
        bound = spec.k1.sup_bound() * k2_lip / n + 3 / np.sqrt(ens.n_particles)
        assert errs[n] <= bound
    assert errs[128] < errs[32]


def test_ensemble_mean_matches_density_mean():
    h = TorusDensity.from_trig(TrigPolynomial(((1, 0),), (0.6,), (0.0,)), 64)
    ens = sample_from_density(h, 200_000, seed=3)
    poly = TrigPolynomial(((1, 0),), (1.0,), (0.0,))
    assert abs(measure_mean(ens, poly) - measure_mean(h, poly)) < 0.01


def test_coupled_map_roundtrip(perturbed_map, separable_02, rng):
    mu = TorusDensity.bump((0.5, 0.25), 0.2, 64)
    cm = CoupledMap(base=perturbed_map, coupling=separable_02, mu=mu)
    pts = rng.random((500, 2))
    assert _torus_gap(cm.invert(cm.apply(pts)), pts) < 1e-10


def test_coupled_map_jacobian_finite_difference(perturbed_map, separable_02):
    mu = TorusDensity.bump((0.5, 0.25), 0.2, 64)
    cm = CoupledMap(base=perturbed_map, coupling=separable_02, mu=mu)
    pts = np.array([[0.3, 0.8], [0.1, 0.2]])
    jac = cm.jacobian_at(pts)
    eps = 1e-7
    for axis in (0, 1):
        shifted = pts.copy()
        shifted[:, axis] += eps
        lift_diff = cm.apply(shifted) - cm.apply(pts)
        lift_diff -= np.round(lift_diff)
        np.testing.assert_allclose(jac[..., axis], lift_diff / eps, atol=1e-5)


# --- assumption certification ------------------------------------------------


def test_identical_measures_give_zero_ratio(separable_02):
    h = TorusDensity.bump((0.5, 0.5), 0.2, 32)
    rep = certify_assumptions(separable_02, [(h, h)], [(0.01, 0.01)])
    assert rep.a1_constant == 0.0
    assert rep.a2_constant == 0.0


def test_zero_coupling_constants_vanish(uniform_64):
    h = TorusDensity.bump((0.5, 0.5), 0.2, 64)
    rep = certify_assumptions(zero_coupling(0.2), [(uniform_64, h)], [(0.0, 0.1)])
    assert rep.a1_constant == 0.0
    assert rep.a2_constant == 0.0
    assert rep.max_ratio == 0.0


def test_a1_estimate_below_analytic_bound(separable_02):
    # oracle: coefficient bound ||K1||_C2 * ||K2||_inf dominates the sampled ratio
    pairs = [
        (TorusDensity.bump((0.2, 0.3), 0.15, 64), TorusDensity.bump((0.7, 0.6), 0.25, 64)),
        (TorusDensity.uniform(64), TorusDensity.bump((0.5, 0.5), 0.1, 64)),
    ]
    rep = certify_assumptions(separable_02, pairs, [(0.0, 0.02)])
    bound = separable_02.k1.c_r_bound(2) * max(
        separable_02.k2.u.sup_bound(), separable_02.k2.v.sup_bound()
    )
    assert 0.0 < rep.a1_constant <= bound


def test_coupling_config_roundtrip(separable_02):
    again = CouplingSpec.from_config(separable_02.to_config())
    assert again == separable_02
    conv = example_convolution_coupling(0.04)
    assert CouplingSpec.from_config(conv.to_config()) == conv
