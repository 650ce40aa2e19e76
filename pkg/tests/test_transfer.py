import numpy as np
import pytest

from sctorus.coupling import (
    example_separable_coupling,
    meanzero_separable_coupling,
    zero_coupling,
)
from sctorus.torus import Observable, TorusDensity, cell_centers, integrate, l1_distance
from sctorus.transfer import (
    CoupledOperatorPlan,
    apply_coupled,
    build_phi_ulam,
    build_ulam,
    push_density,
    push_sequential,
)
from sctorus.trig import TrigPolynomial

from _oracles import mc_pushforward


def test_identity_map_gives_identity_matrix():
    op = build_ulam(lambda p: p, 16)
    assert np.array_equal(op.matrix.toarray(), np.eye(256))


def test_rigid_translation_gives_permutation():
    shift = np.array([0.5, 0.5])
    op = build_ulam(lambda p: (p + shift) % 1.0, 16)
    dense = op.matrix.toarray()
    assert np.all(np.isin(dense, (0.0, 1.0)))
    assert np.all(dense.sum(axis=0) == 1.0)
    assert np.all(dense.sum(axis=1) == 1.0)
    h = TorusDensity.bump((0.25, 0.25), 0.1, 16)
    pushed = push_density(op, h)
    np.testing.assert_allclose(pushed.cells, np.roll(h.cells, (8, 8), axis=(0, 1)), atol=1e-15)


def test_cat_map_columns_and_uniform(cat_map, cat_ulam_64, uniform_64):
    assert np.all(cat_ulam_64.column_sums() == 1.0)
    pushed = push_density(cat_ulam_64, uniform_64)
    assert np.max(np.abs(pushed.cells - 1.0)) < 1e-14


def test_push_preserves_mass_and_positivity(cat_ulam_64, rng):
    h = TorusDensity.from_cells(rng.random((64, 64)) + 0.01, normalize=True)
    out = push_density(cat_ulam_64, h)
    assert np.all(out.cells >= 0.0)
    assert abs(out.mass() - 1.0) <= 1e-12


def test_push_resolution_mismatch(cat_ulam_64):
    with pytest.raises(ValueError):
        push_density(cat_ulam_64, TorusDensity.uniform(32))


def test_quadrature_order_validated(cat_map):
    with pytest.raises(ValueError):
        build_ulam(cat_map, 16, s=1)
    with pytest.raises(ValueError):
        build_ulam(cat_map, 48)


def test_cat_mixing_reaches_uniform(cat_map):
    # independent oracle below (Monte Carlo) corroborates the same push-forward
    op = build_ulam(cat_map, 256)
    h = TorusDensity.from_trig(TrigPolynomial(((1, 0),), (0.9,), (0.0,)), 256)
    for _ in range(20):
        h = push_density(op, h)
    assert l1_distance(h, TorusDensity.uniform(256)) < 0.01


def test_push_matches_monte_carlo_oracle(cat_map, cat_ulam_64):
    h = TorusDensity.from_trig(TrigPolynomial(((1, 0), (0, 1)), (0.6, 0.0), (0.0, 0.3)), 64)
    mc = mc_pushforward(h, cat_map, 2_000_000, seed=7)
    ul = push_density(cat_ulam_64, h)
    assert l1_distance(ul, mc) < 0.02


def test_duality_relation(cat_map, cat_ulam_128, rng):
    # (L h)(phi) = h(phi o T) up to quadrature error
    n = 128
    h = TorusDensity.from_trig(TrigPolynomial(((1, 0), (1, 1)), (0.5, 0.2), (0.0, 0.1)), n)
    pushed = push_density(cat_ulam_128, h)
    centers = cell_centers(n)
    for _ in range(10):
        k = (int(rng.integers(-3, 4)), int(rng.integers(0, 4)))
        if k == (0, 0):
            k = (1, 0)
        phi = Observable(TrigPolynomial((k,), (float(rng.normal()),), (float(rng.normal()),)))
        lhs = integrate(pushed, phi)
        rhs = float((h.cells * phi(cat_map.apply(centers))).mean())
        assert abs(lhs - rhs) < 5.0 / n


def test_refinement_consistency(cat_map):
    # results at n and 2n agree within C/n on smooth input
    poly = TrigPolynomial(((1, 0), (0, 1)), (0.6, 0.0), (0.0, 0.3))
    errs = {}
    for n in (64, 128, 256):
        coarse = push_density(build_ulam(cat_map, n), TorusDensity.from_trig(poly, n))
        fine = push_density(build_ulam(cat_map, 2 * n), TorusDensity.from_trig(poly, 2 * n))
        errs[n] = l1_distance(coarse.prolong(), fine)
    assert errs[128] < errs[64]
    assert errs[256] < errs[128]
    assert errs[64] * 64 < 10.0


# --- coupled plans -----------------------------------------------------------


def test_coupled_zero_eps_is_bitwise_base(cat_ulam_64, uniform_64):
    h = TorusDensity.bump((0.3, 0.3), 0.2, 64)
    plan = CoupledOperatorPlan(base=cat_ulam_64, coupling=example_separable_coupling(0.0), g=uniform_64)
    np.testing.assert_array_equal(apply_coupled(plan, h).cells, push_density(cat_ulam_64, h).cells)


def test_coupled_zero_kind_is_bitwise_base(cat_ulam_64, uniform_64):
    h = TorusDensity.bump((0.3, 0.3), 0.2, 64)
    plan = CoupledOperatorPlan(base=cat_ulam_64, coupling=zero_coupling(0.5), g=uniform_64)
    np.testing.assert_array_equal(apply_coupled(plan, h).cells, push_density(cat_ulam_64, h).cells)


def test_coupled_uniform_fixed_for_mean_zero_kernel(cat_ulam_64, uniform_64):
    # G vanishes against Lebesgue and the cat map preserves Lebesgue
    plan = CoupledOperatorPlan(base=cat_ulam_64, coupling=meanzero_separable_coupling(0.02), g=uniform_64)
    out = apply_coupled(plan, uniform_64)
    assert np.max(np.abs(out.cells - 1.0)) < 1e-11


def test_coupled_preserves_mass_positivity(cat_ulam_64):
    h = TorusDensity.bump((0.6, 0.1), 0.12, 64)
    g = TorusDensity.bump((0.2, 0.9), 0.3, 64)
    plan = CoupledOperatorPlan(base=cat_ulam_64, coupling=example_separable_coupling(0.05), g=g)
    out = apply_coupled(plan, h)
    assert np.all(out.cells >= 0.0)
    assert abs(out.mass() - 1.0) <= 1e-12


def test_coupled_resolution_mismatch(cat_ulam_64):
    with pytest.raises(ValueError):
        CoupledOperatorPlan(
            base=cat_ulam_64, coupling=zero_coupling(), g=TorusDensity.uniform(32)
        )


def test_phi_scatter_matches_explicit_phi_matrix(cat_ulam_64):
    # the implicit interaction stage equals building the fresh Ulam matrix of Phi
    from sctorus.transfer import _phi_push_cells

    h = TorusDensity.bump((0.4, 0.7), 0.15, 64)
    g = TorusDensity.bump((0.8, 0.2), 0.25, 64)
    plan = CoupledOperatorPlan(base=cat_ulam_64, coupling=example_separable_coupling(0.05), g=g)
    via_scatter = _phi_push_cells(plan, h.cells)
    phi_op = build_phi_ulam(plan)
    via_matrix = (phi_op.matrix @ h.cells.ravel()).reshape(64, 64)
    np.testing.assert_allclose(via_scatter, via_matrix, atol=1e-12)


def test_push_sequential_empty_and_linear(cat_ulam_64):
    h = TorusDensity.bump((0.5, 0.5), 0.2, 64)
    assert push_sequential([], h) is h
    plans = [
        CoupledOperatorPlan(base=cat_ulam_64, coupling=example_separable_coupling(0.0), g=h)
        for _ in range(3)
    ]
    out = push_sequential(plans, h)
    manual = h
    for _ in range(3):
        manual = push_density(cat_ulam_64, manual)
    np.testing.assert_array_equal(out.cells, manual.cells)


def test_sequential_contracts_differences(cat_ulam_64, rng):
    # pushing two densities through the same driving sequence shrinks their gap
    from sctorus.meanfield import random_smooth_density

    h1 = TorusDensity.from_trig(TrigPolynomial(((1, 0),), (0.9,), (0.0,)), 64)
    h2 = TorusDensity.uniform(64)
    plans = [
        CoupledOperatorPlan(
            base=cat_ulam_64,
            coupling=example_separable_coupling(0.02),
            g=random_smooth_density(64, rng),
        )
        for _ in range(10)
    ]
    gaps = [l1_distance(h1, h2)]
    a, b = h1, h2
    for plan in plans:
        a = apply_coupled(plan, a)
        b = apply_coupled(plan, b)
        gaps.append(l1_distance(a, b))
    assert gaps[-1] < 0.05 * gaps[0]


def test_dump_coo_roundtrips(tmp_path, cat_ulam_64):
    path = tmp_path / "op.txt"
    cat_ulam_64.dump_coo(path)
    rows = []
    with open(path) as fh:
        for line in fh:
            r, c, v = line.split()
            rows.append((int(r), int(c), float(v)))
    assert len(rows) == cat_ulam_64.matrix.nnz
    got = {(r, c): v for r, c, v in rows[:50]}
    dense = cat_ulam_64.matrix.tocoo()
    ref = {(r, c): v for r, c, v in zip(dense.row[:50], dense.col[:50], dense.data[:50])}
    assert got == ref
