import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from potgrid.counterexample import UncertifiedLayerWarning, charge_free, tensor_assemble
from potgrid.geometry import DomainMask, GridFunction, GridSpec, hausdorff, morph_interior
from potgrid.separately import (
    ProductGridFunction,
    distinguished_boundary_check,
    pareto_rows,
    partial_max,
    rectangle_singular,
    slice_check,
    stratified_anchors,
    tensor_windows,
    torus_mean_check,
)

G = GridSpec.spanning(-1.0, 1.0, 33)
DISK = DomainMask.from_predicate(G, lambda X, Y: X**2 + Y**2 <= 1)
G65 = GridSpec.spanning(-1.0, 1.0, 65)
DISK65 = DomainMask.from_predicate(G65, lambda X, Y: X**2 + Y**2 <= 1)


def product(fn, d1=DISK, d2=DISK):
    return ProductGridFunction.from_callable(d1, d2, fn)


def gf(dom, fn):
    return GridFunction.from_callable(dom, fn)


@pytest.fixture(scope="module")
def tensor(segment_build):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        return tensor_assemble(segment_build.layers, segment_build.layers, 4)


# product functions


def test_block_matches_pointwise_values():
    u = product(lambda X1, X2, Y1, Y2: X1 * Y2 + X2**2)
    blk = u.block()
    idx1, idx2 = DISK.indices(), DISK.indices()
    for i, j in [(0, 0), (10, 40), (len(idx1) - 1, 3)]:
        assert blk[i, j] == pytest.approx(u.value(tuple(idx1[i]), tuple(idx2[j])))


def test_terms_must_share_supports():
    with pytest.raises(ValueError):
        ProductGridFunction.from_terms(DISK, DISK, [(GridFunction.constant(DomainMask.full(G), 1.0), GridFunction.constant(DISK, 1.0))])


def test_restrict_checks_window():
    u = product(lambda X1, X2, Y1, Y2: X1)
    with pytest.raises(ValueError):
        u.restrict(DomainMask.full(G), DISK)


def test_stratified_anchors_deterministic():
    a = stratified_anchors(DISK, 7, seed=3)
    assert a == stratified_anchors(DISK, 7, seed=3)
    assert len(a) == 7 and all(DISK.cells[c] for c in a)
    with pytest.raises(ValueError):
        stratified_anchors(DISK, 7, extra=[(0, 0)])


# slice checks


def test_paraboloid_sum_passes_both_slices():
    u = product(lambda X1, X2, Y1, Y2: X1**2 + X2**2 + Y1**2 + Y2**2, DISK65, DISK65)
    vx, vy = slice_check(u)
    assert vx.passed and vy.passed


def test_negative_first_block_fails_only_x():
    u = product(lambda X1, X2, Y1, Y2: -(X1**2 + X2**2) + 0 * Y1, DISK65, DISK65)
    vx, vy = slice_check(u)
    assert not vx.passed and vy.passed


def test_slice_check_needs_three_slices():
    with pytest.raises(ValueError):
        slice_check(product(lambda X1, X2, Y1, Y2: X1), n_slices=2)


def test_tensor_slices_pass(segment_build, tensor):
    zone = charge_free(segment_build.layers, segment_build.omega)
    vx, vy = slice_check(tensor, 7, tol=1e-4, region1=zone, region2=zone)
    assert vx.passed and vy.passed, f"worst margins {vx.worst_margin:.3g} / {vy.worst_margin:.3g}"


# partial maxima


def test_partial_max_of_x_only_function():
    f = lambda X, Y: np.sin(2 * X) + Y
    u = product(lambda X1, X2, Y1, Y2: f(X1, X2) + 0 * Y1)
    assert np.allclose(partial_max(u, 1).values[DISK.cells], gf(DISK, f).values[DISK.cells])


def test_partial_max_of_separable_product():
    f, g = gf(DISK, lambda X, Y: 1 + X**2), gf(DISK, lambda X, Y: np.exp(Y))
    u = ProductGridFunction.from_terms(DISK, DISK, [(f, g)])
    assert np.allclose(partial_max(u, 1).values, f.values * g.values.max())
    assert np.allclose(partial_max(u, 2).values, g.values * f.values.max())


def test_fast_and_blockwise_partial_max_agree():
    rng = np.random.default_rng(2)
    terms = [(GridFunction(DISK, np.abs(rng.normal(size=G.shape))), GridFunction(DISK, rng.normal(size=G.shape))) for _ in range(4)]
    fast = ProductGridFunction.from_terms(DISK, DISK, terms)
    slow = ProductGridFunction(DISK, DISK, fast._block)
    for ax in (1, 2):
        np.testing.assert_allclose(partial_max(fast, ax).values, partial_max(slow, ax).values, rtol=1e-13, atol=1e-13)


def test_pareto_rows_drop_dominated():
    G_ = np.array([[1.0, 0.0], [0.5, 0.5], [0.2, 0.2], [0.0, 1.0], [1.0, 0.0]])
    kept = {tuple(r) for r in pareto_rows(G_)}
    assert kept == {(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)}


def test_partial_max_bad_axis():
    with pytest.raises(ValueError):
        partial_max(product(lambda X1, X2, Y1, Y2: X1), 3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_max_dominates_and_is_monotone(seed):
    rng = np.random.default_rng(seed)
    def mk():
        return [(GridFunction(DISK, np.abs(rng.normal(size=G.shape))), GridFunction(DISK, np.abs(rng.normal(size=G.shape)))) for _ in range(3)]
    t = mk()
    extra = mk()
    u = ProductGridFunction.from_terms(DISK, DISK, t)
    v = ProductGridFunction.from_terms(DISK, DISK, t + extra)
    M = partial_max(u, 1).values[DISK.cells]
    assert np.all(u.block() <= M[:, None] + 1e-12)
    assert np.all(partial_max(v, 1).values[DISK.cells] >= M - 1e-12)


def test_tensor_partial_max_peaks_on_s1(segment_build, tensor):
    M = partial_max(tensor, 1)
    g = segment_build.omega.grid
    top = DomainMask(g, M.values >= 0.999 * M.values.max())
    assert hausdorff(top, segment_build.ground_truth_S) <= 2 * g.h + g.h


# rectangle singular sets


def test_bounded_product_has_empty_rectangle_sets():
    u = lambda nu: product(lambda X1, X2, Y1, Y2: (X1**2 + Y2**2) * (1 - 1 / (nu + 1)))
    rect = rectangle_singular(u, 4)
    assert rect.S1.is_empty() and rect.S2.is_empty()


def test_blow_up_in_x_only():
    fam = lambda nu: ProductGridFunction.from_terms(
        DISK, DISK, [(gf(DISK, lambda X, Y, k=k: k * np.maximum(0, 1 - np.abs(X) / 0.3)), GridFunction.constant(DISK, 1.0)) for k in range(1, nu + 1)]
    )
    rect = rectangle_singular(fam, 4)
    assert rect.S2.is_empty()


def test_tensor_rectangle_sets_recovered(segment_build):
    layers = segment_build.layers
    g = segment_build.omega.grid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        rect = rectangle_singular(lambda k: tensor_assemble(layers, layers, k), 4, [(k - 0.5) ** 2 for k in range(1, 5)], g.h)
    bound = 2 * g.h + g.h
    assert hausdorff(rect.S1, segment_build.ground_truth_S) <= bound
    assert hausdorff(rect.S2, segment_build.ground_truth_S) <= bound


# distinguished boundary


def test_constant_product_sets_constant_flag():
    db = distinguished_boundary_check(product(lambda X1, X2, Y1, Y2: 3.0 + 0 * X1))
    assert db.passed and db.constant_case and db.M_db == 3.0


def test_linear_sum_peaks_on_distinguished_boundary():
    db = distinguished_boundary_check(product(lambda X1, X2, Y1, Y2: X1 + Y1))
    assert db.passed and not db.constant_case
    a, b = db.argmax
    assert DISK.boundary.cells[a] and DISK.boundary.cells[b]


def test_interior_peak_fails():
    bump = lambda X1, X2, Y1, Y2: np.exp(-(X1**2 + X2**2 + Y1**2 + Y2**2) * 10)
    assert not distinguished_boundary_check(product(bump)).passed


def test_disconnected_factor_rejected():
    two = DomainMask.from_predicate(G, lambda X, Y: np.abs(X) > 0.5)
    with pytest.raises(ValueError):
        distinguished_boundary_check(product(lambda X1, X2, Y1, Y2: X1, two, DISK))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 50), st.floats(-20, 20))
def test_distinguished_boundary_affine_invariance(a, b):
    u = product(lambda X1, X2, Y1, Y2: (X1 - 0.3) ** 2 + X2 * Y1 + Y2**2)
    assert distinguished_boundary_check(u.affine(a, b)).passed == distinguished_boundary_check(u).passed


def test_tensor_windows_pass(segment_build, tensor):
    S = segment_build.ground_truth_S
    for W1, W2 in tensor_windows(S, S, 4, 0.5, 0.5, 0):
        assert distinguished_boundary_check(tensor.restrict(W1, W2)).passed


# torus means


def test_torus_means_on_tensor_windows(segment_build, tensor):
    S = segment_build.ground_truth_S
    h = S.grid.h
    wins = tensor_windows(S, S, 10, 0.5, 0.5, 1)
    assert len(wins) >= 10
    for W1, W2 in wins:
        w = tensor.restrict(W1, W2)
        tm = torus_mean_check(w, morph_interior(W1, 6 * h), morph_interior(W2, 6 * h), count=5)
        assert tm.passed


def test_torus_mean_of_paraboloid_sum_is_positive():
    u = product(lambda X1, X2, Y1, Y2: X1**2 + X2**2 + Y1**2 + Y2**2, DISK65, DISK65)
    inner = morph_interior(DISK65, 8 * G65.h)
    tm = torus_mean_check(u, inner, inner, count=10)
    rho = 4 * G65.h
    assert tm.passed
    assert all(m == pytest.approx(2 * rho**2, rel=1e-9) for *_, m in tm.samples)
