"""Acceptance suite: one test per criterion (or per part), each at its stated tolerance."""

import time
import warnings

import numpy as np
import pytest

from potgrid import io
from potgrid.cli import main
from potgrid.counterexample import UncertifiedLayerWarning, charge_free, tensor_assemble
from potgrid.envelope import FunctionFamily, extract_singular_set, sup_envelope, validate_singular_report, witness_ladder
from potgrid.geometry import DomainMask, GridFunction, GridSpec, hausdorff
from potgrid.harmonic import BoundaryData, poisson_extend_disk, solve_dirichlet
from potgrid.separately import ProductGridFunction, distinguished_boundary_check, rectangle_singular, slice_check, tensor_windows
from potgrid.subharmonic import family_max_principle, submean_test


def disk(res):
    g = GridSpec.spanning(-1.0, 1.0, res)
    return DomainMask.from_predicate(g, lambda X, Y: X**2 + Y**2 <= 1)


@pytest.fixture(scope="module")
def tensor_parts(segment_build):
    layers = segment_build.layers
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        partial = [tensor_assemble(layers, layers, k) for k in range(1, 5)]
    return segment_build, partial, t0


# 1


def test_criterion_01_poisson_kernel():
    t0 = time.perf_counter()
    M = 256
    th = 2 * np.pi * np.arange(M) / M
    one = poisson_extend_disk(np.ones(M), (0.0, 0.0), 1.0, (0.25, -0.4))
    cos0 = poisson_extend_disk(np.cos(th), (0.0, 0.0), 1.0, (0.0, 0.0))
    assert abs(one - 1) <= 1e-10
    assert abs(cos0) <= 1e-10
    assert time.perf_counter() - t0 < 1.0


# 2


def test_criterion_02_dirichlet_convergence():
    t0 = time.perf_counter()
    cubic = lambda X, Y: X**3 - 3 * X * Y**2
    errs = []
    for res in (129, 257):
        dom = DomainMask.full(GridSpec.spanning(-1.0, 1.0, res))
        u, _ = solve_dirichlet(BoundaryData.from_callable(dom, cubic))
        X, Y = dom.grid.coords()
        errs.append(float(np.abs(u.values - cubic(X, Y))[dom.interior.cells].max()))
    ratio = errs[0] / errs[1]
    assert time.perf_counter() - t0 < 60
    assert 3.0 <= ratio <= 5.0, f"errors {errs[0]:.3g}, {errs[1]:.3g}; ratio {ratio:.3g}"


# 3


def test_criterion_03_submean_verdicts():
    t0 = time.perf_counter()
    dom = disk(129)
    h = dom.grid.h
    radii = [4 * h, 8 * h, 16 * h]
    up = submean_test(GridFunction.from_callable(dom, lambda X, Y: X**2 + Y**2), radii=radii)
    assert up.passed
    rho, lo, hi = up.radius_margins[-1]
    assert rho == 16 * h
    assert abs(lo - rho**2) <= 1e-3 * rho**2 and abs(hi - rho**2) <= 1e-3 * rho**2
    down = submean_test(GridFunction.from_callable(dom, lambda X, Y: -(X**2 + Y**2)), radii=radii)
    assert not down.passed
    for (r1, lo1, hi1), (r2, lo2, hi2) in zip(up.radius_margins, down.radius_margins):
        assert lo2 == pytest.approx(-hi1, rel=1e-12) and hi2 == pytest.approx(-lo1, rel=1e-12)
    log = submean_test(GridFunction.from_callable(dom, lambda X, Y: np.log(np.hypot(X - 1.5, Y - 0.3))), tol=1e-6)
    assert log.passed
    assert time.perf_counter() - t0 < 10


# 4

POOL = [
    lambda X, Y: X**2 + Y**2,
    lambda X, Y: X**3 - 3 * X * Y**2,
    lambda X, Y: np.exp(X) * np.cos(Y),
    lambda X, Y: np.log(np.hypot(X - 1.5, Y - 0.3)),
    lambda X, Y: np.abs(X - 0.2),
    lambda X, Y: X**4 + Y**4,
    lambda X, Y: np.maximum(X, Y),
    lambda X, Y: np.exp(2 * Y),
]


def certified_member(dom, rng):
    while True:
        idx = rng.choice(len(POOL), 2, replace=False)
        a, b = rng.uniform(0.1, 3, 2)
        c = rng.normal()
        u = GridFunction.from_callable(dom, lambda X, Y: a * POOL[idx[0]](X, Y) + b * POOL[idx[1]](X, Y) + c)
        if submean_test(u).passed:
            return u


def test_criterion_04_family_maximum_principle():
    dom = disk(65)
    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(50):
        fam = [certified_member(dom, rng) for _ in range(rng.integers(1, 6))]
        failures += not family_max_principle(fam).passed
    assert failures == 0


# 5


def test_criterion_05_null_case():
    dom = disk(65)
    rng = np.random.default_rng(5)
    for _ in range(12):
        fam = FunctionFamily([certified_member(dom, rng) for _ in range(rng.integers(1, 5))])
        assert submean_test(sup_envelope(fam)).passed
        assert extract_singular_set(fam).S.is_empty()


# 6


def test_criterion_06a_layers_certified(segment_build):
    assert segment_build.elapsed < 300
    errs = [round(l.achieved_sup_error, 3) for l in segment_build.layers]
    assert all(l.certified for l in segment_build.layers), f"sup errors {errs}"


def test_criterion_06b_zero_on_shell_high_on_band(segment_build):
    for l in segment_build.layers:
        assert np.all(l.v.values[l.spec.Kp.cells] == 0.0), f"layer {l.n}"
        assert np.all(l.v.values[l.spec.An.cells] >= l.n - 0.5), f"layer {l.n}"


def test_criterion_06c_layers_subharmonic(segment_build):
    bad = []
    for l in segment_build.layers:
        v = submean_test(l.v.restrict(segment_build.omega - l.charge_zone), tol=1e-4)
        if not v.passed:
            bad.append((l.n, v.worst_margin))
    assert not bad, f"failing layers (n, worst margin): {bad}"


def test_criterion_06d_witnesses(segment_build):
    ws = segment_build.witnesses
    assert all(w.value >= w.n - 0.5 for w in ws), [round(w.value, 3) for w in ws]
    assert all(b.value >= a.value for a, b in zip(ws, ws[1:]))


def test_criterion_06e_tail_vanishing(segment_build):
    assert abs(segment_build.M_off - segment_build.M_off_1) <= 1e-12


# 7


def test_criterion_07_singular_set_recovery(segment_build):
    h = segment_build.omega.grid.h
    fam = FunctionFamily(segment_build.u_partial[1:])
    rep = extract_singular_set(fam, levels=witness_ladder(4), r=h)
    dist = hausdorff(rep.S, segment_build.ground_truth_S)
    _, nowhere_dense_ok, components_ok = validate_singular_report(rep, segment_build.omega)
    assert dist <= 2 * h + rep.r, f"Hausdorff {dist}"
    assert nowhere_dense_ok and components_ok


# 8


def test_criterion_08a_tensor_slices(tensor_parts):
    rep, partial, _ = tensor_parts
    zone = charge_free(rep.layers, rep.omega)
    S = rep.ground_truth_S.indices()
    anchor = [tuple(S[len(S) // 2])]
    vx, vy = slice_check(partial[-1], 7, tol=1e-4, extra_x=anchor, extra_y=anchor, region1=zone, region2=zone)
    assert vx.passed and vy.passed, f"worst margins {vx.worst_margin:.3g} / {vy.worst_margin:.3g}"


def test_criterion_08b_tensor_witness(tensor_parts):
    rep, partial, _ = tensor_parts
    w = rep.witnesses[3]
    assert partial[-1].value(w.cell, w.cell) >= 12.25


def test_criterion_08c_rectangle_recovery(tensor_parts):
    rep, partial, _ = tensor_parts
    h = rep.omega.grid.h
    rect = rectangle_singular(lambda k: partial[k - 1], 4, witness_ladder(4, 2), h)
    assert hausdorff(rect.S1, rep.ground_truth_S) <= 2 * h + h
    assert hausdorff(rect.S2, rep.ground_truth_S) <= 2 * h + h


def test_criterion_08d_windows_and_runtime(tensor_parts):
    rep, partial, t0 = tensor_parts
    S = rep.ground_truth_S
    for W1, W2 in tensor_windows(S, S, 4, 0.5, 0.5, 0):
        assert distinguished_boundary_check(partial[-1].restrict(W1, W2)).passed
    assert rep.elapsed + time.perf_counter() - t0 < 600


# 9

PRODUCTS = {
    "paraboloid_sum": lambda X1, X2, Y1, Y2: X1**2 + X2**2 + Y1**2 + Y2**2,
    "linear_sum": lambda X1, X2, Y1, Y2: X1 + Y1,
    "paraboloid_product": lambda X1, X2, Y1, Y2: (X1**2 + X2**2) * (Y1**2 + Y2**2),
    "log_plus": lambda X1, X2, Y1, Y2: np.log(np.hypot(X1 - 1.5, X2)) + Y2**2,
    "max_coords": lambda X1, X2, Y1, Y2: np.maximum(X1, Y1),
    "exp_product": lambda X1, X2, Y1, Y2: np.exp(X1) * np.exp(Y2),
    "harmonic_mix": lambda X1, X2, Y1, Y2: X1 * X2 + Y1**2 - Y2**2,
    "abs_sum": lambda X1, X2, Y1, Y2: np.abs(X1) + np.abs(Y2 - 0.3),
    "quartic": lambda X1, X2, Y1, Y2: X1**4 + Y1**4 + X2 * Y2,
    "bilinear": lambda X1, X2, Y1, Y2: X1 * Y1 + X2 * Y2,
    "cubic_block": lambda X1, X2, Y1, Y2: X1**3 - 3 * X1 * X2**2 + Y1,
    "exp_cos": lambda X1, X2, Y1, Y2: np.exp(X1) * np.cos(X2) + np.exp(Y1) * np.cos(Y2),
    "nonneg_times_harmonic": lambda X1, X2, Y1, Y2: (X1**2 + X2**2 + 1) * (2 + Y1),
    "max_blocks": lambda X1, X2, Y1, Y2: np.maximum(X1**2 + X2**2, Y1**2 + Y2**2),
    "shifted": lambda X1, X2, Y1, Y2: (X1 - 0.4) ** 2 + (Y2 + 0.2) ** 2,
    "constant": lambda X1, X2, Y1, Y2: 3.0 + 0 * X1,
}


def test_criterion_09_distinguished_boundary(segment_build):
    d = disk(33)
    results = {}
    for name, fn in PRODUCTS.items():
        results[name] = distinguished_boundary_check(ProductGridFunction.from_callable(d, d, fn))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedLayerWarning)
        u = tensor_assemble(segment_build.layers, segment_build.layers, 4)
    S = segment_build.ground_truth_S
    for k, (W1, W2) in enumerate(tensor_windows(S, S, 4, 0.5, 0.5, 9)):
        results[f"tensor_window_{k}"] = distinguished_boundary_check(u.restrict(W1, W2))
    assert len(results) == 20
    assert [n for n, r in results.items() if not r.passed] == []
    assert results["constant"].constant_case


# 10


def _same_tree(a, b):
    for f in sorted(a.iterdir()):
        if f.name == "config.resolved":
            ka, kb = io.read_kv(f), io.read_kv(b / f.name)
            ka.pop("out"), kb.pop("out")
            assert ka == kb
        else:
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name
    assert sorted(p.name for p in a.iterdir()) == sorted(p.name for p in b.iterdir())


def test_criterion_10_determinism(tmp_path):
    first = {
        "w": ["build-wiegerinck", "--s", "segment"],
        "t": ["build-tensor", "--s1", "segment", "--s2", "segment"],
    }
    for name, argv in first.items():
        main([*argv, "--out", str(tmp_path / name)])
    main(["singular-set", "--family", str(tmp_path / "w"), "--r-h", "1", "--out", str(tmp_path / "s")])
    for name in ("w", "t", "s"):
        main(["--config", str(tmp_path / name / "config.resolved"), "--out", str(tmp_path / f"{name}2")])
        _same_tree(tmp_path / name, tmp_path / f"{name}2")
