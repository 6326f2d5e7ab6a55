"""Spline kernel tests: Bernstein, extraction, rational basis, refinement.

Expected values come from independent oracles (de Casteljau, Cox-de Boor,
direct rational evaluation) implemented in oracles.py.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from klshell.errors import DomainError, ValidationError
from klshell.splines import (
    KnotVector,
    NurbsPatch,
    bernstein_eval,
    extraction_operators,
    gauss_rule,
    tabulate_patch,
    uniform_insertion_knots,
)

import oracles


# ---------------------------------------------------------------------------
# Bernstein
# ---------------------------------------------------------------------------

def test_bernstein_midpoint_symmetric():
    vals, _, _ = bernstein_eval(2, 0.5)
    assert_allclose(vals, [0.25, 0.5, 0.25], atol=1e-15)


def test_bernstein_linear_endpoint():
    vals, d1, _ = bernstein_eval(1, 0.0)
    assert_allclose(vals, [1.0, 0.0], atol=1e-15)
    assert_allclose(d1, [-1.0, 1.0], atol=1e-15)


def test_bernstein_matches_de_casteljau():
    # frozen from the de Casteljau oracle: evaluate each unit coefficient
    vals, _, _ = bernstein_eval(3, 0.3)
    expected = [oracles.de_casteljau(np.eye(4)[i], 0.3) for i in range(4)]
    assert_allclose(vals, expected, atol=1e-14)


@given(st.integers(min_value=1, max_value=6), st.floats(min_value=0.0, max_value=1.0))
def test_bernstein_partition_of_unity(p, t):
    vals, d1, d2 = bernstein_eval(p, t)
    assert abs(vals.sum() - 1.0) < 1e-12
    assert abs(d1.sum()) < 1e-10
    assert abs(d2.sum()) < 1e-9
    assert np.all(vals >= -1e-15)


def test_bernstein_domain_error():
    with pytest.raises(DomainError):
        bernstein_eval(2, 1.2)


def test_bernstein_derivatives_vs_fd():
    p = 4
    t = np.linspace(0.05, 0.95, 7)
    h = 1e-6
    vp, d1, d2 = bernstein_eval(p, t)
    vph, d1h, _ = bernstein_eval(p, t + h)
    vmh, d1m, _ = bernstein_eval(p, t - h)
    assert_allclose(d1, (vph - vmh) / (2 * h), atol=5e-9)
    assert_allclose(d2, (d1h - d1m) / (2 * h), atol=5e-8)


# ---------------------------------------------------------------------------
# Knot vectors
# ---------------------------------------------------------------------------

def test_knot_vector_validation():
    with pytest.raises(ValidationError):
        KnotVector(np.array([0, 0, 1, 1]), 2)  # not open for p=2
    with pytest.raises(ValidationError):
        KnotVector(np.array([0, 0, 0, 0.6, 0.4, 1, 1, 1]), 2)  # decreasing
    with pytest.raises(ValidationError):
        KnotVector(np.array([0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1]), 2)  # mult > p
    kv = KnotVector(np.array([2.0, 2, 2, 3, 4, 4, 4]), 2)  # gets normalized
    assert kv.values[0] == 0.0 and kv.values[-1] == 1.0
    assert kv.n_funcs == 4
    assert kv.spans == (2, 3)


def test_knot_vector_length_invariant():
    kv = KnotVector(np.array([0, 0, 0, 0.25, 0.5, 0.5, 1, 1, 1]), 2)
    assert kv.values.size == kv.n_funcs + kv.degree + 1


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def test_extraction_single_bezier_is_identity():
    kv = KnotVector(np.array([0, 0, 0, 1, 1, 1]), 2)
    ops = extraction_operators(kv)
    assert ops.shape == (1, 3, 3)
    assert_allclose(ops[0], np.eye(3), atol=1e-15)


def _check_extraction_vs_cox_de_boor(U, p, tol=1e-12):
    kv = KnotVector(U, p)
    ops = extraction_operators(kv)
    bp = kv.breakpoints
    for e, k in enumerate(kv.spans):
        ts = np.linspace(0.0, 1.0, 50)
        xs = bp[e] + ts * (bp[e + 1] - bp[e])
        B, _, _ = bernstein_eval(p, ts)
        via_ext = B @ ops[e].T
        for x, row in zip(xs, via_ext):
            full = oracles.bspline_basis_full(kv.values, p, min(x, 1.0 - 1e-14), 0)[0]
            assert_allclose(row, full[k - p: k + 1], atol=tol)


def test_extraction_two_element_quadratic():
    _check_extraction_vs_cox_de_boor(np.array([0, 0, 0, 0.5, 1, 1, 1]), 2, tol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=4), st.integers(min_value=0, max_value=2 ** 30))
def test_extraction_random_knot_vectors(p, seed):
    rng = np.random.default_rng(seed)
    U = oracles.random_open_knot_vector(rng, p)
    _check_extraction_vs_cox_de_boor(U, p, tol=1e-12)


def test_extraction_partition_of_unity_property():
    kv = KnotVector(np.array([0, 0, 0, 0, 0.2, 0.2, 0.7, 1, 1, 1, 1]), 3)
    ops = extraction_operators(kv)
    B, _, _ = bernstein_eval(3, np.linspace(0, 1, 11))
    for C in ops:
        assert_allclose((B @ C.T).sum(axis=1), 1.0, atol=1e-13)


# ---------------------------------------------------------------------------
# Patches and rational basis
# ---------------------------------------------------------------------------

def unit_square_patch(p=2, q=2, nel=2, weights=None):
    kvu = KnotVector(np.concatenate([np.zeros(p + 1),
                                     np.arange(1, nel) / nel,
                                     np.ones(p + 1)]), p)
    kvv = KnotVector(np.concatenate([np.zeros(q + 1),
                                     np.arange(1, nel) / nel,
                                     np.ones(q + 1)]), q)
    n, m = kvu.n_funcs, kvv.n_funcs
    gx = np.linspace(0, 1, n)
    gy = np.linspace(0, 1, m)
    ctrl = np.zeros((n, m, 3))
    ctrl[..., 0] = gx[:, None]
    ctrl[..., 1] = gy[None, :]
    w = np.ones((n, m)) if weights is None else weights
    return NurbsPatch(kvu, kvv, ctrl, w, thickness=0.1)


def quarter_circle_weights():
    return np.array([1.0, np.sqrt(2.0) / 2.0, 1.0])


def cylinder_quarter_patch(radius=9.0, length=30.0):
    """Exact quadratic-by-linear quarter cylinder, axis along y."""
    kvu = KnotVector(np.array([0, 0, 0, 1, 1, 1]), 2)
    kvv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
    arc = np.array([[radius, 0.0], [radius, radius], [0.0, radius]])
    ctrl = np.zeros((3, 2, 3))
    ctrl[:, 0, 0] = arc[:, 0]
    ctrl[:, 0, 2] = arc[:, 1]
    ctrl[:, 1, :] = ctrl[:, 0, :]
    ctrl[:, 1, 1] = length
    w = np.tile(quarter_circle_weights()[:, None], (1, 2))
    return NurbsPatch(kvu, kvv, ctrl, w, thickness=0.2)


def test_patch_validation():
    kvu = KnotVector(np.array([0, 0, 0, 1, 1, 1]), 2)
    kvv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
    with pytest.raises(ValidationError):
        NurbsPatch(kvu, kvv, np.zeros((3, 3, 3)), np.ones((3, 3)))
    with pytest.raises(ValidationError):
        NurbsPatch(kvu, kvv, np.zeros((3, 2, 3)), -np.ones((3, 2)))


def test_surface_point_clamped_corner():
    patch = unit_square_patch()
    assert_allclose(patch.surface_point(0.0, 0.0), patch.ctrl[0, 0], atol=1e-14)
    assert_allclose(patch.surface_point(1.0, 1.0), patch.ctrl[-1, -1], atol=1e-14)


def test_surface_point_planar():
    patch = unit_square_patch(p=3, q=2, nel=3)
    for xi in np.random.default_rng(0).uniform(0, 1, size=(20, 2)):
        assert abs(patch.surface_point(*xi)[2]) < 1e-14


def test_surface_point_exact_cylinder():
    patch = cylinder_quarter_patch(radius=9.0)
    rng = np.random.default_rng(1)
    for xi in rng.uniform(0, 1, size=(30, 2)):
        p = patch.surface_point(*xi)
        assert abs(p[0] ** 2 + p[2] ** 2 - 81.0) < 1e-10


def test_quarter_arc_radius():
    # quarter circle arc: |S| = R at 20 parameters
    kvu = KnotVector(np.array([0, 0, 0, 1, 1, 1]), 2)
    kvv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
    R = 2.5
    arc = np.array([[R, 0.0], [R, R], [0.0, R]])
    ctrl = np.zeros((3, 2, 3))
    ctrl[:, 0, :2] = arc
    ctrl[:, 1, :2] = arc
    ctrl[:, 1, 2] = 1.0
    w = np.tile(quarter_circle_weights()[:, None], (1, 2))
    patch = NurbsPatch(kvu, kvv, ctrl, w)
    for t in np.linspace(0, 1, 20):
        pt = patch.surface_point(t, 0.0)
        assert abs(np.hypot(pt[0], pt[1]) - R) < 1e-12


def test_unit_weights_reduce_to_bspline():
    patch = unit_square_patch(p=3, q=2, nel=3)
    xi = (0.37, 0.81)
    eid = patch.element_index(patch.kv_u.find_span(xi[0]), patch.kv_v.find_span(xi[1]))
    be = patch.basis_eval(eid, xi)
    du = oracles.bspline_basis_full(patch.kv_u.values, 3, xi[0], 2)
    dv = oracles.bspline_basis_full(patch.kv_v.values, 2, xi[1], 2)
    n, m = patch.shape
    full_vals = np.outer(du[0], dv[0])
    full_d1 = np.outer(du[1], dv[0])
    full_d2 = np.outer(du[0], dv[1])
    full_d11 = np.outer(du[2], dv[0])
    full_d22 = np.outer(du[0], dv[2])
    full_d12 = np.outer(du[1], dv[1])
    sup = be.support
    assert_allclose(be.values, full_vals.reshape(-1)[sup], atol=1e-13)
    assert_allclose(be.first[:, 0], full_d1.reshape(-1)[sup], atol=1e-12)
    assert_allclose(be.first[:, 1], full_d2.reshape(-1)[sup], atol=1e-12)
    assert_allclose(be.second[:, 0], full_d11.reshape(-1)[sup], atol=1e-11)
    assert_allclose(be.second[:, 1], full_d22.reshape(-1)[sup], atol=1e-11)
    assert_allclose(be.second[:, 2], full_d12.reshape(-1)[sup], atol=1e-11)


def _random_patch(rng, p, q, nel_u, nel_v):
    kvu = KnotVector(np.concatenate([np.zeros(p + 1), np.arange(1, nel_u) / nel_u,
                                     np.ones(p + 1)]), p)
    kvv = KnotVector(np.concatenate([np.zeros(q + 1), np.arange(1, nel_v) / nel_v,
                                     np.ones(q + 1)]), q)
    n, m = kvu.n_funcs, kvv.n_funcs
    ctrl = np.zeros((n, m, 3))
    ctrl[..., 0] = np.linspace(0, 2, n)[:, None]
    ctrl[..., 1] = np.linspace(0, 1.5, m)[None, :]
    ctrl += 0.15 * rng.standard_normal((n, m, 3))
    w = rng.uniform(0.5, 2.0, size=(n, m))
    return NurbsPatch(kvu, kvv, ctrl, w)


def test_rational_basis_matches_direct_rational_oracle():
    rng = np.random.default_rng(7)
    for p, q in [(2, 2), (3, 2), (4, 3)]:
        patch = _random_patch(rng, p, q, 3, 2)
        for xi in rng.uniform(0.01, 0.99, size=(8, 2)):
            eid = patch.element_index(patch.kv_u.find_span(xi[0]),
                                      patch.kv_v.find_span(xi[1]))
            be = patch.basis_eval(eid, xi)
            ref = oracles.nurbs_basis_full(patch.kv_u.values, patch.kv_v.values,
                                           p, q, patch.weights, xi[0], xi[1])
            sup = be.support
            assert_allclose(be.values, ref["N"].reshape(-1)[sup], atol=1e-12)
            assert_allclose(be.first[:, 0], ref["N1"].reshape(-1)[sup], atol=1e-11)
            assert_allclose(be.first[:, 1], ref["N2"].reshape(-1)[sup], atol=1e-11)
            assert_allclose(be.second[:, 0], ref["N11"].reshape(-1)[sup], atol=5e-10)
            assert_allclose(be.second[:, 1], ref["N22"].reshape(-1)[sup], atol=5e-10)
            assert_allclose(be.second[:, 2], ref["N12"].reshape(-1)[sup], atol=5e-10)


def test_second_derivatives_vs_finite_differences():
    rng = np.random.default_rng(3)
    patch = _random_patch(rng, 3, 3, 3, 3)
    h = 1e-5
    for xi in rng.uniform(0.1, 0.9, size=(10, 2)):
        eid = patch.element_index(patch.kv_u.find_span(xi[0]),
                                  patch.kv_v.find_span(xi[1]))

        def first(x, y):
            e = patch.element_index(patch.kv_u.find_span(x), patch.kv_v.find_span(y))
            assert e == eid
            return patch.basis_eval(e, (x, y)).first

        be = patch.basis_eval(eid, xi)
        f11 = (first(xi[0] + h, xi[1])[:, 0] - first(xi[0] - h, xi[1])[:, 0]) / (2 * h)
        f22 = (first(xi[0], xi[1] + h)[:, 1] - first(xi[0], xi[1] - h)[:, 1]) / (2 * h)
        f12 = (first(xi[0] + h, xi[1])[:, 1] - first(xi[0] - h, xi[1])[:, 1]) / (2 * h)
        scale = np.abs(be.second).max() + 1.0
        assert np.max(np.abs(be.second[:, 0] - f11)) / scale < 1e-6
        assert np.max(np.abs(be.second[:, 1] - f22)) / scale < 1e-6
        assert np.max(np.abs(be.second[:, 2] - f12)) / scale < 1e-6


def test_partition_of_unity_and_derivative_sums_bulk():
    rng = np.random.default_rng(11)
    patch = _random_patch(rng, 3, 2, 4, 3)
    tab = tabulate_patch(patch, gauss_rule(4), gauss_rule(4))
    assert_allclose(tab["N"].sum(axis=-1), 1.0, atol=1e-12)
    assert_allclose(tab["dN"].sum(axis=-2), 0.0, atol=1e-11)
    assert_allclose(tab["d2N"].sum(axis=-2), 0.0, atol=1e-9)
    assert np.all(tab["N"] >= -1e-13)
    assert np.all(np.isfinite(tab["d2N"]))


def test_refinement_preserves_surface():
    rng = np.random.default_rng(5)
    patch = _random_patch(rng, 3, 2, 1, 1)
    fine = patch.refined_to(7, 5)
    assert fine.n_elements == 35
    for xi in rng.uniform(0, 1, size=(25, 2)):
        assert_allclose(fine.surface_point(*xi), patch.surface_point(*xi), atol=1e-12)


def test_refinement_keeps_existing_knots():
    rng = np.random.default_rng(6)
    patch = _random_patch(rng, 3, 2, 2, 2)  # interior knot at 0.5 both ways
    fine = patch.refined_to(7, 5)
    # 0.5 is on neither uniform grid, so it adds a span in each direction
    assert fine.n_elements == 8 * 6
    for xi in rng.uniform(0, 1, size=(25, 2)):
        assert_allclose(fine.surface_point(*xi), patch.surface_point(*xi), atol=1e-12)


def test_refinement_with_existing_interior_knots():
    kv = KnotVector(np.array([0, 0, 0, 0.5, 1, 1, 1]), 2)
    new = uniform_insertion_knots(kv, 4)
    assert_allclose(new, [0.25, 0.75])


def test_refined_cylinder_still_exact():
    patch = cylinder_quarter_patch(radius=9.0).refined_to(6, 4)
    rng = np.random.default_rng(2)
    for xi in rng.uniform(0, 1, size=(30, 2)):
        p = patch.surface_point(*xi)
        assert abs(p[0] ** 2 + p[2] ** 2 - 81.0) < 1e-10
