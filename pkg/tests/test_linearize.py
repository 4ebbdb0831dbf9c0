import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metalattice import Box, CellSet, NodeRef, get_lattice, linearize, sample_at_nodes
from metalattice.linearize import (
    AffineExtensionRule,
    Deformation,
    MissingNodeError,
    affine_gradient,
    field_to_csv,
    interpolation_estimate_report,
    l2_gradient_norm,
    log_slope,
)

finite = st.floats(-3, 3, allow_nan=False)


def _affine_field(spec, lam, c=np.zeros(2), eps=1.0, cells=((0, 0), (1, 0), (0, 1))):
    window = CellSet(cells, eps)
    return linearize(sample_at_nodes(lambda x: lam @ x + c, window, spec, eps))


def test_affine_gradient_examples():
    pts = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    assert np.allclose(affine_gradient(pts, np.array([[0, 0], [2, 0], [0, 3]], dtype=float)), np.diag([2, 3]))
    R = np.array([[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]])
    assert np.allclose(affine_gradient(pts, pts @ R.T), R, atol=1e-15)
    with pytest.raises(ValueError):
        affine_gradient(np.array([[0, 0], [1, 1], [2, 2]], dtype=float), pts)


@settings(max_examples=30, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.sampled_from(["kagome", "rotating-squares", "square-long-range"]))
def test_affine_preservation(vals, name):
    spec = get_lattice(name)
    lam, c = np.array(vals[:4]).reshape(2, 2), np.array(vals[4:])
    f = _affine_field(spec, lam, c, eps=0.5)
    assert np.allclose(f.matrices, lam, atol=1e-12)
    assert np.allclose(f.shifts, c, atol=1e-12)


def test_constant_field_has_zero_gradient():
    f = _affine_field(get_lattice("kagome"), np.zeros((2, 2)), np.array([1.0, -2.0]))
    assert np.allclose(f.matrices, 0.0)


def test_ghost_vertex_value(ghost_square):
    refs = [NodeRef(0, (0, 0)), NodeRef(0, (1, 0)), NodeRef(0, (0, 1)), NodeRef(0, (1, 1))]
    vals = np.array([[0, 0], [2, 0], [0, 0], [2, 0]], dtype=float)
    d = Deformation.from_arrays(ghost_square, refs, vals, 1.0, CellSet(((0, 0),)))
    f = linearize(d)
    # ghost centre is the average of the four corners: (1, 0)
    assert np.allclose(f.vertex_values[:, 2], [1.0, 0.0])


def test_ghost_lattice_affine_preservation(ghost_square, rng):
    lam = rng.normal(size=(2, 2))
    f = _affine_field(ghost_square, lam, eps=0.25)
    assert np.allclose(f.matrices, lam, atol=1e-12)


def test_l2_gradient_norm_affine(catalog_spec):
    lam = np.array([[1.0, 2.0], [-0.5, 0.3]])
    f = _affine_field(catalog_spec, lam, cells=((0, 0),))
    assert l2_gradient_norm(f, CellSet(((0, 0),))) == pytest.approx(np.sum(lam**2) * catalog_spec.volume, rel=1e-12)
    assert l2_gradient_norm(_affine_field(catalog_spec, np.zeros((2, 2)))) == 0.0


def test_l2_gradient_norm_two_triangles():
    sq = get_lattice("square")
    refs = [NodeRef(0, (0, 0)), NodeRef(0, (1, 0)), NodeRef(0, (0, 1)), NodeRef(0, (1, 1))]
    vals = np.array([[0, 0], [1, 0], [0, 0], [1, 3]], dtype=float)
    f = linearize(Deformation.from_arrays(sq, refs, vals, 1.0, CellSet(((0, 0),))))
    expected = sum(0.5 * np.sum(G**2) for G in f.matrices)
    assert l2_gradient_norm(f) == pytest.approx(expected)
    assert len(f.matrices) == 2


def test_missing_node_raises_and_extension_fills():
    sq = get_lattice("square")
    refs = [NodeRef(0, (0, 0))]
    d = Deformation.from_arrays(sq, refs, np.zeros((1, 2)), 1.0, CellSet(((0, 0),)))
    with pytest.raises(MissingNodeError):
        linearize(d)
    lam = np.array([[2.0, 0.0], [0.0, 1.0]])
    d2 = Deformation.from_arrays(sq, refs, np.zeros((1, 2)), 1.0, CellSet(((0, 0),)), AffineExtensionRule("affine", lam))
    f = linearize(d2)
    assert np.allclose(f.vertex_values[0, 1], [2.0, 0.0])


def test_scaling_covariance(rng):
    kg = get_lattice("kagome")
    cells = ((0, 0), (1, 0), (1, 1))
    refs = sorted({r for r in sample_at_nodes(lambda x: x, CellSet(cells), kg).values})
    u = rng.normal(size=(len(refs), 2))
    eps = 0.125
    f1 = linearize(Deformation.from_arrays(kg, refs, u, 1.0, CellSet(cells)))
    fe = linearize(Deformation.from_arrays(kg, refs, eps * u, eps, CellSet(cells, eps)))
    assert np.allclose(fe.matrices, f1.matrices, rtol=1e-12, atol=1e-12)
    assert np.allclose(fe.vertex_values, eps * f1.vertex_values, rtol=1e-12, atol=1e-15)


def test_triangle_order_irrelevant(rng):
    from metalattice.lattice import build_lattice
    from metalattice.catalog import _kagome_raw

    raw = _kagome_raw()
    raw2 = dict(raw, triangles=raw["triangles"][::-1], penalty_triangles=[5 - i for i in raw["penalty_triangles"]], name="k2")
    a, b = build_lattice(raw), build_lattice(raw2)
    lam = rng.normal(size=(2, 2))
    fa = _affine_field(a, lam + 0.1 * rng.normal(size=(2, 2)))
    f = lambda x: np.array([math.sin(x[0]), x[0] * x[1]])
    ga = linearize(sample_at_nodes(f, CellSet(((0, 0),)), a))
    gb = linearize(sample_at_nodes(f, CellSet(((0, 0),)), b))
    key = lambda fld: sorted(tuple(np.round(m.ravel(), 12)) for m in fld.matrices)
    assert key(ga) == key(gb)
    assert fa.matrices.shape[0] == 18


def test_interpolation_affine_and_constant():
    kg = get_lattice("kagome")
    lam = np.array([[0.6, 0.0], [0.0, 0.8]])
    rows = interpolation_estimate_report(lambda x: lam @ x, kg, [0.25, 0.125], 0.8)
    assert all(r.gradient_ratio <= 1 + 1e-12 and r.error_ratio <= 1e-12 for r in rows)
    rows = interpolation_estimate_report(lambda x: np.array([1.0, 2.0]), kg, [0.25], 0.0)
    assert rows[0].error_ratio == 0.0 and rows[0].gradient_ratio == pytest.approx(0.0, abs=1e-14)


def test_interpolation_abs_x1_stable():
    kg = get_lattice("kagome")
    eps = [0.25, 0.125, 0.0625]
    rows = interpolation_estimate_report(lambda x: np.array([abs(x[0]), 0.0]), kg, eps, 1.0)
    assert abs(log_slope(eps, [r.gradient_ratio for r in rows])) <= 0.1
    assert abs(log_slope(eps, [r.error_ratio for r in rows])) <= 0.1


def test_hat_function_error_near_crease():
    sq = get_lattice("square")
    eps = 0.125
    f = lambda x: np.array([1 - abs(x[0] - 0.3), 0.0])
    rows = interpolation_estimate_report(f, sq, [eps], 1.0, Box((-1, -1), (1, 1)), resolution=6)
    assert rows[0].error_ratio <= 1.0


def test_log_slope():
    x = [1.0, 0.5, 0.25]
    assert log_slope(x, [2 * v for v in x]) == pytest.approx(1.0)
    assert log_slope(x, [0.0, 0.0, 0.0]) == 0.0


def test_field_csv_header():
    f = _affine_field(get_lattice("square"), np.eye(2), cells=((0, 0),))
    lines = field_to_csv(f).splitlines()
    assert lines[0].startswith("cell") or "tri" in lines[0]
    assert len(lines) == 3
