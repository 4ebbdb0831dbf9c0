import math

import numpy as np
import pytest

from metalattice import (
    Box,
    ConvexPolygon,
    LatticeError,
    NodeRef,
    build_lattice,
    cells_in_domain,
    compute_reach,
    get_lattice,
    list_catalog,
    load_lattice,
)
from metalattice.catalog import _square_raw
from metalattice.lattice import node_position

from conftest import CATALOG, ghost_square_raw

S3 = math.sqrt(3.0)


def test_catalog_counts():
    kg = get_lattice("kagome")
    assert kg.n_basic == 3 and len(kg.springs) == 6
    assert get_lattice("square").n_basic == 1
    assert len(get_lattice("square-long-range").springs) == 5
    assert len(get_lattice("rotating-squares").springs) == 10
    names = [n for n, _ in list_catalog()]
    assert names == sorted(CATALOG)


def test_square_springs_half_weight():
    sq = get_lattice("square")
    assert len(sq.springs) == 4
    assert all(s.weight == 0.5 and s.rest_length == 1.0 for s in sq.springs)


def test_kagome_springs_unit_length():
    kg = get_lattice("kagome")
    assert all(s.rest_length == pytest.approx(1.0, abs=1e-15) for s in kg.springs)


def test_duplicate_node_modulo_lattice():
    raw = _square_raw()
    raw["nodes"] = [[0.0, 0.0], [1.0, 0.0]]
    with pytest.raises(LatticeError, match="duplicate node modulo lattice"):
        build_lattice(raw)


def test_degenerate_cell_vectors():
    raw = _square_raw()
    raw["cell_vectors"] = [[1.0, 0.0], [2.0, 0.0]]
    with pytest.raises(LatticeError, match="degenerate"):
        build_lattice(raw)


def test_ghost_rule_must_be_convex():
    raw = ghost_square_raw()
    raw["ghosts"]["g"]["sources"] = [[[0, [0, 0]], 0.5], [[0, [1, 1]], 0.6]]
    with pytest.raises(LatticeError, match="convex combination"):
        build_lattice(raw)


def test_triangulation_gap_detected():
    raw = _square_raw()
    raw["triangles"] = raw["triangles"][:1]
    raw["penalty_triangles"] = [0]
    with pytest.raises(LatticeError, match="gap/overlap"):
        build_lattice(raw)


def test_triangulation_overlap_detected():
    raw = _square_raw()
    t = raw["triangles"][0]
    raw["triangles"] = [t, t]
    with pytest.raises(LatticeError, match="gap/overlap"):
        build_lattice(raw)


def test_penalty_triangle_must_belong_to_cell():
    raw = _square_raw()
    raw["penalty_triangles"] = [5]
    with pytest.raises(LatticeError):
        build_lattice(raw)


def test_node_position_examples():
    sq, kg = get_lattice("square"), get_lattice("kagome")
    assert np.allclose(node_position(sq, NodeRef(0, (2, 3))), [2.0, 3.0])
    O = kg.basic_nodes[1]
    assert np.allclose(node_position(kg, NodeRef(1, (0, 0)), 0.5), 0.5 * O)
    assert np.allclose(node_position(kg, NodeRef(1, (1, 1))), O + np.array([3.0, S3]))


def test_node_position_bad_index():
    with pytest.raises((LatticeError, IndexError)):
        node_position(get_lattice("square"), NodeRef(3, (0, 0)))


@pytest.mark.parametrize(
    "name,n,m,dm",
    [("kagome", 1, 1, math.sqrt(7.0)), ("square", 1, 1, math.sqrt(2.0)), ("square-long-range", 2, 2, 3 * math.sqrt(2.0))],
)
def test_reach(name, n, m, dm):
    r = compute_reach(get_lattice(name))
    assert (r.n, r.m) == (n, m)
    assert r.d_m == pytest.approx(dm, rel=1e-12)


def test_reach_idempotent(catalog_spec):
    a, b = compute_reach(catalog_spec), compute_reach(catalog_spec)
    assert a == b and a.n <= a.m


def test_cells_in_domain_square_oracle():
    cs = cells_in_domain(get_lattice("square"), Box((0, 0), (1, 1)), 0.25)
    assert cs.offsets == ((1, 1), (1, 2), (2, 1), (2, 2))


def test_cells_in_domain_large_epsilon_empty(catalog_spec):
    assert len(cells_in_domain(catalog_spec, Box((0, 0), (1, 1)), 10.0)) == 0


def _brute_force(spec, domain, eps, span=12):
    import itertools

    from metalattice.lattice import expanded_offsets

    r = compute_reach(spec)
    hull = np.vstack([spec.cell_polygon + spec.cell_offset_vector(g) for g in expanded_offsets(2, r.m)])
    out = []
    for a in itertools.product(range(-span, span), repeat=2):
        pts = eps * (hull + spec.cell_offset_vector(a))
        if np.all(domain.inner_distance(pts) > 1e-12 * domain.diameter):
            out.append(a)
    return tuple(sorted(out))


def test_cells_in_domain_kagome_brute_force():
    kg = get_lattice("kagome")
    dom = Box((0.0, 0.0), (8.0, 4 * S3))
    assert cells_in_domain(kg, dom, 1.0).offsets == _brute_force(kg, dom, 1.0)


def test_cells_in_domain_polygon_brute_force():
    sq = get_lattice("square-long-range")
    dom = ConvexPolygon(((0, 0), (3, 0.2), (2.5, 2.8), (0.3, 2.0)))
    assert cells_in_domain(sq, dom, 0.25).offsets == _brute_force(sq, dom, 0.25, 20)


def test_cells_in_domain_monotone_and_translation():
    kg = get_lattice("kagome")
    small, big = Box((0, 0), (3, 3)), Box((-0.5, -0.5), (3.5, 3.2))
    a = set(cells_in_domain(kg, small, 0.25).offsets)
    assert a <= set(cells_in_domain(kg, big, 0.25).offsets)
    eps = 0.25
    shift = eps * (kg.cell_vectors[0] + 2 * kg.cell_vectors[1])
    moved = cells_in_domain(kg, small.translated(shift), eps).offsets
    assert set(moved) == {(x + 1, y + 2) for x, y in a}


def test_cell_volume_converges():
    sq = get_lattice("kagome")
    dom = Box((0, 0), (2, 2))
    gaps = []
    for eps in (0.25, 0.125, 0.0625):
        n = len(cells_in_domain(sq, dom, eps))
        gaps.append(dom.volume - n * eps**2 * sq.volume)
    assert all(g >= 0 for g in gaps)
    assert all(g <= 40 * e for g, e in zip(gaps, (0.25, 0.125, 0.0625)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_load_lattice_from_file(tmp_path):
    import yaml

    p = tmp_path / "ghosty.yaml"
    p.write_text(yaml.safe_dump(ghost_square_raw()))
    spec = load_lattice(str(p))
    assert spec.n_basic == 1 and len(spec.triangles) == 4
    assert load_lattice("kagome") is get_lattice("kagome")
