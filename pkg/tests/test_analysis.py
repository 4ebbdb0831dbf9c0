import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metalattice import CellSet, get_lattice, sample_at_nodes
from metalattice.analysis import (
    audit_cell_bounds,
    audit_d4,
    audit_polygon,
    cell_bound_constants,
    default_lipschitz_constant,
    growth_check,
    jensen_floor,
    lipschitz_check,
    polygon_bound_constants,
    polygon_energy,
    rank_one_convexity_check,
    recovery_sequence_energy,
    soft_mode_experiment,
    triangle_bound_constants,
)
from metalattice.cellproblem import DensityQuery, OptimizerConfig, rotation, twisted_kagome_state

from conftest import random_rotation

RIGHT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
FAST = OptimizerConfig(random_starts=1, max_iterations=300)


def _kagome_points(names):
    kg = get_lattice("kagome")
    return kg.positions([kg.labels[c] for c in names])


# polygon energy


def test_polygon_energy_stretched_triangle():
    assert polygon_energy(2 * RIGHT, RIGHT) == pytest.approx(3.0, rel=1e-14)


def test_polygon_energy_identity_and_rigid(rng):
    assert polygon_energy(SQUARE, SQUARE) == 0.0
    R = random_rotation(rng)
    moved = SQUARE @ R.T + np.array([3.0, -1.0])
    assert polygon_energy(moved, SQUARE) == pytest.approx(0.0, abs=1e-28)


def test_polygon_energy_on_deformation():
    kg = get_lattice("kagome")
    d = sample_at_nodes(lambda x: x, CellSet(((0, 0), (1, 0), (0, 1), (1, -1), (-1, 1))), kg)
    poly = [kg.labels[c] for c in "FAODE"]
    assert polygon_energy(d, poly) == pytest.approx(0.0, abs=1e-28)
    stretched = d.mapped(lambda v: 2 * v)
    assert polygon_energy(stretched, poly) == pytest.approx(4.0)


def test_polygon_energy_needs_three_vertices():
    with pytest.raises(ValueError):
        polygon_energy(RIGHT[:2], RIGHT[:2])


# triangle and polygon constants


def test_right_triangle_constants_from_svd():
    c = triangle_bound_constants(RIGHT)
    M2 = np.column_stack([RIGHT[0] - RIGHT[1], RIGHT[1] - RIGHT[2]])
    s = np.linalg.svd(M2, compute_uv=False)
    assert c.alpha == pytest.approx(1 / s[0] ** 2, rel=1e-14)
    assert c.beta == pytest.approx(1 / s[1] ** 2, rel=1e-14)
    assert c.alpha == pytest.approx((3 - math.sqrt(5)) / 2)
    assert c.beta == pytest.approx((3 + math.sqrt(5)) / 2)
    assert c.area == 0.5
    assert c.c2 == pytest.approx(1 / (2 * c.beta * 0.5))
    assert c.c3 == pytest.approx(2 * (1 + 2) / 0.5)


def test_equilateral_alpha_below_beta():
    eq = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    c = triangle_bound_constants(eq)
    assert c.alpha < c.beta


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=6, max_size=6).filter(
        lambda v: abs((v[2] - v[0]) * (v[5] - v[1]) - (v[4] - v[0]) * (v[3] - v[1])) > 1e-2
    ),
    st.integers(0, 2**32 - 1),
)
def test_singular_value_inequalities(coords, seed):
    T = np.array(coords).reshape(3, 2)
    c = triangle_bound_constants(T)
    M2 = np.column_stack([T[0] - T[1], T[1] - T[2]])
    Minv = np.linalg.inv(M2)
    M1 = np.random.default_rng(seed).normal(size=(1000, 2, 2))
    lhs = np.sum((M1 @ Minv) ** 2, axis=(1, 2))
    n = np.sum(M1**2, axis=(1, 2))
    assert np.all(lhs >= c.alpha * n * (1 - 1e-10))
    assert np.all(lhs <= c.beta * n * (1 + 1e-10))


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError):
        triangle_bound_constants(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))


def test_polygon_constants_delegate_for_triangle():
    t = triangle_bound_constants(RIGHT)
    p = polygon_bound_constants(RIGHT)
    assert (p.c1, p.c2, p.c3) == (t.c1, t.c2, t.c3)


def test_nonconvex_polygon_rejected():
    arrow = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [1.0, 2.0]])
    with pytest.raises(ValueError):
        polygon_bound_constants(arrow[[0, 1, 2, 3]][[0, 2, 1, 3]])


@pytest.mark.parametrize(
    "name,points",
    [("square", SQUARE), ("right", RIGHT), ("FAODE", _kagome_points("FAODE")), ("BOC", _kagome_points("BOC"))],
)
def test_polygon_audits(name, points):
    c = polygon_bound_constants(points)
    assert all(np.isfinite([c.c1, c.c2, c.c3])) and min(c.c1, c.c2, c.c3) > 0
    assert audit_polygon(points, 1000, seed=1, name=name).violations == 0


def test_d4_audit():
    assert audit_d4(_kagome_points("AOB"), 1000, seed=2).violations == 0
    assert audit_d4(RIGHT, 1000, seed=3).violations == 0


# cell constants


def test_square_cell_constants():
    c = cell_bound_constants(get_lattice("square"))
    assert c.C2 == pytest.approx(0.5)
    assert c.D2 == pytest.approx(8.0)
    assert c.M == pytest.approx(200.0)


def test_long_range_lower_constants_match_square():
    a = cell_bound_constants(get_lattice("square"))
    b = cell_bound_constants(get_lattice("square-long-range"))
    assert (a.C2, a.D2) == (b.C2, b.D2)
    assert b.C1_spring > a.C1_spring
    assert b.paths and b.paths[0] > 0


def test_kagome_cell_constants_positive():
    c = cell_bound_constants(get_lattice("kagome"))
    assert min(c.C1, c.C2, c.D2, c.M) > 0
    assert len(c.upper) == 2 and len(c.lower) == 4


def test_cell_audits(catalog_spec):
    assert audit_cell_bounds(catalog_spec, 300, seed=4).violations == 0


def test_growth_and_lipschitz():
    sq = get_lattice("square")
    q = DensityQuery(np.eye(2), (1, 2), optimizer=FAST)
    g = growth_check(sq, 1.5 * np.eye(2), q)
    assert g.ok and g.lower == 0.0
    assert default_lipschitz_constant(sq) > 0
    rep = lipschitz_check(sq, [(np.eye(2), 1.1 * np.eye(2))], q)
    assert rep.violations == 0


# rank-one convexity


def test_rank_one_equal_endpoints():
    kg = get_lattice("kagome")
    q = DensityQuery(np.eye(2), (1,), optimizer=FAST)
    rep = rank_one_convexity_check(kg, 0.9 * np.eye(2), np.zeros(2), np.array([1.0, 0.0]), [0.0, 0.5, 1.0], q)
    assert rep.max_violation == 0.0


def test_rank_one_endpoints_exact():
    sq = get_lattice("square")
    q = DensityQuery(np.eye(2), (1,), optimizer=FAST)
    rep = rank_one_convexity_check(sq, np.eye(2), np.array([0.3, 0.0]), np.array([1.0, 0.0]), [0.0, 1.0], q)
    assert rep.violations == (0.0, 0.0)


def test_rank_one_rejects_nonparallel_input():
    with pytest.raises(ValueError):
        rank_one_convexity_check(get_lattice("square"), np.eye(2), np.ones((2, 2)), np.ones(2), [0.5])


# recovery sequences


def test_recovery_identity_zero(catalog_spec):
    rep = recovery_sequence_energy(catalog_spec, np.eye(2), None, {"box": [[0, 0], [1, 1]]}, [0.5, 0.25])
    assert all(abs(e) <= 1e-24 for e in rep.energies)
    assert all(g <= 1e-24 for g in rep.gaps)


def test_recovery_square_cell_count_oracle():
    rep = recovery_sequence_energy(get_lattice("square"), 2 * np.eye(2), None, {"box": [[0, 0], [1, 1]]}, [0.25])
    assert rep.energies[0] == pytest.approx(0.5, rel=1e-14)
    assert rep.target == pytest.approx(2.0, rel=1e-14)
    assert rep.gaps[0] == pytest.approx(1.5, rel=1e-14)


def test_recovery_gaps_shrink():
    rep = recovery_sequence_energy(
        get_lattice("square"), 2 * np.eye(2), None, {"box": [[0, 0], [2, 2]]}, [0.25, 0.125, 0.0625, 0.03125]
    )
    assert np.allclose(rep.gaps, [3.5, 1.875, 0.96875, 0.4921875], rtol=1e-12)
    assert rep.fitted_rate >= 0.9
    assert rep.to_csv().startswith("epsilon,energy,gap,log_epsilon,log_gap\n")


def test_recovery_twisted_kagome():
    kg = get_lattice("kagome")
    lam = math.cos(math.pi / 6) * rotation(math.pi / 6)
    psi = twisted_kagome_state(math.pi / 6).psi
    rep = recovery_sequence_energy(kg, lam, psi, {"box": [[0, 0], [2, 2]]}, [0.5, 0.25, 0.125])
    assert max(rep.energies) <= 1e-12
    assert rep.target <= 1e-12
    assert rep.construction == "periodic"


def test_recovery_requires_descending():
    with pytest.raises(ValueError):
        recovery_sequence_energy(get_lattice("square"), np.eye(2), None, {"box": [[0, 0], [1, 1]]}, [0.25, 0.5])


# soft mode


def test_soft_mode_identity():
    rep = soft_mode_experiment(get_lattice("kagome"), np.eye(2), {"box": [[0, 0], [2, 2]]}, [0.5, 0.25], FAST)
    assert max(rep.energies) <= 1e-20
    assert rep.nonincreasing or max(rep.energies) <= 1e-20


def test_soft_mode_energies_below_baseline():
    rep = soft_mode_experiment(get_lattice("kagome"), 0.9 * np.eye(2), {"box": [[0, 0], [2, 2]]}, [0.5, 0.25], FAST)
    assert all(e <= b for e, b in zip(rep.energies, rep.baselines))
    assert rep.target == 0.0
    assert rep.to_csv().splitlines()[0] == "epsilon,energy,baseline,free_nodes,best_start"


def test_jensen_floor_formula():
    kg = get_lattice("kagome")
    c = cell_bound_constants(kg)
    F = 1.5 * np.eye(2)
    assert jensen_floor(kg, F, {"box": [[0, 0], [8, 8]]}) == pytest.approx(c.C2 * (4.5 - c.D2) * 64)
