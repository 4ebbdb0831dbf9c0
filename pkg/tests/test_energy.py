import math

import numpy as np
import pytest

from metalattice import (
    Box,
    CellSet,
    EnergyAssembly,
    NodeRef,
    PenaltyFunction,
    build_lattice,
    cell_energy,
    domain_energy,
    get_lattice,
    sample_at_nodes,
)
from metalattice.catalog import _square_raw
from metalattice.energy import angle_energy, energy_gradient, penalty_energy, spring_energy
from metalattice.lattice import AngleTerm, SpringTerm
from metalattice.linearize import Deformation, linearize

from conftest import random_rotation

PF = PenaltyFunction(0.01)


def _cell_def(spec, f, eps=1.0, cells=((0, 0),)):
    return sample_at_nodes(f, CellSet(cells, eps), spec, eps)


def _angle_lattice(form="absolute-cosine"):
    raw = _square_raw()
    raw["name"] = f"square-angles-{form}"
    raw["angles"] = [
        {"apex": [0, [0, 0]], "arms": [[0, [1, 0]], [0, [0, 1]]], "preferred_angle": math.pi / 2, "form": form, "strength": 0.7}
    ]
    return build_lattice(raw)


def test_penalty_function_forms():
    assert PF(0.0) == 100.0 and PF(-1.0) == 100.0 and PF(1e-300) == 0.0
    smooth = PenaltyFunction(0.01, 0.05)
    assert smooth(0.0) == pytest.approx(50.0)
    with pytest.raises(ValueError):
        PF.derivative(1.0)
    with pytest.raises(ValueError):
        PenaltyFunction(0.0)


def test_penalty_smoothing_converges():
    t = np.array([-1.0, -0.2, 0.2, 1.0])
    errs = [np.max(np.abs(PenaltyFunction(0.01, tau)(t) - PF(t))) for tau in (0.1, 0.05, 0.01)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-6


def test_spring_energy_examples():
    sq = get_lattice("square")
    term = SpringTerm((NodeRef(0, (0, 0)), NodeRef(0, (1, 0))), 1.0, 1.0, 1.0)
    refs = [NodeRef(0, (0, 0)), NodeRef(0, (1, 0))]
    d = Deformation.from_arrays(sq, refs, np.array([[0.0, 0.0], [3.0, 0.0]]))
    assert spring_energy(d, term) == 4.0
    R = random_rotation(np.random.default_rng(1))
    d = Deformation.from_arrays(sq, refs, np.array([[0.0, 0.0], [1.0, 0.0]]) @ R.T)
    assert spring_energy(d, term) == pytest.approx(0.0, abs=1e-30)


def test_angle_energy_examples():
    sq = get_lattice("square")
    refs = [NodeRef(0, (0, 0)), NodeRef(0, (1, 0)), NodeRef(0, (0, 1))]
    right = AngleTerm(refs[0], (refs[1], refs[2]), 0.0, 1.0, "absolute-cosine")
    d = Deformation.from_arrays(sq, refs, np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
    assert angle_energy(d, right) == 0.0
    d = Deformation.from_arrays(sq, refs, np.array([[0, 0], [1, 0], [1, 0]], dtype=float))
    assert angle_energy(d, right) == 1.0
    tors = AngleTerm(refs[0], (refs[1], refs[2]), 0.0, 2.0, "torsional-quadratic")
    assert angle_energy(d, tors) == pytest.approx(2.0 * (math.pi / 2) ** 2)
    d0 = Deformation.from_arrays(sq, refs, np.array([[0, 0], [0, 0], [1, 0]], dtype=float))
    with pytest.raises(ValueError):
        angle_energy(d0, tors)
    assert angle_energy(d0, right) == 0.0


def test_penalty_energy_examples():
    sq = get_lattice("square")
    f = linearize(_cell_def(sq, lambda x: 2 * x))
    assert penalty_energy(f, sq, PF, (0, 0)) == 0.0
    f = linearize(_cell_def(sq, lambda x: np.array([-x[0], x[1]])))
    assert penalty_energy(f, sq, PF, (0, 0)) == 200.0
    f = linearize(_cell_def(sq, lambda x: np.array([x[0], 0.0])))
    assert penalty_energy(f, sq, PF, (0, 0)) == 200.0  # det exactly 0 counts


def test_kagome_cell_energy():
    kg = get_lattice("kagome")
    assert cell_energy(_cell_def(kg, lambda x: x), kg, PF, (0, 0)).total == 0.0
    b = cell_energy(_cell_def(kg, lambda x: 2 * x), kg, PF, (0, 0))
    assert b.spring == pytest.approx(6.0, rel=1e-14) and b.penalty == 0.0 and b.total == pytest.approx(6.0)


def test_square_domain_energy_oracle():
    sq = get_lattice("square")
    dom = Box((0, 0), (1, 1))
    d = sample_at_nodes(lambda x: 2 * x, CellSet(tuple((a, b) for a in range(-1, 5) for b in range(-1, 5)), 0.25), sq, 0.25)
    assert domain_energy(d, sq, PF, dom).total == pytest.approx(0.5, rel=1e-14)
    assert domain_energy(d.mapped(lambda v: v / 2), sq, PF, dom).total == 0.0


def test_periodicity_of_cell_energy(catalog_spec, rng):
    spec = catalog_spec
    alpha = (2, -1)
    refs = list(_cell_def(spec, lambda x: x).values)
    vals = {r: spec.position(r) + 0.3 * rng.normal(size=2) for r in refs}
    base = Deformation(spec, vals)
    moved = Deformation(spec, {r.shifted(alpha): v for r, v in vals.items()})
    assert cell_energy(moved, spec, PF, alpha).total == cell_energy(base, spec, PF, (0, 0)).total


def test_frame_and_translation_invariance(catalog_spec, rng):
    spec = catalog_spec
    asm = EnergyAssembly(spec, [(0, 0), (1, 0)])
    u = asm.positions + 0.3 * rng.normal(size=asm.positions.shape)
    e = asm.energy(u, PF)
    R = random_rotation(rng)
    assert asm.energy(u @ R.T, PF) == pytest.approx(e, rel=1e-12)
    assert asm.energy(u + rng.normal(size=2), PF) == pytest.approx(e, rel=1e-12)


@pytest.mark.parametrize("form", ["absolute-cosine", "torsional-quadratic"])
def test_angle_terms_invariance_and_gradient(form, rng):
    spec = _angle_lattice(form)
    asm = EnergyAssembly(spec, [(0, 0), (1, 1)])
    u = asm.positions + 0.2 * rng.normal(size=asm.positions.shape)
    b = asm.breakdown(u, PF)
    assert b.angle > 0
    R = random_rotation(rng)
    assert asm.energy(u @ R.T, PF) == pytest.approx(b.total, rel=1e-12)
    pf = PenaltyFunction(0.01, 0.05)
    _, g = asm.gradient(u, pf)
    h = 1e-6
    fd = np.zeros_like(u)
    for i in range(u.shape[0]):
        for d in range(2):
            up, dn = u.copy(), u.copy()
            up[i, d] += h
            dn[i, d] -= h
            fd[i, d] = (asm.energy(up, pf) - asm.energy(dn, pf)) / (2 * h)
    assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_elasticity_scaling(catalog_spec, rng):
    spec = catalog_spec
    cells = ((0, 0),)
    d1 = _cell_def(spec, lambda x: x, cells=cells)
    refs = list(d1.values)
    u = {r: spec.position(r) + 0.3 * rng.normal(size=2) for r in refs}
    e1 = cell_energy(Deformation(spec, u), spec, PF, (0, 0)).total
    for eps in (0.5, 0.125):
        de = Deformation(spec, {r: eps * v for r, v in u.items()}, eps)
        assert cell_energy(de, spec, PF, (0, 0)).total == pytest.approx(eps**2 * e1, rel=1e-12)


def test_energy_gradient_examples():
    kg = get_lattice("kagome").without_penalty()
    d = _cell_def(kg, lambda x: x, cells=((0, 0), (1, 0)))
    g = energy_gradient(d, kg, PenaltyFunction(0.01, 0.05), CellSet(((0, 0),)))
    assert max(np.max(np.abs(v)) for v in g.values()) == 0.0
    with pytest.raises(ValueError):
        energy_gradient(d, kg, PF, CellSet(((0, 0),)))


def test_single_spring_gradient():
    raw = _square_raw()
    raw["springs"] = [{"endpoints": [[0, [0, 0]], [0, [1, 0]]]}]
    raw["penalty_triangles"] = []
    raw["name"] = "one-spring"
    spec = build_lattice(raw)
    refs = [NodeRef(0, (0, 0)), NodeRef(0, (1, 0)), NodeRef(0, (0, 1)), NodeRef(0, (1, 1))]
    vals = np.array([[0, 0], [3, 0], [0, 1], [1, 1]], dtype=float)
    d = Deformation.from_arrays(spec, refs, vals)
    g = energy_gradient(d, spec, PenaltyFunction(0.01, 0.05), CellSet(((0, 0),)))
    assert np.allclose(g[NodeRef(0, (1, 0))], [4.0, 0.0])
    assert np.allclose(g[NodeRef(0, (0, 0))], [-4.0, 0.0])


def test_analytic_gradient_matches_fd(catalog_spec, rng):
    spec = catalog_spec
    asm = EnergyAssembly(spec, [(0, 0), (1, 0), (0, 1)])
    pf = PenaltyFunction(0.01, 0.05)
    for _ in range(3):
        u = asm.positions @ (np.eye(2) + 0.3 * rng.normal(size=(2, 2))).T + 0.2 * rng.normal(size=asm.positions.shape)
        _, g = asm.gradient(u, pf)
        fd = np.zeros_like(u)
        h = 1e-6
        for i in range(u.shape[0]):
            for d in range(2):
                up, dn = u.copy(), u.copy()
                up[i, d] += h
                dn[i, d] -= h
                fd[i, d] = (asm.energy(up, pf) - asm.energy(dn, pf)) / (2 * h)
        assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_area_weighted_penalty():
    raw = _square_raw()
    raw["penalty_weighting"] = "area-weighted"
    raw["name"] = "square-area"
    spec = build_lattice(raw)
    d = _cell_def(spec, lambda x: np.array([-x[0], x[1]]))
    assert cell_energy(d, spec, PF, (0, 0)).penalty == pytest.approx(100.0)


def test_breakdown_csv():
    kg = get_lattice("kagome")
    d = _cell_def(kg, lambda x: 2 * x, cells=((0, 0), (1, 0)))
    b = domain_energy(d, kg, PF, CellSet(((0, 0), (1, 0))), detail=True)
    text = b.to_csv().splitlines()
    assert text[0] == "cell_offset,spring,penalty,angle,total"
    assert len(text) == 3
