"""Built-in example lattices and their polygon decompositions.

All examples use nearest-neighbour spacing 1. Each catalog entry also
carries the polygon decompositions used to derive constructive upper and
lower bounds on the cell energy (see :mod:`metalattice.analysis.bounds`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

from .lattice import LatticeSpec, NodeRef, build_lattice

__all__ = [
    "CATALOG",
    "Decomposition",
    "WeightedPolygon",
    "PathBound",
    "get_lattice",
    "get_decomposition",
    "list_catalog",
]

S3 = math.sqrt(3.0)


def _r(b: int, *off: int) -> list:
    return [b, list(off)]


@dataclass(frozen=True)
class WeightedPolygon:
    """A polygon ``A_1..A_n`` (spring chain along consecutive vertices) with a sharing weight."""

    weight: float
    vertices: tuple[NodeRef, ...]


@dataclass(frozen=True)
class PathBound:
    """Bound for a long spring through a path of triangle edges.

    The spring ``(a, b)`` is compared with the path ``a = p_0, ..., p_L = b``;
    segment ``j`` is an edge of ``triangles[j]``. ``region_area`` is the
    area of the union of the cell and those triangles.
    """

    spring: tuple[NodeRef, NodeRef]
    weight: float
    path: tuple[NodeRef, ...]
    triangles: tuple[tuple[NodeRef, NodeRef, NodeRef], ...]
    region_area: float


@dataclass(frozen=True)
class Decomposition:
    """Polygon decompositions of one cell's spring energy.

    ``upper`` polygons have disjoint interiors inside ``U_n`` and together
    cover every spring at least once (after weighting). ``lower`` polygons
    tile ``U`` and their weighted sum never exceeds the spring energy.
    """

    upper: tuple[WeightedPolygon, ...]
    lower: tuple[WeightedPolygon, ...]
    paths: tuple[PathBound, ...] = ()


# ---------------------------------------------------------------------------
# raw descriptions

# Kagome: A, O, D basic; B, C, E, F are translates.
_KA, _KO, _KD = 0, 1, 2
_K = {
    "A": _r(_KA, 0, 0),
    "O": _r(_KO, 0, 0),
    "D": _r(_KD, 0, 0),
    "B": _r(_KD, 0, -1),
    "C": _r(_KA, -1, 1),
    "E": _r(_KA, 0, 1),
    "F": _r(_KD, 1, -1),
}


def _kagome_raw() -> dict:
    k = _K
    return {
        "name": "kagome",
        "description": "Kagome lattice of corner-sharing unit triangles",
        "dimension": 2,
        "cell_vectors": [[2.0, 0.0], [1.0, S3]],
        "cell": [[0.0, 0.0], [2.0, 0.0], [2.0, S3], [0.0, S3]],
        "nodes": [[1.0, 0.0], [0.5, S3 / 2], [1.0, S3]],
        "springs": [{"endpoints": [k[a], k[b]]} for a, b in ("AO", "BO", "CO", "DO", "AF", "DE")],
        "triangles": [[k[a], k[b], k[c]] for a, b, c in ("AOB", "BOC", "COD", "AOF", "DOF", "DEF")],
        "penalty_triangles": [0, 2],
        "labels": dict(k),
    }


_SQ = {
    "O": _r(0, 0, 0),
    "A": _r(0, 1, 0),
    "B": _r(0, 0, 1),
    "C": _r(0, 1, 1),
    "D": _r(0, 2, 1),
}


def _square_raw() -> dict:
    k = _SQ
    return {
        "name": "square",
        "description": "square lattice with half-weight edge springs",
        "dimension": 2,
        "cell_vectors": [[1.0, 0.0], [0.0, 1.0]],
        "nodes": [[0.0, 0.0]],
        "springs": [{"endpoints": [k[a], k[b]], "weight": 0.5} for a, b in ("AO", "BO", "AC", "BC")],
        "triangles": [[k["O"], k["A"], k["C"]], [k["O"], k["B"], k["C"]]],
        "penalty_triangles": [0, 1],
        "labels": {n: k[n] for n in "OABC"},
    }


def _square_long_range_raw() -> dict:
    raw = _square_raw()
    raw["name"] = "square-long-range"
    raw["description"] = "square lattice plus one knight-move spring per node"
    raw["springs"].append({"endpoints": [_SQ["O"], _SQ["D"]], "weight": 1.0})
    raw["labels"] = dict(_SQ)
    return raw


# Rotating squares: 2x2 cell, rows A B C / D O E / F G H (top to bottom).
_RS = {
    "F": _r(0, 0, 0),
    "G": _r(1, 0, 0),
    "D": _r(2, 0, 0),
    "O": _r(3, 0, 0),
    "A": _r(0, 0, 1),
    "B": _r(1, 0, 1),
    "C": _r(0, 1, 1),
    "E": _r(2, 1, 0),
    "H": _r(0, 1, 0),
}


def _rotating_squares_raw() -> dict:
    k = _RS
    pairs = ("AB", "AO", "AD", "BC", "BO", "DO", "EO", "DF", "OG", "OH")
    tris = ("ABO", "ADO", "BOE", "BCE", "DOG", "DFG", "OEH", "OGH")
    return {
        "name": "rotating-squares",
        "description": "rigid braced squares joined at hinges (auxetic)",
        "dimension": 2,
        "cell_vectors": [[2.0, 0.0], [0.0, 2.0]],
        "nodes": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        "springs": [{"endpoints": [k[a], k[b]]} for a, b in pairs],
        "triangles": [[k[a], k[b], k[c]] for a, b, c in tris],
        "penalty_triangles": [0, 1, 6, 7],
        "labels": dict(k),
    }


def _poly(labels: Mapping[str, NodeRef], names: str, weight: float = 1.0) -> WeightedPolygon:
    return WeightedPolygon(weight, tuple(labels[c] for c in names))


def _kagome_decomposition(spec: LatticeSpec) -> Decomposition:
    L = spec.labels
    return Decomposition(
        upper=(_poly(L, "BOC"), _poly(L, "FAODE")),
        lower=(_poly(L, "AOB", 0.5), _poly(L, "BOC", 0.5), _poly(L, "COD", 0.5), _poly(L, "FAODE", 0.5)),
    )


def _square_decomposition(spec: LatticeSpec) -> Decomposition:
    L = spec.labels
    half = (_poly(L, "OAC", 0.5), _poly(L, "OBC", 0.5))
    return Decomposition(upper=half, lower=half)


def _square_long_range_decomposition(spec: LatticeSpec) -> Decomposition:
    L = spec.labels
    base = _square_decomposition(spec)
    path = PathBound(
        spring=(L["O"], L["D"]),
        weight=1.0,
        path=(L["O"], L["A"], L["D"]),
        triangles=((L["O"], L["A"], L["C"]), (L["A"], L["D"], L["C"])),
        region_area=1.5,
    )
    return Decomposition(upper=base.upper, lower=base.lower, paths=(path,))


def _rotating_squares_decomposition(spec: LatticeSpec) -> Decomposition:
    L = spec.labels
    names = ("DAO", "BAO", "EOBC", "GODF", "GOH", "HOE")
    return Decomposition(
        upper=tuple(_poly(L, n) for n in names),
        lower=tuple(_poly(L, n, 0.5) for n in names),
    )


@dataclass(frozen=True)
class _Entry:
    raw: Callable[[], dict]
    decomposition: Callable[[LatticeSpec], Decomposition]


CATALOG: dict[str, _Entry] = {
    "kagome": _Entry(_kagome_raw, _kagome_decomposition),
    "rotating-squares": _Entry(_rotating_squares_raw, _rotating_squares_decomposition),
    "square": _Entry(_square_raw, _square_decomposition),
    "square-long-range": _Entry(_square_long_range_raw, _square_long_range_decomposition),
}

_BUILT: dict[str, LatticeSpec] = {}


def get_lattice(name: str) -> LatticeSpec:
    """Return the (cached, immutable) catalog lattice ``name``."""
    if name not in CATALOG:
        raise KeyError(f"unknown catalog lattice {name!r}; known: {sorted(CATALOG)}")
    if name not in _BUILT:
        _BUILT[name] = build_lattice(CATALOG[name].raw())
    return _BUILT[name]


def get_decomposition(spec: LatticeSpec) -> Decomposition:
    """Registered polygon decomposition for a catalog lattice.

    Specs derived with :meth:`LatticeSpec.without_penalty` share the
    decomposition of their parent.
    """
    base = spec.name.split("/")[0]
    if base not in CATALOG or not spec.labels:
        raise KeyError(f"no polygon decomposition registered for lattice {spec.name!r}")
    return CATALOG[base].decomposition(spec)


def list_catalog() -> list[tuple[str, str]]:
    """Names of the built-in lattices with a one-line description."""
    out = []
    for name in sorted(CATALOG):
        spec = get_lattice(name)
        out.append(
            (
                name,
                f"{spec.description}; {spec.n_basic} node{'s' if spec.n_basic != 1 else ''}, {len(spec.springs)} springs, "
                f"{len(spec.triangles)} triangles ({len(spec.penalty_triangles)} penalized) per cell",
            )
        )
    return out
