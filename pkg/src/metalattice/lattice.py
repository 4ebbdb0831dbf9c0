"""Periodic lattice specifications, node arithmetic and cell sets.

A lattice is described by a unit cell ``U`` tiled by the translates
``U + sum_i a_i v_i`` (``a`` integer), a finite set of basic nodes in the
closure of ``U``, the energy terms attached to one cell and a
triangulation of ``U`` used to build piecewise linear interpolants.

Node offsets are integer tuples and all index arithmetic on them is exact.
Geometry is floating point.
"""

from __future__ import annotations

import itertools
import json
import math
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShapelyPolygon

__all__ = [
    "LatticeError",
    "NodeRef",
    "SpringTerm",
    "AngleTerm",
    "GhostRule",
    "LatticeSpec",
    "Reach",
    "CellSet",
    "Box",
    "ConvexPolygon",
    "build_lattice",
    "load_lattice",
    "node_position",
    "compute_reach",
    "cells_in_domain",
    "expanded_offsets",
    "parse_domain",
]

# Relative tolerance used for geometric membership tests.
GEOM_RTOL = 1e-12
# Triangles with area below this fraction of |U| are rejected.
DEGENERATE_AREA_RTOL = 1e-14


class LatticeError(ValueError):
    """Raised for an invalid lattice description."""


class NodeRef(NamedTuple):
    """A lattice node ``p_basic + sum_i offset_i v_i``.

    ``basic`` is a 0-based index into ``LatticeSpec.basic_nodes``.
    """

    basic: int
    offset: tuple[int, ...]

    def shifted(self, alpha: Sequence[int]) -> "NodeRef":
        return NodeRef(self.basic, tuple(o + int(a) for o, a in zip(self.offset, alpha)))


@dataclass(frozen=True)
class SpringTerm:
    """Quadratic spring ``weight * stiffness * (|u_i - u_j| - rest_length)**2``."""

    endpoints: tuple[NodeRef, NodeRef]
    rest_length: float
    stiffness: float = 1.0
    weight: float = 1.0


@dataclass(frozen=True)
class AngleTerm:
    """Angle preference at ``apex`` between the arms towards ``arms``.

    ``form`` is ``"absolute-cosine"`` (energy
    ``strength * |l12.l13 - |l12||l13| cos0|``) or ``"torsional-quadratic"``
    (energy ``strength * (theta - theta0)**2`` with ``theta0 = arccos(cos0)``).
    """

    apex: NodeRef
    arms: tuple[NodeRef, NodeRef]
    preferred_cosine: float
    strength: float = 1.0
    form: str = "absolute-cosine"


@dataclass(frozen=True)
class GhostRule:
    """A triangulation vertex that is a convex combination of nodes."""

    position: np.ndarray
    sources: tuple[tuple[NodeRef, float], ...]


Vertex = Union[NodeRef, str]


@dataclass(frozen=True)
class Reach:
    """Dependence radii of the energy (``n``) and of the interpolation (``m``).

    ``d_m`` is the diameter of the expanded cell ``U_m``.
    """

    n: int
    m: int
    d_m: float


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Immutable description of a periodic spring lattice.

    Attributes
    ----------
    cell_vectors : ndarray, shape (N, N)
        Row ``i`` is the period vector ``v_i``.
    basic_nodes : ndarray, shape (|V|, N)
        Basic node positions, all in the closure of ``U``.
    cell_polygon : ndarray, shape (K, N)
        Vertices of the unit cell ``U`` (2D); a parallelogram by default.
    triangles : tuple of tuples of Vertex
        Triangulation of ``U``; a vertex is a NodeRef or a ghost id.
    penalty_triangles : tuple of int
        Indices into ``triangles`` carrying the orientation penalty.
    penalty_weighting : str
        ``"unweighted"`` or ``"area-weighted"``.
    """

    name: str
    dimension: int
    cell_vectors: np.ndarray
    basic_nodes: np.ndarray
    cell_polygon: np.ndarray
    springs: tuple[SpringTerm, ...]
    angle_terms: tuple[AngleTerm, ...]
    triangles: tuple[tuple[Vertex, ...], ...]
    ghosts: Mapping[str, GhostRule]
    penalty_triangles: tuple[int, ...]
    penalty_weighting: str = "unweighted"
    eta: float = 0.01
    description: str = ""
    labels: Mapping[str, NodeRef] = field(default_factory=dict)

    @property
    def n_basic(self) -> int:
        return len(self.basic_nodes)

    @property
    def volume(self) -> float:
        """Reference volume ``|U|``."""
        return float(abs(np.linalg.det(self.cell_vectors)))

    def position(self, ref: NodeRef) -> np.ndarray:
        """Unscaled position of a node."""
        if not 0 <= ref.basic < self.n_basic:
            raise IndexError(f"basic index {ref.basic} out of range 0..{self.n_basic - 1}")
        if len(ref.offset) != self.dimension:
            raise ValueError(f"offset {ref.offset} has wrong length for dimension {self.dimension}")
        return self.basic_nodes[ref.basic] + np.asarray(ref.offset, dtype=float) @ self.cell_vectors

    def positions(self, refs: Sequence[NodeRef]) -> np.ndarray:
        if len(refs) == 0:
            return np.zeros((0, self.dimension))
        basic = np.array([r.basic for r in refs])
        offs = np.array([r.offset for r in refs], dtype=float)
        return self.basic_nodes[basic] + offs @ self.cell_vectors

    def vertex_rule(self, vertex: Vertex) -> tuple[tuple[tuple[NodeRef, float], ...], np.ndarray]:
        """Return ``(sources, position)`` for a triangulation vertex."""
        if isinstance(vertex, str):
            g = self.ghosts[vertex]
            return g.sources, g.position
        return ((vertex, 1.0),), self.position(vertex)

    def triangle_vertices(self, index: int) -> np.ndarray:
        """Unscaled vertex positions of triangle ``index`` in cell 0."""
        return np.array([self.vertex_rule(v)[1] for v in self.triangles[index]])

    def triangle_area(self, index: int) -> float:
        return _simplex_volume(self.triangle_vertices(index))

    def cell_offset_vector(self, alpha: Sequence[int]) -> np.ndarray:
        return np.asarray(alpha, dtype=float) @ self.cell_vectors

    def lattice_coordinates(self, x: np.ndarray) -> np.ndarray:
        """Coordinates ``t`` with ``x = t @ cell_vectors``."""
        return np.asarray(x, dtype=float) @ np.linalg.inv(self.cell_vectors)

    def with_changes(self, **changes: Any) -> "LatticeSpec":
        """Copy of this lattice with some fields replaced (no re-validation)."""
        import dataclasses

        return dataclasses.replace(self, **changes)

    def without_penalty(self) -> "LatticeSpec":
        """The spring-and-angle part of the model."""
        return self.with_changes(penalty_triangles=(), name=f"{self.name}/no-penalty")


@dataclass(frozen=True)
class CellSet:
    """A finite set of cells ``eps * U + eps * (alpha @ V)``.

    Offsets are stored sorted so iteration order is deterministic.
    """

    offsets: tuple[tuple[int, ...], ...]
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", tuple(sorted(set(tuple(int(a) for a in o) for o in self.offsets))))

    def __len__(self) -> int:
        return len(self.offsets)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self.offsets)

    def __contains__(self, alpha: object) -> bool:
        return tuple(alpha) in set(self.offsets)  # type: ignore[arg-type]

    def shifted(self, beta: Sequence[int]) -> "CellSet":
        return CellSet(tuple(tuple(a + b for a, b in zip(o, beta)) for o in self.offsets), self.epsilon)


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box ``prod_i (lower_i, upper_i)``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"invalid box bounds {self.lower}, {self.upper}")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def inner_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        p = np.asarray(points, dtype=float)
        lo, hi = self.bounds()
        return np.minimum(p - lo, hi - p).min(axis=-1)

    def translated(self, shift: Sequence[float]) -> "Box":
        return Box(tuple(np.add(self.lower, shift)), tuple(np.add(self.upper, shift)))


@dataclass(frozen=True)
class ConvexPolygon:
    """Open convex polygon in the plane (vertices in either orientation)."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("a polygon needs at least 3 planar vertices")
        if _signed_area(v) < 0:
            object.__setattr__(self, "vertices", tuple(map(tuple, v[::-1])))
            v = v[::-1]
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(cross <= 0):
            raise ValueError("polygon domain must be strictly convex")

    @property
    def dimension(self) -> int:
        return 2

    @property
    def volume(self) -> float:
        return float(_signed_area(np.asarray(self.vertices)))

    @property
    def diameter(self) -> float:
        v = np.asarray(self.vertices)
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(self.vertices)
        return v.min(axis=0), v.max(axis=0)

    def inner_distance(self, points: np.ndarray) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=float)
        p = np.asarray(points, dtype=float)
        edges = np.roll(v, -1, axis=0) - v
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        # inward normal for counter-clockwise vertices is (-e_y, e_x)
        d = -((p[..., None, :] - v) * normals).sum(axis=-1)
        return d.min(axis=-1)

    def translated(self, shift: Sequence[float]) -> "ConvexPolygon":
        return ConvexPolygon(tuple(map(tuple, np.asarray(self.vertices) + np.asarray(shift))))


Domain = Union[Box, ConvexPolygon]


def parse_domain(raw: Any) -> Domain:
    """Build a domain from ``{"box": [lower, upper]}`` or ``{"polygon": [...]}``."""
    if isinstance(raw, (Box, ConvexPolygon)):
        return raw
    if not isinstance(raw, Mapping) or len(raw) != 1:
        raise ValueError("domain must be a mapping with a single key 'box' or 'polygon'")
    (kind, value), = raw.items()
    if kind == "box":
        lower, upper = value
        return Box(tuple(float(x) for x in lower), tuple(float(x) for x in upper))
    if kind == "polygon":
        return ConvexPolygon(tuple((float(x), float(y)) for x, y in value))
    raise ValueError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# geometry helpers


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _simplex_volume(vertices: np.ndarray) -> float:
    vertices = np.asarray(vertices, dtype=float)
    edges = vertices[1:] - vertices[0]
    return abs(float(np.linalg.det(edges))) / math.factorial(len(edges))


def _cell_shape(spec: LatticeSpec, alpha: Sequence[int] = None) -> _ShapelyPolygon:
    poly = spec.cell_polygon
    if alpha is not None:
        poly = poly + spec.cell_offset_vector(alpha)
    return _ShapelyPolygon(poly)


def expanded_offsets(dimension: int, n: int) -> list[tuple[int, ...]]:
    """Offsets ``beta`` with ``|beta_i| <= n - 1``: the cells forming ``U_n``."""
    r = range(-(n - 1), n)
    return [tuple(b) for b in itertools.product(r, repeat=dimension)]


def _in_closed_cell(spec: LatticeSpec, x: np.ndarray, beta: Sequence[int], tol: float) -> bool:
    if spec.dimension == 2:
        return _cell_shape(spec, beta).distance(shapely.Point(*x)) <= tol
    t = spec.lattice_coordinates(x) - np.asarray(beta, dtype=float)
    return bool(np.all(t >= -tol) and np.all(t <= 1 + tol))


def _cell_level(spec: LatticeSpec, x: np.ndarray) -> int:
    """Smallest ``n`` such that ``x`` lies in ``closure(U_n)``."""
    tol = GEOM_RTOL * max(1.0, float(np.max(np.abs(spec.cell_vectors))))
    t = np.floor(spec.lattice_coordinates(x)).astype(int)
    best = None
    for d in itertools.product((-2, -1, 0, 1), repeat=spec.dimension):
        beta = t + np.asarray(d)
        if _in_closed_cell(spec, x, beta, tol):
            lvl = int(np.max(np.abs(beta))) + 1
            best = lvl if best is None else min(best, lvl)
    if best is None:
        raise LatticeError(f"point {x} is not covered by any nearby cell")
    return best


# ---------------------------------------------------------------------------
# construction and validation


def _parse_ref(raw: Any, dim: int) -> NodeRef:
    if isinstance(raw, NodeRef):
        return raw
    b, off = raw
    off = tuple(int(o) for o in off)
    if len(off) != dim:
        raise LatticeError(f"node reference {raw!r} has wrong offset length")
    return NodeRef(int(b), off)


def _parse_vertex(raw: Any, dim: int) -> Vertex:
    if isinstance(raw, str):
        return raw
    return _parse_ref(raw, dim)


def build_lattice(raw: Mapping[str, Any]) -> LatticeSpec:
    """Validate a raw lattice description and build a :class:`LatticeSpec`.

    Parameters
    ----------
    raw : mapping
        Keys ``dimension``, ``cell_vectors``, ``nodes``, ``springs``,
        ``triangles`` and optionally ``cell``, ``ghosts``, ``angles``,
        ``penalty_triangles``, ``penalty_weighting``, ``eta``, ``name``,
        ``description``, ``labels``. Node references are
        ``[basic_index, [offsets...]]`` with 0-based basic indices.

    Raises
    ------
    LatticeError
        If any structural invariant is violated.
    """
    dim = int(raw.get("dimension", 2))
    V = np.array(raw["cell_vectors"], dtype=float)
    if V.shape != (dim, dim):
        raise LatticeError(f"cell_vectors must have shape ({dim}, {dim})")
    det = float(np.linalg.det(V))
    scale = float(np.max(np.linalg.norm(V, axis=1)))
    if abs(det) <= 1e-12 * scale**dim:
        raise LatticeError("degenerate cell vectors")
    volume = abs(det)
    tol = GEOM_RTOL * max(1.0, scale)

    nodes = np.array(raw["nodes"], dtype=float).reshape(-1, dim)
    if len(nodes) == 0:
        raise LatticeError("at least one basic node is required")
    Vinv = np.linalg.inv(V)
    for i, j in itertools.combinations(range(len(nodes)), 2):
        t = (nodes[i] - nodes[j]) @ Vinv
        if np.all(np.abs(t - np.round(t)) <= 1e-9):
            raise LatticeError(f"duplicate node modulo lattice: basic nodes {i} and {j}")

    if "cell" in raw and raw["cell"] is not None:
        cell_polygon = np.array(raw["cell"], dtype=float)
    elif dim == 2:
        cell_polygon = np.array([[0.0, 0.0], V[0], V[0] + V[1], V[1]])
    else:
        cell_polygon = np.zeros((0, dim))
    if dim == 2:
        if _signed_area(cell_polygon) < 0:
            cell_polygon = cell_polygon[::-1].copy()
        if abs(_signed_area(cell_polygon) - volume) > 1e-9 * volume:
            raise LatticeError("cell polygon area differs from |det(cell_vectors)|")

    def ref(r: Any) -> NodeRef:
        nr = _parse_ref(r, dim)
        if not 0 <= nr.basic < len(nodes):
            raise LatticeError(f"basic index {nr.basic} out of range")
        return nr

    def pos(r: NodeRef) -> np.ndarray:
        return nodes[r.basic] + np.asarray(r.offset, dtype=float) @ V

    springs = []
    for k, s in enumerate(raw.get("springs", [])):
        a, b = (ref(e) for e in s["endpoints"])
        ref_len = float(np.linalg.norm(pos(a) - pos(b)))
        if ref_len <= tol:
            raise LatticeError(f"spring {k} joins coincident nodes")
        rest = float(s.get("rest_length", ref_len))
        stiffness = float(s.get("stiffness", 1.0))
        weight = float(s.get("weight", 1.0))
        if rest <= 0:
            raise LatticeError(f"spring {k} has non-positive rest length")
        if stiffness <= 0:
            raise LatticeError(f"spring {k} has non-positive stiffness")
        if not 0 < weight <= 1:
            raise LatticeError(f"spring {k} weight must lie in (0, 1]")
        springs.append(SpringTerm((a, b), rest, stiffness, weight))

    angles = []
    for k, a in enumerate(raw.get("angles", [])):
        apex = ref(a["apex"])
        arms = tuple(ref(x) for x in a["arms"])
        if apex in arms:
            raise LatticeError(f"angle term {k}: apex coincides with an arm")
        if "preferred_angle" in a:
            c = math.cos(float(a["preferred_angle"]))
        else:
            c = float(a["preferred_cosine"])
        if not -1 <= c <= 1:
            raise LatticeError(f"angle term {k}: preferred cosine outside [-1, 1]")
        form = a.get("form", "absolute-cosine")
        if form not in ("absolute-cosine", "torsional-quadratic"):
            raise LatticeError(f"angle term {k}: unknown form {form!r}")
        strength = float(a.get("strength", 1.0))
        if strength < 0:
            raise LatticeError(f"angle term {k}: negative strength")
        angles.append(AngleTerm(apex, arms, c, strength, form))  # type: ignore[arg-type]

    ghosts: dict[str, GhostRule] = {}
    for gid, g in (raw.get("ghosts") or {}).items():
        srcs = tuple((ref(s), float(th)) for s, th in g["sources"])
        thetas = np.array([th for _, th in srcs])
        if len(srcs) < 2 or np.any(thetas <= 0) or np.any(thetas >= 1) or abs(thetas.sum() - 1) > 1e-12:
            raise LatticeError(f"ghost rule {gid!r} not a convex combination")
        combo = sum(th * pos(s) for s, th in srcs)
        gpos = np.array(g.get("position", combo), dtype=float)
        if np.linalg.norm(gpos - combo) > 1e-9 * max(1.0, scale):
            raise LatticeError(f"ghost rule {gid!r} not a convex combination matching its position")
        gpos.setflags(write=False)
        ghosts[str(gid)] = GhostRule(gpos, srcs)

    triangles = []
    for k, t in enumerate(raw["triangles"]):
        verts = tuple(_parse_vertex(v, dim) for v in t)
        if len(verts) != dim + 1:
            raise LatticeError(f"triangle {k} must have {dim + 1} vertices")
        for v in verts:
            if isinstance(v, str) and v not in ghosts:
                raise LatticeError(f"triangle {k} references unknown ghost {v!r}")
            if isinstance(v, NodeRef):
                ref(v)
        triangles.append(verts)

    def vpos(v: Vertex) -> np.ndarray:
        return ghosts[v].position if isinstance(v, str) else pos(v)

    tri_pts = [np.array([vpos(v) for v in t]) for t in triangles]
    areas = [_simplex_volume(p) for p in tri_pts]
    for k, a in enumerate(areas):
        if a < DEGENERATE_AREA_RTOL * volume:
            raise LatticeError(f"triangle {k} is degenerate")
    if abs(sum(areas) - volume) > 1e-9 * volume:
        raise LatticeError("triangulation gap/overlap: triangle areas do not sum to |U|")

    if dim == 2:
        cell = _ShapelyPolygon(cell_polygon)
        shapes = [_ShapelyPolygon(p) for p in tri_pts]
        union = shapely.union_all(shapes)
        if abs(union.area - volume) > 1e-9 * volume:
            raise LatticeError("triangulation gap/overlap: triangles overlap")
        if cell.symmetric_difference(union).area > 1e-9 * volume:
            raise LatticeError("triangulation gap/overlap: triangles do not tile the unit cell")
        for i, p in enumerate(nodes):
            if cell.distance(shapely.Point(*p)) > tol:
                raise LatticeError(f"basic node {i} lies outside the unit cell")
        vert_pts = np.concatenate(tri_pts)
        for b in range(len(nodes)):
            for off in itertools.product((-1, 0, 1), repeat=dim):
                p = pos(NodeRef(b, off))
                if cell.distance(shapely.Point(*p)) <= tol:
                    if np.min(np.linalg.norm(vert_pts - p, axis=1)) > tol:
                        raise LatticeError(f"node {(b, off)} in the closed cell is not a triangulation vertex")

    penalty = tuple(int(i) for i in raw.get("penalty_triangles", []))
    for i in penalty:
        if not 0 <= i < len(triangles):
            raise LatticeError(f"penalty triangle {i} is not one of the cell's triangles")
    if len(set(penalty)) != len(penalty):
        raise LatticeError("penalty triangles must be distinct")
    weighting = raw.get("penalty_weighting", "unweighted")
    if weighting not in ("unweighted", "area-weighted"):
        raise LatticeError(f"unknown penalty weighting {weighting!r}")
    eta = float(raw.get("eta", 0.01))
    if eta <= 0:
        raise LatticeError("eta must be positive")

    labels = {str(k): ref(v) for k, v in (raw.get("labels") or {}).items()}
    for arr in (V, nodes, cell_polygon):
        arr.setflags(write=False)
    return LatticeSpec(
        name=str(raw.get("name", "custom")),
        dimension=dim,
        cell_vectors=V,
        basic_nodes=nodes,
        cell_polygon=cell_polygon,
        springs=tuple(springs),
        angle_terms=tuple(angles),
        triangles=tuple(triangles),
        ghosts=ghosts,
        penalty_triangles=penalty,
        penalty_weighting=weighting,
        eta=eta,
        description=str(raw.get("description", "")),
        labels=labels,
    )


def load_lattice(source: str | Path) -> LatticeSpec:
    """Load a catalog lattice by name or a lattice file (YAML or JSON)."""
    from .catalog import CATALOG, get_lattice

    if isinstance(source, str) and source in CATALOG:
        return get_lattice(source)
    path = Path(source)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        import yaml

        raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise LatticeError(f"lattice file {path} does not contain a mapping")
    raw.setdefault("name", path.stem)
    return build_lattice(raw)


# ---------------------------------------------------------------------------
# operations


def node_position(spec: LatticeSpec, ref: NodeRef, epsilon: float = 1.0) -> np.ndarray:
    """Position ``epsilon * (p_basic + sum_i alpha_i v_i)`` of a node."""
    return epsilon * spec.position(ref)


def _energy_endpoints(spec: LatticeSpec) -> Iterable[NodeRef]:
    for s in spec.springs:
        yield from s.endpoints
    for a in spec.angle_terms:
        yield a.apex
        yield from a.arms
    for t in spec.penalty_triangles:
        for v in spec.triangles[t]:
            for src, _ in spec.vertex_rule(v)[0]:
                yield src


_REACH_CACHE: "weakref.WeakKeyDictionary[LatticeSpec, Reach]" = weakref.WeakKeyDictionary()


def compute_reach(spec: LatticeSpec) -> Reach:
    """Energy and interpolation dependence radii of a lattice.

    ``n`` is the smallest integer such that every node used by the energy of
    cell 0 lies in ``closure(U_n)``; ``m >= n`` is the smallest integer such
    that every ghost source of a triangle in ``U_n`` lies in ``closure(U_m)``.
    """
    cached = _REACH_CACHE.get(spec)
    if cached is not None:
        return cached
    levels: dict[NodeRef, int] = {}

    def level(r: NodeRef) -> int:
        if r not in levels:
            levels[r] = _cell_level(spec, spec.position(r))
        return levels[r]

    n = max([1] + [level(r) for r in _energy_endpoints(spec)])
    m = n
    for beta in expanded_offsets(spec.dimension, n):
        for t in spec.triangles:
            for v in t:
                if isinstance(v, str):
                    for src, _ in spec.ghosts[v].sources:
                        m = max(m, level(src.shifted(beta)))
    pts = _expanded_vertices(spec, m)
    diffs = pts[:, None, :] - pts[None, :, :]
    d_m = float(np.sqrt((diffs**2).sum(-1)).max())
    reach = Reach(n, m, d_m)
    _REACH_CACHE[spec] = reach
    return reach


def _cell_vertices(spec: LatticeSpec) -> np.ndarray:
    if spec.dimension == 2:
        return np.asarray(spec.cell_polygon)
    corners = np.array(list(itertools.product((0, 1), repeat=spec.dimension)), dtype=float)
    return corners @ spec.cell_vectors


def _expanded_vertices(spec: LatticeSpec, m: int) -> np.ndarray:
    base = _cell_vertices(spec)
    shifts = np.array(expanded_offsets(spec.dimension, m), dtype=float) @ spec.cell_vectors
    return (base[None, :, :] + shifts[:, None, :]).reshape(-1, spec.dimension)


def cells_in_domain(spec: LatticeSpec, domain: Domain, epsilon: float, reach: Reach | None = None) -> CellSet:
    """Cells ``alpha`` with ``epsilon * closure(U_m) + alpha`` strictly inside ``domain``.

    Points closer to the boundary than ``1e-12 * diam(domain)`` count as on
    the boundary and exclude their cell.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    domain = parse_domain(domain)
    if domain.dimension != spec.dimension:
        raise ValueError("domain dimension differs from lattice dimension")
    reach = reach or compute_reach(spec)
    hull = _expanded_vertices(spec, reach.m)
    lo, hi = domain.bounds()
    corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float) / epsilon
    t = spec.lattice_coordinates(corners)
    pad = reach.m + 1
    ranges = [range(int(math.floor(t[:, i].min())) - pad, int(math.ceil(t[:, i].max())) + pad + 1) for i in range(spec.dimension)]
    alphas = np.array(list(itertools.product(*ranges)), dtype=np.int64)
    if len(alphas) == 0:
        return CellSet((), epsilon)
    tol = GEOM_RTOL * domain.diameter
    shifts = alphas.astype(float) @ spec.cell_vectors
    pts = epsilon * (hull[None, :, :] + shifts[:, None, :])
    inside = (domain.inner_distance(pts) > tol).all(axis=1)
    return CellSet(tuple(map(tuple, alphas[inside].tolist())), epsilon)
