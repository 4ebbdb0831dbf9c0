"""Constructive polygon and cell energy bounds.

For a convex polygon ``A_1..A_n`` with springs along the chain
``A_1A_2, ..., A_{n-1}A_n`` and any deformation ``u`` (P1 on the fan
triangulation from ``A_1``)

    E_poly(u) <= c1 (|grad u|^2_{L2(P)} + |P|)
    E_poly(u) >= c2 |grad u|^2_{L2(P)} - c3 |P|.

The constants come from the two-spring triangle estimate and an induction
that splits off the triangle ``A_1A_2A_3``. Cell constants ``C1, C2, D2``
are assembled from registered polygon decompositions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ..catalog import Decomposition, get_decomposition
from ..energy import EnergyAssembly, PenaltyFunction
from ..lattice import LatticeSpec, NodeRef, compute_reach, expanded_offsets
from ..linearize import Deformation, TriangleTable, required_nodes

__all__ = [
    "TriangleConstants",
    "PolygonConstants",
    "BoundConstants",
    "polygon_energy",
    "polygon_gradient_norm",
    "triangle_bound_constants",
    "polygon_bound_constants",
    "cell_bound_constants",
    "d4_gamma",
    "chain_energies",
    "random_gradients",
    "BoundAudit",
    "audit_polygon",
    "audit_d4",
    "audit_cell_bounds",
]


def _area(points: np.ndarray) -> float:
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def chain_energies(u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Energies of the springs ``A_i A_{i+1}``; ``u`` has shape ``(..., n, N)``."""
    rest = np.linalg.norm(np.diff(points, axis=0), axis=-1)
    return (np.linalg.norm(np.diff(u, axis=-2), axis=-1) - rest) ** 2


def polygon_energy(u: Union[Deformation, np.ndarray], polygon: Sequence) -> np.ndarray | float:
    """Sum of the ``n - 1`` chain spring energies of a polygon.

    Parameters
    ----------
    u : Deformation or ndarray
        A deformation (then ``polygon`` lists NodeRefs) or deformed vertex
        positions of shape ``(..., n, N)`` (then ``polygon`` lists the
        reference vertex positions).
    """
    if isinstance(u, Deformation):
        refs = list(polygon)
        if len(refs) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
        points = u.spec.positions(refs)
        vals = u.gather(refs) / u.epsilon
        return float(u.epsilon**u.spec.dimension * chain_energies(vals, points).sum())
    points = np.asarray(polygon, dtype=float)
    if len(points) < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    e = chain_energies(np.asarray(u, dtype=float), points).sum(-1)
    return float(e) if np.ndim(e) == 0 else e


def _fan(points: np.ndarray) -> list[np.ndarray]:
    return [np.array([points[0], points[i], points[i + 1]]) for i in range(1, len(points) - 1)]


def polygon_gradient_norm(u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """``|grad u|^2_{L2(P)}`` of the P1 interpolant on the fan from ``A_1``."""
    points = np.asarray(points, dtype=float)
    total = 0.0
    for i in range(1, len(points) - 1):
        idx = [0, i, i + 1]
        x = points[idx]
        X = np.swapaxes(x[:1] - x[1:], -1, -2)
        D = np.swapaxes(u[..., idx[:1], :] - u[..., idx[1:], :], -1, -2)
        G = D @ np.linalg.inv(X)
        total = total + (G**2).sum(axis=(-1, -2)) * _area(x)
    return total


def _is_convex(points: np.ndarray) -> bool:
    e = np.roll(points, -1, axis=0) - points
    nxt = np.roll(e, -1, axis=0)
    cross = e[:, 0] * nxt[:, 1] - e[:, 1] * nxt[:, 0]
    return bool(np.all(cross > 0) or np.all(cross < 0))


@dataclass(frozen=True)
class TriangleConstants:
    """Bound constants of a triangle with spring chain ``A-B-C``."""

    alpha: float
    beta: float
    c1: float
    c2: float
    c3: float
    area: float


@dataclass(frozen=True)
class PolygonConstants:
    """Bound constants of a convex polygon with its induction record."""

    c1: float
    c2: float
    c3: float
    area: float
    gamma: float = 0.0
    parts: tuple = ()


def triangle_bound_constants(points: np.ndarray) -> TriangleConstants:
    """Constants of the triangle ``A, B, C`` (chain ``A-B``, ``B-C``).

    ``alpha = 1/sigma_max(M2)^2`` and ``beta = 1/sigma_min(M2)^2`` for
    ``M2 = [A - B, B - C]`` so that ``alpha |M|^2 <= |M M2^{-1}|^2 <= beta |M|^2``.
    """
    A, B, C = np.asarray(points, dtype=float)
    area = _area(np.array([A, B, C]))
    scale = max(np.linalg.norm(A - B), np.linalg.norm(B - C), 1e-300)
    if area <= 1e-14 * scale**2:
        raise ValueError("degenerate triangle")
    M2 = np.column_stack([A - B, B - C])
    s = np.linalg.svd(M2, compute_uv=False)
    alpha, beta = 1.0 / s[0] ** 2, 1.0 / s[-1] ** 2
    L2 = float(np.dot(A - B, A - B) + np.dot(B - C, B - C))
    c1 = max(1.0 / (alpha * area), L2 / area)
    c2 = 1.0 / (2.0 * beta * area)
    c3 = 2.0 * L2 / area
    return TriangleConstants(float(alpha), float(beta), float(c1), float(c2), float(c3), float(area))


def d4_gamma(points: np.ndarray) -> float:
    """``gamma = 6 max(|A - B|, |B - C|)^2`` for the triangle ``A, B, C``."""
    A, B, C = np.asarray(points, dtype=float)
    return 6.0 * max(np.linalg.norm(A - B), np.linalg.norm(B - C)) ** 2


def polygon_bound_constants(points: np.ndarray) -> PolygonConstants:
    """Constants for a convex polygon by induction on the number of vertices.

    With ``P' = A1 A2 A3`` and ``P'' = A1 A3 ... An``:
    ``c1 = max(c1', c1'')``, ``c2 = min(c2'/2, c2''/6)`` and
    ``c3 |P| = c3'|P'|/2 + c3''|P''|/6 + gamma/2``.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    if not _is_convex(points):
        raise ValueError("polygon is not convex")
    if len(points) == 3:
        t = triangle_bound_constants(points)
        return PolygonConstants(t.c1, t.c2, t.c3, t.area, 0.0, (t,))
    first = triangle_bound_constants(points[:3])
    rest = polygon_bound_constants(np.vstack([points[:1], points[2:]]))
    gamma = d4_gamma(points[:3])
    area = _area(points)
    c1 = max(first.c1, rest.c1)
    c2 = min(first.c2 / 2.0, rest.c2 / 6.0)
    c3 = (first.c3 * first.area / 2.0 + rest.c3 * rest.area / 6.0 + gamma / 2.0) / area
    return PolygonConstants(c1, c2, c3, area, gamma, (first, rest))


@dataclass(frozen=True)
class BoundConstants:
    """Cell constants ``E(u, U) <= C1 (|grad u|^2_{U_n} + |U_n|)`` and
    ``E(u, U) >= C2 (|grad u|^2_U - D2 |U|)``.

    ``C1`` includes the penalty ceiling ``M`` (spread over ``|U_n|``);
    ``C1_spring`` is the spring-only constant.
    """

    C1: float
    C2: float
    D2: float
    M: float
    C1_spring: float
    n: int
    area_Un: float
    upper: tuple[tuple[float, PolygonConstants], ...] = ()
    lower: tuple[tuple[float, PolygonConstants], ...] = ()
    paths: tuple[float, ...] = field(default=())

    @property
    def c1(self) -> float:
        return max(w * p.c1 for w, p in self.upper)

    @property
    def c2(self) -> float:
        return min(p.c2 for _, p in self.lower)

    @property
    def c3(self) -> float:
        return max(p.c3 for _, p in self.lower)


def _path_constant(spec: LatticeSpec, path) -> float:
    """Constant ``c`` with ``E_spring <= c (|grad u|^2_R + |R|)`` for a long spring.

    ``(|du| - r)^2 <= |du|^2 + r^2``, ``|du|^2 <= L sum_j |du_j|^2`` over the
    ``L`` path segments, and ``|du_j|^2 <= |e_j|^2 / |T_j| |grad u|^2_{T_j}``.
    """
    pts = spec.positions(list(path.path))
    L = len(pts) - 1
    coeffs = []
    for j in range(L):
        seg = float(np.sum((pts[j + 1] - pts[j]) ** 2))
        tri = spec.positions(list(path.triangles[j]))
        coeffs.append(path.weight * L * seg / _area(tri))
    a, b = spec.positions(list(path.spring))
    rest = float(np.linalg.norm(a - b))
    return max(max(coeffs), path.weight * rest**2 / path.region_area)


def cell_bound_constants(spec: LatticeSpec, decomposition: Decomposition | None = None) -> BoundConstants:
    """Assemble cell constants from a lattice's polygon decomposition.

    ``C1_spring = max_i w_i c1_i + sum_paths c_path``; ``C2 = min_i w_i c2_i``
    and ``D2 = max_i w_i c3_i / C2`` over the lower decomposition; the
    penalty adds ``M = |T|/eta`` (times the triangle areas when the penalty
    is area weighted).
    """
    dec = decomposition or get_decomposition(spec)
    reach = compute_reach(spec)
    upper = tuple((p.weight, polygon_bound_constants(spec.positions(list(p.vertices)))) for p in dec.upper)
    lower = tuple((p.weight, polygon_bound_constants(spec.positions(list(p.vertices)))) for p in dec.lower)
    path_c = tuple(_path_constant(spec, p) for p in dec.paths)
    C1_spring = max(w * c.c1 for w, c in upper) + sum(path_c)
    C2 = min(w * c.c2 for w, c in lower)
    D2 = max(w * c.c3 for w, c in lower) / C2
    if spec.penalty_weighting == "area-weighted":
        M = sum(spec.triangle_area(t) for t in spec.penalty_triangles) / spec.eta
    else:
        M = len(spec.penalty_triangles) / spec.eta
    area_Un = (2 * reach.n - 1) ** spec.dimension * spec.volume
    return BoundConstants(C1_spring + M / area_Un, C2, D2, M, C1_spring, reach.n, area_Un, upper, lower, path_c)


# ---------------------------------------------------------------------------
# randomized audits


def random_gradients(rng: np.random.Generator, count: int, dim: int = 2, radius: float = 3.0) -> np.ndarray:
    """Matrices uniformly distributed in the Frobenius ball of ``radius``."""
    g = rng.normal(size=(count, dim * dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / (dim * dim))
    return (g * r).reshape(count, dim, dim)


def _random_states(rng: np.random.Generator, x: np.ndarray, count: int, sigmas=(0.0, 0.1, 1.0)) -> np.ndarray:
    dim = x.shape[-1]
    lam = random_gradients(rng, count, dim)
    sig = np.asarray(sigmas)[rng.integers(0, len(sigmas), size=count)]
    return np.einsum("bij,nj->bni", lam, x) + sig[:, None, None] * rng.normal(size=(count,) + x.shape)


@dataclass(frozen=True)
class BoundAudit:
    """Violation counts of a randomized bound check."""

    name: str
    samples: int
    upper_violations: int
    lower_violations: int
    worst_upper_ratio: float
    worst_lower_gap: float

    @property
    def violations(self) -> int:
        return self.upper_violations + self.lower_violations


_RTOL = 1e-12


def audit_polygon(points: np.ndarray, samples: int = 1000, seed: int = 0, name: str = "polygon") -> BoundAudit:
    """Check the polygon upper and lower bounds on random deformations."""
    points = np.asarray(points, dtype=float)
    c = polygon_bound_constants(points)
    rng = np.random.default_rng(seed)
    u = _random_states(rng, points, samples)
    E = polygon_energy(u, points)
    g = polygon_gradient_norm(u, points)
    upper = c.c1 * (g + c.area)
    lower = c.c2 * g - c.c3 * c.area
    up_bad = E > upper * (1 + _RTOL) + _RTOL
    lo_bad = E < lower - _RTOL * np.abs(lower) - _RTOL
    return BoundAudit(
        name, samples, int(up_bad.sum()), int(lo_bad.sum()), float(np.max(E / upper)), float(np.min(E - lower))
    )


def audit_d4(points: np.ndarray, samples: int = 1000, seed: int = 0, name: str = "triangle") -> BoundAudit:
    """Check ``E_AC <= 3 (gamma + E_AB + E_BC)`` on random triangle deformations."""
    points = np.asarray(points, dtype=float)
    gamma = d4_gamma(points)
    rng = np.random.default_rng(seed)
    u = _random_states(rng, points, samples)
    e = chain_energies(u, points)
    rest_ac = np.linalg.norm(points[2] - points[0])
    e_ac = (np.linalg.norm(u[:, 2] - u[:, 0], axis=-1) - rest_ac) ** 2
    rhs = 3.0 * (gamma + e[:, 0] + e[:, 1])
    bad = e_ac > rhs * (1 + _RTOL)
    return BoundAudit(name, samples, int(bad.sum()), 0, float(np.max(e_ac / rhs)), 0.0)


def audit_cell_bounds(spec: LatticeSpec, samples: int = 1000, seed: int = 0) -> BoundAudit:
    """Check the cell upper and lower bounds (penalty included) on random states."""
    consts = cell_bound_constants(spec)
    reach = compute_reach(spec)
    asm = EnergyAssembly(spec, [(0,) * spec.dimension])
    grow = expanded_offsets(spec.dimension, reach.n)
    index, refs = dict(asm.index), list(asm.refs)
    big = TriangleTable.build(spec, grow, index=index, refs=refs)
    home = TriangleTable.build(spec, [(0,) * spec.dimension], index=index, refs=refs)
    x = spec.positions(refs)
    rng = np.random.default_rng(seed)
    u = _random_states(rng, x, samples)
    pf = PenaltyFunction(spec.eta)
    E = asm.energy(u[:, : asm.n_nodes], pf)
    G_big = big.gradients(big.vertex_values(u))
    g_big = ((G_big**2).sum(axis=(-1, -2)) * big.areas).sum(-1)
    G_home = home.gradients(home.vertex_values(u))
    g_home = ((G_home**2).sum(axis=(-1, -2)) * home.areas).sum(-1)
    upper = consts.C1 * (g_big + consts.area_Un)
    lower = np.maximum(consts.C2 * (g_home - consts.D2 * spec.volume), 0.0)
    up_bad = E > upper * (1 + _RTOL) + _RTOL
    lo_bad = E < lower * (1 - _RTOL) - _RTOL
    return BoundAudit(
        spec.name, samples, int(up_bad.sum()), int(lo_bad.sum()), float(np.max(E / upper)), float(np.min(E - lower))
    )
