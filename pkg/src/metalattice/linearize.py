"""Nodal deformations and their piecewise linear (P1) extensions."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .lattice import (
    Box,
    CellSet,
    LatticeSpec,
    NodeRef,
    cells_in_domain,
    compute_reach,
    expanded_offsets,
)

__all__ = [
    "MissingNodeError",
    "AffineExtensionRule",
    "Deformation",
    "TriangleTable",
    "PiecewiseLinearField",
    "required_nodes",
    "affine_gradient",
    "linearize",
    "gradient_on_triangle",
    "l2_gradient_norm",
    "sample_at_nodes",
    "InterpolationRow",
    "interpolation_estimate_report",
    "log_slope",
    "field_to_csv",
]


class MissingNodeError(KeyError):
    """A node value is needed but the deformation does not provide one."""


@dataclass(frozen=True)
class AffineExtensionRule:
    """Value used at nodes absent from a deformation.

    ``mode="zero"`` gives 0; ``mode="affine"`` gives ``matrix @ x + shift``
    at the (scaled) node position ``x``.
    """

    mode: str = "zero"
    matrix: np.ndarray | None = None
    shift: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("zero", "affine"):
            raise ValueError(f"unknown extension mode {self.mode!r}")
        if self.mode == "affine":
            lam = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            if lam.shape[0] != lam.shape[1]:
                raise ValueError("affine extension needs a square matrix")
            object.__setattr__(self, "matrix", lam)
            c = np.zeros(lam.shape[0]) if self.shift is None else np.asarray(self.shift, dtype=float)
            object.__setattr__(self, "shift", c)

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode == "zero":
            return np.zeros_like(x)
        return x @ self.matrix.T + self.shift


@dataclass
class Deformation:
    """Nodal displacement-field values on a window of the (scaled) lattice.

    Attributes
    ----------
    spec : LatticeSpec
    values : dict
        Map ``NodeRef -> N-vector`` (deformed positions of the scaled nodes).
    epsilon : float
        Lattice scale; node ``r`` sits at ``epsilon * spec.position(r)``.
    window : CellSet, optional
        Cells this deformation is meant to cover.
    extension : AffineExtensionRule, optional
        Rule supplying values at nodes missing from ``values``.
    """

    spec: LatticeSpec
    values: dict[NodeRef, np.ndarray]
    epsilon: float = 1.0
    window: CellSet | None = None
    extension: AffineExtensionRule | None = None

    @classmethod
    def from_arrays(
        cls,
        spec: LatticeSpec,
        refs: Sequence[NodeRef],
        array: np.ndarray,
        epsilon: float = 1.0,
        window: CellSet | None = None,
        extension: AffineExtensionRule | None = None,
    ) -> "Deformation":
        array = np.asarray(array, dtype=float)
        return cls(spec, {r: array[i] for i, r in enumerate(refs)}, epsilon, window, extension)

    def value(self, ref: NodeRef) -> np.ndarray:
        v = self.values.get(ref)
        if v is not None:
            return np.asarray(v, dtype=float)
        if self.extension is None:
            raise MissingNodeError(ref)
        return self.extension.values(self.epsilon * self.spec.position(ref))

    def gather(self, refs: Sequence[NodeRef]) -> np.ndarray:
        """Values at ``refs`` as an array of shape ``(len(refs), N)``."""
        out = np.empty((len(refs), self.spec.dimension))
        missing = []
        for i, r in enumerate(refs):
            v = self.values.get(r)
            if v is None:
                missing.append(i)
            else:
                out[i] = v
        if missing:
            if self.extension is None:
                raise MissingNodeError(f"no value for {len(missing)} node(s), e.g. {refs[missing[0]]}")
            pos = self.epsilon * self.spec.positions([refs[i] for i in missing])
            out[missing] = self.extension.values(pos)
        return out

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Deformation":
        """Apply ``fn`` to every stored value (rows of an ``(M, N)`` array)."""
        refs = list(self.values)
        arr = fn(np.array([self.values[r] for r in refs]))
        return Deformation.from_arrays(self.spec, refs, arr, self.epsilon, self.window, self.extension)


def required_nodes(spec: LatticeSpec, offsets: Iterable[Sequence[int]], layers: int = 0) -> list[NodeRef]:
    """Nodes used by the energy and triangulation of the given cells.

    With ``layers > 0`` the cells of the ``layers``-fold neighbourhood
    (``U_{layers+1}`` around each cell) are included too. The result is
    sorted for deterministic ordering.
    """
    cells = {tuple(o) for o in offsets}
    if layers > 0:
        grow = expanded_offsets(spec.dimension, layers + 1)
        cells = {tuple(a + b for a, b in zip(c, g)) for c in cells for g in grow}
    local: set[NodeRef] = set()
    for s in spec.springs:
        local.update(s.endpoints)
    for a in spec.angle_terms:
        local.add(a.apex)
        local.update(a.arms)
    for t in spec.triangles:
        for v in t:
            local.update(src for src, _ in spec.vertex_rule(v)[0])
    out = {r.shifted(c) for c in cells for r in local}
    return sorted(out)


def _inv_edges(points: np.ndarray) -> np.ndarray:
    """Inverse of ``[x1 - x2, ..., x1 - x_{N+1}]`` (edge vectors as columns)."""
    edges = np.swapaxes(points[..., :1, :] - points[..., 1:, :], -1, -2)
    return np.linalg.inv(edges)


@dataclass
class TriangleTable:
    """Vectorized description of a set of cell triangles.

    ``vidx[t, v, k]`` and ``vw[t, v, k]`` express vertex ``v`` of triangle
    ``t`` as ``sum_k vw * u[refs[vidx]]`` (padding has weight 0).
    """

    tri_ids: list[tuple[tuple[int, ...], int]]
    refs: list[NodeRef]
    vidx: np.ndarray
    vw: np.ndarray
    points: np.ndarray
    binv: np.ndarray
    areas: np.ndarray

    @classmethod
    def build(
        cls,
        spec: LatticeSpec,
        offsets: Iterable[Sequence[int]],
        local: Sequence[int] | None = None,
        index: dict[NodeRef, int] | None = None,
        refs: list[NodeRef] | None = None,
    ) -> "TriangleTable":
        local = range(len(spec.triangles)) if local is None else local
        index = {} if index is None else index
        refs = [] if refs is None else refs
        dim = spec.dimension
        rules = []
        for t in local:
            verts = [spec.vertex_rule(v) for v in spec.triangles[t]]
            rules.append((t, verts))
        width = max([1] + [len(src) for _, verts in rules for src, _ in verts])
        tri_ids, vidx, vw, pts = [], [], [], []
        for alpha in offsets:
            alpha = tuple(int(a) for a in alpha)
            shift = spec.cell_offset_vector(alpha)
            for t, verts in rules:
                tri_ids.append((alpha, t))
                ti = np.zeros((dim + 1, width), dtype=np.int64)
                tw = np.zeros((dim + 1, width))
                tp = np.zeros((dim + 1, dim))
                for v, (sources, p) in enumerate(verts):
                    tp[v] = p + shift
                    for k, (src, th) in enumerate(sources):
                        r = src.shifted(alpha)
                        j = index.get(r)
                        if j is None:
                            j = index[r] = len(refs)
                            refs.append(r)
                        ti[v, k] = j
                        tw[v, k] = th
                vidx.append(ti)
                vw.append(tw)
                pts.append(tp)
        T = len(tri_ids)
        points = np.array(pts).reshape(T, dim + 1, dim)
        binv = _inv_edges(points) if T else np.zeros((0, dim, dim))
        areas = np.array([abs(np.linalg.det(points[i, 1:] - points[i, 0])) / math.factorial(dim) for i in range(T)])
        return cls(
            tri_ids,
            refs,
            np.array(vidx, dtype=np.int64).reshape(T, dim + 1, width),
            np.array(vw).reshape(T, dim + 1, width),
            points,
            binv,
            areas,
        )

    def vertex_values(self, u: np.ndarray) -> np.ndarray:
        """Vertex values ``(..., T, N+1, N)`` from nodal values ``(..., n, N)``."""
        return np.einsum("tvk,...tvkd->...tvd", self.vw, u[..., self.vidx, :])

    def gradients(self, vertex_values: np.ndarray) -> np.ndarray:
        d = np.swapaxes(vertex_values[..., :1, :] - vertex_values[..., 1:, :], -1, -2)
        return d @ self.binv


@dataclass(frozen=True)
class PiecewiseLinearField:
    """Per-triangle affine maps ``x -> matrices[t] @ x + shifts[t]``.

    Positions are in scaled coordinates. ``tri_ids[t] = (cell offset,
    local triangle index)``.
    """

    tri_ids: tuple[tuple[tuple[int, ...], int], ...]
    vertices: np.ndarray
    vertex_values: np.ndarray
    matrices: np.ndarray
    shifts: np.ndarray
    areas: np.ndarray
    epsilon: float = 1.0
    _rows: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._rows.update({tid: i for i, tid in enumerate(self.tri_ids)})

    def row(self, tri_id: tuple[tuple[int, ...], int]) -> int:
        key = (tuple(int(a) for a in tri_id[0]), int(tri_id[1]))
        if key not in self._rows:
            raise KeyError(f"triangle {tri_id} is not in the field's window")
        return self._rows[key]

    def __call__(self, tri_id: tuple[tuple[int, ...], int], x: np.ndarray) -> np.ndarray:
        i = self.row(tri_id)
        return np.asarray(x) @ self.matrices[i].T + self.shifts[i]


def affine_gradient(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Gradient of the affine interpolant of ``values`` at simplex ``points``.

    Returns ``[u1-u2, u1-u3][x1-x2, x1-x3]^{-1}`` (N-dimensional analogue).
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    dim = points.shape[-1]
    edges = points[1:] - points[0]
    scale = max(1.0, float(np.max(np.abs(edges)))) ** dim
    if abs(np.linalg.det(edges)) / math.factorial(dim) < 1e-14 * scale:
        raise ValueError("degenerate triangle")
    return np.swapaxes(values[:1] - values[1:], 0, 1) @ _inv_edges(points)


def linearize(
    deformation: Deformation,
    spec: LatticeSpec | None = None,
    cells: Iterable[Sequence[int]] | None = None,
) -> PiecewiseLinearField:
    """P1 extension of a deformation over the triangles of its window.

    Ghost vertices take the convex combination of their source values.

    Raises
    ------
    MissingNodeError
        If a needed value is absent and there is no extension rule.
    """
    spec = spec or deformation.spec
    if cells is None:
        if deformation.window is None:
            raise ValueError("deformation has no window; pass cells explicitly")
        cells = deformation.window.offsets
    table = TriangleTable.build(spec, cells)
    eps = deformation.epsilon
    u = deformation.gather(table.refs)
    vv = table.vertex_values(u)
    grads = table.gradients(vv) / eps
    pts = eps * table.points
    shifts = vv[:, 0, :] - np.einsum("tij,tj->ti", grads, pts[:, 0, :])
    return PiecewiseLinearField(
        tuple(table.tri_ids), pts, vv, grads, shifts, table.areas * eps**spec.dimension, eps
    )


def gradient_on_triangle(field: PiecewiseLinearField, tri_id: tuple[tuple[int, ...], int]) -> np.ndarray:
    """Constant gradient of the field on one triangle."""
    return field.matrices[field.row(tri_id)].copy()


def l2_gradient_norm(field: PiecewiseLinearField, region: CellSet | Iterable | None = None) -> float:
    """``sum_T |grad u|_T|^2 |T|`` over the triangles in ``region``.

    ``region`` is a CellSet, an iterable of triangle ids, or ``None`` for
    the whole field.
    """
    sq = (field.matrices**2).sum(axis=(-1, -2)) * field.areas
    if region is None:
        return float(sq.sum())
    if isinstance(region, CellSet):
        keep = set(region.offsets)
        mask = np.array([tid[0] in keep for tid in field.tri_ids], dtype=bool)
        return float(sq[mask].sum()) if mask.any() else 0.0
    rows = [field.row(tid) for tid in region]
    return float(sq[rows].sum())


def sample_at_nodes(
    f: Callable[[np.ndarray], np.ndarray],
    window: CellSet,
    spec: LatticeSpec,
    epsilon: float | None = None,
) -> Deformation:
    """Deformation with values ``f(x)`` at every node the window needs.

    The nodes of the ``U_n``-neighbourhoods of the window's cells are
    included so that energies and expanded-cell norms can be evaluated.
    """
    eps = window.epsilon if epsilon is None else epsilon
    reach = compute_reach(spec)
    refs = required_nodes(spec, window.offsets, layers=reach.n - 1)
    pts = eps * spec.positions(refs)
    vals = np.array([np.asarray(f(p), dtype=float) for p in pts]).reshape(len(refs), spec.dimension)
    return Deformation.from_arrays(spec, refs, vals, eps, window)


@dataclass(frozen=True)
class InterpolationRow:
    """Measured interpolation constants at one lattice scale."""

    epsilon: float
    gradient_ratio: float
    error_ratio: float
    n_triangles: int


def _barycentric_grid(dim: int, resolution: int) -> np.ndarray:
    pts = []
    for idx in np.ndindex(*([resolution + 1] * dim)):
        if sum(idx) <= resolution:
            lam = np.array(idx, dtype=float) / resolution
            pts.append(np.concatenate([[1.0 - lam.sum()], lam]))
    return np.array(pts)


def interpolation_estimate_report(
    f: Callable[[np.ndarray], np.ndarray],
    spec: LatticeSpec,
    epsilons: Sequence[float],
    lipschitz: float,
    domain: Box | None = None,
    resolution: int = 4,
) -> list[InterpolationRow]:
    """Measure interpolation constants of the nodal interpolant of ``f``.

    For each ``eps`` the nodal interpolant ``u`` of ``f`` is built on the
    cells of ``domain`` and two ratios are reported: the largest spectral
    norm of ``grad u`` over ``lipschitz``, and the largest pointwise error
    ``|u - f|`` on a barycentric sample grid over ``eps * lipschitz``.
    When ``lipschitz`` is 0 the ratios are reported as raw values.
    """
    domain = domain or Box((-1.0,) * spec.dimension, (1.0,) * spec.dimension)
    bary = _barycentric_grid(spec.dimension, resolution)
    rows = []
    for eps in epsilons:
        window = cells_in_domain(spec, domain, eps)
        if len(window) == 0:
            raise ValueError(f"no cells of the domain at epsilon={eps}")
        field_ = linearize(sample_at_nodes(f, window, spec, eps))
        grad_sup = float(np.max(np.linalg.norm(field_.matrices, ord=2, axis=(-2, -1))))
        pts = np.einsum("pv,tvd->tpd", bary, field_.vertices).reshape(-1, spec.dimension)
        uvals = np.einsum("pv,tvd->tpd", bary, field_.vertex_values).reshape(-1, spec.dimension)
        fvals = np.array([np.asarray(f(p), dtype=float) for p in pts]).reshape(uvals.shape)
        err_sup = float(np.max(np.linalg.norm(uvals - fvals, axis=-1)))
        if lipschitz > 0:
            rows.append(InterpolationRow(eps, grad_sup / lipschitz, err_sup / (eps * lipschitz), len(field_.tri_ids)))
        else:
            rows.append(InterpolationRow(eps, grad_sup, err_sup / eps, len(field_.tri_ids)))
    return rows


def log_slope(x: Sequence[float], y: Sequence[float], floor: float = 1e-14) -> float:
    """Least-squares slope of ``log y`` against ``log x``.

    Returns 0 when every ``y`` is below ``floor`` (a constant zero series).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(np.abs(y) <= floor):
        return 0.0
    if np.any(y <= 0):
        raise ValueError("log slope needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def field_to_csv(field_: PiecewiseLinearField) -> str:
    """Per-triangle records (id, vertices, affine matrix, shift) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    T, nv, dim = field_.vertices.shape
    header = ["cell_offset", "triangle"]
    header += [f"x{v}_{d}" for v in range(nv) for d in range(dim)]
    header += [f"G{i}{j}" for i in range(dim) for j in range(dim)]
    header += [f"c{d}" for d in range(dim)]
    w.writerow(header)
    for t, (alpha, loc) in enumerate(field_.tri_ids):
        row = [" ".join(map(str, alpha)), loc]
        row += [repr(float(x)) for x in field_.vertices[t].ravel()]
        row += [repr(float(x)) for x in field_.matrices[t].ravel()]
        row += [repr(float(x)) for x in field_.shifts[t]]
        w.writerow(row)
    return buf.getvalue()
