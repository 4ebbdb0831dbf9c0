"""Spring, orientation-penalty and angle energies of lattice cells.

Energies of a deformation on the ``eps``-scaled lattice follow the
elasticity scaling ``E^eps(eps u(./eps), eps U + alpha) = eps^N E(u, U)``:
values are divided by ``eps``, evaluated on the unit lattice and multiplied
by ``eps^N``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .lattice import AngleTerm, Box, CellSet, ConvexPolygon, LatticeSpec, NodeRef, SpringTerm, cells_in_domain
from .linearize import Deformation, PiecewiseLinearField, TriangleTable

__all__ = [
    "PenaltyFunction",
    "EnergyBreakdown",
    "EnergyAssembly",
    "spring_energy",
    "penalty_energy",
    "angle_energy",
    "cell_energy",
    "domain_energy",
    "energy_gradient",
]


@dataclass(frozen=True)
class PenaltyFunction:
    """Orientation penalty ``f(t) = 1/eta`` for ``t <= 0`` and 0 otherwise.

    With ``smoothing_tau > 0`` the logistic relaxation
    ``sigma(-t / tau) / eta`` is used instead.
    """

    eta: float = 0.01
    smoothing_tau: float = 0.0

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.smoothing_tau < 0:
            raise ValueError("smoothing_tau must be nonnegative")

    @property
    def exact(self) -> "PenaltyFunction":
        return PenaltyFunction(self.eta, 0.0)

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.smoothing_tau == 0:
            return np.where(t <= 0, 1.0 / self.eta, 0.0)
        return expit(-t / self.smoothing_tau) / self.eta

    def derivative(self, t: np.ndarray) -> np.ndarray:
        if self.smoothing_tau == 0:
            raise ValueError("the exact penalty is not differentiable; use smoothing_tau > 0")
        s = expit(-np.asarray(t, dtype=float) / self.smoothing_tau)
        return -s * (1.0 - s) / (self.eta * self.smoothing_tau)


@dataclass
class EnergyBreakdown:
    """Energy split by term type.

    ``per_term`` lists ``(term id, value)``; ``per_cell`` lists
    ``(cell offset, spring, penalty, angle)``.
    """

    spring: float
    penalty: float
    angle: float
    per_term: list[tuple[tuple, float]] = field(default_factory=list)
    per_cell: list[tuple[tuple[int, ...], float, float, float]] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.spring + self.penalty + self.angle

    def to_csv(self) -> str:
        """Energy report with columns cell_offset, spring, penalty, angle, total."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_offset", "spring", "penalty", "angle", "total"])
        for alpha, s, p, a in self.per_cell:
            w.writerow([" ".join(map(str, alpha)), repr(s), repr(p), repr(a), repr(s + p + a)])
        return buf.getvalue()


def _scatter(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    out = np.empty((n, vals.shape[-1]))
    for d in range(vals.shape[-1]):
        out[:, d] = np.bincount(idx, weights=vals[:, d], minlength=n)
    return out


def _cofactor(G: np.ndarray) -> np.ndarray:
    """Derivative of ``det`` with respect to the matrix entries."""
    if G.shape[-1] == 2:
        out = np.empty_like(G)
        out[..., 0, 0] = G[..., 1, 1]
        out[..., 1, 1] = G[..., 0, 0]
        out[..., 0, 1] = -G[..., 1, 0]
        out[..., 1, 0] = -G[..., 0, 1]
        return out
    det = np.linalg.det(G)
    return det[..., None, None] * np.swapaxes(np.linalg.inv(G), -1, -2)


class EnergyAssembly:
    """Vectorized energy of a list of unscaled cells.

    Every node used by the cells gets a row in ``refs``; energies and
    gradients are evaluated on arrays of nodal values with shape
    ``(..., len(refs), N)``.
    """

    def __init__(self, spec: LatticeSpec, offsets: Iterable[Sequence[int]]):
        self.spec = spec
        self.offsets = [tuple(int(a) for a in o) for o in offsets]
        self.refs: list[NodeRef] = []
        self.index: dict[NodeRef, int] = {}

        def idx(r: NodeRef) -> int:
            j = self.index.get(r)
            if j is None:
                j = self.index[r] = len(self.refs)
                self.refs.append(r)
            return j

        si, sj, rest, coef, scell = [], [], [], [], []
        ai, a1, a2, acos, astr, aform, acell = [], [], [], [], [], [], []
        for c, alpha in enumerate(self.offsets):
            for s in spec.springs:
                si.append(idx(s.endpoints[0].shifted(alpha)))
                sj.append(idx(s.endpoints[1].shifted(alpha)))
                rest.append(s.rest_length)
                coef.append(s.weight * s.stiffness)
                scell.append(c)
            for a in spec.angle_terms:
                ai.append(idx(a.apex.shifted(alpha)))
                a1.append(idx(a.arms[0].shifted(alpha)))
                a2.append(idx(a.arms[1].shifted(alpha)))
                acos.append(a.preferred_cosine)
                astr.append(a.strength)
                aform.append(a.form == "torsional-quadratic")
                acell.append(c)
        self.si = np.array(si, dtype=np.int64)
        self.sj = np.array(sj, dtype=np.int64)
        self.rest = np.array(rest, dtype=float)
        self.coef = np.array(coef, dtype=float)
        self.scell = np.array(scell, dtype=np.int64)
        self.ai = np.array(ai, dtype=np.int64)
        self.a1 = np.array(a1, dtype=np.int64)
        self.a2 = np.array(a2, dtype=np.int64)
        self.acos = np.array(acos, dtype=float)
        self.atheta0 = np.arccos(np.clip(self.acos, -1.0, 1.0))
        self.astr = np.array(astr, dtype=float)
        self.atorsion = np.array(aform, dtype=bool)
        self.acell = np.array(acell, dtype=np.int64)

        self.tris = TriangleTable.build(spec, self.offsets, spec.penalty_triangles, self.index, self.refs)
        if spec.penalty_weighting == "area-weighted":
            self.tweight = self.tris.areas.copy()
        else:
            self.tweight = np.ones(len(self.tris.tri_ids))
        self.tcell = np.repeat(np.arange(len(self.offsets)), len(spec.penalty_triangles))
        self.positions = spec.positions(self.refs)

    @property
    def n_nodes(self) -> int:
        return len(self.refs)

    # -- term energies ---------------------------------------------------

    def spring_terms(self, u: np.ndarray) -> np.ndarray:
        d = u[..., self.si, :] - u[..., self.sj, :]
        return self.coef * (np.linalg.norm(d, axis=-1) - self.rest) ** 2

    def penalty_dets(self, u: np.ndarray) -> np.ndarray:
        G = self.tris.gradients(self.tris.vertex_values(u))
        return np.linalg.det(G) if G.shape[-3] else np.zeros(G.shape[:-2])

    def penalty_terms(self, u: np.ndarray, pf: PenaltyFunction) -> np.ndarray:
        return self.tweight * pf(self.penalty_dets(u))

    def angle_terms(self, u: np.ndarray) -> np.ndarray:
        if len(self.ai) == 0:
            return np.zeros(u.shape[:-2] + (0,))
        a = u[..., self.a1, :] - u[..., self.ai, :]
        b = u[..., self.a2, :] - u[..., self.ai, :]
        na = np.linalg.norm(a, axis=-1)
        nb = np.linalg.norm(b, axis=-1)
        dot = (a * b).sum(-1)
        absolute = self.astr * np.abs(dot - na * nb * self.acos)
        if not self.atorsion.any():
            return absolute
        bad = self.atorsion & ((na == 0) | (nb == 0))
        if np.any(bad):
            raise ValueError("zero-length deformed arm in a torsional angle term")
        sin = np.sqrt(np.maximum((na * nb) ** 2 - dot**2, 0.0))
        theta = np.arctan2(sin, dot)
        torsional = self.astr * (theta - self.atheta0) ** 2
        return np.where(self.atorsion, torsional, absolute)

    def energy(self, u: np.ndarray, pf: PenaltyFunction) -> np.ndarray:
        """Total energy of all cells (supports leading batch axes)."""
        return self.spring_terms(u).sum(-1) + self.penalty_terms(u, pf).sum(-1) + self.angle_terms(u).sum(-1)

    def breakdown(self, u: np.ndarray, pf: PenaltyFunction, detail: bool = True) -> EnergyBreakdown:
        """Per-cell and per-term energies for a single state ``u``."""
        es = self.spring_terms(u)
        ep = self.penalty_terms(u, pf)
        ea = self.angle_terms(u)
        nc = len(self.offsets)
        cs = np.bincount(self.scell, weights=es, minlength=nc)
        cp = np.bincount(self.tcell, weights=ep, minlength=nc)
        ca = np.bincount(self.acell, weights=ea, minlength=nc)
        per_cell = [(alpha, float(cs[c]), float(cp[c]), float(ca[c])) for c, alpha in enumerate(self.offsets)]
        per_term: list = []
        if detail:
            ns, na_ = len(self.spec.springs), len(self.spec.angle_terms)
            for k, v in enumerate(es):
                per_term.append((("spring", self.offsets[self.scell[k]], k % ns), float(v)))
            for k, v in enumerate(ep):
                alpha, t = self.tris.tri_ids[k]
                per_term.append((("penalty", alpha, t), float(v)))
            for k, v in enumerate(ea):
                per_term.append((("angle", self.offsets[self.acell[k]], k % max(na_, 1)), float(v)))
        return EnergyBreakdown(float(cs.sum()), float(cp.sum()), float(ca.sum()), per_term, per_cell)

    # -- gradient --------------------------------------------------------

    def gradient(self, u: np.ndarray, pf: PenaltyFunction) -> tuple[float, np.ndarray]:
        """Total smoothed energy and its gradient with respect to ``u``."""
        n, dim = u.shape
        d = u[self.si] - u[self.sj]
        L = np.linalg.norm(d, axis=-1)
        es = self.coef * (L - self.rest) ** 2
        safe = np.where(L > 0, L, 1.0)
        gd = (2.0 * self.coef * (L - self.rest) / safe)[:, None] * d
        gd[L == 0] = 0.0
        idx = np.concatenate([self.si, self.sj])
        grad = _scatter(n, idx, np.concatenate([gd, -gd]))
        total = float(es.sum())

        if len(self.tris.tri_ids):
            vv = self.tris.vertex_values(u)
            G = self.tris.gradients(vv)
            det = np.linalg.det(G)
            total += float((self.tweight * pf(det)).sum())
            dG = (self.tweight * pf.derivative(det))[:, None, None] * _cofactor(G)
            dD = dG @ np.swapaxes(self.tris.binv, -1, -2)  # columns j <-> u1 - u_{j+1}
            dcols = np.swapaxes(dD, -1, -2)  # (T, N, dim): row j is d/d(u1 - u_{j+1})
            gv = np.empty_like(vv)
            gv[:, 0, :] = dcols.sum(axis=1)
            gv[:, 1:, :] = -dcols
            contrib = gv[:, :, None, :] * self.tris.vw[..., None]
            grad += _scatter(n, self.tris.vidx.ravel(), contrib.reshape(-1, dim))

        if len(self.ai):
            total_a, ga, gb = self._angle_grad(u)
            total += total_a
            grad += _scatter(n, np.concatenate([self.a1, self.a2, self.ai]), np.concatenate([ga, gb, -(ga + gb)]))
        return total, grad

    def _angle_grad(self, u: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        a = u[self.a1] - u[self.ai]
        b = u[self.a2] - u[self.ai]
        na = np.linalg.norm(a, axis=-1)
        nb = np.linalg.norm(b, axis=-1)
        ua = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] > 0)
        ub = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] > 0)
        dot = (a * b).sum(-1)
        g = dot - na * nb * self.acos
        sgn = np.sign(g)[:, None] * self.astr[:, None]
        ga = sgn * (b - (self.acos * nb)[:, None] * ua)
        gb = sgn * (a - (self.acos * na)[:, None] * ub)
        energies = self.astr * np.abs(g)
        if self.atorsion.any():
            t = self.atorsion
            if np.any(t & ((na == 0) | (nb == 0))):
                raise ValueError("zero-length deformed arm in a torsional angle term")
            sin = np.sqrt(np.maximum((na * nb) ** 2 - dot**2, 0.0))
            theta = np.arctan2(sin, dot)
            safe = np.where(sin > 0, sin, 1.0)[:, None]
            dsa = (nb**2)[:, None] * a - dot[:, None] * b
            dsb = (na**2)[:, None] * b - dot[:, None] * a
            dsa = np.where(sin[:, None] > 0, dsa / safe, 0.0)
            dsb = np.where(sin[:, None] > 0, dsb / safe, 0.0)
            r2 = (sin**2 + dot**2)[:, None]
            dta = (dot[:, None] * dsa - sin[:, None] * b) / r2
            dtb = (dot[:, None] * dsb - sin[:, None] * a) / r2
            k = (2.0 * self.astr * (theta - self.atheta0))[:, None]
            ga = np.where(t[:, None], k * dta, ga)
            gb = np.where(t[:, None], k * dtb, gb)
            energies = np.where(t, self.astr * (theta - self.atheta0) ** 2, energies)
        return float(energies.sum()), ga, gb


# ---------------------------------------------------------------------------
# operations on Deformation objects


def _scaled_values(deformation: Deformation, refs: Sequence[NodeRef]) -> np.ndarray:
    return deformation.gather(refs) / deformation.epsilon


def spring_energy(deformation: Deformation, term: SpringTerm, offset: Sequence[int] | None = None) -> float:
    """Energy of one spring (translated by ``offset``) under the deformation."""
    dim = deformation.spec.dimension
    offset = (0,) * dim if offset is None else offset
    u = _scaled_values(deformation, [e.shifted(offset) for e in term.endpoints])
    length = float(np.linalg.norm(u[0] - u[1]))
    return deformation.epsilon**dim * term.weight * term.stiffness * (length - term.rest_length) ** 2


def angle_energy(deformation: Deformation, term: AngleTerm, offset: Sequence[int] | None = None) -> float:
    """Energy of one angle term under the deformation."""
    spec = deformation.spec
    offset = (0,) * spec.dimension if offset is None else offset
    u = _scaled_values(deformation, [term.apex.shifted(offset), *(r.shifted(offset) for r in term.arms)])
    a, b = u[1] - u[0], u[2] - u[0]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    dot = float(a @ b)
    if term.form == "torsional-quadratic":
        if na == 0 or nb == 0:
            raise ValueError("zero-length deformed arm in a torsional angle term")
        theta = np.arctan2(np.sqrt(max((na * nb) ** 2 - dot**2, 0.0)), dot)
        e = term.strength * (theta - np.arccos(np.clip(term.preferred_cosine, -1, 1))) ** 2
    else:
        e = term.strength * abs(dot - na * nb * term.preferred_cosine)
    return float(deformation.epsilon**spec.dimension * e)


def penalty_energy(
    field: PiecewiseLinearField, spec: LatticeSpec, pf: PenaltyFunction, cell_offset: Sequence[int]
) -> float:
    """Orientation penalty of one cell from a linearized field."""
    alpha = tuple(int(a) for a in cell_offset)
    total = 0.0
    for t in spec.penalty_triangles:
        G = field.matrices[field.row((alpha, t))]
        w = spec.triangle_area(t) if spec.penalty_weighting == "area-weighted" else 1.0
        total += w * float(pf(np.linalg.det(G)))
    return field.epsilon**spec.dimension * total


def _scaled_breakdown(b: EnergyBreakdown, factor: float) -> EnergyBreakdown:
    return EnergyBreakdown(
        b.spring * factor,
        b.penalty * factor,
        b.angle * factor,
        [(k, v * factor) for k, v in b.per_term],
        [(a, s * factor, p * factor, g * factor) for a, s, p, g in b.per_cell],
    )


def cell_energy(
    deformation: Deformation,
    spec: LatticeSpec,
    pf: PenaltyFunction,
    cell_offset: Sequence[int],
    epsilon: float | None = None,
) -> EnergyBreakdown:
    """Energy of the cell ``epsilon * U + epsilon * alpha``."""
    eps = deformation.epsilon if epsilon is None else epsilon
    if eps != deformation.epsilon:
        raise ValueError("epsilon differs from the deformation's scale")
    asm = EnergyAssembly(spec, [cell_offset])
    u = _scaled_values(deformation, asm.refs)
    return _scaled_breakdown(asm.breakdown(u, pf), eps**spec.dimension)


def domain_energy(
    deformation: Deformation,
    spec: LatticeSpec,
    pf: PenaltyFunction,
    domain: Box | ConvexPolygon | CellSet,
    epsilon: float | None = None,
    detail: bool = False,
) -> EnergyBreakdown:
    """Sum of scaled cell energies over the cells of ``domain``.

    ``domain`` is a region (its cell set is computed) or a CellSet.
    """
    eps = deformation.epsilon if epsilon is None else epsilon
    if eps != deformation.epsilon:
        raise ValueError("epsilon differs from the deformation's scale")
    cells = domain if isinstance(domain, CellSet) else cells_in_domain(spec, domain, eps)
    if len(cells) == 0:
        return EnergyBreakdown(0.0, 0.0, 0.0)
    asm = EnergyAssembly(spec, cells.offsets)
    u = _scaled_values(deformation, asm.refs)
    return _scaled_breakdown(asm.breakdown(u, pf, detail=detail), eps**spec.dimension)


def energy_gradient(
    deformation: Deformation,
    spec: LatticeSpec,
    pf: PenaltyFunction,
    window: CellSet | Iterable[Sequence[int]],
    epsilon: float | None = None,
) -> dict[NodeRef, np.ndarray]:
    """Gradient of the smoothed energy of ``window`` with respect to nodal values."""
    if pf.smoothing_tau <= 0:
        raise ValueError("energy_gradient needs a smoothed penalty (smoothing_tau > 0)")
    eps = deformation.epsilon if epsilon is None else epsilon
    offsets = window.offsets if isinstance(window, CellSet) else list(window)
    asm = EnergyAssembly(spec, offsets)
    u = _scaled_values(deformation, asm.refs)
    _, g = asm.gradient(u, pf)
    g *= eps ** (spec.dimension - 1)
    return {r: g[i] for i, r in enumerate(asm.refs)}
