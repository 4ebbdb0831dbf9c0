"""Numerical experiments on effective densities and discrete energies.

Rank-one convexity and Lipschitz checks of density estimates, growth
checks against the cell bounds, recovery sequences ``lam x + eps psi(x/eps)``
and Dirichlet soft-mode relaxations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import shapely
from scipy.optimize import minimize

from ..cellproblem import (
    Corrector,
    DensityEstimate,
    DensityQuery,
    OptimizerConfig,
    effective_density,
    mechanism_starts,
    minimize_density,
)
from ..energy import EnergyAssembly, PenaltyFunction
from ..lattice import (
    LatticeSpec,
    NodeRef,
    compute_reach,
    cells_in_domain,
    parse_domain,
)
from ..linearize import log_slope
from .bounds import BoundConstants, cell_bound_constants

__all__ = [
    "ConvergenceReport",
    "SoftModeReport",
    "RankOneReport",
    "LipschitzReport",
    "GrowthReport",
    "rank_one_convexity_check",
    "lipschitz_check",
    "growth_check",
    "recovery_sequence_energy",
    "soft_mode_experiment",
    "jensen_floor",
    "default_lipschitz_constant",
    "DEFAULT_SLACK",
]

DEFAULT_SLACK = 1e-3


# ---------------------------------------------------------------------------
# density checks


@dataclass(frozen=True)
class RankOneReport:
    """Chord test ``W(theta A + (1 - theta) B) <= theta W(A) + (1 - theta) W(B)``."""

    A: np.ndarray
    B: np.ndarray
    thetas: tuple[float, ...]
    values: tuple[float, ...]
    chords: tuple[float, ...]
    W_A: float
    W_B: float

    @property
    def violations(self) -> tuple[float, ...]:
        return tuple(v - c for v, c in zip(self.values, self.chords))

    @property
    def max_violation(self) -> float:
        return max(self.violations) if self.thetas else 0.0


def _cross_seeded(est: Sequence[DensityEstimate]) -> list[tuple[str, Corrector]]:
    out = []
    for tag, e in zip(("A", "B"), est):
        for row in e.table:
            out.append((f"cross-{tag}-{row.bc_mode}-k{row.k}", row.minimizer))
    return out


def _density_with_starts(spec: LatticeSpec, query: DensityQuery, extra: list[tuple[str, Corrector]]) -> float:
    best = math.inf
    for k in query.k_schedule:
        for mode in query.bc_modes:
            best = min(best, minimize_density(spec, query, k, mode, extra).value_exact)
    return best


def rank_one_convexity_check(
    spec: LatticeSpec,
    A: np.ndarray,
    a: np.ndarray,
    n: np.ndarray,
    thetas: Sequence[float],
    query: DensityQuery | None = None,
) -> RankOneReport:
    """Estimate densities along the rank-one segment from ``A`` to ``B = A + a (x) n``.

    ``W(A)`` and ``W(B)`` are estimated first; interior points are
    cross-seeded with their minimizers. At ``theta`` in ``{0, 1}`` the
    endpoint estimates are reused so the violation there is exactly 0.
    """
    A = np.asarray(A, dtype=float)
    B = A + np.outer(np.asarray(a, dtype=float), np.asarray(n, dtype=float))
    D = B - A
    if np.linalg.svd(D, compute_uv=False)[1:].max(initial=0.0) > 1e-12:
        raise ValueError("B - A is not rank one")
    query = query or DensityQuery(A)
    est_A = effective_density(spec, replace(query, lam=A))
    if np.array_equal(A, B):
        est_B = est_A
    else:
        est_B = effective_density(spec, replace(query, lam=B))
    WA, WB = est_A.best.value_exact, est_B.best.value_exact
    extra = _cross_seeded([est_A, est_B])
    values, chords = [], []
    for t in thetas:
        t = float(t)
        if t == 1.0:
            w = WA
        elif t == 0.0:
            w = WB
        else:
            lam = t * A + (1 - t) * B
            w = _density_with_starts(spec, replace(query, lam=lam), extra)
        values.append(w)
        chords.append(t * WA + (1 - t) * WB)
    return RankOneReport(A, B, tuple(float(t) for t in thetas), tuple(values), tuple(chords), WA, WB)


@dataclass(frozen=True)
class LipschitzReport:
    """Pairwise test ``|W(lam) - W(mu)| <= c3 (1 + |lam| + |mu|) |lam - mu| + 2 slack``."""

    c3: float
    slack: float
    pairs: tuple[tuple[np.ndarray, np.ndarray], ...]
    differences: tuple[float, ...]
    allowances: tuple[float, ...]

    @property
    def violations(self) -> int:
        return sum(d > a for d, a in zip(self.differences, self.allowances))


def default_lipschitz_constant(spec: LatticeSpec, consts: BoundConstants | None = None) -> float:
    """``c3 = 10 N C_up`` with the growth constant ``C_up = C1 (2n - 1)^N``."""
    consts = consts or cell_bound_constants(spec)
    c_up = consts.C1 * (2 * consts.n - 1) ** spec.dimension
    return 10.0 * spec.dimension * c_up


def lipschitz_check(
    spec: LatticeSpec,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    query: DensityQuery | None = None,
    c3: float | None = None,
    slack: float = DEFAULT_SLACK,
) -> LipschitzReport:
    """Check the local Lipschitz bound on density estimates; violations are reported."""
    c3 = default_lipschitz_constant(spec) if c3 is None else c3
    query = query or DensityQuery(np.eye(spec.dimension))
    diffs, allow, used = [], [], []
    for lam, mu in pairs:
        lam, mu = np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
        wl = effective_density(spec, replace(query, lam=lam)).best.value_exact
        wm = effective_density(spec, replace(query, lam=mu)).best.value_exact
        diffs.append(abs(wl - wm))
        allow.append(c3 * (1 + np.linalg.norm(lam) + np.linalg.norm(mu)) * np.linalg.norm(lam - mu) + 2 * slack)
        used.append((lam, mu))
    return LipschitzReport(c3, slack, tuple(used), tuple(diffs), tuple(float(a) for a in allow))


@dataclass(frozen=True)
class GrowthReport:
    """Density estimate between the growth bounds of the cell constants."""

    lam: np.ndarray
    value: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return self.lower <= self.value <= self.upper


def growth_check(spec: LatticeSpec, lam: np.ndarray, query: DensityQuery | None = None) -> GrowthReport:
    """Compare ``W(lam)`` with ``C2 (|lam|^2 - D2)`` and ``C1 (|lam|^2 + 1) |U_n| / |U|``."""
    lam = np.asarray(lam, dtype=float)
    c = cell_bound_constants(spec)
    query = replace(query, lam=lam) if query else DensityQuery(lam)
    w = effective_density(spec, query).best.value_exact
    s = float(np.sum(lam**2))
    lower = max(c.C2 * (s - c.D2), 0.0)
    upper = c.C1 * (s + 1.0) * c.area_Un / spec.volume
    return GrowthReport(lam, w, lower, upper)


# ---------------------------------------------------------------------------
# recovery sequences


@dataclass(frozen=True)
class ConvergenceReport:
    """Energies along a sequence of lattice scales with their gaps to ``target``."""

    epsilons: tuple[float, ...]
    energies: tuple[float, ...]
    target: float
    gaps: tuple[float, ...]
    fitted_rate: float
    construction: str = ""

    def to_csv(self) -> str:
        lines = ["epsilon,energy,gap,log_epsilon,log_gap"]
        for e, en, g in zip(self.epsilons, self.energies, self.gaps):
            lg = repr(math.log(g)) if g > 0 else ""
            lines.append(f"{e!r},{en!r},{g!r},{math.log(e)!r},{lg}")
        return "\n".join(lines) + "\n"


def _check_descending(epsilons: Sequence[float]) -> tuple[float, ...]:
    eps = tuple(float(e) for e in epsilons)
    if not eps:
        raise ValueError("epsilon list is empty")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly descending")
    return eps


def _as_periodic(psi: Corrector | None, dim: int, k: int | None) -> Corrector:
    if psi is None:
        return Corrector({}, (1,) * dim, dim)
    if psi.period is not None:
        return psi
    if k is None:
        raise ValueError("a finitely supported corrector needs its supercell size k")
    vals = {r: v for r, v in psi.values.items() if all(0 <= o < k for o in r.offset)}
    return Corrector(vals, (k,) * dim, dim)


def _period_cells(period: Sequence[int]) -> list[tuple[int, ...]]:
    return [tuple(a) for a in itertools.product(*(range(p) for p in period))]


def _cell_union(spec: LatticeSpec, offsets: Sequence[Sequence[int]]):
    return shapely.union_all([shapely.Polygon(spec.cell_polygon + spec.cell_offset_vector(a)) for a in offsets]).buffer(0)


def _vanishes_in_layer(spec: LatticeSpec, psi: Corrector) -> bool:
    """Whether ``psi`` is zero on every node within ``d_m`` of its period box boundary."""
    d_m = compute_reach(spec).d_m
    cells = _period_cells(psi.period)
    region = _cell_union(spec, cells)
    refs = [NodeRef(b, a) for b in range(spec.n_basic) for a in cells]
    x = spec.positions(refs)
    pts = shapely.points(x)
    deep = shapely.contains(region, pts) & (shapely.distance(region.boundary, pts) > d_m * (1 + 1e-12))
    vals = psi.gather(refs)
    return bool(np.all(np.abs(vals[~deep]) <= 1e-14))


def _periodic_density(spec: LatticeSpec, lam: np.ndarray, psi: Corrector, pf: PenaltyFunction) -> float:
    cells = _period_cells(psi.period)
    asm = EnergyAssembly(spec, cells)
    u = asm.positions @ lam.T + psi.gather(asm.refs)
    return float(asm.energy(u, pf)) / (len(cells) * spec.volume)


def recovery_sequence_energy(
    spec: LatticeSpec,
    lam: np.ndarray,
    psi: Corrector | None,
    domain,
    epsilons: Sequence[float],
    k: int | None = None,
    construction: str = "auto",
    eta: float | None = None,
) -> ConvergenceReport:
    """Energies of the recovery sequence ``lam x + eps psi(x / eps)`` on ``domain``.

    Parameters
    ----------
    psi : Corrector or None
        Periodic corrector, a finitely supported supercell corrector (with
        ``k``), or None for ``psi = 0``.
    construction : {"auto", "tiles", "periodic"}
        ``"tiles"`` applies ``psi`` only on period tiles lying at distance
        more than ``eps d_m`` inside the domain and uses ``lam x`` elsewhere;
        it needs ``psi`` to vanish near its period box boundary. ``"periodic"``
        applies ``psi`` on every node. ``"auto"`` picks tiles when possible.

    Returns
    -------
    ConvergenceReport
        ``target = |domain| * (cell-average energy of lam x + psi)``.
    """
    eps_list = _check_descending(epsilons)
    domain = parse_domain(domain)
    lam = np.asarray(lam, dtype=float)
    dim = spec.dimension
    psi = _as_periodic(psi, dim, k)
    pf = PenaltyFunction(spec.eta if eta is None else eta)
    target = domain.volume * _periodic_density(spec, lam, psi, pf)
    if construction == "auto":
        construction = "tiles" if _vanishes_in_layer(spec, psi) else "periodic"
    if construction not in ("tiles", "periodic"):
        raise ValueError(f"unknown construction {construction!r}")
    if construction == "tiles" and not _vanishes_in_layer(spec, psi):
        raise ValueError("tile construction needs psi to vanish near the period box boundary")
    d_m = compute_reach(spec).d_m
    period = np.array(psi.period)
    energies = []
    for eps in eps_list:
        cells = cells_in_domain(spec, domain, eps)
        if len(cells) == 0:
            energies.append(0.0)
            continue
        asm = EnergyAssembly(spec, cells.offsets)
        x = asm.positions
        shift = psi.gather(asm.refs)
        if construction == "tiles" and np.any(shift):
            tiles = {tuple(np.floor_divide(np.array(a), period)) for a in cells.offsets}
            keep = []
            for t in sorted(tiles):
                members = [tuple(np.array(t) * period + np.array(c)) for c in _period_cells(psi.period)]
                verts = np.vstack([spec.cell_polygon + spec.cell_offset_vector(a) for a in members])
                if np.all(domain.inner_distance(eps * verts) > eps * d_m):
                    keep.extend(members)
            if keep:
                region = _cell_union(spec, keep)
                mask = shapely.covers(region.buffer(1e-9), shapely.points(x))
            else:
                mask = np.zeros(len(x), dtype=bool)
            shift = shift * mask[:, None]
        elif construction == "tiles":
            shift = np.zeros_like(shift)
        u = x @ lam.T + shift
        energies.append(float(asm.energy(u, pf)) * eps**dim)
    gaps = tuple(abs(e - target) for e in energies)
    rate = log_slope(eps_list, gaps) if len(eps_list) > 1 else float("nan")
    return ConvergenceReport(eps_list, tuple(energies), target, gaps, rate, construction)


# ---------------------------------------------------------------------------
# Dirichlet soft modes


@dataclass(frozen=True)
class SoftModeReport(ConvergenceReport):
    """Relaxed Dirichlet energies (target 0) with the affine baselines."""

    baselines: tuple[float, ...] = ()
    best_starts: tuple[str, ...] = ()
    free_nodes: tuple[int, ...] = ()
    jensen_floor: float | None = None

    def to_csv(self) -> str:
        lines = ["epsilon,energy,baseline,free_nodes,best_start"]
        for row in zip(self.epsilons, self.energies, self.baselines, self.free_nodes, self.best_starts):
            lines.append(f"{row[0]!r},{row[1]!r},{row[2]!r},{row[3]},{row[4]}")
        return "\n".join(lines) + "\n"

    @property
    def nonincreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.energies, self.energies[1:]))


def jensen_floor(spec: LatticeSpec, F: np.ndarray, domain) -> float:
    """Lower bound ``C2 (|F|^2 - D2) |domain|`` for Dirichlet energies with data ``F x``.

    By Jensen, the average of ``|grad u|^2`` over the domain is at least
    ``|F|^2`` for ``u - F x`` vanishing on the boundary. The value can be
    nonpositive, in which case it certifies nothing.
    """
    c = cell_bound_constants(spec)
    domain = parse_domain(domain)
    return c.C2 * (float(np.sum(np.asarray(F) ** 2)) - c.D2) * domain.volume


def soft_mode_experiment(
    spec: LatticeSpec,
    F: np.ndarray,
    domain,
    epsilons: Sequence[float],
    optimizer: OptimizerConfig | None = None,
) -> SoftModeReport:
    """Relax ``u = F x + psi`` with ``psi`` vanishing within ``eps d_m`` of the boundary.

    Nodes at inner distance at most ``eps d_m`` are pinned to ``F x``. The
    smoothed energy is minimized from ``psi = 0`` and from
    mechanism-informed states; the exact energy of the best candidate
    (start or descended point) is reported.
    """
    cfg = optimizer or OptimizerConfig()
    eps_list = _check_descending(epsilons)
    domain = parse_domain(domain)
    F = np.asarray(F, dtype=float)
    dim = spec.dimension
    d_m = compute_reach(spec).d_m
    eta = spec.eta if cfg.eta is None else cfg.eta
    pf = PenaltyFunction(eta, cfg.smoothing_tau)
    exact = pf.exact
    mech = mechanism_starts(spec, F)
    energies, baselines, names, nfree = [], [], [], []
    for eps in eps_list:
        cells = cells_in_domain(spec, domain, eps)
        asm = EnergyAssembly(spec, cells.offsets)
        x = asm.positions
        free = domain.inner_distance(eps * x) > eps * d_m
        fidx = np.flatnonzero(free)
        scale = eps**dim
        base = x @ F.T

        def nodal(z: np.ndarray) -> np.ndarray:
            u = base.copy()
            u[fidx] += z.reshape(-1, dim)
            return u

        def fun(z: np.ndarray) -> tuple[float, np.ndarray]:
            e, g = asm.gradient(nodal(z), pf)
            return e * scale, g[fidx].ravel() * scale

        starts = [("affine", np.zeros(len(fidx) * dim))]
        for name, fn in mech:
            starts.append((name, np.array([fn(asm.refs[i]) for i in fidx]).ravel()))
        best = (math.inf, "", None)
        for name, z0 in starts:
            cands = [z0]
            if len(fidx) and cfg.max_iterations:
                res = minimize(
                    fun,
                    z0,
                    jac=True,
                    method="L-BFGS-B",
                    options={
                        "maxiter": cfg.max_iterations,
                        "gtol": cfg.gradient_tolerance,
                        "ftol": 0.0,
                        "maxls": cfg.max_line_search,
                    },
                )
                cands.append(np.asarray(res.x))
            for z in cands:
                v = float(asm.energy(nodal(z), exact)) * scale
                if v < best[0]:
                    best = (v, name, z)
        energies.append(best[0])
        names.append(best[1])
        nfree.append(len(fidx))
        baselines.append(float(asm.energy(base, exact)) * scale)
    floor = None
    try:
        floor = jensen_floor(spec, F, domain)
    except KeyError:
        pass
    rate = log_slope(eps_list, energies) if len(eps_list) > 1 and min(energies) > 0 else 0.0
    return SoftModeReport(
        eps_list,
        tuple(energies),
        0.0,
        tuple(energies),
        rate,
        "dirichlet",
        tuple(baselines),
        tuple(names),
        tuple(nfree),
        floor,
    )

