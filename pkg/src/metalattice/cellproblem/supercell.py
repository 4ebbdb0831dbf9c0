"""Supercell minimization giving upper estimates of the effective density.

For a macroscopic gradient ``lam`` the average energy

    (1 / (k^N |U|)) * sum_{alpha in [0, k)^N} E(lam x + psi, U + alpha)

is minimized over correctors ``psi`` that either vanish within ``d_m`` of
the boundary of ``kU`` (``"zero"``) or are ``k``-periodic (``"periodic"``).
Every reported value is the exact energy of a feasible corrector, hence an
upper estimate of the effective density.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import shapely
from scipy.optimize import minimize

from ..energy import EnergyAssembly, EnergyBreakdown, PenaltyFunction
from ..lattice import LatticeSpec, NodeRef, compute_reach
from .mechanisms import Corrector, mechanism_starts

__all__ = [
    "BC_MODES",
    "OptimizerConfig",
    "DensityQuery",
    "DensityEstimate",
    "EffectiveDensity",
    "SupercellProblem",
    "assemble_supercell",
    "minimize_density",
    "effective_density",
    "nearest_node_distance",
]

BC_MODES = ("zero", "periodic")

StartFn = Callable[[NodeRef], np.ndarray]


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the multistart quasi-Newton search.

    Attributes
    ----------
    max_iterations, gradient_tolerance : int, float
        Stop at ``max_iterations`` or when the gradient infinity-norm drops
        below ``gradient_tolerance``.
    random_starts : int
        Number of Gaussian perturbations of ``psi = 0`` (ignored when
        ``seeds`` is given, which fixes one start per seed).
    sigma : float, optional
        Perturbation scale; defaults to 0.1 times the nearest-node distance.
    smoothing_tau : float
        Logistic smoothing of the orientation penalty during descent.
    max_line_search : int
        Line-search step limit per iteration.
    threads : int
        Worker threads used to run the starts.
    """

    max_iterations: int = 5000
    gradient_tolerance: float = 1e-9
    random_starts: int = 8
    sigma: float | None = None
    seeds: tuple[int, ...] = ()
    smoothing_tau: float = 0.05
    max_line_search: int = 50
    threads: int = 1
    eta: float | None = None

    def __post_init__(self) -> None:
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.smoothing_tau <= 0:
            raise ValueError("smoothing_tau must be positive for descent")
        if self.max_iterations < 0 or self.random_starts < 0 or self.threads < 1:
            raise ValueError("invalid optimizer budget")

    def seed_list(self) -> tuple[int, ...]:
        return tuple(self.seeds) if self.seeds else tuple(range(self.random_starts))


@dataclass(frozen=True)
class DensityQuery:
    """A macroscopic gradient with the supercell sizes and boundary modes to try."""

    lam: np.ndarray
    k_schedule: tuple[int, ...] = (1, 2, 3, 4)
    bc_modes: tuple[str, ...] = BC_MODES
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        ks = tuple(int(k) for k in self.k_schedule)
        if not ks or any(k < 1 for k in ks) or list(ks) != sorted(set(ks)):
            raise ValueError("k_schedule must be a nonempty ascending list of positive integers")
        object.__setattr__(self, "k_schedule", ks)
        for m in self.bc_modes:
            if m not in BC_MODES:
                raise ValueError(f"unknown boundary mode {m!r}")


@dataclass
class DensityEstimate:
    """Outcome of one supercell minimization (an UPPER ESTIMATE of the density)."""

    lam: np.ndarray
    value_exact: float
    value_smoothed: float
    minimizer: Corrector
    k: int
    bc_mode: str
    iterations: int
    grad_norm: float
    starts_tried: int
    best_start: str
    breakdown: EnergyBreakdown


@dataclass
class EffectiveDensity:
    """Best estimate over a query's ``(k, bc)`` table."""

    best: DensityEstimate
    table: list[DensityEstimate]


def nearest_node_distance(spec: LatticeSpec) -> float:
    refs = [NodeRef(b, off) for b in range(spec.n_basic) for off in itertools.product((-1, 0, 1), repeat=spec.dimension)]
    x = spec.positions(refs)
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    return float(d[d > 1e-12].min())


class SupercellProblem:
    """Energy of ``lam x + psi`` on ``kU`` as a function of free corrector values.

    Attributes
    ----------
    var_refs : list of NodeRef
        Nodes whose corrector values are free (canonical representatives in
        periodic mode).
    node_var : ndarray
        For every assembly node, the index of its variable or ``len(var_refs)``
        when the value is pinned to 0.
    """

    def __init__(self, spec: LatticeSpec, k: int, bc_mode: str):
        if k < 1:
            raise ValueError("k must be at least 1")
        if bc_mode not in BC_MODES:
            raise ValueError(f"unknown boundary mode {bc_mode!r}")
        self.spec = spec
        self.k = k
        self.bc_mode = bc_mode
        self.dim = spec.dimension
        self.reach = compute_reach(spec)
        self.offsets = [tuple(a) for a in itertools.product(range(k), repeat=self.dim)]
        self.assembly = EnergyAssembly(spec, self.offsets)
        self.positions = self.assembly.positions
        self.scale = 1.0 / (k**self.dim * spec.volume)
        refs = self.assembly.refs
        if bc_mode == "periodic":
            self.pin = NodeRef(0, (0,) * self.dim)
            canon = sorted(NodeRef(b, a) for b in range(spec.n_basic) for a in self.offsets)
            self.var_refs = [r for r in canon if r != self.pin]
            where = {r: i for i, r in enumerate(self.var_refs)}
            nv = len(self.var_refs)
            self.node_var = np.array(
                [where.get(NodeRef(r.basic, tuple(o % k for o in r.offset)), nv) for r in refs], dtype=np.int64
            )
        else:
            self.pin = None
            cand = sorted(set(refs) | {NodeRef(b, a) for b in range(spec.n_basic) for a in self.offsets})
            free = self._interior(cand)
            self.var_refs = [r for r, f in zip(cand, free) if f]
            where = {r: i for i, r in enumerate(self.var_refs)}
            nv = len(self.var_refs)
            self.node_var = np.array([where.get(r, nv) for r in refs], dtype=np.int64)

    def _interior(self, refs: Sequence[NodeRef]) -> np.ndarray:
        if self.dim != 2:
            raise NotImplementedError("zero-boundary supercells are implemented in 2D")
        cell = self.spec.cell_polygon
        shapes = [shapely.Polygon(cell + self.spec.cell_offset_vector(a)) for a in self.offsets]
        region = shapely.union_all(shapes).buffer(0)
        x = self.spec.positions(list(refs))
        pts = shapely.points(x)
        inside = shapely.contains(region, pts)
        dist = shapely.distance(region.boundary, pts)
        tol = 1e-12 * max(1.0, self.reach.d_m)
        return np.asarray(inside & (dist > self.reach.d_m + tol), dtype=bool)

    @property
    def n_free(self) -> int:
        return len(self.var_refs)

    @property
    def n_vars(self) -> int:
        return self.n_free * self.dim

    def nodal_psi(self, z: np.ndarray) -> np.ndarray:
        ext = np.vstack([np.asarray(z, dtype=float).reshape(self.n_free, self.dim), np.zeros((1, self.dim))])
        return ext[self.node_var]

    def nodal_values(self, z: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return self.positions @ np.asarray(lam).T + self.nodal_psi(z)

    def value_and_grad(self, z: np.ndarray, lam: np.ndarray, pf: PenaltyFunction) -> tuple[float, np.ndarray]:
        e, g = self.assembly.gradient(self.nodal_values(z, lam), pf)
        gz = np.empty((self.n_free + 1, self.dim))
        for d in range(self.dim):
            gz[:, d] = np.bincount(self.node_var, weights=g[:, d], minlength=self.n_free + 1)
        return e * self.scale, gz[:-1].ravel() * self.scale

    def value(self, z: np.ndarray, lam: np.ndarray, pf: PenaltyFunction) -> float:
        return float(self.assembly.energy(self.nodal_values(z, lam), pf)) * self.scale

    def breakdown(self, z: np.ndarray, lam: np.ndarray, pf: PenaltyFunction) -> EnergyBreakdown:
        b = self.assembly.breakdown(self.nodal_values(z, lam), pf, detail=False)
        s = self.scale
        return EnergyBreakdown(b.spring * s, b.penalty * s, b.angle * s, [], b.per_cell)

    def start_vector(self, fn: StartFn | Corrector) -> np.ndarray:
        """Free-variable vector from a corrector (gauge-normalized in periodic mode)."""
        z = np.array([np.asarray(fn(r), dtype=float) for r in self.var_refs]).reshape(self.n_free, self.dim)
        if self.pin is not None and self.n_free:
            z = z - np.asarray(fn(self.pin), dtype=float)
        return z.ravel()

    def corrector(self, z: np.ndarray) -> Corrector:
        zz = np.asarray(z, dtype=float).reshape(self.n_free, self.dim)
        values = {r: zz[i].copy() for i, r in enumerate(self.var_refs)}
        if self.bc_mode == "periodic":
            values[self.pin] = np.zeros(self.dim)
            return Corrector(values, (self.k,) * self.dim, self.dim)
        return Corrector(values, None, self.dim)


def assemble_supercell(spec: LatticeSpec, k: int, bc_mode: str) -> SupercellProblem:
    """Free variables and constraint map of the ``k``-supercell problem."""
    return SupercellProblem(spec, k, bc_mode)


@dataclass
class _StartResult:
    name: str
    z: np.ndarray
    value_exact: float
    iterations: int


def _descend(problem: SupercellProblem, lam: np.ndarray, pf: PenaltyFunction, z0: np.ndarray, cfg: OptimizerConfig) -> tuple[np.ndarray, int]:
    if problem.n_vars == 0 or cfg.max_iterations == 0:
        return z0, 0

    def fun(z: np.ndarray) -> tuple[float, np.ndarray]:
        f, g = problem.value_and_grad(z, lam, pf)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite objective in the supercell problem")
        return f, g

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
    return np.asarray(res.x, dtype=float), int(res.nit)


def minimize_density(
    spec: LatticeSpec,
    query: DensityQuery,
    k: int,
    bc_mode: str,
    extra_starts: Sequence[tuple[str, StartFn | Corrector]] = (),
    problem: SupercellProblem | None = None,
) -> DensityEstimate:
    """Multistart minimization of the ``k``-supercell average energy.

    The start set is ``psi = 0``, one Gaussian perturbation per seed,
    mechanism-informed states of the lattice and ``extra_starts``. For every
    start both the start itself and the descended point are candidates; the
    candidate with the lowest exact energy (penalty without smoothing) wins,
    ties going to the earlier start.
    """
    cfg = query.optimizer
    lam = np.asarray(query.lam, dtype=float)
    problem = problem or SupercellProblem(spec, k, bc_mode)
    eta = spec.eta if cfg.eta is None else cfg.eta
    pf = PenaltyFunction(eta, cfg.smoothing_tau)
    exact = pf.exact
    sigma = 0.1 * nearest_node_distance(spec) if cfg.sigma is None else cfg.sigma

    starts: list[tuple[str, np.ndarray]] = [("zero", np.zeros(problem.n_vars))]
    for seed in cfg.seed_list():
        rng = np.random.default_rng(seed)
        starts.append((f"random-{seed}", rng.normal(0.0, sigma, problem.n_vars)))
    for name, fn in mechanism_starts(spec, lam, k):
        starts.append((name, problem.start_vector(fn)))
    for name, fn in extra_starts:
        starts.append((name, problem.start_vector(fn)))

    def run(item: tuple[str, np.ndarray]) -> _StartResult:
        name, z0 = item
        best = _StartResult(name, z0, problem.value(z0, lam, exact), 0)
        z, nit = _descend(problem, lam, pf, z0, cfg)
        v = problem.value(z, lam, exact)
        if v <= best.value_exact:
            best = _StartResult(name, z, v, nit)
        return best

    if cfg.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    win = results[0]
    for r in results[1:]:
        if r.value_exact < win.value_exact:
            win = r
    if problem.n_vars:
        _, g = problem.value_and_grad(win.z, lam, pf)
        gnorm = float(np.max(np.abs(g)))
    else:
        gnorm = 0.0
    return DensityEstimate(
        lam=lam,
        value_exact=win.value_exact,
        value_smoothed=problem.value(win.z, lam, pf),
        minimizer=problem.corrector(win.z),
        k=k,
        bc_mode=bc_mode,
        iterations=win.iterations,
        grad_norm=gnorm,
        starts_tried=len(starts),
        best_start=win.name,
        breakdown=problem.breakdown(win.z, lam, exact),
    )



def effective_density(spec: LatticeSpec, query: DensityQuery) -> EffectiveDensity:
    """Run every ``(k, bc)`` pair of a query and keep the lowest exact value.

    Zero-boundary runs are warm-started from smaller zero-boundary
    minimizers (zero-extended). Periodic runs are warm-started from the
    periodic extension of smaller minimizers whose period divides ``k`` and
    from the zero-boundary minimizer of the same ``k``.
    """
    table: list[DensityEstimate] = []
    for k in query.k_schedule:
        found: dict[str, DensityEstimate] = {}
        for mode in sorted(query.bc_modes, key=lambda m: BC_MODES.index(m)):
            extra: list[tuple[str, Corrector]] = []
            for prev in table:
                if mode == "zero" and prev.bc_mode == "zero":
                    extra.append((f"warm-zero-k{prev.k}", prev.minimizer))
                if mode == "periodic" and (k % prev.k == 0):
                    extra.append((f"warm-{prev.bc_mode}-k{prev.k}", prev.minimizer))
            if mode == "periodic" and "zero" in found:
                extra.append((f"nested-zero-k{k}", found["zero"].minimizer))
            est = minimize_density(spec, query, k, mode, extra)
            found[mode] = est
            table.append(est)
    best = table[0]
    for e in table[1:]:
        if e.value_exact < best.value_exact:
            best = e
    return EffectiveDensity(best, table)
