"""Correctors and explicit zero-spring-energy mechanisms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ..energy import EnergyAssembly, PenaltyFunction
from ..lattice import CellSet, LatticeSpec, NodeRef
from ..linearize import Deformation, required_nodes

__all__ = [
    "Corrector",
    "MechanismState",
    "MechanismReport",
    "rotation",
    "twisted_kagome_state",
    "accordion_fold_state",
    "mechanism_deformation",
    "verify_mechanism",
    "mechanism_starts",
]


def rotation(theta: float) -> np.ndarray:
    """Counter-clockwise rotation matrix ``R(theta)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Corrector:
    """A corrector ``psi`` on lattice nodes.

    With ``period`` set, ``psi`` is periodic and ``values`` holds one entry
    per basic node per cell of the period box ``prod_i [0, period_i)``;
    missing entries are 0. With ``period=None`` it is finitely supported
    and vanishes off ``values``.
    """

    values: Mapping[NodeRef, np.ndarray]
    period: tuple[int, ...] | None = None
    dimension: int = 2

    def canonical(self, ref: NodeRef) -> NodeRef:
        if self.period is None:
            return ref
        return NodeRef(ref.basic, tuple(o % p for o, p in zip(ref.offset, self.period)))

    def __call__(self, ref: NodeRef) -> np.ndarray:
        v = self.values.get(self.canonical(ref))
        return np.zeros(self.dimension) if v is None else np.asarray(v, dtype=float)

    def gather(self, refs: Sequence[NodeRef]) -> np.ndarray:
        out = np.zeros((len(refs), self.dimension))
        for i, r in enumerate(refs):
            v = self.values.get(self.canonical(r))
            if v is not None:
                out[i] = v
        return out

    def mapped(self, matrix: np.ndarray) -> "Corrector":
        """Corrector with every value left-multiplied by ``matrix``."""
        m = np.asarray(matrix, dtype=float)
        return Corrector({r: m @ np.asarray(v) for r, v in self.values.items()}, self.period, self.dimension)

    def is_periodic_in(self, k: int) -> bool:
        return self.period is not None and all(k % p == 0 for p in self.period)


class MechanismState(NamedTuple):
    """Macroscopic gradient ``F`` and periodic corrector ``psi``: ``u = F x + psi``."""

    F: np.ndarray
    psi: Corrector


@dataclass(frozen=True)
class MechanismReport:
    """Result of :func:`verify_mechanism`."""

    ok: bool
    max_spring_residual: float
    min_det: float
    reversed_triangles: int
    n_springs: int
    n_triangles: int

    def summary(self) -> str:
        return (
            f"spring residual {self.max_spring_residual:.3g}, "
            f"penalty {self.reversed_triangles} triangles reversed"
        )


def twisted_kagome_state(theta: float, spec: LatticeSpec | None = None) -> MechanismState:
    """Twisted Kagome mechanism with macroscopic gradient ``cos(theta) R(theta)``.

    Up triangles rotate rigidly by ``2 theta`` about their centroids and down
    triangles translate; this is the alternating ``+-theta`` twist followed
    by a global rotation by ``theta``. Requires ``|theta| < pi/3``.
    """
    from ..catalog import get_lattice

    if not -math.pi / 3 < theta < math.pi / 3:
        raise ValueError("theta outside the non-self-intersecting range (-pi/3, pi/3)")
    spec = spec or get_lattice("kagome")
    F = math.cos(theta) * rotation(theta)
    R_up = rotation(2 * theta)
    up = spec.triangles[0]  # AOB, an up triangle containing one copy of each basic node
    centroid = spec.triangle_vertices(0).mean(axis=0)
    values = {}
    for v in up:
        beta = tuple(-o for o in v.offset)
        c = centroid + spec.cell_offset_vector(beta)
        p = spec.basic_nodes[v.basic]
        values[NodeRef(v.basic, (0, 0))] = (R_up - F) @ (p - c)
    return MechanismState(F, Corrector(values, (1, 1)))


def _as_fraction(c: float | Fraction, max_denominator: int = 1000) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    return Fraction(c).limit_denominator(max_denominator)


def accordion_fold_state(c: float | Fraction, spec: LatticeSpec | None = None) -> MechanismState:
    """Accordion fold of the square lattice with macroscopic gradient ``diag(c, 1)``.

    Columns between consecutive vertical node lines are mapped with slope
    ``+1`` or ``-1``; ``f`` forward and ``b`` backward columns per period
    ``P = f + b`` with ``(f - b) / P = c``. ``P = q`` when ``p + q`` is even
    and ``2 q`` otherwise (``c = p / q`` in lowest terms).
    """
    from ..catalog import get_lattice

    frac = _as_fraction(c)
    if not 0 <= frac <= 1:
        raise ValueError("fold parameter c must lie in [0, 1]")
    spec = spec or get_lattice("square")
    p, q = frac.numerator, frac.denominator
    P = q if (p + q) % 2 == 0 else 2 * q
    forward = int(P * (1 + frac) / 2)
    slopes = [1] * forward + [-1] * (P - forward)
    g = np.concatenate([[0], np.cumsum(slopes)])
    cf = float(frac)
    values = {NodeRef(0, (i, 0)): np.array([g[i] - cf * i, 0.0]) for i in range(P)}
    return MechanismState(np.diag([cf, 1.0]), Corrector(values, (P, 1)))


def mechanism_deformation(
    spec: LatticeSpec,
    state: MechanismState,
    cells: Iterable[Sequence[int]],
    epsilon: float = 1.0,
) -> Deformation:
    """Nodal values ``F x + eps psi(x / eps)`` on the nodes the cells need."""
    cells = [tuple(c) for c in cells]
    refs = required_nodes(spec, cells)
    x = spec.positions(refs)
    vals = epsilon * (x @ np.asarray(state.F).T + state.psi.gather(refs))
    return Deformation.from_arrays(spec, refs, vals, epsilon, CellSet(tuple(cells), epsilon))


def verify_mechanism(
    spec: LatticeSpec, deformation: Deformation, tolerance: float = 1e-12, cells: Iterable[Sequence[int]] | None = None
) -> MechanismReport:
    """Check that every spring keeps its rest length and no penalty triangle flips.

    Residuals are measured in unscaled lengths.
    """
    if cells is None:
        if deformation.window is None:
            raise ValueError("deformation has no window; pass cells explicitly")
        cells = deformation.window.offsets
    asm = EnergyAssembly(spec, list(cells))
    u = deformation.gather(asm.refs) / deformation.epsilon
    lengths = np.linalg.norm(u[asm.si] - u[asm.sj], axis=-1)
    residual = float(np.max(np.abs(lengths - asm.rest))) if len(lengths) else 0.0
    dets = asm.penalty_dets(u)
    min_det = float(dets.min()) if dets.size else math.inf
    reversed_ = int(np.sum(dets <= 0))
    ok = residual <= tolerance and reversed_ == 0
    return MechanismReport(ok, residual, min_det, reversed_, len(lengths), int(dets.size))


# ---------------------------------------------------------------------------
# mechanism-informed starting points for the cell problem


StartFn = Callable[[NodeRef], np.ndarray]


def _state_start(spec: LatticeSpec, state: MechanismState, lam: np.ndarray, Q: np.ndarray | None = None) -> StartFn:
    Q = np.eye(spec.dimension) if Q is None else Q
    F = np.asarray(state.F)

    def fn(ref: NodeRef) -> np.ndarray:
        x = spec.position(ref)
        return Q @ (F @ x + state.psi(ref)) - lam @ x

    return fn


def mechanism_starts(spec: LatticeSpec, lam: np.ndarray, k: int = 1) -> list[tuple[str, StartFn]]:
    """Mechanism-informed corrector starts ``psi = u_mech - lam x`` for a lattice.

    Kagome: twisted states matched to the conformal part ``c R(phi)`` of
    ``lam``. Square: accordion folds matched to a diagonal ``lam``.
    """
    lam = np.asarray(lam, dtype=float)
    base = spec.name.split("/")[0]
    starts: list[tuple[str, StartFn]] = []
    if base == "kagome" and spec.labels:
        a = 0.5 * (lam[0, 0] + lam[1, 1])
        b = 0.5 * (lam[1, 0] - lam[0, 1])
        c = math.hypot(a, b)
        phi = math.atan2(b, a)
        theta = math.acos(min(max(c, 0.5 + 1e-9), 1.0))
        for sgn in (1, -1):
            t = sgn * theta
            if t == 0 and sgn == -1:
                continue
            state = twisted_kagome_state(t, spec)
            starts.append((f"twisted-kagome({t:+.6g})", _state_start(spec, state, lam, rotation(phi - t))))
    elif base == "square" and spec.labels:
        off = abs(lam[0, 1]) + abs(lam[1, 0])
        if off <= 1e-12:
            for axis in (0, 1):
                c = lam[axis, axis]
                if 0 <= c < 1:
                    frac = _as_fraction(float(c))
                    state = accordion_fold_state(frac, spec)
                    if axis == 1:
                        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
                        state = _swapped_fold(state, swap)
                    starts.append((f"accordion(axis={axis},c={frac})", _state_start(spec, state, lam)))
    return starts


def _swapped_fold(state: MechanismState, swap: np.ndarray) -> MechanismState:
    vals = {NodeRef(r.basic, r.offset[::-1]): swap @ v for r, v in state.psi.values.items()}
    period = state.psi.period[::-1] if state.psi.period else None
    return MechanismState(swap @ state.F @ swap, Corrector(vals, period))
