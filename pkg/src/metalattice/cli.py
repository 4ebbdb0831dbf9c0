"""Batch command line front end.

``metalattice run config.yaml`` executes the tasks of a config file and
writes one CSV and one text summary per task plus ``manifest.json``.
``metalattice catalog`` lists the built-in lattices.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import platform
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy
import shapely
import yaml

from . import __version__
from .analysis import (
    audit_cell_bounds,
    audit_d4,
    audit_polygon,
    cell_bound_constants,
    rank_one_convexity_check,
    recovery_sequence_energy,
    soft_mode_experiment,
)
from .catalog import get_decomposition, list_catalog
from .cellproblem import (
    BC_MODES,
    DensityQuery,
    OptimizerConfig,
    accordion_fold_state,
    effective_density,
    mechanism_deformation,
    minimize_density,
    rotation,
    twisted_kagome_state,
    verify_mechanism,
)
from .energy import EnergyAssembly, PenaltyFunction
from .lattice import LatticeError, LatticeSpec, load_lattice, parse_domain
from .linearize import interpolation_estimate_report, log_slope

TASK_TYPES = (
    "density",
    "mechanism-verify",
    "bounds-audit",
    "rank-one",
    "recovery",
    "soft-mode",
    "interpolation-report",
)

RANK_ONE_SLACK = 1e-2
RATE_THRESHOLD = 0.9


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# field readers


def _get(raw: Mapping, key: str, path: str, default: Any = ..., kind: Callable | None = None) -> Any:
    if key not in raw:
        if default is ...:
            raise ConfigError(f"{path}.{key}", "required field missing")
        return default
    value = raw[key]
    if kind is None:
        return value
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}", str(exc)) from None


_PI_TERM = re.compile(r"^\s*([+-]?)\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def _fraction_of_pi(text: str) -> float:
    """Parse ``"3/4"``, ``"pi/12"``, ``"-2*pi/3"`` and plain decimals."""
    m = _PI_TERM.match(text)
    if m is None:
        return float(Fraction(text.strip()))
    sign, num, den = m.groups()
    x = math.pi * float(num or 1) / float(den or 1)
    return -x if sign == "-" else x


def _number(v: Any) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, str):
        return _fraction_of_pi(v)
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("expected a finite number")
    return x


def _positive_int(v: Any) -> int:
    if isinstance(v, bool) or int(v) != v or int(v) < 1:
        raise ValueError("expected a positive integer")
    return int(v)


def _matrix(v: Any) -> np.ndarray:
    m = np.array([[_number(x) for x in row] for row in v], dtype=float)
    if m.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    return m


def _vector(v: Any) -> np.ndarray:
    a = np.array([_number(x) for x in v], dtype=float)
    if a.shape != (2,):
        raise ValueError("expected a 2-vector")
    return a


def _numbers(v: Any) -> tuple[float, ...]:
    if not isinstance(v, (list, tuple)) or not v:
        raise ValueError("expected a nonempty list of numbers")
    return tuple(_number(x) for x in v)


def _epsilons(v: Any) -> tuple[float, ...]:
    eps = _numbers(v)
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly descending")
    return eps


def _optimizer(raw: Any, path: str, seeds: tuple[int, ...], threads: int) -> OptimizerConfig:
    raw = raw or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(path, "expected a mapping")
    allowed = {"max_iterations", "gradient_tolerance", "random_starts", "sigma", "smoothing_tau", "max_line_search", "eta"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown optimizer option")
    try:
        return OptimizerConfig(**dict(raw), seeds=seeds, threads=threads)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _query(raw: Mapping, path: str, lam: np.ndarray, seeds, threads) -> DensityQuery:
    ks = _get(raw, "k_schedule", path, (1, 2, 3, 4))
    modes = _get(raw, "bc_modes", path, BC_MODES)
    if not isinstance(modes, (list, tuple)) or any(m not in BC_MODES for m in modes):
        raise ConfigError(f"{path}.bc_modes", f"expected a list drawn from {list(BC_MODES)}")
    opt = _optimizer(raw.get("optimizer"), f"{path}.optimizer", seeds, threads)
    try:
        return DensityQuery(lam, tuple(ks), tuple(modes), opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.k_schedule", str(exc)) from None


def _domain(raw: Mapping, path: str, default: Any = ...):
    value = _get(raw, "domain", path, default)
    try:
        return parse_domain(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.domain", str(exc)) from None


# ---------------------------------------------------------------------------
# tasks


@dataclass
class TaskResult:
    csv: str
    summary: str


@dataclass
class Task:
    name: str
    type: str
    run: Callable[[], TaskResult]


def _fmt_row(values: Sequence[Any]) -> str:
    out = []
    for v in values:
        if isinstance(v, (bool, np.bool_)):
            out.append("true" if v else "false")
        elif isinstance(v, (float, np.floating)):
            out.append(repr(float(v) + 0.0))
        else:
            out.append(str(v))
    return ",".join(out)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    return "\n".join([",".join(header)] + [_fmt_row(r) for r in rows]) + "\n"


def _density_task(spec: LatticeSpec, raw: Mapping, path: str, seeds, threads) -> Callable[[], TaskResult]:
    lams: list[np.ndarray] = []
    if "grid" in raw:
        grid = raw["grid"]
        if not isinstance(grid, Mapping):
            raise ConfigError(f"{path}.grid", "expected a mapping with keys c and theta")
        cs = _get(grid, "c", f"{path}.grid", kind=_numbers)
        thetas = _get(grid, "theta", f"{path}.grid", kind=_numbers)
        lams = [c * rotation(t) for c in cs for t in thetas]
    if "lambdas" in raw:
        items = raw["lambdas"]
        if not isinstance(items, list):
            raise ConfigError(f"{path}.lambdas", "expected a list of 2x2 matrices")
        for i, m in enumerate(items):
            try:
                lams.append(_matrix(m))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}.lambdas[{i}]", str(exc)) from None
    if not lams:
        raise ConfigError(path, "density task needs 'lambdas' or 'grid'")
    query = _query(raw, path, lams[0], seeds, threads)

    def run() -> TaskResult:
        rows = []
        for i, lam in enumerate(lams):
            best = effective_density(spec, replace(query, lam=lam)).best
            rows.append(
                [i, *lam.ravel(), best.k, best.bc_mode, best.value_exact, best.value_smoothed,
                 best.grad_norm, best.iterations, best.best_start]
            )
        header = ["index", "l11", "l12", "l21", "l22", "k", "bc", "value_exact", "value_smoothed",
                  "grad_norm", "iterations", "start"]
        vals = [r[7] for r in rows]
        summary = (
            f"density estimates for {len(rows)} gradients on {spec.name}\n"
            f"k schedule {list(query.k_schedule)}, boundary modes {list(query.bc_modes)}\n"
            f"smallest value {min(vals)!r}, largest value {max(vals)!r}\n"
        )
        return TaskResult(_csv(header, rows), summary)

    return run


def _mechanism_task(spec: LatticeSpec, raw: Mapping, path: str) -> Callable[[], TaskResult]:
    kind = _get(raw, "mechanism", path)
    base = spec.name.split("/")[0]
    if kind == "twisted-kagome":
        if base != "kagome":
            raise ConfigError(f"{path}.mechanism", "twisted-kagome needs the kagome lattice")
        theta = _get(raw, "theta", path, kind=_number)
        if not -math.pi / 3 < theta < math.pi / 3:
            raise ConfigError(f"{path}.theta", "theta must lie in (-pi/3, pi/3)")
        state = twisted_kagome_state(theta, spec)
        param = repr(theta)
    elif kind == "accordion":
        if base != "square":
            raise ConfigError(f"{path}.mechanism", "accordion needs the square lattice")
        c = _get(raw, "c", path, kind=lambda v: Fraction(str(v)).limit_denominator(1000))
        if not 0 <= c <= 1:
            raise ConfigError(f"{path}.c", "fold parameter must lie in [0, 1]")
        state = accordion_fold_state(c, spec)
        param = str(c)
    else:
        raise ConfigError(f"{path}.mechanism", "expected 'twisted-kagome' or 'accordion'")
    reps = _get(raw, "repeats", path, 1, kind=_positive_int)
    period = state.psi.period
    cells = [tuple(a) for a in np.ndindex(*(p * reps for p in period))]

    def run() -> TaskResult:
        d = mechanism_deformation(spec, state, cells)
        rep = verify_mechanism(spec, d, cells=cells)
        asm = EnergyAssembly(spec, cells)
        u = d.gather(asm.refs)
        b = asm.breakdown(u, PenaltyFunction(spec.eta), detail=False)
        header = ["mechanism", "parameter", "cells", "ok", "max_spring_residual", "min_det",
                  "reversed_triangles", "n_springs", "n_triangles", "spring_energy", "penalty_energy"]
        row = [kind, param, len(cells), rep.ok, rep.max_spring_residual, rep.min_det, rep.reversed_triangles,
               rep.n_springs, rep.n_triangles, b.spring, b.penalty]
        return TaskResult(_csv(header, [row]), rep.summary() + "\n")

    return run


def _bounds_task(spec: LatticeSpec, raw: Mapping, path: str, seeds) -> Callable[[], TaskResult]:
    samples = _get(raw, "samples", path, 1000, kind=_positive_int)
    try:
        dec = get_decomposition(spec)
    except KeyError as exc:
        raise ConfigError("lattice", f"no registered polygon decomposition ({exc})") from None
    seed = seeds[0] if seeds else 0

    def run() -> TaskResult:
        rows = []
        polys = []
        for tag, group in (("upper", dec.upper), ("lower", dec.lower)):
            for p in group:
                label = f"{tag}:" + "-".join(f"{r.basic}{list(r.offset)}" for r in p.vertices)
                polys.append((label, spec.positions(list(p.vertices))))
        for i, (label, pts) in enumerate(polys):
            a = audit_polygon(pts, samples, seed + i, label)
            rows.append(["polygon", label, a.samples, a.upper_violations, a.lower_violations,
                         a.worst_upper_ratio, a.worst_lower_gap])
            d = audit_d4(pts[:3], samples, seed + 100 + i, label)
            rows.append(["d4", label, d.samples, d.upper_violations, d.lower_violations,
                         d.worst_upper_ratio, d.worst_lower_gap])
        c = audit_cell_bounds(spec, samples, seed)
        rows.append(["cell", spec.name, c.samples, c.upper_violations, c.lower_violations,
                     c.worst_upper_ratio, c.worst_lower_gap])
        k = cell_bound_constants(spec)
        header = ["check", "object", "samples", "upper_violations", "lower_violations",
                  "worst_upper_ratio", "worst_lower_gap"]
        total = sum(r[3] + r[4] for r in rows)
        summary = (
            f"cell constants C1={k.C1!r} C2={k.C2!r} D2={k.D2!r} M={k.M!r}\n"
            f"{len(rows)} checks, {total} violations\n"
        )
        return TaskResult(_csv(header, rows), summary)

    return run


def _rank_one_task(spec: LatticeSpec, raw: Mapping, path: str, seeds, threads) -> Callable[[], TaskResult]:
    A = _get(raw, "A", path, kind=_matrix)
    a = _get(raw, "a", path, kind=_vector)
    n = _get(raw, "n", path, kind=_vector)
    thetas = _get(raw, "thetas", path, kind=_numbers)
    if any(not 0 <= t <= 1 for t in thetas):
        raise ConfigError(f"{path}.thetas", "thetas must lie in [0, 1]")
    slack = _get(raw, "slack", path, RANK_ONE_SLACK, kind=_number)
    query = _query(raw, path, A, seeds, threads)

    def run() -> TaskResult:
        rep = rank_one_convexity_check(spec, A, a, n, thetas, query)
        rows = [[t, v, c, v - c] for t, v, c in zip(rep.thetas, rep.values, rep.chords)]
        summary = (
            f"W(A)={rep.W_A!r} W(B)={rep.W_B!r}\n"
            f"max violation {rep.max_violation!r} against optimizer slack {slack!r}: "
            f"{'within' if rep.max_violation <= slack else 'exceeds'} slack\n"
        )
        return TaskResult(_csv(["theta", "value", "chord", "violation"], rows), summary)

    return run


def _recovery_task(spec: LatticeSpec, raw: Mapping, path: str, seeds, threads) -> Callable[[], TaskResult]:
    lam = _get(raw, "lambda", path, kind=_matrix)
    domain = _domain(raw, path)
    eps = _get(raw, "epsilons", path, kind=_epsilons)
    construction = _get(raw, "construction", path, "auto")
    if construction not in ("auto", "tiles", "periodic"):
        raise ConfigError(f"{path}.construction", "expected auto, tiles or periodic")
    corr = _get(raw, "corrector", path, {"type": "none"})
    cpath = f"{path}.corrector"
    if not isinstance(corr, Mapping):
        raise ConfigError(cpath, "expected a mapping with a 'type'")
    ctype = _get(corr, "type", cpath)
    base = spec.name.split("/")[0]
    make: Callable[[], Any]
    k = None
    if ctype == "none":
        make = lambda: None  # noqa: E731
    elif ctype == "twisted-kagome":
        if base != "kagome":
            raise ConfigError(f"{cpath}.type", "twisted-kagome needs the kagome lattice")
        theta = _get(corr, "theta", cpath, kind=_number)
        make = lambda: twisted_kagome_state(theta, spec).psi  # noqa: E731
    elif ctype == "accordion":
        if base != "square":
            raise ConfigError(f"{cpath}.type", "accordion needs the square lattice")
        c = _get(corr, "c", cpath, kind=lambda v: Fraction(str(v)).limit_denominator(1000))
        make = lambda: accordion_fold_state(c, spec).psi  # noqa: E731
    elif ctype == "density":
        k = _get(corr, "k", cpath, kind=_positive_int)
        bc = _get(corr, "bc", cpath, "periodic")
        if bc not in BC_MODES:
            raise ConfigError(f"{cpath}.bc", f"expected one of {list(BC_MODES)}")
        query = _query(corr, cpath, lam, seeds, threads)
        make = lambda: minimize_density(spec, query, k, bc).minimizer  # noqa: E731
    else:
        raise ConfigError(f"{cpath}.type", "expected none, twisted-kagome, accordion or density")

    def run() -> TaskResult:
        rep = recovery_sequence_energy(spec, lam, make(), domain, eps, k=k, construction=construction)
        summary = (
            f"construction {rep.construction}, target {rep.target!r}\n"
            f"fitted gap rate {rep.fitted_rate!r} (reference threshold {RATE_THRESHOLD}, an artifact choice)\n"
        )
        return TaskResult(rep.to_csv(), summary)

    return run


def _soft_mode_task(spec: LatticeSpec, raw: Mapping, path: str, seeds, threads) -> Callable[[], TaskResult]:
    F = _get(raw, "F", path, kind=_matrix)
    domain = _domain(raw, path)
    eps = _get(raw, "epsilons", path, kind=_epsilons)
    opt = _optimizer(raw.get("optimizer"), f"{path}.optimizer", seeds, threads)

    def run() -> TaskResult:
        rep = soft_mode_experiment(spec, F, domain, eps, opt)
        ratio = rep.energies[-1] / rep.baselines[-1] if rep.baselines[-1] > 0 else 0.0
        floor = "n/a" if rep.jensen_floor is None else repr(rep.jensen_floor)
        summary = (
            f"energies nonincreasing: {'yes' if rep.nonincreasing else 'no'}\n"
            f"final energy / affine baseline: {ratio!r}\n"
            f"Jensen floor: {floor}\n"
        )
        return TaskResult(rep.to_csv(), summary)

    return run


_TEST_FUNCTIONS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float]] = {
    "abs-x1": (lambda x: np.array([abs(x[0]), 0.0]), 1.0),
    "cone": (lambda x: np.array([np.linalg.norm(x), 0.0]), 1.0),
    "max-affine": (lambda x: np.array([max(x[0], 0.5 * x[1]), 0.0]), 1.0),
}


def _interpolation_task(spec: LatticeSpec, raw: Mapping, path: str) -> Callable[[], TaskResult]:
    name = _get(raw, "function", path)
    if name not in _TEST_FUNCTIONS:
        raise ConfigError(f"{path}.function", f"expected one of {sorted(_TEST_FUNCTIONS)}")
    f, lip = _TEST_FUNCTIONS[name]
    eps = _get(raw, "epsilons", path, kind=_epsilons)
    domain = _domain(raw, path, {"box": [[-1, -1], [1, 1]]})
    res = _get(raw, "resolution", path, 4, kind=_positive_int)

    def run() -> TaskResult:
        rows = interpolation_estimate_report(f, spec, eps, lip, domain, res)
        table = [[r.epsilon, r.gradient_ratio, r.error_ratio, r.n_triangles] for r in rows]
        e = [r.epsilon for r in rows]
        sg = log_slope(e, [r.gradient_ratio for r in rows]) if len(rows) > 1 else 0.0
        se = log_slope(e, [r.error_ratio for r in rows]) if len(rows) > 1 else 0.0
        summary = f"log-log slope of gradient ratio {sg!r}, of error ratio {se!r}\n"
        return TaskResult(_csv(["epsilon", "gradient_ratio", "error_ratio", "n_triangles"], table), summary)

    return run


def build_tasks(config: Mapping, spec: LatticeSpec, seeds: tuple[int, ...], threads: int) -> list[Task]:
    """Validate every task record and return runnable tasks in declared order."""
    raw_tasks = config.get("tasks", [])
    if raw_tasks is None:
        raw_tasks = []
    if not isinstance(raw_tasks, list):
        raise ConfigError("tasks", "expected a list")
    tasks, names = [], set()
    for i, raw in enumerate(raw_tasks):
        path = f"tasks[{i}]"
        if not isinstance(raw, Mapping):
            raise ConfigError(path, "expected a mapping")
        ttype = _get(raw, "type", path)
        if ttype not in TASK_TYPES:
            raise ConfigError(f"{path}.type", f"unknown task type {ttype!r}")
        name = str(_get(raw, "name", path, f"{i:02d}-{ttype}"))
        if name in names or not name or "/" in name:
            raise ConfigError(f"{path}.name", "task names must be unique and contain no '/'")
        names.add(name)
        if ttype == "density":
            fn = _density_task(spec, raw, path, seeds, threads)
        elif ttype == "mechanism-verify":
            fn = _mechanism_task(spec, raw, path)
        elif ttype == "bounds-audit":
            fn = _bounds_task(spec, raw, path, seeds)
        elif ttype == "rank-one":
            fn = _rank_one_task(spec, raw, path, seeds, threads)
        elif ttype == "recovery":
            fn = _recovery_task(spec, raw, path, seeds, threads)
        elif ttype == "soft-mode":
            fn = _soft_mode_task(spec, raw, path, seeds, threads)
        else:
            fn = _interpolation_task(spec, raw, path)
        tasks.append(Task(name, ttype, fn))
    return tasks


def load_config(path: Path) -> dict:
    """Read a YAML or JSON config file."""
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    return data


def _versions() -> dict[str, str]:
    return {
        "metalattice": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "shapely": shapely.__version__,
        "python": platform.python_version(),
    }


def run_config(
    config_path: Path,
    output_dir: Path | None = None,
    seed: int | None = None,
    threads: int = 1,
    out=sys.stdout,
) -> int:
    """Validate and execute a config; returns the process exit status."""
    try:
        config = load_config(config_path)
        unknown = set(config) - {"lattice", "tasks", "output_dir", "seeds"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown top-level field")
        lattice = _get(config, "lattice", "<root>")
        if not isinstance(lattice, str):
            raise ConfigError("lattice", "expected a catalog name or file path")
        lat_path = Path(lattice)
        if not lat_path.is_absolute() and (config_path.parent / lat_path).exists():
            lattice = str(config_path.parent / lat_path)
        try:
            spec = load_lattice(lattice)
        except (LatticeError, OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("lattice", str(exc)) from None
        if seed is not None:
            seeds: tuple[int, ...] = (int(seed),)
        else:
            raw_seeds = config.get("seeds", [0])
            if isinstance(raw_seeds, int) and not isinstance(raw_seeds, bool):
                raw_seeds = [raw_seeds]
            if not isinstance(raw_seeds, list) or any(isinstance(s, bool) or not isinstance(s, int) for s in raw_seeds):
                raise ConfigError("seeds", "expected a list of integers")
            seeds = tuple(raw_seeds)
        target = output_dir or Path(config.get("output_dir", "results"))
        tasks = build_tasks(config, spec, seeds, threads)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    target.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": str(config_path),
        "config_sha256": hashlib.sha256(config_path.read_bytes()).hexdigest(),
        "lattice": spec.name,
        "seeds": list(seeds),
        "versions": _versions(),
        "tasks": [],
    }
    status = 0
    for task in tasks:
        try:
            result = task.run()
        except Exception as exc:  # noqa: BLE001
            print(f"task {task.name} failed: {exc}", file=sys.stderr)
            manifest["tasks"].append({"name": task.name, "type": task.type, "status": "failed", "error": str(exc)})
            status = 1
            break
        (target / f"{task.name}.csv").write_text(result.csv)
        (target / f"{task.name}.txt").write_text(result.summary)
        manifest["tasks"].append(
            {"name": task.name, "type": task.type, "status": "ok", "csv": f"{task.name}.csv", "summary": f"{task.name}.txt"}
        )
        print(f"[{task.name}] {result.summary.splitlines()[0] if result.summary else ''}", file=out)
    (target / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


def catalog_lines() -> list[str]:
    return [f"{name}: {desc}" for name, desc in list_catalog()]


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="metalattice", description="Discrete lattice energies and effective densities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the tasks of a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--output-dir", type=Path, default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seeds with one seed")
    p_run.add_argument("--threads", type=int, default=1)
    sub.add_parser("catalog", help="list the built-in lattices")
    args = parser.parse_args(argv)
    if args.command == "catalog":
        for line in catalog_lines():
            print(line)
        return 0
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    return run_config(args.config, args.output_dir, args.seed, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
