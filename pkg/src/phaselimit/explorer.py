"""Randomized schemes, counterexample search and parameter sweeps."""
from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import CSV_COLUMNS, VIOLATION_RTOL, TheoremViolation, audit, scheme_hash
from .dressed import DressedFamily
from .dynamics import PreparedState, expand_initial, find_return_times, phase_residual
from .manifold import Rejection, solve_offsets
from .scheme import (
    LaserSpec,
    LevelScheme,
    LevelSpec,
    PhysicalSettings,
    SchemeError,
    TransitionSpec,
    scheme_from_dict,
    serialize_scheme,
)

log = logging.getLogger(__name__)

MAX_LEVELS, MAX_LASERS, MAX_PER_LASER = 8, 4, 3
MAX_ATTEMPTS = 10**5
LASER_NAMES = "abcd"
RETURN_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Limits:
    max_levels: int = MAX_LEVELS
    max_lasers: int = MAX_LASERS
    max_per_laser: int = MAX_PER_LASER

    def __post_init__(self):
        if not 2 <= self.max_levels <= MAX_LEVELS:
            raise ValueError(f"max_levels must be in [2, {MAX_LEVELS}]")
        if not 1 <= self.max_lasers <= MAX_LASERS:
            raise ValueError(f"max_lasers must be in [1, {MAX_LASERS}]")
        if not 1 <= self.max_per_laser <= MAX_PER_LASER:
            raise ValueError(f"max_per_laser must be in [1, {MAX_PER_LASER}]")


def trial_seed(seed: int, trial: int) -> int:
    """64-bit seed for trial ``trial`` of a run seeded with ``seed``."""
    lo, hi = np.random.SeedSequence([seed, trial]).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _log_uniform(rng, lo, hi):
    return float(10 ** rng.uniform(math.log10(lo), math.log10(hi)))


def _candidate_topology(rng, limits: Limits):
    m = int(rng.integers(1, limits.max_lasers + 1))
    n_hi = min(limits.max_levels, 1 + m * limits.max_per_laser)
    n = int(rng.integers(2, n_hi + 1))
    used = [0] * m
    edges = []  # (laser, lower, upper)
    for k in range(1, n):
        free = [j for j in range(m) if used[j] < limits.max_per_laser]
        p = int(rng.integers(0, k))
        j = free[int(rng.integers(0, len(free)))]
        edges.append((j, p, k) if rng.random() < 0.5 else (j, k, p))
        used[j] += 1
    # a few extra edges; many of them close inconsistent cycles and get resampled
    for _ in range(int(rng.integers(0, 3))):
        free = [j for j in range(m) if used[j] < limits.max_per_laser]
        if not free:
            break
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        j = free[int(rng.integers(0, len(free)))]
        if (j, a, b) not in edges:
            edges.append((j, a, b))
            used[j] += 1
    return n, m, edges


def _random_scheme(seed: int, limits: Limits, mode: str):
    rng = np.random.default_rng(seed)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        n, m, edges = _candidate_topology(rng, limits)
        lasers_used = sorted({j for j, _, _ in edges})
        levels = []
        for i in range(n):
            if rng.random() < 0.2:
                det = 0.0
            else:
                det = float(rng.choice([-1.0, 1.0])) * _log_uniform(rng, 1e3, 1e9)
            levels.append(LevelSpec(f"L{i}", det))
        settings = PhysicalSettings(quantisation_volume=1e-12, interaction_time=1e-6,
                                    column_density=1e12, beam_area=1e-8, bandwidth=1e4)
        lasers = []
        for j in lasers_used:
            k = 2 * math.pi / rng.uniform(400e-9, 1100e-9)
            lasers.append(LaserSpec(LASER_NAMES[j], settings.c * k, _log_uniform(rng, 1e6, 1e9), k))
        transitions = []
        for j, a, b in edges:
            if mode == "microscopic":
                transitions.append(TransitionSpec(LASER_NAMES[j], f"L{a}", f"L{b}",
                                                  dipole_moment=_log_uniform(rng, 1e-31, 1e-28)))
            else:
                transitions.append(TransitionSpec(LASER_NAMES[j], f"L{a}", f"L{b}",
                                                  rabi_frequency=_log_uniform(rng, 1e3, 1e9),
                                                  decay_rate=_log_uniform(rng, 1e5, 1e8)))
        scheme = LevelScheme(levels, lasers, transitions, settings, mode)
        if isinstance(solve_offsets(scheme), Rejection):
            continue
        return scheme, attempt
    raise RuntimeError(f"no manifold-accepted scheme after {MAX_ATTEMPTS} attempts; limits {limits}")


def random_scheme(seed: int, limits: Limits | tuple = Limits(), mode: str = "reduced") -> LevelScheme:
    """Deterministic random connected scheme that passes :func:`solve_offsets`.

    Detunings are log-uniform in +-[1e3, 1e9] rad/s (exactly zero with
    probability 0.2); Rabi frequencies log-uniform in [1e3, 1e9] rad/s,
    decay rates in [1e5, 1e8] rad/s, mean photon numbers in [1e6, 1e9].
    """
    if not isinstance(limits, Limits):
        limits = Limits(*limits)
    return _random_scheme(seed, limits, mode)[0]


def random_prepared(family: DressedFamily, rng, k_max: int = 10**4):
    """Haar-random superposition of 1-3 mean-manifold dressed states with a return time.

    Falls back to a single dressed state when the chosen energies are not
    commensurate within ``k_max``.  Returns (prepared, ReturnCondition).
    """
    ds = family.at()
    hbar = family.scheme.settings.hbar
    size = int(rng.choice([1, 2, 3], p=[0.3, 0.5, 0.2]))
    size = min(size, ds.dim)
    chosen = rng.choice(ds.dim, size=size, replace=False)
    z = rng.normal(size=size) + 1j * rng.normal(size=size)
    coeffs = {int(m): complex(v) for m, v in zip(chosen, z / np.linalg.norm(z))}
    prepared = PreparedState.dressed(family, coeffs)
    found = find_return_times(ds, expand_initial(prepared.atomic, ds), k_max=k_max, hbar=hbar, max_results=1)
    if found and found[0].any_time:
        # a near-degenerate cluster counts as one energy; make sure it really is one at tau
        tau = family.scheme.settings.interaction_time
        if phase_residual(ds, expand_initial(prepared.atomic, ds), tau, hbar) > RETURN_TOLERANCE:
            found = []
    if not found:
        m = int(chosen[0])
        prepared = PreparedState.dressed(family, {m: 1.0})
        found = find_return_times(ds, expand_initial(prepared.atomic, ds), hbar=hbar, max_results=1)
    return prepared, found[0]


def run_trial(seed: int, limits: Limits = Limits(), mode: str = "reduced") -> dict:
    """One randomized audit; everything needed to reproduce it is in the result."""
    scheme, attempts = _random_scheme(seed, limits, mode)
    rng = np.random.default_rng([seed, 1])
    family = DressedFamily.from_scheme(scheme)
    prepared, ret = random_prepared(family, rng)
    out = {"seed": seed, "scheme_hash": scheme_hash(scheme), "rejected": attempts - 1,
           "levels": len(scheme.levels), "lasers": len(scheme.lasers), "ratio": 0.0,
           "violation": None, "rows": []}
    try:
        report = audit(family, prepared, ret, seed=seed)
    except TheoremViolation as exc:
        out["violation"] = str(exc)
        out["ratio"] = math.inf
        return out
    out["ratio"] = report.max_ratio
    out["rows"] = report.rows()
    if report.max_ratio > 1 + VIOLATION_RTOL or not all(la.chain_holds for la in report.lasers):
        out["violation"] = f"ratio {report.max_ratio!r}"
    return out


def _run_chunk(args):
    seeds, limits, mode = args
    return [run_trial(s, limits, mode) for s in seeds]


@dataclass
class SearchResult:
    best_ratio: float
    best_scheme: Optional[str]
    best_seed: Optional[int]
    tried: int
    accepted: int
    rejected: int
    violations: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and self.best_ratio <= 1 + VIOLATION_RTOL


def _map_trials(seeds, limits, mode, workers: int, chunk: int = 64):
    chunks = [(seeds[i:i + chunk], limits, mode) for i in range(0, len(seeds), chunk)]
    if workers <= 1:
        for c in chunks:
            yield from _run_chunk(c)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for res in pool.map(_run_chunk, chunks):
            yield from res


def search_counterexample(seed: int, trials: int, limits: Limits | tuple = Limits(), workers: int = 1,
                          mode: str = "reduced", keep_rows: bool = False) -> SearchResult:
    """Audit ``trials`` random schemes and prepared states, recording the worst ratio."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not isinstance(limits, Limits):
        limits = Limits(*limits)
    seeds = [trial_seed(seed, t) for t in range(trials)]
    best, best_seed = -1.0, None
    rejected = 0
    violations, rows = [], []
    for t, res in enumerate(_map_trials(seeds, limits, mode, workers)):
        rejected += res["rejected"]
        if res["violation"]:
            violations.append({"trial": t, "seed": res["seed"], "ratio": res["ratio"],
                               "detail": res["violation"]})
        if res["ratio"] > best:
            best, best_seed = res["ratio"], res["seed"]
        if keep_rows:
            rows.extend(res["rows"])
    best_scheme = serialize_scheme(random_scheme(best_seed, limits, mode), indent=None)
    return SearchResult(best, best_scheme, best_seed, trials + rejected, trials, rejected, violations, rows)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweptParameter:
    """``name`` is a dotted path into the scheme document, e.g.
    ``levels.e.detuning``, ``transitions.0.rabi_frequency``, ``settings.column_density``."""

    name: str
    values: list

    @classmethod
    def from_dict(cls, d: dict) -> "SweptParameter":
        if "values" in d:
            vals = list(d["values"])
        else:
            lo, hi = d["range"]
            grid = int(d.get("grid", 1))
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"parameter {d['name']!r}: range must be finite and ordered")
            if grid < 1:
                raise ValueError(f"parameter {d['name']!r}: grid size must be >= 1")
            if d.get("scale", "linear") == "log":
                vals = np.geomspace(lo, hi, grid).tolist()
            else:
                vals = np.linspace(lo, hi, grid).tolist()
        return cls(d["name"], vals)


@dataclass
class SweepConfig:
    template: dict
    parameters: list
    seed: int = 0
    workers: int = 1
    output: Optional[str] = None
    state: dict = field(default_factory=lambda: {"level": None})
    tau: object = "auto"
    anchor: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "SweepConfig":
        template = d["template"]
        if isinstance(template, str):
            with open(os.path.join(base_dir, template), encoding="utf-8") as fh:
                template = json.load(fh)
        params = [SweptParameter.from_dict(p) for p in d.get("parameters", [])]
        return cls(template, params, int(d.get("seed", 0)), int(d.get("workers", 1)), d.get("output"),
                   d.get("state", {"level": None}), d.get("tau", "auto"), d.get("anchor"))

    def cells(self) -> list:
        axes = [p.values for p in self.parameters]
        return [dict(zip([p.name for p in self.parameters], combo)) for combo in itertools.product(*axes)]


def _assign(doc: dict, path: str, value):
    head, *rest = path.split(".")
    target = doc[head]
    if not rest:
        doc[head] = value
        return
    key = rest[0]
    if isinstance(target, list):
        if key.isdigit():
            item = target[int(key)]
        else:
            matches = [x for x in target if x.get("name") == key]
            if not matches:
                raise KeyError(f"no entry named {key!r} in {head}")
            item = matches[0]
        if len(rest) == 1:
            raise KeyError(f"parameter path {path!r} must name a field")
        _assign_field(item, rest[1:], value, path)
    else:
        _assign_field(target, rest, value, path)


def _assign_field(obj: dict, rest, value, path):
    for key in rest[:-1]:
        obj = obj[key]
    obj[rest[-1]] = value


def prepare_from_spec(family: DressedFamily, spec: dict | None) -> PreparedState:
    """``{"level": name}``, ``{"dressed": m}`` or ``{"dressed": {m: c, ...}}``."""
    spec = spec or {"level": None}
    if "dressed" in spec:
        d = spec["dressed"]
        if isinstance(d, dict):
            d = {int(k): complex(*v) if isinstance(v, list) else complex(v) for k, v in d.items()}
        return PreparedState.dressed(family, d)
    level = spec.get("level") or family.offsets.anchor
    return PreparedState.level(family, level)


def resolve_tau(family: DressedFamily, prepared: PreparedState, tau):
    """Numeric tau, or the first return time for ``"auto"``."""
    if tau not in (None, "auto"):
        return float(tau)
    ds = family.at()
    found = find_return_times(ds, expand_initial(prepared.atomic, ds), hbar=family.scheme.settings.hbar,
                              max_results=1)
    if not found:
        raise ValueError("no return time found for the prepared state")
    return found[0]


def evaluate_cell(args) -> list[dict]:
    index, assignment, cfg = args
    doc = copy.deepcopy(cfg.template)
    base = {"cell": index, "params": json.dumps(assignment, sort_keys=True)}
    try:
        for path, value in assignment.items():
            _assign(doc, path, value)
        scheme = scheme_from_dict(doc)
    except (SchemeError, KeyError, IndexError, TypeError, ValueError) as exc:
        return [dict(base, status=f"invalid: {exc}")]
    offsets = solve_offsets(scheme, cfg.anchor)
    if isinstance(offsets, Rejection):
        return [dict(base, scheme_hash=scheme_hash(scheme), status=f"rejected: {offsets.reason}")]
    try:
        family = DressedFamily.from_scheme(scheme, cfg.anchor)
        prepared = prepare_from_spec(family, cfg.state)
        report = audit(family, prepared, resolve_tau(family, prepared, cfg.tau), seed=cfg.seed)
    except Exception as exc:  # noqa: BLE001 - a failing cell is recorded, not fatal
        return [dict(base, scheme_hash=scheme_hash(scheme), status=f"error: {exc}")]
    return [dict(row, **base, status="ok") for row in report.rows()]


SWEEP_COLUMNS = CSV_COLUMNS + ("cell", "status", "params")


def _completed_cells(path: str, fmt: str) -> set:
    if not path or not os.path.exists(path):
        return set()
    done = set()
    with open(path, encoding="utf-8") as fh:
        if fmt == "csv":
            for row in csv.DictReader(fh):
                done.add(int(row["cell"]))
        else:
            for line in fh:
                if line.strip():
                    done.add(int(json.loads(line)["cell"]))
    return done


def sweep(cfg: SweepConfig, fmt: str = "csv", workers: Optional[int] = None) -> list[dict]:
    """Full-factorial audit over the configured parameters.

    Rows are appended to ``cfg.output`` as cells finish (CSV or JSON lines);
    cells already present in the output are skipped.
    """
    workers = cfg.workers if workers is None else workers
    cells = cfg.cells()
    done = _completed_cells(cfg.output, fmt)
    todo = [(i, a, cfg) for i, a in enumerate(cells) if i not in done]
    fh = writer = None
    if cfg.output:
        new = not os.path.exists(cfg.output) or os.path.getsize(cfg.output) == 0
        fh = open(cfg.output, "a", newline="", encoding="utf-8")
        if fmt == "csv":
            writer = csv.DictWriter(fh, SWEEP_COLUMNS, extrasaction="ignore")
            if new:
                writer.writeheader()
    rows = []
    try:
        if workers > 1:
            pool = ProcessPoolExecutor(max_workers=workers)
            results = pool.map(evaluate_cell, todo)
        else:
            pool = None
            results = map(evaluate_cell, todo)
        for cell_rows in results:
            rows.extend(cell_rows)
            if fh is not None:
                for row in cell_rows:
                    if writer is not None:
                        writer.writerow(row)
                    else:
                        fh.write(json.dumps(row, default=float) + "\n")
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    return rows
