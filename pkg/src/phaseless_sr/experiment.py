"""Seeded phase-transition experiments and the single-instance pipeline."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable

import numpy as np

from . import sdp
from .localization import RecoveryResult, _jsonable, extract_signal, localize, matched_distances, time_error
from .measurement import band_from_masks, random_measurements, theorem2_masks
from .recovery import RANK1_RATIO, phaselift, q_complete, solve_phaseless_anm, standard_anm
from .signal import ImpulseSignal, fourier_synthesize, normalize_phase, random_instance

log = logging.getLogger(__name__)

STANDARD_ANM = "standard_anm"
PHASELESS_ANM = "phaseless_anm"
PHASELIFT_ANM = "phaselift_anm"
Q_COMPLETION = "q_completion"
METHODS = (STANDARD_ANM, PHASELESS_ANM, PHASELIFT_ANM, Q_COMPLETION)

MASKS = "masks"
RANDOM = "random"

NONZERO_GUARD = 1e-6
MAX_REDRAWS = 100

CSV_COLUMNS = (
    "method",
    "delta_t",
    "m_or_q",
    "k",
    "trials",
    "successes",
    "probability",
    "mean_time_error_on_success",
    "mean_solve_seconds",
)


@dataclass
class ExperimentConfig:
    """Grid definition.  ``None`` axes take the full-scale defaults for the figure being run."""

    n: int = 32
    k: int = 2
    trials: int = 50
    seed: int = 0
    methods: tuple[str, ...] | None = None
    separations: tuple[float, ...] | None = None  # fig1 x-axis
    sizes: tuple[int, ...] | None = None  # fig1: m values; fig2: q values
    ks: tuple[int, ...] | None = None  # fig2 sparsity axis
    separation: float | None = None  # fig2 minimum separation, default 4/n
    tol: float = sdp.DEFAULT_TOL
    max_iters: int = sdp.DEFAULT_MAX_ITERS
    threshold: float = 1e-3
    rank_tol: float = 1e-6
    time_limit: float | None = 30.0
    workers: int = 1
    out: str | None = None

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        bad = set(self.methods or ()) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        if self.tol <= 0 or self.threshold <= 0:
            raise ValueError("tol and threshold must be positive")

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        for key in ("methods", "separations", "sizes", "ks"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def fig1_defaults(cfg: ExperimentConfig) -> ExperimentConfig:
    """Separation i/n for i = 1..11, m = 2..30, standard vs phaseless ANM."""
    return replace(
        cfg,
        methods=cfg.methods or (STANDARD_ANM, PHASELESS_ANM),
        separations=cfg.separations or tuple(i / cfg.n for i in range(1, 12)),
        sizes=cfg.sizes or tuple(range(2, 31)),
    )


def fig2_defaults(cfg: ExperimentConfig) -> ExperimentConfig:
    """q = 8..128 step 8, k = 1..6, separation 4/n, phaseless ANM vs PhaseLift + ANM."""
    return replace(
        cfg,
        methods=cfg.methods or (PHASELESS_ANM, PHASELIFT_ANM),
        sizes=cfg.sizes or tuple(range(8, 129, 8)),
        ks=cfg.ks or tuple(range(1, 7)),
        separation=cfg.separation if cfg.separation is not None else 4 / cfg.n,
    )


K10_PRESET = {"k": 10, "separations": (1 / 32, 2 / 32, 3 / 32)}


# --------------------------------------------------------------------------
# Single instance


def draw_instance(k: int, separation: float, seed: int, m: int, guard: bool = False) -> ImpulseSignal:
    """Seeded instance; with ``guard`` redraw until every ``|X_j| >= 1e-6`` on the window."""
    sig = random_instance(k, separation, seed)
    attempt = 0
    while guard and np.min(np.abs(fourier_synthesize(sig, m))) < NONZERO_GUARD:
        attempt += 1
        if attempt > MAX_REDRAWS:
            raise RuntimeError(f"seed {seed}: no instance with all |X_j| >= {NONZERO_GUARD}")
        sig = random_instance(k, separation, [seed, attempt])
    return sig


def _fail(method, reason, m, diagnostics) -> RecoveryResult:
    return RecoveryResult(ImpulseSignal([], []), np.zeros(m, complex), method, False, reason, diagnostics)


def recover_once(
    signal: ImpulseSignal,
    method: str,
    family: str = MASKS,
    m: int = 32,
    q: int | None = None,
    seed: int = 0,
    tol: float = sdp.DEFAULT_TOL,
    max_iters: int = sdp.DEFAULT_MAX_ITERS,
    rank_tol: float = 1e-6,
    time_limit: float | None = None,
) -> RecoveryResult:
    """Measure ``signal`` on the first ``m`` frequencies and recover it with ``method``.

    ``standard_anm`` observes the complex coefficients; the other methods see
    only magnitudes from ``family`` (the 3m - 2 masks, or ``q`` random
    Gaussian vectors seeded from ``seed``).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    X = fourier_synthesize(signal, m)
    opts = dict(tol=tol, max_iters=max_iters, time_limit=time_limit)
    solves: list[dict] = []
    diagnostics = {"solves": solves}
    t0 = time.perf_counter()

    def finish(res: RecoveryResult) -> RecoveryResult:
        res.diagnostics["seconds"] = time.perf_counter() - t0
        return res

    if method == STANDARD_ANM:
        x_hat = normalize_phase(X)
        anm = standard_anm(x_hat, **opts)
        solves.append(anm.diagnostics)
        if anm.status != sdp.OPTIMAL:
            return finish(_fail(method, f"solver status {anm.status}", m, diagnostics))
        return finish(localize(x_hat, anm.u, method, rank_tol, diagnostics))

    if family == MASKS:
        ms = theorem2_masks(X)
    elif family == RANDOM:
        if q is None:
            raise ValueError("random measurements need q")
        ms = random_measurements(X, q, [seed, 1])
    else:
        raise ValueError(f"unknown measurement family {family!r}")
    diagnostics["q"] = ms.q

    if method == PHASELESS_ANM:
        sol = solve_phaseless_anm(ms, **opts)
        solves.append(sol.diagnostics)
        diagnostics["objective"] = sol.objective
        if not sol.optimal:
            return finish(_fail(method, f"solver status {sol.status}", m, diagnostics))
        return finish(extract_signal(sol.Q_hat, sol.u_hat, rank_tol, method, diagnostics))

    if method == PHASELIFT_ANM:
        pl = phaselift(ms, **opts)
        solves.append(pl.diagnostics)
        diagnostics["phaselift_eig_ratio"] = pl.diagnostics.get("eig_ratio")
        if pl.status != sdp.OPTIMAL:
            return finish(_fail(method, f"solver status {pl.status}", m, diagnostics))
        if pl.diagnostics.get("eig_ratio", np.inf) > RANK1_RATIO:
            return finish(_fail(method, "phase retrieval lift is not rank one", m, diagnostics))
        x_hat = pl.x_hat
    else:  # Q_COMPLETION
        try:
            _, x_hat = q_complete(band_from_masks(ms))
        except ValueError as exc:
            return finish(_fail(method, str(exc), m, diagnostics))

    anm = standard_anm(x_hat, **opts)
    solves.append(anm.diagnostics)
    if anm.status != sdp.OPTIMAL:
        return finish(_fail(method, f"solver status {anm.status}", m, diagnostics))
    return finish(localize(x_hat, anm.u, method, rank_tol, diagnostics))


# --------------------------------------------------------------------------
# Grids


@dataclass
class TrialRecord:
    method: str
    cell: int
    delta_t: float
    m_or_q: int
    k: int
    seed: int
    success: bool
    time_error: float
    distances: list[float]
    seconds: float
    reason: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class CellResult:
    method: str
    delta_t: float
    m_or_q: int
    k: int
    trials: int
    successes: int
    errors: list[float]
    seconds: list[float]

    @property
    def probability(self) -> float:
        return self.successes / self.trials

    def row(self) -> dict:
        ok = [e for e in self.errors if np.isfinite(e)]
        return {
            "method": self.method,
            "delta_t": self.delta_t,
            "m_or_q": self.m_or_q,
            "k": self.k,
            "trials": self.trials,
            "successes": self.successes,
            "probability": self.probability,
            "mean_time_error_on_success": float(np.mean(ok)) if ok else float("nan"),
            "mean_solve_seconds": float(np.mean(self.seconds)),
        }


@dataclass
class GridResult:
    figure: str
    config: ExperimentConfig
    cells: list[CellResult]
    records: list[TrialRecord]

    def cell(self, method: str, delta_t: float | None = None, m_or_q: int | None = None, k: int | None = None):
        for c in self.cells:
            if (c.method == method and (delta_t is None or np.isclose(c.delta_t, delta_t))
                    and (m_or_q is None or c.m_or_q == m_or_q) and (k is None or c.k == k)):
                return c
        raise KeyError((method, delta_t, m_or_q, k))

    def success_vector(self, method: str) -> list[bool]:
        return [r.success for r in self.records if r.method == method]

    def signature(self) -> list[tuple]:
        """Everything except wall-clock timings; equal across replays of one config."""
        return [(r.method, r.cell, r.seed, r.success, r.time_error, r.reason) for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for c in self.cells:
                w.writerow(c.row())

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict()) + "\n")


@dataclass(frozen=True)
class _Task:
    method: str
    cell: int
    delta_t: float
    m_or_q: int
    k: int
    seed: int
    family: str
    m: int
    q: int | None
    guard: bool


def _run_task(task: _Task, cfg: ExperimentConfig) -> TrialRecord:
    truth = draw_instance(task.k, task.delta_t, task.seed, task.m, task.guard)
    res = recover_once(truth, task.method, task.family, task.m, task.q, task.seed,
                       tol=cfg.tol, max_iters=cfg.max_iters, rank_tol=cfg.rank_tol,
                       time_limit=cfg.time_limit)
    err = time_error(res.signal, truth) if res.ok else np.inf
    dist = matched_distances(res.signal, truth) if res.ok else np.full(truth.k, np.inf)
    return TrialRecord(
        task.method, task.cell, task.delta_t, task.m_or_q, task.k, task.seed,
        bool(err < cfg.threshold), err, dist.tolist(), res.diagnostics.get("seconds", 0.0),
        res.reason, {"truth": truth.to_dict(), "estimate": res.signal.to_dict(), **res.diagnostics},
    )


def _execute(tasks: list[_Task], cfg: ExperimentConfig) -> list[TrialRecord]:
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_run_task, tasks, [cfg] * len(tasks)))
    out = []
    for i, t in enumerate(tasks):
        out.append(_run_task(t, cfg))
        log.debug("trial %d/%d %s cell %d seed %d -> %s", i + 1, len(tasks), t.method, t.cell, t.seed,
                  out[-1].success)
    return out


def _reduce(figure, cfg, cells_spec, tasks, records) -> GridResult:
    cells = []
    for cell, (delta_t, m_or_q, k) in enumerate(cells_spec):
        for method in cfg.methods:
            recs = [r for r in records if r.cell == cell and r.method == method]
            cells.append(CellResult(method, delta_t, m_or_q, k, len(recs), sum(r.success for r in recs),
                                    [r.time_error for r in recs if r.success], [r.seconds for r in recs]))
    return GridResult(figure, cfg, cells, records)


def _tasks(cfg, cells_spec, family, window, guard) -> list[_Task]:
    tasks = []
    for cell, (delta_t, m_or_q, k) in enumerate(cells_spec):
        m = window(m_or_q)
        q = m_or_q if family == RANDOM else None
        for trial in range(cfg.trials):
            seed = cfg.seed + cell * cfg.trials + trial
            for method in cfg.methods:
                tasks.append(_Task(method, cell, delta_t, m_or_q, k, seed, family, m, q, guard))
    return tasks


def run_fig1(cfg: ExperimentConfig) -> GridResult:
    """Success probability over (separation, number of low frequencies m) for k-impulse signals.

    Standard ANM observes the complex coefficients on the first ``m``
    frequencies; the magnitude-only methods get the 3m - 2 mask magnitudes.
    Cells are ordered separation-major; trial seed is
    ``seed + cell * trials + trial`` and every method sees the same instance.
    """
    cfg = fig1_defaults(cfg)
    cfg.validate()
    bad = set(cfg.methods) - {STANDARD_ANM, PHASELESS_ANM, Q_COMPLETION}
    if bad:
        raise ValueError(f"methods {sorted(bad)} do not use the mask family of this figure")
    for dt in cfg.separations:
        if cfg.k > 1 and cfg.k * dt >= 1:
            raise ValueError(f"k * separation = {cfg.k * dt:g} >= 1")
    cells_spec = [(dt, m, cfg.k) for dt in cfg.separations for m in cfg.sizes]
    tasks = _tasks(cfg, cells_spec, MASKS, lambda m: m, guard=True)
    return _reduce("fig1", cfg, cells_spec, tasks, _execute(tasks, cfg))


def run_fig2(cfg: ExperimentConfig) -> GridResult:
    """Success probability over (number of random magnitudes q, sparsity k), window m = n.

    Each trial draws fresh Gaussian measurement vectors; all methods share the
    instance and the measurement set.
    """
    cfg = fig2_defaults(cfg)
    cfg.validate()
    bad = set(cfg.methods) - {PHASELESS_ANM, PHASELIFT_ANM}
    if bad:
        raise ValueError(f"methods {sorted(bad)} do not apply to random magnitude measurements")
    for k in cfg.ks:
        if k > 1 and k * cfg.separation >= 1:
            raise ValueError(f"k * separation = {k * cfg.separation:g} >= 1")
    cells_spec = [(cfg.separation, q, k) for q in cfg.sizes for k in cfg.ks]
    tasks = _tasks(cfg, cells_spec, RANDOM, lambda q: cfg.n, guard=False)
    return _reduce("fig2", cfg, cells_spec, tasks, _execute(tasks, cfg))


def paired_summary(grid: GridResult, method: str = PHASELESS_ANM, baseline: str = PHASELIFT_ANM) -> list[dict]:
    """Per-cell success rates of ``method`` and ``baseline`` on the same trials."""
    rows = []
    for c in grid.cells:
        if c.method != method:
            continue
        b = grid.cell(baseline, c.delta_t, c.m_or_q, c.k)
        rows.append({"m_or_q": c.m_or_q, "k": c.k, method: c.probability, baseline: b.probability})
    return rows


def iter_solver_records(records: Iterable[TrialRecord]):
    """Every SDP solve diagnostic attached to a batch of trial records."""
    for r in records:
        yield from r.diagnostics.get("solves", [])
