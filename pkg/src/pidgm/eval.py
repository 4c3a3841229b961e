"""Posterior statistics, error metrics and the sensitivity sweep harness."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, SweepConfig
from .data import build_burgers_dataset, exact_burgers_solution, split_n_u, uniform_test_points
from .gan import ModelTriplet, TrainingDiverged, train
from .nn import NetworkParams, predict

__all__ = [
    "PosteriorSummary",
    "ProfileReport",
    "TrialRecord",
    "SweepResult",
    "posterior_summary",
    "relative_l2_error",
    "uncertainty_profile_check",
    "cell_experiment",
    "run_trial",
    "run_sweep",
    "write_summary_csv",
    "read_summary_csv",
    "DIVERGENCE_THRESHOLD",
]

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 10.0
# rows (grid points x samples) evaluated per batch; fixed so results do not
# depend on memory settings
_CHUNK_ROWS = 262144


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    grid: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    n_samples: int
    seed: int

    def __post_init__(self):
        if not (len(self.grid) == len(self.mean) == len(self.variance)):
            raise ValueError("field lengths must equal the grid length")


def posterior_summary(model, grid, n_samples: int = 2000, seed: int = 0) -> PosteriorSummary:
    """Monte Carlo mean and population variance of ``f(x, t, z)``, ``z ~ N(0, 1)``, per grid point."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    generator: NetworkParams = model.generator if isinstance(model, ModelTriplet) else model
    grid = np.asarray(grid, dtype=np.float64).reshape(-1, 2)
    if len(grid) == 0:
        raise ValueError("empty grid")
    rng = np.random.default_rng(seed)
    mean = np.empty(len(grid))
    var = np.empty(len(grid))
    per_chunk = max(1, _CHUNK_ROWS // n_samples)
    for start in range(0, len(grid), per_chunk):
        block = grid[start : start + per_chunk]
        z = rng.standard_normal((len(block), n_samples))
        inputs = np.empty((z.size, 3))
        inputs[:, 0] = np.repeat(block[:, 0], n_samples)
        inputs[:, 1] = np.repeat(block[:, 1], n_samples)
        inputs[:, 2] = z.ravel()
        u = predict(generator, inputs).reshape(len(block), n_samples)
        mean[start : start + len(block)] = u.mean(axis=1)
        var[start : start + len(block)] = u.var(axis=1)
    return PosteriorSummary(grid, mean, var, n_samples, seed)


def relative_l2_error(predicted, exact) -> float:
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    exact = np.asarray(exact, dtype=np.float64).ravel()
    if predicted.shape != exact.shape:
        raise ValueError("fields must have equal length")
    norm = np.linalg.norm(exact)
    if norm == 0.0:
        raise ValueError("exact field has zero norm")
    return float(np.linalg.norm(predicted - exact) / norm)


@dataclass(frozen=True)
class ProfileReport:
    t_requested: float
    t_slice: float
    x_star: float
    var_center: float
    var_shoulder: float
    ratio: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _nearest_slice(summary: PosteriorSummary, t: float) -> float:
    ts = np.unique(summary.grid[:, 1])
    k = int(np.argmin(np.abs(ts - t)))
    spacing = np.min(np.diff(ts)) if len(ts) > 1 else 0.0
    if abs(ts[k] - t) > 0.5 * spacing + 1e-12:
        raise ValueError(f"time slice t={t} is not on the summary grid")
    return float(ts[k])


def uncertainty_profile_check(
    summary: PosteriorSummary,
    t: float,
    center_window: float = 0.05,
    shoulder: float = 0.75,
    x_star_tol: float = 0.1,
) -> ProfileReport:
    """Locate the peak variance on the slice nearest ``t`` and compare centre vs shoulder.

    ``var_center`` averages the variance over ``|x| <= center_window``;
    ``var_shoulder`` over ``||x| - shoulder| <= center_window``.  Passes when the
    peak lies within ``x_star_tol`` of 0 and the centre/shoulder ratio exceeds 1.
    """
    t_slice = _nearest_slice(summary, t)
    on = summary.grid[:, 1] == t_slice
    x = summary.grid[on, 0]
    v = summary.variance[on]
    order = np.argsort(x, kind="stable")
    x, v = x[order], v[order]
    x_star = float(x[int(np.argmax(v))])
    center = np.abs(x) <= center_window
    shoulder_pts = np.abs(np.abs(x) - shoulder) <= center_window
    if not center.any() or not shoulder_pts.any():
        raise ValueError("slice does not cover x = 0 and |x| = 0.75")
    vc, vs = float(v[center].mean()), float(v[shoulder_pts].mean())
    if vs > 0:
        ratio = vc / vs
    else:
        ratio = math.inf if vc > 0 else 1.0
    passed = abs(x_star) <= x_star_tol and ratio > 1.0
    return ProfileReport(float(t), t_slice, x_star, vc, vs, ratio, passed)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class TrialRecord:
    cell: int
    trial: int
    values: dict
    seed: int
    error: float
    runtime_seconds: float
    diverged: bool


@dataclass
class SweepResult:
    axes: dict[str, list]
    trials_per_cell: int
    master_seed: int
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    def cells(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]

    def errors(self, **values) -> list[float]:
        return [r.error for r in self.records if all(r.values[k] == v for k, v in values.items())]

    def cell_summary(self) -> list[dict]:
        out = []
        for idx, values in enumerate(self.cells()):
            errs = np.array([r.error for r in self.records if r.cell == idx])
            finite = errs[np.isfinite(errs)]
            out.append(
                {
                    "cell": idx,
                    **values,
                    "n_trials": int(len(errs)),
                    "n_diverged": int(sum(r.diverged for r in self.records if r.cell == idx)),
                    "mean": float(finite.mean()) if len(finite) else None,
                    "std": float(finite.std()) if len(finite) else None,
                    # diverged trials count as +inf in the median; a non-finite median is reported as null
                    "median": _finite_or_none(np.median(errs)) if len(errs) else None,
                }
            )
        return out

    def write_csv(self, path) -> None:
        """Long format, one row per cell-trial.  Runtimes go to :meth:`write_timings`."""
        names = list(self.axes)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "trial", *names, "trial_seed", "error", "diverged"])
            for r in self.records:
                w.writerow([r.cell, r.trial, *(r.values[k] for k in names), r.seed, repr(r.error), int(r.diverged)])

    def write_timings(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "trial", "runtime_seconds"])
            for r in self.records:
                w.writerow([r.cell, r.trial, f"{r.runtime_seconds:.3f}"])

    def write_json(self, path) -> None:
        payload = {
            "axes": self.axes,
            "trials_per_cell": self.trials_per_cell,
            "master_seed": self.master_seed,
            "cells": self.cell_summary(),
        }
        Path(path).write_text(json.dumps(payload, indent=2, allow_nan=False, default=_json_default) + "\n")


def _finite_or_none(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def _json_default(o):
    raise TypeError(f"not serializable: {o!r}")


def cell_experiment(base: ExperimentConfig, values: dict) -> ExperimentConfig:
    """Apply one sweep cell's axis values to the base experiment."""
    train, model, data = {}, {}, {}
    for name, v in values.items():
        if name == "n_u":
            n_initial, per_side = split_n_u(v)
            data.update(n_initial=n_initial, n_boundary_per_side=per_side)
        elif name == "n_r":
            data["n_collocation"] = v
        elif name == "width":
            model.update(gen_width=v, enc_width=v, disc_width=v)
        elif name == "depth":
            # discriminator is one layer shallower than generator and encoder
            model.update(gen_layers=v, enc_layers=v, disc_layers=max(v - 1, 1))
        elif name in ("k_g", "k_d"):
            train[name] = v
        elif name != "seed":
            raise ValueError(f"unknown axis {name!r}")
    return base.with_overrides(train=train, model=model, data=data)


def trial_seed(master_seed: int, cell: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, cell, trial]).generate_state(1)[0])


def reference_test_set(cfg: ExperimentConfig):
    pts = uniform_test_points(cfg.eval.n_test, seed=cfg.eval.test_seed)
    return pts, exact_burgers_solution(pts[:, 0], pts[:, 1])


def run_trial(cfg: ExperimentConfig, seed: int, test=None) -> tuple[float, bool, ModelTriplet | None]:
    """Build the dataset, train with ``seed`` and score the predictive mean on the test set.

    Returns ``(error, diverged, model)``; a diverged run scores ``inf``.
    """
    d = cfg.data
    ds = build_burgers_dataset(d.n_initial, d.n_boundary_per_side, d.n_collocation, d.noisy, cfg.seed)
    pts, exact = test if test is not None else reference_test_set(cfg)
    try:
        model, _ = train(cfg.train_config(seed), ds)
    except TrainingDiverged as exc:
        log.warning("trial diverged: %s", exc)
        return math.inf, True, None
    summary = posterior_summary(model, pts, cfg.eval.test_samples, seed=cfg.eval.test_seed)
    err = relative_l2_error(summary.mean, exact)
    if not math.isfinite(err) or err > DIVERGENCE_THRESHOLD:
        return err if math.isfinite(err) else math.inf, True, model
    return err, False, model


def _run_cell_trial(args):
    cfg_json, cell, trial, seed = args
    from .perf import tune_allocator

    tune_allocator()
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    t0 = time.perf_counter()
    err, diverged, _ = run_trial(cfg, seed)
    return cell, trial, seed, err, time.perf_counter() - t0, diverged


def run_sweep(sweep: SweepConfig, jobs: int = 1, progress=None) -> SweepResult:
    """Train and score every (cell, trial) of the Cartesian product of the sweep axes.

    Trial seeds derive from ``(master_seed, cell index, trial index)``.  Results
    are gathered in cell/trial order whatever ``jobs`` is.
    """
    result = SweepResult({k: list(v) for k, v in sweep.axes.items()}, sweep.trials_per_cell, sweep.master_seed)
    tasks = []
    for cell, values in enumerate(result.cells()):
        cfg = cell_experiment(sweep.base, values)
        for trial in range(sweep.trials_per_cell):
            tasks.append((cfg.model_dump_json(), cell, trial, trial_seed(sweep.master_seed, cell, trial)))
    cells = result.cells()
    if jobs <= 1:
        outputs = map(_run_cell_trial, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        outputs = pool.map(_run_cell_trial, tasks)
    try:
        for cell, trial, seed, err, runtime, diverged in outputs:
            rec = TrialRecord(cell, trial, cells[cell], seed, err, runtime, diverged)
            result.records.append(rec)
            if progress is not None:
                progress(rec)
    finally:
        if jobs > 1:
            pool.shutdown()
    return result


# ---------------------------------------------------------------------------
# summary CSV


def write_summary_csv(summary: PosteriorSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "mean", "variance"])
        for (x, t), m, v in zip(summary.grid, summary.mean, summary.variance):
            w.writerow([repr(float(x)), repr(float(t)), repr(float(m)), repr(float(v))])


def read_summary_csv(path) -> PosteriorSummary:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty summary file") from None
        missing = [c for c in ("x", "t", "mean", "variance") if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in ("x", "t", "mean", "variance")]
        rows = []
        for line, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[c]) for c in cols])
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{line}: malformed row") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    return PosteriorSummary(arr[:, :2], arr[:, 2], arr[:, 3], n_samples=0, seed=0)
