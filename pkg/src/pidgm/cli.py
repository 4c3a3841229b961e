"""Command line: ``pidgm train | eval | sweep | plot``."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, ExperimentConfig, dump_config, parse_config, parse_sweep_config
from .data import build_burgers_dataset, evaluation_grid, exact_burgers_solution, read_dataset_csv, write_dataset_csv
from .eval import (
    posterior_summary,
    read_summary_csv,
    relative_l2_error,
    run_sweep,
    uncertainty_profile_check,
    write_summary_csv,
)
from .gan import TrainingDiverged, load_checkpoint, save_checkpoint, train, write_history_csv
from .perf import tune_allocator
from .svg import heatmap, slice_panels

log = logging.getLogger("pidgm")

EXIT_ERROR = 1
EXIT_DIVERGED = 2
SLICE_TIMES = (0.25, 0.5, 0.75)


def _fail(msg: str, code: int = EXIT_ERROR):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load(path) -> ExperimentConfig:
    try:
        return parse_config(path)
    except ConfigError as exc:
        _fail(str(exc))


def _out_dir(flag, cfg_dir, default) -> Path:
    out = Path(flag or cfg_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Physics-informed deep generative models for the Burgers equation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment config (JSON/YAML).")
@click.option("--out-dir", default=None, help="Output directory (default: config out_dir or runs/train).")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
def cmd_train(config_path, out_dir, seed):
    """Train a model; writes checkpoint.json, history.csv, dataset.csv and config.resolved.json."""
    cfg = _load(config_path)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    out = _out_dir(out_dir, cfg.out_dir, "runs/train")
    (out / "config.resolved.json").write_text(dump_config(cfg))
    d = cfg.data
    ds = build_burgers_dataset(d.n_initial, d.n_boundary_per_side, d.n_collocation, d.noisy, cfg.seed)
    write_dataset_csv(ds, out / "dataset.csv")
    tune_allocator()

    def progress(step, ld, lg, lp):
        log.info("step %d  loss_D=%.5g  loss_G=%.5g  loss_PDE=%.5g", step, ld, lg, lp)

    tcfg = cfg.train_config()
    try:
        model, history = train(tcfg, ds, progress=progress)
    except TrainingDiverged as exc:
        _write_json(out / "diverged.json", {"step": exc.step, "losses": exc.losses})
        _fail(str(exc), EXIT_DIVERGED)
    write_history_csv(history, out / "history.csv")
    final = {}
    if history.rows:
        _, ld, lg, lp = history.rows[-1]
        final = {"loss_D": ld, "loss_G": lg, "loss_PDE": lp}
    save_checkpoint(model, tcfg, out / "checkpoint.json", final)
    click.echo(str(out / "checkpoint.json"))


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(), help="checkpoint.json from `pidgm train`.")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", default=None)
@click.option("--seed", type=int, default=None, help="Override the sampling seed.")
def cmd_eval(checkpoint, config_path, out_dir, seed):
    """Posterior mean/variance on the evaluation grid, error vs the exact solution, shock-uncertainty check."""
    cfg = _load(config_path)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    try:
        model, ck_cfg, _ = load_checkpoint(checkpoint)
    except (OSError, ValueError) as exc:
        _fail(f"cannot load checkpoint: {exc}")
    want = cfg.train_config()
    for name in ("generator_spec", "encoder_spec", "discriminator_spec"):
        if getattr(want, name) != getattr(ck_cfg, name):
            _fail(f"checkpoint {name} {getattr(ck_cfg, name)} does not match config {getattr(want, name)}")
    out = _out_dir(out_dir, cfg.out_dir, "runs/eval")
    (out / "config.resolved.json").write_text(dump_config(cfg))

    grid = evaluation_grid(cfg.eval.grid_nx, cfg.eval.grid_nt)
    summary = posterior_summary(model, grid, cfg.eval.n_samples, seed=cfg.seed)
    write_summary_csv(summary, out / "summary.csv")
    exact = exact_burgers_solution(grid[:, 0], grid[:, 1])
    report = {
        "rel_l2": relative_l2_error(summary.mean, exact),
        "n_points": int(len(grid)),
        "n_samples": cfg.eval.n_samples,
        "max_variance": float(summary.variance.max()),
    }
    _write_json(out / "report.json", report)
    profiles = [uncertainty_profile_check(summary, t).as_dict() for t in cfg.eval.profile_times]
    _write_json(out / "profile.json", {"checks": profiles, "passed": all(p["passed"] for p in profiles)})
    click.echo(json.dumps(report))


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Sweep config (study or axes).")
@click.option("--out-dir", default=None)
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes; 1 is bitwise reproducible.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
def cmd_sweep(config_path, out_dir, jobs, seed):
    """Sensitivity sweep; writes sweep.csv, sweep_summary.json, sweep_timings.csv and heatmaps."""
    try:
        sweep = parse_sweep_config(config_path)
    except ConfigError as exc:
        _fail(str(exc))
    if seed is not None:
        sweep = sweep.model_copy(update={"master_seed": seed})
    out = _out_dir(out_dir, sweep.base.out_dir, "runs/sweep")
    (out / "config.resolved.json").write_text(dump_config(sweep))
    tune_allocator()

    def progress(rec):
        log.info("cell %d trial %d %s: error=%.4g%s", rec.cell, rec.trial, rec.values, rec.error,
                 " (diverged)" if rec.diverged else "")

    result = run_sweep(sweep, jobs=max(jobs, 1), progress=progress)
    result.write_csv(out / "sweep.csv")
    result.write_json(out / "sweep_summary.json")
    result.write_timings(out / "sweep_timings.csv")
    names = list(result.axes)
    if len(names) == 2:
        _sweep_heatmap(result, names, out / "sweep_heatmap.svg")
    n_div = sum(r.diverged for r in result.records)
    click.echo(f"{len(result.records)} trials, {n_div} diverged -> {out / 'sweep.csv'}")


def _sweep_heatmap(result, names, path):
    from .svg import Figure, _colour

    rows, cols = result.axes[names[0]], result.axes[names[1]]
    summary = {(c[names[0]], c[names[1]]): c["median"] for c in result.cell_summary()}
    vals = np.array([[summary[(r, c)] if summary[(r, c)] is not None else np.inf for c in cols] for r in rows])
    logv = np.log10(np.clip(vals, 1e-12, 1e12))
    finite = logv[np.isfinite(vals)]
    lo, hi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    cw, ch = 80, 40
    fig = Figure(width=120 + cw * len(cols), height=90 + ch * len(rows))
    fig.text(60 + cw * len(cols) / 2, 24, f"median relative L2 error ({names[0]} x {names[1]})", size=13)
    for j, c in enumerate(cols):
        fig.text(100 + cw * j + cw / 2, 52, f"{names[1]}={c}", size=10)
    for i, r in enumerate(rows):
        fig.text(92, 60 + ch * i + ch / 2 + 4, f"{names[0]}={r}", size=10, anchor="end")
        for j in range(len(cols)):
            v = vals[i, j]
            colour = _colour((logv[i, j] - lo) / span) if np.isfinite(v) else "#808080"
            x, y = 100 + cw * j, 60 + ch * i
            fig.add(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{colour}" stroke="white"/>')
            fig.text(x + cw / 2, y + ch / 2 + 4, f"{v:.1e}" if np.isfinite(v) else "diverged", size=10)
    fig.save(path)


@main.command("plot")
@click.option("--summary", "summary_path", required=True, type=click.Path(), help="summary.csv from `pidgm eval`.")
@click.option("--dataset", "dataset_path", default=None, type=click.Path(), help="dataset.csv for training markers.")
@click.option("--out-dir", default=None)
def cmd_plot(summary_path, dataset_path, out_dir):
    """Mean and variance heatmaps, initial-condition panel and t-slices against the exact solution."""
    try:
        summary = read_summary_csv(summary_path)
    except (OSError, ValueError) as exc:
        _fail(str(exc))
    points = ic_points = None
    if dataset_path:
        try:
            ds = read_dataset_csv(dataset_path)
        except (OSError, ValueError) as exc:
            _fail(str(exc))
        points = ds.data[:, :2]
        ic_points = ds.data[np.array([k == "ic" for k in ds.kinds], dtype=bool)][:, [0, 2]]
    out = _out_dir(out_dir, None, Path(summary_path).parent)

    xs = np.unique(summary.grid[:, 0])
    ts = np.unique(summary.grid[:, 1])
    if len(xs) * len(ts) != len(summary.grid):
        _fail("summary is not a full (x, t) grid")
    order = np.lexsort((summary.grid[:, 0], summary.grid[:, 1]))
    mean = summary.mean[order].reshape(len(ts), len(xs))
    var = summary.variance[order].reshape(len(ts), len(xs))
    heatmap(xs, ts, mean, "predictive mean", points).save(out / "mean.svg")
    heatmap(xs, ts, var, "predictive variance", points).save(out / "variance.svg")

    def panel(t_req, pts=None):
        j = int(np.argmin(np.abs(ts - t_req)))
        title = f"t = {ts[j]:.4g}"
        if not np.isclose(ts[j], t_req):
            title += f" (nearest to {t_req})"
            click.echo(f"note: t={t_req} not on grid, using nearest slice t={ts[j]:.6g}", err=True)
        return {
            "x": xs,
            "mean": mean[j],
            "std": np.sqrt(np.maximum(var[j], 0.0)),
            "exact": exact_burgers_solution(xs, np.full_like(xs, ts[j])),
            "title": title,
            "points": pts,
        }

    slice_panels([panel(0.0, ic_points)], "initial condition, ").save(out / "initial_condition.svg")
    slice_panels([panel(t) for t in SLICE_TIMES]).save(out / "slices.svg")
    click.echo(str(out))


if __name__ == "__main__":
    main()
