"""Run experiments end to end and write their artifacts.

Artifact directory layout (every file names the config hash and seed)::

    metrics.json            final errors, losses, multipliers, counters, config echo
    timing.json             wall time (kept apart so metrics.json is reproducible)
    lambda_trajectory.csv   epoch, constraint, lambda, loss
    per_coefficient.csv     relative error per evaluation coefficient (parametric runs)
    sample_histograms.csv   MH sample histograms for the dumped epochs
    samples_epoch<k>.csv    raw MH samples of dumped epochs
    checkpoint.json         trained network
    abort.json              diagnostics, only when training was aborted
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..bvp import BVPSpec, pde_residual_batch
from ..errors import ConfigError, PdesclError, TrainingAborted
from ..jets import MLP, AnalyticField, forward, load_checkpoint, save_checkpoint
from ..oracles import ErrorReport, EvalGrid, oracle_field, relative_l2
from ..sampler import MHResult, chain_diagnostics, mh_run, write_samples_csv
from ..trainer import TrainReport, _build_terms, pinn_baseline, train
from .config import ExperimentConfig, load_config, parse_config
from .presets import PRESETS, preset

OUTPUT_ROOT_ENV = "PDESCL_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


@dataclass
class RunOutcome:
    status: int
    directory: Path | None
    metrics: dict | None = None
    report: TrainReport | None = None
    message: str = ""


def resolve_config(source: str | Path | Mapping | ExperimentConfig) -> ExperimentConfig:
    """Accept a config object, a raw mapping, a JSON file path or a preset name."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, Mapping):
        return parse_config(dict(source))
    path = Path(source)
    if path.exists():
        return load_config(path)
    if str(source) in PRESETS:
        return parse_config(preset(str(source)))
    raise ConfigError([f"{source}: no such file or preset"])


def output_dir(cfg: ExperimentConfig, output_root: str | Path | None = None) -> Path:
    root = Path(output_root or os.environ.get(OUTPUT_ROOT_ENV) or "runs")
    return root / (cfg.data["output"]["directory"] or cfg.name)


def _stamp(cfg: ExperimentConfig) -> str:
    return f"# config_hash={cfg.hash} seed={cfg.seed}"


def _dump_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ----------------------------------------------------------------------------
# evaluation


def _predict(model: MLP, spec: BVPSpec, points: np.ndarray, pi=None, chunk: int = 20000) -> np.ndarray:
    inputs = spec.model_inputs(points, pi)
    return np.concatenate([forward(model, inputs[i : i + chunk], order=0).value for i in range(0, len(inputs), chunk)])


def evaluate(
    checkpoint: MLP | str | Path,
    spec: BVPSpec,
    grid: EvalGrid,
    coefficient_grid: Sequence[Sequence[float]] | None = None,
    dt: float = 1e-3,
) -> ErrorReport:
    """Relative L2 and max error against the oracle on ``grid``.

    Parametric problems average the relative error over ``coefficient_grid``.
    """
    model = checkpoint if isinstance(checkpoint, (MLP, AnalyticField)) else load_checkpoint(checkpoint)[0]
    pts = grid.points
    if not spec.parametric:
        ref = oracle_field(spec, grid, dt=dt)
        pred = _predict(model, spec, pts)
        return ErrorReport(relative_l2(pred, ref), float(np.max(np.abs(pred - ref))))
    if not coefficient_grid:
        raise PdesclError("parametric evaluation needs a coefficient grid")
    rows, worst = [], 0.0
    for pi in coefficient_grid:
        p = tuple(float(v) for v in pi)
        ref = oracle_field(spec, grid, p, dt=dt)
        pred = _predict(model, spec, pts, p)
        rows.append((p, relative_l2(pred, ref)))
        worst = max(worst, float(np.max(np.abs(pred - ref))))
    return ErrorReport(float(np.mean([e for _, e in rows])), worst, rows)


def fresh_pde_loss(model: MLP, spec: BVPSpec, n: int, seed: int) -> float:
    """Mean squared residual over ``n`` fresh uniform points of the domain (and coefficient box)."""
    rng = np.random.default_rng(seed)
    pts = spec.domain.uniform(rng, n)
    coeffs = spec.coeffs.uniform(rng, n) if spec.parametric else None
    inputs = spec.model_inputs(pts, coeffs)
    total = 0.0
    for i in range(0, n, 5000):
        jets = forward(model, inputs[i : i + 5000], order=spec.residual_order, wrt=spec.derivative_coords)
        r, _ = pde_residual_batch(spec, jets, None if coeffs is None else coeffs[i : i + 5000])
        total += float(np.sum(r * r))
    return total / n


def complexity_report(a: TrainReport | Mapping, b: TrainReport | Mapping) -> float:
    """``100 * (evals per epoch of a) / (evals per epoch of b)``."""

    def per_epoch(r) -> float:
        if isinstance(r, TrainReport):
            evals, epochs = r.operator_evals, r.epochs
        else:
            evals, epochs = r["operator_evals"], r["epochs"]
        if epochs == 0:
            raise PdesclError("report covers zero epochs")
        return evals / epochs

    denom = per_epoch(b)
    if denom == 0:
        raise PdesclError("second report has no operator evaluations")
    return 100.0 * per_epoch(a) / denom


# ----------------------------------------------------------------------------
# artifacts


def _write_trajectory(path: Path, cfg: ExperimentConfig, report: TrainReport) -> None:
    mult = {n: i for i, n in enumerate(report.multiplier_names)}
    lines = [_stamp(cfg), "epoch,constraint,lambda,loss"]
    for k in range(report.epochs):
        for i, name in enumerate(report.names):
            lam = repr(float(report.lambdas[k, mult[name]])) if name in mult else ""
            lines.append(f"{k},{name},{lam},{float(report.losses[k, i])!r}")
    path.write_text("\n".join(lines) + "\n")


def _columns(spec: BVPSpec) -> list[str]:
    space = ["x", "y"][: spec.domain.space_dim]
    cols = space + (["t"] if spec.domain.has_time else [])
    return cols + (list(spec.coeff_names) if spec.parametric else [])


def _histogram_rows(epoch: int, name: str, samples: np.ndarray, lo: np.ndarray, hi: np.ndarray, bins: int, cols) -> list[str]:
    rows = []
    for axis in range(samples.shape[1]):
        counts, edges = np.histogram(samples[:, axis], bins=bins, range=(lo[axis], hi[axis]))
        for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
            rows.append(f"{epoch},{name},{cols[axis]},{float(e0)!r},{float(e1)!r},{int(c)}")
    return rows


def _write_sample_dumps(directory: Path, cfg: ExperimentConfig, report: TrainReport) -> None:
    spec = cfg.bvp()
    cols = _columns(spec)
    bins = cfg.data["evaluation"]["histogram_bins"]
    lo = np.concatenate([spec.domain.lo, np.array(spec.coeffs.lo)]) if spec.parametric else spec.domain.lo
    hi = np.concatenate([spec.domain.hi, np.array(spec.coeffs.hi)]) if spec.parametric else spec.domain.hi
    mh_names = {c.name for c in cfg.constraints() if c.policy == "mh" and c.kind in ("pde", "invariance")}
    hist = [_stamp(cfg), "epoch,constraint,axis,bin_lo,bin_hi,count"]
    for epoch in sorted(report.sample_dumps):
        for name, inputs in sorted(report.sample_dumps[epoch].items()):
            if name not in mh_names:
                continue
            samples = inputs[: len(inputs) // 2] if name.startswith("invariance") else inputs
            write_samples_csv(directory / f"samples_epoch{epoch}_{name}.csv", samples, cols, epoch, comment=_stamp(cfg))
            hist += _histogram_rows(epoch, name, samples, lo, hi, bins, cols)
    (directory / "sample_histograms.csv").write_text("\n".join(hist) + "\n")


def build_metrics(cfg: ExperimentConfig, report: TrainReport, error: ErrorReport, extra: dict) -> dict:
    out = {
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "preset": cfg.data.get("preset"),
        "problem": cfg.data["problem"]["id"],
        "mode": report.mode,
        "epochs": report.epochs,
        "relative_l2": error.relative_l2,
        "max_abs_error": error.max_abs_error,
        "final_losses": report.final_losses(),
        "final_lambdas": report.final_lambdas(),
        "operator_evals": report.operator_evals,
        "operator_evals_per_epoch": report.operator_evals / report.epochs if report.epochs else 0.0,
        "operator_evals_total": report.operator_evals_total,
        "reference": "strang_splitting" if cfg.data["problem"]["id"] == "reaction_diffusion" else "analytic",
        "config": cfg.to_dict(),
    }
    if error.per_coefficient is not None:
        out["per_coefficient"] = [{"coefficients": list(c), "relative_l2": e} for c, e in error.per_coefficient]
    out.update(extra)
    return out


def _observation_errors(model: MLP, problem) -> list[float]:
    errs = []
    for obs in problem.observations:
        pred = _predict(model, problem.bvp, obs.grid.points, obs.coefficients)
        errs.append(relative_l2(pred, obs.field))
    return errs


def execute(cfg: ExperimentConfig, directory: Path | None = None, progress=None) -> tuple[TrainReport, dict]:
    """Train, evaluate and (when ``directory`` is given) write every artifact."""
    spec = cfg.bvp()
    problem = cfg.problem()
    constraints = cfg.constraints()
    tc = cfg.train_config()
    runner = pinn_baseline if tc.mode == "pinn" else train
    report = runner(problem, constraints, tc, progress=progress)
    ev = cfg.data["evaluation"]
    extra: dict[str, Any] = {}
    if problem.observations:
        errs = _observation_errors(report.model, problem)
        extra["observation_train_errors"] = errs
        extra["max_observation_train_error"] = max(errs)
        error = evaluate(report.model, spec, cfg.eval_grid(spec), cfg.coefficient_grid() or [o.coefficients for o in problem.observations], ev["dt"])
    else:
        error = evaluate(report.model, spec, cfg.eval_grid(spec), cfg.coefficient_grid(), ev["dt"])
    if ev["fresh_points"] > 0:
        extra["fresh_pde_loss"] = fresh_pde_loss(report.model, spec, ev["fresh_points"], cfg.seed + 1)
    metrics = build_metrics(cfg, report, error, extra)
    if directory is not None:
        directory.mkdir(parents=True, exist_ok=True)
        _dump_json(directory / "metrics.json", metrics)
        _dump_json(directory / "timing.json", {"config_hash": cfg.hash, "seed": cfg.seed, "wall_time_seconds": report.wall_time})
        _write_trajectory(directory / "lambda_trajectory.csv", cfg, report)
        if error.per_coefficient is not None:
            lines = [_stamp(cfg), ",".join(list(spec.coeff_names) + ["relative_l2"])]
            lines += [",".join(repr(v) for v in c) + f",{e!r}" for c, e in error.per_coefficient]
            (directory / "per_coefficient.csv").write_text("\n".join(lines) + "\n")
        _write_sample_dumps(directory, cfg, report)
        save_checkpoint(report.model, directory / "checkpoint.json", {"config_hash": cfg.hash, "seed": cfg.seed, "preset": cfg.data.get("preset")})
    return report, metrics


def run_experiment(source, output_root: str | Path | None = None, progress=None) -> RunOutcome:
    """Validate, train, evaluate and write artifacts; never raises for config or runtime aborts."""
    try:
        cfg = resolve_config(source)
    except ConfigError as exc:
        return RunOutcome(EXIT_CONFIG, None, message=str(exc))
    directory = output_dir(cfg, output_root)
    try:
        report, metrics = execute(cfg, directory, progress)
    except ConfigError as exc:
        return RunOutcome(EXIT_CONFIG, directory, message=str(exc))
    except TrainingAborted as exc:
        directory.mkdir(parents=True, exist_ok=True)
        _dump_json(directory / "abort.json", {"config_hash": cfg.hash, "seed": cfg.seed, "message": str(exc), "diagnostics": exc.diagnostics})
        return RunOutcome(EXIT_ABORT, directory, message=str(exc))
    except PdesclError as exc:
        return RunOutcome(EXIT_ABORT, directory, message=str(exc))
    return RunOutcome(EXIT_OK, directory, metrics, report)


def sample_diagnostics(source, checkpoint: str | Path | None = None, output_root: str | Path | None = None, seed: int | None = None) -> dict[str, dict]:
    """Draw one epoch of MH samples per MH constraint and write their histograms.

    Uses the initialized network unless a checkpoint is given.
    """
    cfg = resolve_config(source)
    spec = cfg.bvp()
    problem = cfg.problem()
    tc = cfg.train_config()
    model = load_checkpoint(checkpoint)[0] if checkpoint else MLP.glorot([spec.input_width, *tc.hidden, 1], tc.seed)
    rng = np.random.default_rng(tc.seed if seed is None else seed)
    terms = _build_terms(problem, cfg.constraints(), rng)
    directory = output_dir(cfg, output_root)
    directory.mkdir(parents=True, exist_ok=True)
    cols = _columns(spec)
    bins = cfg.data["evaluation"]["histogram_bins"]
    out = {}
    hist = [_stamp(cfg), "epoch,constraint,axis,bin_lo,bin_hi,count"]
    for t in terms:
        if t.spec.policy != "mh" or t.spec.kind not in ("pde", "invariance"):
            continue
        result: MHResult = mh_run(lambda z, t=t: t.pointwise_loss(model, z), t.joint_lo, t.joint_hi, t.spec.proposal, rng)
        diag = chain_diagnostics(result, bins)
        write_samples_csv(directory / f"diagnostic_samples_{t.name}.csv", result.samples, cols, 0, comment=_stamp(cfg))
        hist += _histogram_rows(0, t.name, result.samples, result.lo, result.hi, bins, cols)
        out[t.name] = {"acceptance_rate": diag.acceptance_rate, "loss_evaluations": result.loss_evaluations}
    (directory / "diagnostic_histograms.csv").write_text("\n".join(hist) + "\n")
    _dump_json(directory / "diagnostics.json", {"config_hash": cfg.hash, "seed": cfg.seed, "constraints": out})
    return out
