"""Experiment configuration: schema validation, defaults, and object wiring.

Configs are JSON documents.  ``parse_config`` validates against the shipped
schema, reports every violation at once, fills defaults and returns an
:class:`ExperimentConfig` whose ``to_dict`` re-parses to an equal value.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .. import bvp as bvp_mod
from ..errors import ConfigError, PdesclError
from ..oracles import EvalGrid, default_grid, synthesize_observations
from ..sampler import ProposalSpec
from ..trainer import ConstraintSpec, Observation, Problem, TrainConfig, validate_constraints

SCHEMA_VERSION = 1
SCHEMA: dict = json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())

_TRAIN_DEFAULTS = {
    "mode": "scl",
    "epochs": 30000,
    "lr_primal": 1e-3,
    "lr_dual": 1e-4,
    "decay_factor": 0.9,
    "decay_every": 5000,
    "decay_dual": True,
    "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "seed": 0,
    "weights": {},
    "primal_steps_per_dual": 1,
    "divergence_threshold": 1e6,
    "dump_epochs": None,  # None dumps the final epoch only
}
_CONSTRAINT_DEFAULTS = {
    "tolerance": 0.0,
    "policy": "fixed",
    "batch": 1000,
    "role": "constraint",
    "transform": 0,
    "coefficient_policy": "uniform",
    "coefficient_steps": 10,
}
_PROPOSAL_DEFAULTS = {"n_steps": 5000, "n_keep": 1000, "chains": 1}
_BOUNDARY_DEFAULTS = {"n_initial": 256, "n_face": 100, "n_shape": 2234, "n_outer": 40}
_OBSERVATION_DEFAULTS = {"noise_std": 0.0, "seed": 0, "tolerance": 0.0, "policy": "grid", "batch": 1000}
_EVAL_DEFAULTS = {"fresh_points": 10000, "dt": 1e-3, "histogram_bins": 50}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else (("." if parts else "") + str(p)))
    return "".join(parts) or "<root>"


def schema_issues(raw: Any) -> list[str]:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [f"{_path(e)}: {e.message}" for e in errors]


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated, default-filled configuration."""

    data: dict

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    @property
    def hash(self) -> str:
        body = {k: v for k, v in self.data.items() if k != "output"}
        return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return int(self.data["train"]["seed"])

    @property
    def name(self) -> str:
        return self.data.get("preset") or f"{self.data['problem']['id']}_{self.hash}"

    def with_overrides(self, **train) -> "ExperimentConfig":
        d = self.to_dict()
        d["train"].update(train)
        return parse_config(d)

    # -- wiring ---------------------------------------------------------

    def bvp(self) -> bvp_mod.BVPSpec:
        p = self.data["problem"]
        kw: dict[str, Any] = {}
        for name, value in p.get("coefficients", {}).items():
            kw[name] = tuple(value) if isinstance(value, list) else value
        if p["id"] == "helmholtz":
            kw["k"] = p.get("wave_number", 1.0)
        if p["id"] == "eikonal":
            kw["shape"] = _shape(p.get("shape", {"type": "two_circles"}))
        return bvp_mod.make_bvp(p["id"], **kw)

    def proposal(self, c: dict) -> ProposalSpec | None:
        if "proposal" not in c:
            return None
        p = c["proposal"]
        return ProposalSpec(tuple(p["variances"]), p["n_steps"], p["n_keep"], p["chains"])

    def constraints(self) -> list[ConstraintSpec]:
        out = []
        for c in self.data["constraints"]:
            out.append(
                ConstraintSpec(
                    kind=c["kind"],
                    tolerance=c["tolerance"],
                    policy=c["policy"],
                    batch=c["batch"],
                    proposal=self.proposal(c),
                    role=c["role"],
                    transform=c["transform"],
                    coefficient_grid=tuple(tuple(v) for v in c["coefficient_grid"]) if "coefficient_grid" in c else None,
                    coefficient_policy=c["coefficient_policy"],
                    coefficient_variances=tuple(c["coefficient_variances"]) if "coefficient_variances" in c else None,
                    coefficient_steps=c["coefficient_steps"],
                )
            )
        obs = self.data.get("observations")
        if obs:
            for j in range(len(obs["coefficients"])):
                out.append(
                    ConstraintSpec(
                        kind="observation", tolerance=obs["tolerance"], policy=obs["policy"], batch=obs["batch"], dataset=j
                    )
                )
        return out

    def train_config(self) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(
            epochs=t["epochs"],
            lr_primal=t["lr_primal"],
            lr_dual=t["lr_dual"],
            decay_factor=t["decay_factor"],
            decay_every=t["decay_every"],
            decay_dual=t["decay_dual"],
            adam_beta1=t["adam"]["beta1"],
            adam_beta2=t["adam"]["beta2"],
            adam_eps=t["adam"]["eps"],
            seed=t["seed"],
            mode=t["mode"],
            weights=tuple(sorted(t["weights"].items())),
            hidden=tuple(self.data["model"]["hidden"]),
            primal_steps_per_dual=t["primal_steps_per_dual"],
            divergence_threshold=t["divergence_threshold"],
            dump_epochs=tuple(t["dump_epochs"]) if t["dump_epochs"] is not None else (max(t["epochs"] - 1, 0),),
        )

    def eval_grid(self, spec: bvp_mod.BVPSpec | None = None) -> EvalGrid:
        spec = spec or self.bvp()
        g = self.data.get("evaluation", {}).get("grid")
        if g and "counts" in g:
            counts = g["counts"]
            if spec.domain.has_time:
                return default_grid(spec, nx=counts[0], nt=counts[1])
            d = spec.domain
            return EvalGrid.regular(("x", "y"), d.space_lo, d.space_hi, counts)
        return default_grid(spec)

    def coefficient_grid(self) -> list[tuple[float, ...]] | None:
        values = self.data.get("evaluation", {}).get("coefficient_grid")
        return [tuple(v) for v in values] if values else None

    def observation_grid(self, spec: bvp_mod.BVPSpec) -> EvalGrid:
        counts = self.data["observations"].get("grid", {}).get("counts", [64, 25])
        return default_grid(spec, nx=counts[0], nt=counts[1])

    def problem(self) -> Problem:
        spec = self.bvp()
        b = self.data["problem"]["boundary"]
        observations = []
        obs = self.data.get("observations")
        if obs:
            grid = self.observation_grid(spec)
            dt = self.data["evaluation"]["dt"]
            for pi, field in synthesize_observations(spec, obs["coefficients"], grid, obs["noise_std"], obs["seed"], dt):
                observations.append(Observation(pi, grid, field))
        return Problem.build(spec, b["n_initial"], b["n_face"], b["n_shape"], b["n_outer"], observations)


def _shape(d: dict) -> bvp_mod.Shape:
    kind = d["type"]
    if kind == "two_circles":
        return bvp_mod.two_circles()
    if kind == "circle":
        return bvp_mod.Circle(tuple(d.get("center", (0.0, 0.0))), d.get("radius", 0.5))
    if kind == "square":
        return bvp_mod.Square(tuple(d.get("center", (0.0, 0.0))), d.get("half", 0.5))
    return bvp_mod.PointCloud.load(d["path"])


def _semantic_issues(cfg: ExperimentConfig) -> list[str]:
    issues = []
    p = cfg.data["problem"]
    names = bvp_mod._COEFF_NAMES[p["id"]]
    given = set(p.get("coefficients", {}))
    for extra in sorted(given - set(names)):
        issues.append(f"problem.coefficients.{extra}: {p['id']} has no coefficient {extra!r}")
    for missing in [n for n in names if n not in given]:
        issues.append(f"problem.coefficients.{missing}: required for {p['id']}")
    for name, v in p.get("coefficients", {}).items():
        if isinstance(v, list) and v[0] > v[1]:
            issues.append(f"problem.coefficients.{name}: lower bound exceeds upper bound")
    if p["id"] == "eikonal" and p.get("shape", {}).get("type") == "point_cloud" and "path" not in p["shape"]:
        issues.append("problem.shape.path: required for point_cloud shapes")
    for i, c in enumerate(cfg.data["constraints"]):
        if "proposal" in c:
            pr = c["proposal"]
            if pr["n_keep"] > pr["n_steps"]:
                issues.append(f"constraints[{i}].proposal.n_keep: exceeds n_steps")
            if pr["n_steps"] % pr["chains"] or pr["n_keep"] % pr["chains"]:
                issues.append(f"constraints[{i}].proposal.chains: must divide n_steps and n_keep")
    if issues:
        return issues
    try:
        spec = cfg.bvp()
        validate_constraints(Problem.build(spec, 2, 2, 4, 4), _constraints_without_data(cfg))
    except ConfigError as exc:
        issues += [f"constraints: {i}" for i in exc.issues]
    except PdesclError as exc:
        issues.append(f"problem: {exc}")
    else:
        grid = cfg.coefficient_grid()
        if grid is not None:
            if spec.parametric and any(len(g) != spec.coeffs.dim for g in grid):
                issues.append(f"evaluation.coefficient_grid: entries need {spec.coeffs.dim} values")
            elif spec.parametric and not spec.coeffs.contains(np.array(grid)).all():
                issues.append("evaluation.coefficient_grid: values outside the coefficient box")
        obs = cfg.data.get("observations")
        if obs and not spec.parametric and len(obs["coefficients"]) > 1:
            issues.append("observations.coefficients: several datasets need a parametric problem")
    t = cfg.data["train"]
    if t["mode"] == "scl" and sum(c["role"] == "objective" for c in cfg.data["constraints"]) > 1:
        issues.append("constraints: at most one objective")
    return issues


def _constraints_without_data(cfg: ExperimentConfig) -> list[ConstraintSpec]:
    return [c for c in cfg.constraints() if c.kind != "observation"]


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a raw config mapping and fill defaults; raises ConfigError listing every issue."""
    issues = schema_issues(raw)
    if issues:
        raise ConfigError(issues)
    data = copy.deepcopy(raw)
    data.setdefault("preset", None)
    data["problem"]["boundary"] = _merge(_BOUNDARY_DEFAULTS, data["problem"].get("boundary", {}))
    data["problem"].setdefault("coefficients", {})
    if data["problem"]["id"] == "helmholtz":
        data["problem"].setdefault("wave_number", 1.0)
    if data["problem"]["id"] == "eikonal":
        data["problem"].setdefault("shape", {"type": "two_circles"})
    data["model"] = _merge({"hidden": [50, 50, 50, 50]}, data.get("model", {}))
    data["train"] = _merge(_TRAIN_DEFAULTS, data["train"])
    data["constraints"] = [_merge(_CONSTRAINT_DEFAULTS, c) for c in data["constraints"]]
    for c in data["constraints"]:
        if "proposal" in c:
            c["proposal"] = _merge(_PROPOSAL_DEFAULTS, c["proposal"])
    if "observations" in data:
        data["observations"] = _merge(_OBSERVATION_DEFAULTS, data["observations"])
    data["evaluation"] = _merge(_EVAL_DEFAULTS, data.get("evaluation", {}))
    data["output"] = _merge({"directory": ""}, data.get("output", {}))
    cfg = ExperimentConfig(data)
    issues = _semantic_issues(cfg)
    if issues:
        raise ConfigError(issues)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    return parse_config(raw)
