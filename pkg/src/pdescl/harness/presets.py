"""Built-in experiment configurations.

Every setting exists at full scale and at desk scale (``_desk`` suffix);
desk variants shorten training, split the MH budget over parallel chains
and shrink coefficient grids.
"""

from __future__ import annotations

import copy

import numpy as np

from ..errors import ConfigError

DESK_EPOCHS = 30000

# baseline weights by loss part
_MU_STANDARD = {"pde": 1.0, "bc": 100.0, "ic": 100.0}
_MU_EIKONAL = {"pde": 1.0, "structural": 10.0, "bc": 500.0}


def _mh(variances, n_steps=5000, n_keep=1000, chains=1):
    return {"variances": list(variances), "n_steps": n_steps, "n_keep": n_keep, "chains": chains}


def _single(problem, coefficients, tolerance, epochs, decay, variances, hidden=(50, 50, 50, 50), extra=None):
    cfg = {
        "schema_version": 1,
        "problem": {"id": problem, "coefficients": coefficients},
        "model": {"hidden": list(hidden)},
        "constraints": [
            {"kind": "bc", "role": "objective", "policy": "fixed"},
            {"kind": "pde", "tolerance": tolerance, "policy": "mh", "proposal": _mh(variances)},
        ],
        "train": {"mode": "scl", "epochs": epochs, "decay_factor": decay},
    }
    if extra:
        cfg.update(extra)
    return cfg


def _to_baseline(cfg, weights, coefficient_grid=None):
    """Weighted-sum version: uniform collocation, fixed weights."""
    out = copy.deepcopy(cfg)
    out["train"]["mode"] = "pinn"
    out["train"]["weights"] = dict(weights)
    for c in out["constraints"]:
        c.pop("role", None)
        if c["kind"] == "pde":
            c.pop("proposal", None)
            c.pop("tolerance", None)
            c["policy"] = "uniform"
            c["batch"] = 1000
            if coefficient_grid is not None:
                c["coefficient_grid"] = [list(v) for v in coefficient_grid]
        if c["kind"] == "bc" and coefficient_grid is not None:
            c["coefficient_policy"] = "grid"
            c["coefficient_grid"] = [list(v) for v in coefficient_grid]
            c.pop("coefficient_variances", None)
        if c["kind"] == "structural":
            c.pop("tolerance", None)
    return out


def _desk(cfg, epochs=DESK_EPOCHS, chains=None):
    out = copy.deepcopy(cfg)
    out["train"]["epochs"] = min(out["train"]["epochs"], epochs)
    for c in out["constraints"]:
        if "proposal" in c and chains:
            c["proposal"]["chains"] = chains
    return out


def _beta_grid(n):
    return [[float(b)] for b in np.linspace(1.0, 30.0, n)]


def _full_presets() -> dict[str, dict]:
    p: dict[str, dict] = {}
    conv = (0.25, 0.01)
    p["convection_b30_scl"] = _single("convection", {"beta": 30.0}, 1e-3, 175000, 0.9, conv)
    p["convection_b50_scl"] = _single("convection", {"beta": 50.0}, 5e-3, 200000, 0.9, conv)
    p["rd_3_3_scl"] = _single("reaction_diffusion", {"nu": 3.0, "rho": 3.0}, 1e-2, 200000, 1.0, conv)
    p["rd_3_5_scl"] = _single("reaction_diffusion", {"nu": 3.0, "rho": 5.0}, 5e-3, 200000, 1.0, conv)
    eik = _single("eikonal", {}, 0.5, 60000, 0.9, (0.04, 0.04), hidden=(128,) * 4)
    eik["constraints"].append({"kind": "structural", "tolerance": 1e-3, "policy": "fixed"})
    eik["evaluation"] = {"grid": {"counts": [384, 384]}}
    p["eikonal_scl"] = eik
    for name in ("convection_b30", "convection_b50", "rd_3_3", "rd_3_5"):
        p[f"{name}_pinn"] = _to_baseline(p[f"{name}_scl"], _MU_STANDARD)
    p["eikonal_pinn"] = _to_baseline(eik, _MU_EIKONAL)

    # parametric families
    def family(problem, coefficients, tolerance, variances, coeff_var, decay, eval_grid, n_keep=2500):
        return {
            "schema_version": 1,
            "problem": {"id": problem, "coefficients": coefficients},
            "constraints": [
                {
                    "kind": "bc",
                    "role": "objective",
                    "policy": "fixed",
                    "coefficient_policy": "mh",
                    "coefficient_variances": list(coeff_var),
                },
                {"kind": "pde", "tolerance": tolerance, "policy": "mh", "proposal": _mh(variances, 5000, n_keep)},
            ],
            "train": {"mode": "scl", "epochs": 200000, "decay_factor": decay},
            "evaluation": {"coefficient_grid": eval_grid},
        }

    p["convection_param_scl"] = family(
        "convection", {"beta": [1.0, 30.0]}, 1e-3, (0.25, 0.01, 9.0), (9.0,), 0.9, _beta_grid(1000)
    )
    for label, grid in (
        ("4", [[1.0], [10.0], [20.0], [30.0]]),
        ("7", [[1.0], [5.0], [10.0], [15.0], [20.0], [25.0], [30.0]]),
        ("30", [[float(b)] for b in range(1, 31)]),
    ):
        p[f"convection_param_pinn_{label}"] = _to_baseline(p["convection_param_scl"], {"pde": 1.0, "bc": 100.0, "ic": 100.0}, grid)

    def rd_grid(hi, n):
        vals = np.linspace(0.0 if hi < 20 else 1.0, hi, n)
        return [[float(a), float(b)] for a in vals for b in vals]

    for hi, tol in ((5, 5e-3), (10, 1e-2), (20, 1e-1)):
        lo = 0.0 if hi < 20 else 1.0
        name = f"rd_param_{hi}"
        p[f"{name}_scl"] = family(
            "reaction_diffusion",
            {"nu": [lo, float(hi)], "rho": [lo, float(hi)]},
            tol,
            (0.25, 0.01, 1.0, 1.0),
            (1.0, 1.0),
            1.0,
            rd_grid(hi, 10),
        )
        p[f"{name}_pinn"] = _to_baseline(
            p[f"{name}_scl"], {"pde": 1.0, "bc": 100.0, "ic": 100.0}, [[a, b] for a in (lo, hi / 2, hi) for b in (lo, hi / 2, hi)]
        )
    for hi, tol, keep in ((2, 0.5, 2500), (3, 5.0, 5000)):
        name = f"helmholtz_param_{hi}"
        vals = np.linspace(1.0, hi, 10)
        p[f"{name}_scl"] = family(
            "helmholtz",
            {"a1": [1.0, float(hi)], "a2": [1.0, float(hi)]},
            tol,
            (0.04, 0.04, 0.04, 0.04),
            (0.04, 0.04),
            0.9,
            [[float(a), float(b)] for a in vals for b in vals],
            n_keep=keep,
        )
        mid = (1.0 + hi) / 2
        p[f"{name}_pinn"] = _to_baseline(
            p[f"{name}_scl"], {"pde": 1.0, "bc": 100.0}, [[a, b] for a in (1.0, mid, hi) for b in (1.0, mid, hi)]
        )

    # invariance: fixed collocation plus the period-shift constraint
    inv = {
        "schema_version": 1,
        "problem": {"id": "convection", "coefficients": {"beta": 30.0}},
        "constraints": [
            {"kind": "bc", "role": "objective", "policy": "fixed"},
            {"kind": "pde", "tolerance": 1e-3, "policy": "fixed", "batch": 100},
            {"kind": "invariance", "tolerance": 1e-3, "policy": "mh", "proposal": _mh((0.5, 0.1))},
        ],
        "train": {"mode": "scl", "epochs": 200000, "decay_factor": 0.9},
    }
    p["convection_invariance_scl"] = inv
    base = copy.deepcopy(inv)
    base["constraints"] = [{"kind": "bc", "policy": "fixed"}, {"kind": "pde", "policy": "fixed", "batch": 100}]
    base["train"].update({"mode": "pinn", "weights": dict(_MU_STANDARD)})
    p["convection_invariance_pinn"] = base

    # observations only: one constraint per synthetic solution, no objective
    obs = {
        "schema_version": 1,
        "problem": {"id": "convection", "coefficients": {"beta": [1.0, 30.0]}},
        "constraints": [],
        "observations": {
            "coefficients": [[float(b)] for b in np.linspace(1.0, 30.0, 12)],
            "grid": {"counts": [64, 25]},
            "tolerance": 1e-3,
            "policy": "grid",
        },
        "train": {"mode": "scl", "epochs": 30000, "decay_factor": 0.9, "lr_dual": 1e-2},
        "evaluation": {"coefficient_grid": [[float(b)] for b in np.linspace(1.0, 30.0, 12)]},
    }
    p["convection_observations_scl"] = obs
    avg = copy.deepcopy(obs)
    avg["train"].update({"mode": "pinn", "weights": {"observation": 1.0}})
    p["convection_observations_avg"] = avg
    return p


def _desk_presets(full: dict[str, dict]) -> dict[str, dict]:
    out = {}
    for name, cfg in full.items():
        d = _desk(cfg)
        for c in d["constraints"]:
            if "proposal" in c:
                # 200 chains of 25 steps for a 1000-sample tail, 250 of 20 otherwise
                c["proposal"]["chains"] = 250 if c["proposal"]["n_keep"] >= 2500 else 200
        if name.startswith(("convection_param", "rd_param", "helmholtz_param")):
            grid = d.get("evaluation", {}).get("coefficient_grid")
            if grid and len(grid[0]) == 1:
                d["evaluation"]["coefficient_grid"] = _beta_grid(20)
            elif grid:
                lo = d["problem"]["coefficients"]
                (a0, a1), (b0, b1) = list(lo.values())
                vals_a, vals_b = np.linspace(a0, a1, 5), np.linspace(b0, b1, 5)
                d["evaluation"]["coefficient_grid"] = [[float(a), float(b)] for a in vals_a for b in vals_b]
        if name.startswith("eikonal"):
            d["model"]["hidden"] = [64, 64, 64, 64]
            d["train"]["epochs"] = 10000
            d["evaluation"] = {"grid": {"counts": [128, 128]}}
        if name.startswith("convection_invariance"):
            d["train"]["epochs"] = 20000
        if name.startswith("convection_observations"):
            d["observations"]["grid"] = {"counts": [32, 16]}
            d["train"]["epochs"] = 8000
        out[f"{name}_desk"] = d
    return out


def _all() -> dict[str, dict]:
    full = _full_presets()
    out = dict(full)
    out.update(_desk_presets(full))
    for name, cfg in out.items():
        cfg["preset"] = name
        cfg.setdefault("output", {})["directory"] = name
    return out


PRESETS = _all()


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r}; run list-presets"])
    return copy.deepcopy(PRESETS[name])
