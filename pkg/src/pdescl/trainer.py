"""Primal-dual training of constrained PDE surrogates and the weighted-sum baseline.

Each constraint owns a sampling policy and a loss.  One epoch draws a batch
per constraint, evaluates the losses and their parameter gradients, takes an
Adam step on ``objective + sum(lambda_c * loss_c)`` and then moves every
multiplier by projected gradient ascent.  The baseline replaces the
multipliers with fixed weights and never updates them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .bvp import (
    BoundarySet,
    BVPSpec,
    boundary_data,
    boundary_segments,
    boundary_set,
    outer_boundary_points,
    pde_residual_batch,
    segment_points,
)
from .errors import ConfigError, DimensionError, NonFiniteError, PdesclError, TrainingAborted
from .jets import MLP, JetAdjoint, ParamGradient, forward, value_and_param_gradient
from .oracles import EvalGrid
from .sampler import ProposalSpec, mh_run

KINDS = ("pde", "bc", "invariance", "structural", "observation")
POLICIES = {
    "pde": ("fixed", "uniform", "mh"),
    "bc": ("fixed", "mh"),
    "invariance": ("fixed", "uniform", "mh"),
    "structural": ("fixed",),
    "observation": ("grid", "uniform"),
}
COEFFICIENT_POLICIES = ("uniform", "grid", "mh")
DIVERGENCE_THRESHOLD = 1e6


# ----------------------------------------------------------------------------
# configuration records


@dataclass(frozen=True)
class ConstraintSpec:
    """One loss term.

    ``batch`` is the number of points per epoch for the fixed and uniform
    policies (per coefficient when ``coefficient_grid`` is set); MH batches
    are the kept tail of ``proposal``.  ``coefficient_policy`` says how
    boundary points get coefficients in parametric problems.
    """

    kind: str
    tolerance: float = 0.0
    policy: str = "fixed"
    batch: int = 1000
    proposal: ProposalSpec | None = None
    role: str = "constraint"
    dataset: int | None = None
    transform: int = 0
    coefficient_grid: tuple[tuple[float, ...], ...] | None = None
    coefficient_policy: str = "uniform"
    coefficient_variances: tuple[float, ...] | None = None
    coefficient_steps: int = 10

    @property
    def name(self) -> str:
        if self.kind == "observation":
            return f"observation_{self.dataset}"
        if self.kind == "invariance":
            return f"invariance_{self.transform}"
        return self.kind

    def issues(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            return [f"{self.name}: unknown kind {self.kind!r}"]
        if not self.tolerance >= 0:
            out.append(f"{self.name}.tolerance: must be >= 0, got {self.tolerance}")
        if self.policy not in POLICIES[self.kind]:
            out.append(f"{self.name}.policy: {self.policy!r} not in {POLICIES[self.kind]}")
        if self.batch < 1:
            out.append(f"{self.name}.batch: must be >= 1")
        if self.policy == "mh" and self.proposal is None:
            out.append(f"{self.name}.proposal: required for the mh policy")
        if self.role not in ("objective", "constraint"):
            out.append(f"{self.name}.role: must be objective or constraint")
        if self.kind == "observation" and self.dataset is None:
            out.append(f"{self.name}.dataset: observation constraints need a dataset index")
        if self.coefficient_policy not in COEFFICIENT_POLICIES:
            out.append(f"{self.name}.coefficient_policy: {self.coefficient_policy!r} not in {COEFFICIENT_POLICIES}")
        if self.coefficient_policy == "grid" and not self.coefficient_grid:
            out.append(f"{self.name}.coefficient_grid: required for the grid coefficient policy")
        return out


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30000
    lr_primal: float = 1e-3
    lr_dual: float = 1e-4
    decay_factor: float = 0.9
    decay_every: int = 5000
    decay_dual: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    mode: str = "scl"
    weights: tuple[tuple[str, float], ...] = ()
    hidden: tuple[int, ...] = (50, 50, 50, 50)
    primal_steps_per_dual: int = 1
    divergence_threshold: float = DIVERGENCE_THRESHOLD
    dump_epochs: tuple[int, ...] = ()

    def issues(self) -> list[str]:
        out = []
        if self.epochs < 0:
            out.append("epochs: must be >= 0")
        if not self.lr_primal > 0:
            out.append("lr_primal: must be > 0")
        if not self.lr_dual > 0:
            out.append("lr_dual: must be > 0")
        if not 0 < self.decay_factor <= 1:
            out.append("decay_factor: must lie in (0, 1]")
        if self.decay_every < 1:
            out.append("decay_every: must be >= 1")
        if self.mode not in ("scl", "pinn"):
            out.append(f"mode: {self.mode!r} not in ('scl', 'pinn')")
        if any(w < 0 for _, w in self.weights):
            out.append("weights: must be >= 0")
        if self.primal_steps_per_dual < 1:
            out.append("primal_steps_per_dual: must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            out.append("hidden: need at least one positive layer width")
        return out

    def weight(self, part: str) -> float:
        return dict(self.weights).get(part, 1.0)

    def decayed(self, rate: float, step: int) -> float:
        return rate * self.decay_factor ** (step // self.decay_every)


# ----------------------------------------------------------------------------
# problem bundle


@dataclass
class Observation:
    coefficients: np.ndarray
    grid: EvalGrid
    field: np.ndarray


@dataclass
class Problem:
    """A BVP with its fixed boundary points and any observation datasets."""

    bvp: BVPSpec
    boundary: BoundarySet
    outer: np.ndarray | None = None
    observations: list[Observation] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        bvp: BVPSpec,
        n_initial: int = 256,
        n_face: int = 100,
        n_shape: int = 2234,
        n_outer: int = 40,
        observations: Sequence[Observation] = (),
    ) -> "Problem":
        outer = outer_boundary_points(bvp, n_outer) if bvp.id == "eikonal" else None
        return cls(bvp, boundary_set(bvp, n_initial, n_face, n_shape), outer, list(observations))


# ----------------------------------------------------------------------------
# optimizer and multipliers


class Adam:
    """Adam on a flat parameter vector with bias-corrected moments."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class DualState:
    names: tuple[str, ...]
    lambdas: np.ndarray

    @classmethod
    def zeros(cls, names: Sequence[str]) -> "DualState":
        return cls(tuple(names), np.zeros(len(names)))

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.lambdas)}


def dual_step(dual: DualState, losses: Sequence[float], tolerances: Sequence[float], lr: float) -> DualState:
    """Projected ascent: ``lambda <- max(0, lambda + lr * (loss - tolerance))``."""
    losses = np.asarray(losses, dtype=np.float64)
    tolerances = np.asarray(tolerances, dtype=np.float64)
    if losses.shape != dual.lambdas.shape or tolerances.shape != dual.lambdas.shape:
        raise DimensionError("one loss and one tolerance per multiplier")
    if not np.all(np.isfinite(losses)):
        raise NonFiniteError("constraint losses must be finite for the dual step")
    return DualState(dual.names, np.maximum(0.0, dual.lambdas + lr * (losses - tolerances)))


def primal_step(
    model: MLP,
    dual: DualState,
    gradients: Sequence[ParamGradient],
    config: TrainConfig,
    step: int,
    optimizer: Adam,
    objective: ParamGradient | None = None,
) -> MLP:
    """One Adam step on ``grad objective + sum(lambda_c * grad loss_c)``."""
    if len(gradients) != len(dual.names):
        raise DimensionError("one gradient per multiplier")
    total = objective.flat() if objective is not None else np.zeros(model.n_params)
    for lam, g in zip(dual.lambdas, gradients):
        if lam != 0.0:
            total = total + lam * g.flat()
    if total.shape != (model.n_params,):
        raise DimensionError("gradient does not match the model")
    if not np.all(np.isfinite(total)):
        raise NonFiniteError("non-finite parameter gradient")
    return model.with_flat(optimizer.step(model.flat(), total, config.decayed(config.lr_primal, step)))


# ----------------------------------------------------------------------------
# loss terms


@dataclass
class Batch:
    """Network inputs of one constraint's epoch sample plus term-specific data."""

    inputs: np.ndarray
    aux: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.inputs.shape[0]


class _Term:
    order = 0
    counts_operator = False

    def __init__(self, spec: ConstraintSpec, problem: Problem, rng: np.random.Generator):
        self.spec = spec
        self.problem = problem
        self.bvp = problem.bvp
        self.name = spec.name
        self.last_evals = 0
        self.last_acceptance = math.nan

    @property
    def joint_lo(self) -> np.ndarray:
        b = self.bvp
        return np.concatenate([b.domain.lo, np.array(b.coeffs.lo)]) if b.parametric else b.domain.lo

    @property
    def joint_hi(self) -> np.ndarray:
        b = self.bvp
        return np.concatenate([b.domain.hi, np.array(b.coeffs.hi)]) if b.parametric else b.domain.hi

    def _uniform_inputs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform draws over the domain, times the coefficient box or grid."""
        b = self.bvp
        grid = self.spec.coefficient_grid
        if grid:
            pts = b.domain.uniform(rng, n * len(grid))
            coeffs = np.repeat(np.asarray(grid, dtype=np.float64), n, axis=0)
            return b.model_inputs(pts, coeffs)
        pts = b.domain.uniform(rng, n)
        return b.model_inputs(pts, b.coeffs.uniform(rng, n) if b.parametric else None)

    def _mh_inputs(self, rng: np.random.Generator, model: MLP) -> np.ndarray:
        result = mh_run(lambda z: self.pointwise_loss(model, z), self.joint_lo, self.joint_hi, self.spec.proposal, rng)
        self.last_evals = result.loss_evaluations
        self.last_acceptance = result.acceptance_rate
        return result.samples

    def pointwise_loss(self, model: MLP, inputs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def draw(self, model: MLP, rng: np.random.Generator) -> Batch:
        raise NotImplementedError

    def loss_fn(self, batch: Batch, weights: dict[str, float] | None):
        raise NotImplementedError

    def wrt(self):
        return None

    def evaluate(self, model: MLP, batch: Batch, weights: dict[str, float] | None = None) -> tuple[float, float, ParamGradient]:
        """Unweighted loss, weighted loss and gradient of the weighted loss."""
        if len(batch) == 0:
            raise PdesclError(f"{self.name}: empty batch")
        raw = {}
        weighted, grad = value_and_param_gradient(
            model, batch.inputs, self.loss_fn(batch, weights, raw), order=self.order, wrt=self.wrt()
        )
        return raw["loss"], weighted, grad

    def loss(self, model: MLP, batch: Batch) -> float:
        if len(batch) == 0:
            raise PdesclError(f"{self.name}: empty batch")
        jets = forward(model, batch.inputs, order=self.order, wrt=self.wrt())
        raw = {}
        self.loss_fn(batch, None, raw)(jets)
        return raw["loss"]

    def nominal_evals(self) -> int:
        return 0


class _PDETerm(_Term):
    counts_operator = True

    def __init__(self, spec, problem, rng):
        super().__init__(spec, problem, rng)
        self.order = self.bvp.residual_order
        self.fixed = self._uniform_inputs(rng, spec.batch) if spec.policy == "fixed" else None

    def wrt(self):
        return self.bvp.derivative_coords

    def _coeffs(self, inputs: np.ndarray) -> np.ndarray | None:
        pd = self.bvp.domain.point_dim
        return inputs[:, pd:] if self.bvp.parametric else None

    def pointwise_loss(self, model, inputs):
        jets = forward(model, inputs, order=self.order, wrt=self.wrt())
        r, _ = pde_residual_batch(self.bvp, jets, self._coeffs(inputs))
        return r * r

    def draw(self, model, rng):
        if self.spec.policy == "fixed":
            inputs = self.fixed
            self.last_evals = len(inputs)
        elif self.spec.policy == "uniform":
            inputs = self._uniform_inputs(rng, self.spec.batch)
            self.last_evals = len(inputs)
        else:
            inputs = self._mh_inputs(rng, model)
            self.last_evals += len(inputs)
        return Batch(inputs)

    def nominal_evals(self) -> int:
        if self.spec.policy == "mh":
            return self.spec.proposal.n_steps
        return self.spec.batch * (len(self.spec.coefficient_grid) if self.spec.coefficient_grid else 1)

    def loss_fn(self, batch, weights, raw):
        # with a coefficient grid the loss sums the per-coefficient means
        n = self.spec.batch if self.spec.coefficient_grid else len(batch)
        w = 1.0 if weights is None else weights.get("pde", 1.0)
        coeffs = self._coeffs(batch.inputs)

        def fn(jets):
            r, partials = pde_residual_batch(self.bvp, jets, coeffs)
            items = r * r / n
            raw["loss"] = float(items.sum())
            return w * items, partials.adjoint(2.0 * w * r / n)

        return fn


class _BoundaryTerm(_Term):
    """Initial/Dirichlet data and periodic pairs.

    Constrained runs use one mean over all items; the weighted baseline
    sums per-part means times their weights.
    """

    def __init__(self, spec, problem, rng):
        super().__init__(spec, problem, rng)
        b = self.bvp
        if spec.policy == "mh":
            self.segments = boundary_segments(b)
        self.coeff_scale = None
        if b.parametric and spec.coefficient_policy == "mh":
            var = spec.coefficient_variances or tuple(
                ((h - l) / 4) ** 2 for l, h in zip(b.coeffs.lo, b.coeffs.hi)
            )
            self.coeff_scale = np.sqrt(np.asarray(var, dtype=np.float64))

    def _assemble(self, d_pts, d_labels, lo_pts, hi_pts, d_coeffs, p_coeffs) -> Batch:
        b = self.bvp
        h = boundary_data(b, d_pts, d_coeffs if b.parametric else None) if len(d_pts) else np.zeros(0)
        parts = [b.model_inputs(d_pts, d_coeffs)] if len(d_pts) else []
        if len(lo_pts):
            parts += [b.model_inputs(lo_pts, p_coeffs), b.model_inputs(hi_pts, p_coeffs)]
        labels = np.concatenate([np.asarray(d_labels, dtype=object), np.array(["bc"] * len(lo_pts), dtype=object)])
        return Batch(np.vstack(parts), {"h": h, "n_dirichlet": len(d_pts), "n_pairs": len(lo_pts), "labels": labels})

    def _coefficients_for(self, model, rng, d_pts, d_labels, lo_pts, hi_pts):
        b = self.bvp
        nd, npair = len(d_pts), len(lo_pts)
        if not b.parametric:
            return d_pts, d_labels, lo_pts, hi_pts, None, None
        policy = self.spec.coefficient_policy
        if policy == "grid":
            grid = np.asarray(self.spec.coefficient_grid, dtype=np.float64)
            g = len(grid)
            return (
                np.tile(d_pts, (g, 1)),
                np.tile(np.asarray(d_labels, dtype=object), g),
                np.tile(lo_pts, (g, 1)),
                np.tile(hi_pts, (g, 1)),
                np.repeat(grid, nd, axis=0),
                np.repeat(grid, npair, axis=0),
            )
        coeffs = b.coeffs.uniform(rng, nd + npair)
        if policy == "mh":
            coeffs = self._itemwise_mh(model, rng, d_pts, d_labels, lo_pts, hi_pts, coeffs)
        return d_pts, d_labels, lo_pts, hi_pts, coeffs[:nd], coeffs[nd:]

    def _item_losses(self, model, d_pts, lo_pts, hi_pts, d_coeffs, p_coeffs) -> np.ndarray:
        b = self.bvp
        nd = len(d_pts)
        inputs = [b.model_inputs(d_pts, d_coeffs)] if nd else []
        if len(lo_pts):
            inputs += [b.model_inputs(lo_pts, p_coeffs), b.model_inputs(hi_pts, p_coeffs)]
        u = forward(model, np.vstack(inputs), order=0).value
        r_d = u[:nd] - boundary_data(b, d_pts, d_coeffs) if nd else np.zeros(0)
        npair = len(lo_pts)
        r_p = u[nd : nd + npair] - u[nd + npair :]
        return np.concatenate([r_d, r_p]) ** 2

    def _itemwise_mh(self, model, rng, d_pts, d_labels, lo_pts, hi_pts, coeffs):
        # one short chain over the coefficient box per boundary item
        b = self.bvp
        lo, hi = np.array(b.coeffs.lo), np.array(b.coeffs.hi)
        nd = len(d_pts)
        evaluate = lambda c: self._item_losses(model, d_pts, lo_pts, hi_pts, c[:nd], c[nd:])  # noqa: E731
        cur = evaluate(coeffs)
        evals = len(coeffs)
        for _ in range(self.spec.coefficient_steps):
            prop = coeffs + rng.standard_normal(coeffs.shape) * self.coeff_scale
            inside = np.all((prop >= lo) & (prop <= hi), axis=1)
            lp = evaluate(np.where(inside[:, None], prop, coeffs))
            evals += len(coeffs)
            ratio = np.where(cur > 0, np.minimum(1.0, lp / np.where(cur > 0, cur, 1.0)), 1.0)
            take = (rng.random(len(coeffs)) < np.where(inside, ratio, 0.0))
            coeffs = np.where(take[:, None], prop, coeffs)
            cur = np.where(take, lp, cur)
        self.last_evals += evals
        return coeffs

    def pointwise_loss(self, model, z):
        # z = (segment parameter, coefficients...)
        b = self.bvp
        pts, idx = segment_points(self.segments, z[:, 0])
        coeffs = z[:, 1:] if b.parametric else None
        periodic = np.array([self.segments[i].kind == "periodic" for i in idx], dtype=bool)
        shift = np.array([self.segments[i].shift or (0.0,) * pts.shape[1] for i in idx])
        inputs = np.vstack([b.model_inputs(pts, coeffs), b.model_inputs(pts + shift, coeffs)])
        u = forward(model, inputs, order=0).value
        n = len(pts)
        data = boundary_data(b, pts, coeffs)
        r = np.where(periodic, u[:n] - u[n:], u[:n] - data)
        return r * r

    def draw(self, model, rng):
        self.last_evals = 0
        b = self.bvp
        if self.spec.policy == "mh":
            lo = np.concatenate([[0.0], np.array(b.coeffs.lo)]) if b.parametric else np.array([0.0])
            hi = np.concatenate([[float(len(self.segments))], np.array(b.coeffs.hi)]) if b.parametric else np.array([float(len(self.segments))])
            result = mh_run(lambda z: self.pointwise_loss(model, z), lo, hi, self.spec.proposal, rng)
            self.last_evals = result.loss_evaluations
            self.last_acceptance = result.acceptance_rate
            z = result.samples
            pts, idx = segment_points(self.segments, z[:, 0])
            coeffs = z[:, 1:] if b.parametric else None
            periodic = np.array([self.segments[i].kind == "periodic" for i in idx], dtype=bool)
            shifts = np.array([self.segments[i].shift or (0.0,) * pts.shape[1] for i in idx])
            labels = np.array([self.segments[i].label for i in idx], dtype=object)
            d, p = ~periodic, periodic
            return self._assemble(
                pts[d], labels[d], pts[p], pts[p] + shifts[p],
                None if coeffs is None else coeffs[d], None if coeffs is None else coeffs[p],
            )
        bs = self.problem.boundary
        args = self._coefficients_for(model, rng, bs.dirichlet, bs.labels, bs.periodic_lo, bs.periodic_hi)
        return self._assemble(*args)

    def loss_fn(self, batch, weights, raw):
        # unweighted: one mean over all boundary items; weighted: sum over
        # parts ("ic", "bc") of weight times the part mean
        nd, npair = batch.aux["n_dirichlet"], batch.aux["n_pairs"]
        labels = batch.aux["labels"].astype(str)
        h = batch.aux["h"]
        n = nd + npair
        if weights is None:
            scale = np.full(n, 1.0 / n)
        else:
            names, counts = np.unique(labels, return_counts=True)
            count_of = dict(zip(names, counts))
            scale = np.array([weights.get(l, 1.0) / count_of[l] for l in labels])

        def fn(jets):
            u = jets.value
            r = np.concatenate([u[:nd] - h, u[nd : nd + npair] - u[nd + npair :]])
            raw["loss"] = float((r * r / n).sum())
            g = 2.0 * scale * r
            return scale * r * r, JetAdjoint(np.concatenate([g, -g[nd:]]), None, None)

        return fn


class _InvarianceTerm(_Term):
    def __init__(self, spec, problem, rng):
        super().__init__(spec, problem, rng)
        if not 0 <= spec.transform < len(self.bvp.invariances):
            raise ConfigError([f"{spec.name}: {self.bvp.id} has {len(self.bvp.invariances)} invariance transforms"])
        self.transform = self.bvp.invariances[spec.transform]
        self.fixed = self._uniform_inputs(rng, spec.batch) if spec.policy == "fixed" else None

    def _pairs(self, inputs):
        b = self.bvp
        pd = b.domain.point_dim
        coeffs = inputs[:, pd:] if b.parametric else b.coeff_array(None, len(inputs))
        image = self.transform.apply(inputs[:, :pd], coeffs)
        return np.vstack([inputs, b.model_inputs(image, coeffs if b.parametric else None)])

    def pointwise_loss(self, model, inputs):
        u = forward(model, self._pairs(inputs), order=0).value
        n = len(inputs)
        return (u[:n] - u[n:]) ** 2

    def draw(self, model, rng):
        if self.spec.policy == "fixed":
            base = self.fixed
        elif self.spec.policy == "uniform":
            base = self._uniform_inputs(rng, self.spec.batch)
        else:
            base = self._mh_inputs(rng, model)
        return Batch(self._pairs(base), {"n": len(base)})

    def loss_fn(self, batch, weights, raw):
        n = batch.aux["n"]
        w = 1.0 if weights is None else weights.get("invariance", 1.0)

        def fn(jets):
            d = jets.value[:n] - jets.value[n:]
            items = d * d / n
            raw["loss"] = float(items.sum())
            g = 2.0 * w * d / n
            return w * items, JetAdjoint(np.concatenate([g, -g]), None, None)

        return fn


class _StructuralTerm(_Term):
    """Mean hinge ``max(0, -u)`` on the outer boundary of the eikonal box."""

    def __init__(self, spec, problem, rng):
        super().__init__(spec, problem, rng)
        if problem.outer is None:
            raise ConfigError([f"{spec.name}: {self.bvp.id} has no structural boundary"])
        self.inputs = self.bvp.model_inputs(problem.outer)

    def draw(self, model, rng):
        return Batch(self.inputs)

    def loss_fn(self, batch, weights, raw):
        n = len(batch)
        w = 1.0 if weights is None else weights.get("structural", 1.0)

        def fn(jets):
            items = np.maximum(0.0, -jets.value) / n
            raw["loss"] = float(items.sum())
            return w * items, JetAdjoint(np.where(jets.value < 0, -w / n, 0.0), None, None)

        return fn


class _ObservationTerm(_Term):
    def __init__(self, spec, problem, rng, n_observation_terms: int = 1):
        super().__init__(spec, problem, rng)
        if not 0 <= spec.dataset < len(problem.observations):
            raise ConfigError([f"{spec.name}: no observation dataset {spec.dataset}"])
        obs = problem.observations[spec.dataset]
        self.inputs = self.bvp.model_inputs(obs.grid.points, obs.coefficients)
        self.targets = np.asarray(obs.field, dtype=np.float64)
        self.share = n_observation_terms

    def draw(self, model, rng):
        if self.spec.policy == "grid":
            return Batch(self.inputs, {"targets": self.targets})
        idx = np.sort(rng.choice(len(self.inputs), size=min(self.spec.batch, len(self.inputs)), replace=False))
        return Batch(self.inputs[idx], {"targets": self.targets[idx]})

    def loss_fn(self, batch, weights, raw):
        n = len(batch)
        y = batch.aux["targets"]
        w = 1.0 if weights is None else weights.get("observation", 1.0) / self.share

        def fn(jets):
            r = jets.value - y
            items = r * r / n
            raw["loss"] = float(items.sum())
            return w * items, JetAdjoint(2.0 * w * r / n, None, None)

        return fn


_TERM_TYPES = {
    "pde": _PDETerm,
    "bc": _BoundaryTerm,
    "invariance": _InvarianceTerm,
    "structural": _StructuralTerm,
    "observation": _ObservationTerm,
}


def validate_constraints(problem: Problem, constraints: Sequence[ConstraintSpec]) -> None:
    issues = []
    for c in constraints:
        issues += c.issues()
        if c.proposal is not None and c.policy == "mh" and c.kind in ("pde", "invariance"):
            want = problem.bvp.domain.point_dim + (problem.bvp.coeffs.dim if problem.bvp.parametric else 0)
            if c.proposal.dim != want:
                issues.append(f"{c.name}.proposal: needs {want} variances, got {c.proposal.dim}")
        if c.kind == "bc" and c.policy == "mh" and c.proposal is not None:
            want = 1 + (problem.bvp.coeffs.dim if problem.bvp.parametric else 0)
            if c.proposal.dim != want:
                issues.append(f"{c.name}.proposal: needs {want} variances (segment parameter first), got {c.proposal.dim}")
            if problem.bvp.id == "eikonal":
                issues.append(f"{c.name}.policy: mh boundary sampling needs a box boundary")
    if sum(c.role == "objective" for c in constraints) > 1:
        issues.append("constraints: at most one term may be the objective")
    names = [c.name for c in constraints]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        issues.append(f"constraints: duplicate terms {dupes}")
    if issues:
        raise ConfigError(issues)


def _build_terms(problem: Problem, constraints: Sequence[ConstraintSpec], rng: np.random.Generator) -> list[_Term]:
    validate_constraints(problem, constraints)
    n_obs = sum(c.kind == "observation" for c in constraints)
    terms = []
    for c in constraints:
        if c.kind == "observation":
            terms.append(_ObservationTerm(c, problem, rng, n_obs))
        else:
            terms.append(_TERM_TYPES[c.kind](c, problem, rng))
    return terms


# ----------------------------------------------------------------------------
# public evaluation helpers


def draw_samples(model: MLP, problem: Problem, constraints: Sequence[ConstraintSpec], seed: int = 0) -> dict[str, Batch]:
    """One epoch's batches, drawn exactly as the first training epoch would."""
    rng = np.random.default_rng(seed)
    terms = _build_terms(problem, constraints, rng)
    return {t.name: t.draw(model, rng) for t in terms}


def empirical_losses(
    model: MLP, problem: Problem, constraints: Sequence[ConstraintSpec], samples: dict[str, Batch]
) -> np.ndarray:
    """Unweighted loss of each constraint on the given batches."""
    terms = _build_terms(problem, constraints, np.random.default_rng(0))
    out = []
    for t in terms:
        if t.name not in samples:
            raise PdesclError(f"no samples for {t.name}")
        out.append(t.loss(model, samples[t.name]))
    return np.array(out)


def pde_batch(inputs: np.ndarray) -> Batch:
    return Batch(np.asarray(inputs, dtype=np.float64))


# ----------------------------------------------------------------------------
# training


@dataclass
class TrainReport:
    model: MLP
    names: tuple[str, ...]
    roles: tuple[str, ...]
    losses: np.ndarray
    lambdas: np.ndarray
    multiplier_names: tuple[str, ...]
    operator_evals: int
    operator_evals_total: int
    epochs: int
    wall_time: float
    mode: str
    acceptance: np.ndarray
    sample_dumps: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)

    def final_losses(self) -> dict[str, float]:
        if self.epochs == 0:
            return {}
        return {n: float(v) for n, v in zip(self.names, self.losses[-1])}

    def final_lambdas(self) -> dict[str, float]:
        if self.epochs == 0:
            return {n: 0.0 for n in self.multiplier_names}
        return {n: float(v) for n, v in zip(self.multiplier_names, self.lambdas[-1])}

    @property
    def evals_per_epoch(self) -> float:
        if self.epochs == 0:
            raise PdesclError("report covers zero epochs")
        return self.operator_evals / self.epochs


def predicted_operator_evals(constraints: Sequence[ConstraintSpec], epochs: int) -> int:
    """Differential-operator evaluations a run will count: every MH step
    (burn-in included) or every fixed/uniform point, per epoch."""
    per_epoch = 0
    for c in constraints:
        if c.kind != "pde":
            continue
        if c.policy == "mh":
            per_epoch += c.proposal.n_steps
        else:
            per_epoch += c.batch * (len(c.coefficient_grid) if c.coefficient_grid else 1)
    return per_epoch * epochs


def train(
    problem: Problem | BVPSpec,
    constraints: Sequence[ConstraintSpec],
    config: TrainConfig,
    model: MLP | None = None,
    progress=None,
) -> TrainReport:
    """Run ``config.epochs`` epochs of sample, evaluate, primal step, dual step."""
    if isinstance(problem, BVPSpec):
        problem = Problem.build(problem)
    issues = config.issues()
    if issues:
        raise ConfigError(issues)
    bvp = problem.bvp
    if model is None:
        model = MLP.glorot([bvp.input_width, *config.hidden, 1], seed=config.seed)
    elif model.input_width != bvp.input_width:
        raise DimensionError(f"model takes {model.input_width} inputs, problem needs {bvp.input_width}")
    rng = np.random.default_rng(config.seed)
    terms = _build_terms(problem, constraints, rng)
    scl = config.mode == "scl"
    mult_idx = [i for i, t in enumerate(terms) if t.spec.role == "constraint"] if scl else []
    obj_idx = [i for i, t in enumerate(terms) if t.spec.role == "objective"] if scl else []
    dual = DualState.zeros([terms[i].name for i in mult_idx])
    tolerances = np.array([terms[i].spec.tolerance for i in mult_idx])
    weights = dict(config.weights) if not scl else None
    adam = Adam(model.n_params, config.adam_beta1, config.adam_beta2, config.adam_eps)

    K = config.epochs
    losses = np.zeros((K, len(terms)))
    lambdas = np.zeros((K, len(mult_idx)))
    acceptance = np.full((K, len(terms)), np.nan)
    dumps: dict[int, dict[str, np.ndarray]] = {}
    nominal = predicted_operator_evals(constraints, 1)
    total_evals = 0
    start = time.perf_counter()

    for k in range(K):
        raw = np.zeros(len(terms))
        grads = []
        for i, term in enumerate(terms):
            batch = term.draw(model, rng)
            if term.counts_operator:
                total_evals += term.last_evals
            acceptance[k, i] = term.last_acceptance
            if k in config.dump_epochs:
                dumps.setdefault(k, {})[term.name] = batch.inputs.copy()
            try:
                raw[i], _, g = term.evaluate(model, batch, weights)
            except NonFiniteError as exc:
                raise TrainingAborted(f"epoch {k}: {term.name}: {exc}", _diagnostics(k, terms, raw, dual)) from exc
            grads.append(g)
        losses[k] = raw
        if not np.all(np.isfinite(raw)) or np.any(raw > config.divergence_threshold):
            raise TrainingAborted(
                f"epoch {k}: loss above {config.divergence_threshold:g} or not finite", _diagnostics(k, terms, raw, dual)
            )

        try:
            if scl:
                objective = grads[obj_idx[0]] if obj_idx else None
                model = primal_step(model, dual, [grads[i] for i in mult_idx], config, k, adam, objective)
            else:
                total = grads[0]
                for g in grads[1:]:
                    total = total + g
                flat = total.flat()
                if not np.all(np.isfinite(flat)):
                    raise NonFiniteError("non-finite parameter gradient")
                model = model.with_flat(adam.step(model.flat(), flat, config.decayed(config.lr_primal, k)))
        except NonFiniteError as exc:
            raise TrainingAborted(f"epoch {k}: {exc}", _diagnostics(k, terms, raw, dual)) from exc

        if scl and mult_idx and (k + 1) % config.primal_steps_per_dual == 0:
            lr_d = config.decayed(config.lr_dual, k) if config.decay_dual else config.lr_dual
            dual = dual_step(dual, raw[mult_idx], tolerances, lr_d)
        lambdas[k] = dual.lambdas
        if progress is not None:
            progress(k, raw, dual)

    return TrainReport(
        model=model,
        names=tuple(t.name for t in terms),
        roles=tuple(t.spec.role for t in terms),
        losses=losses,
        lambdas=lambdas,
        multiplier_names=dual.names,
        operator_evals=nominal * K,
        operator_evals_total=total_evals,
        epochs=K,
        wall_time=time.perf_counter() - start,
        mode=config.mode,
        acceptance=acceptance,
        sample_dumps=dumps,
    )


def _diagnostics(epoch, terms, raw, dual) -> dict:
    return {
        "epoch": epoch,
        "losses": {t.name: float(v) for t, v in zip(terms, raw)},
        "lambdas": dual.as_dict(),
    }


def pinn_baseline(
    problem: Problem | BVPSpec,
    constraints: Sequence[ConstraintSpec],
    config: TrainConfig,
    model: MLP | None = None,
    progress=None,
) -> TrainReport:
    """Adam on the fixed-weight sum of losses; weights come from ``config.weights``."""
    issues = []
    for c in constraints:
        if c.kind == "pde" and c.policy not in ("fixed", "uniform"):
            issues.append(f"{c.name}.policy: the baseline uses fixed or uniform collocation")
    if issues:
        raise ConfigError(issues)
    return train(problem, [replace(c, role="constraint") for c in constraints], replace(config, mode="pinn"), model, progress)
