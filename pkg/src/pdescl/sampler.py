"""Metropolis-Hastings over a box, targeting a density proportional to a loss.

Proposals are Gaussian with a fixed diagonal covariance.  Proposals that
leave the box are rejected.  A zero current loss makes any in-box proposal
acceptable, so chains never freeze on a flat zero region.

The step budget can be split over independent chains that advance together;
each chain runs ``n_steps // chains`` steps and contributes its last
``n_keep // chains`` states.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError, SamplerError

LossClosure = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProposalSpec:
    variances: tuple[float, ...]
    n_steps: int = 5000
    n_keep: int = 1000
    chains: int = 1

    def __post_init__(self):
        if not self.variances or any(not v > 0 for v in self.variances):
            raise SamplerError(f"proposal variances must be positive, got {self.variances}")
        if not 0 < self.n_keep <= self.n_steps:
            raise SamplerError(f"need 0 < n_keep <= n_steps, got {self.n_keep} and {self.n_steps}")
        if self.chains < 1 or self.n_steps % self.chains or self.n_keep % self.chains:
            raise SamplerError(f"{self.chains} chains must evenly divide n_steps and n_keep")

    @property
    def dim(self) -> int:
        return len(self.variances)


@dataclass
class ChainState:
    """State of every chain: current points, their losses, acceptance counts."""

    z: np.ndarray
    loss: np.ndarray
    accepted: np.ndarray
    proposed: np.ndarray


@dataclass
class MHResult:
    samples: np.ndarray
    losses: np.ndarray
    state: ChainState
    lo: np.ndarray
    hi: np.ndarray
    loss_evaluations: int

    @property
    def acceptance_rate(self) -> float:
        proposed = int(self.state.proposed.sum())
        return float(self.state.accepted.sum()) / proposed if proposed else 0.0


def acceptance_prob(loss_prop: float, loss_cur: float, in_domain: bool) -> float:
    if loss_prop < 0 or loss_cur < 0:
        raise SamplerError(f"losses must be nonnegative, got {loss_prop} and {loss_cur}")
    if not in_domain:
        return 0.0
    if loss_cur == 0:
        return 1.0
    return min(1.0, loss_prop / loss_cur)


def _acceptance_probs(loss_prop: np.ndarray, loss_cur: np.ndarray, inside: np.ndarray) -> np.ndarray:
    safe = np.where(loss_cur > 0, loss_cur, 1.0)
    ratio = np.where(loss_cur > 0, np.minimum(1.0, loss_prop / safe), 1.0)
    return np.where(inside, ratio, 0.0)


def _checked(loss: LossClosure, points: np.ndarray) -> np.ndarray:
    values = np.asarray(loss(points), dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteError("loss is not finite", index=i, point=points[i])
    neg = values < 0
    if neg.any():
        i = int(np.argmax(neg))
        raise SamplerError(f"loss is negative ({values[i]}) at point {tuple(points[i])}")
    return values


def mh_run(
    loss: LossClosure,
    lo: Sequence[float],
    hi: Sequence[float],
    proposal: ProposalSpec,
    seed: int | np.random.Generator,
) -> MHResult:
    """Run the chains from uniform starts and return the kept tail.

    ``loss`` maps an ``(n, d)`` array of points to ``n`` nonnegative values.
    Samples are ordered step by step, chains within a step.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = proposal.dim
    if lo.shape != (d,) or hi.shape != (d,):
        raise SamplerError(f"box and proposal disagree on dimension ({lo.shape}, {hi.shape}, {d})")
    if np.any(lo > hi):
        raise SamplerError("sampling box is empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    scale = np.sqrt(np.asarray(proposal.variances))
    c = proposal.chains
    steps = proposal.n_steps // c
    keep = proposal.n_keep // c

    z = rng.uniform(lo, hi, size=(c, d))
    cur = _checked(loss, z)
    evaluations = c
    accepted = np.zeros(c, dtype=np.int64)
    kept = np.empty((keep, c, d))
    kept_loss = np.empty((keep, c))
    for n in range(steps):
        prop = z + rng.standard_normal((c, d)) * scale
        inside = np.all((prop >= lo) & (prop <= hi), axis=1)
        lp = np.zeros(c)
        if inside.any():
            lp[inside] = _checked(loss, prop[inside])
            evaluations += int(inside.sum())
        take = rng.random(c) < _acceptance_probs(lp, cur, inside)
        z[take] = prop[take]
        cur[take] = lp[take]
        accepted += take
        slot = n - (steps - keep)
        if slot >= 0:
            kept[slot] = z
            kept_loss[slot] = cur
    samples = kept.reshape(-1, d)
    if not np.all((samples >= lo) & (samples <= hi)):
        raise SamplerError("sample left the box")
    state = ChainState(z.copy(), cur.copy(), accepted, np.full(c, steps, dtype=np.int64))
    return MHResult(samples, kept_loss.ravel(), state, lo, hi, evaluations)


@dataclass
class Diagnostics:
    acceptance_rate: float
    histograms: list[tuple[np.ndarray, np.ndarray]]


def chain_diagnostics(result: MHResult, bins: int = 50) -> Diagnostics:
    """Acceptance rate and fixed-bin histograms over the sampling box, per axis."""
    if result.samples.shape[0] == 0:
        raise SamplerError("no samples")
    hists = []
    for axis in range(result.samples.shape[1]):
        counts, edges = np.histogram(result.samples[:, axis], bins=bins, range=(result.lo[axis], result.hi[axis]))
        hists.append((edges, counts))
    return Diagnostics(result.acceptance_rate, hists)


def write_samples_csv(
    path: str | Path,
    samples: np.ndarray,
    columns: Sequence[str],
    epoch: int,
    append: bool = False,
    comment: str | None = None,
) -> None:
    """One row per sample: ``epoch`` then one column per coordinate, floats in repr.

    ``comment`` is written first as a ``#`` line when the file is created.
    """
    path = Path(path)
    lines = []
    if not (append and path.exists()):
        if comment:
            lines.append(comment if comment.startswith("#") else "# " + comment)
        lines.append(",".join(["epoch", *columns]))
    for row in np.atleast_2d(samples):
        lines.append(str(epoch) + "," + ",".join(repr(float(v)) for v in row))
    with path.open("a" if append else "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Returns column names, epochs and the sample array."""
    lines = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    epochs = np.array([int(r[0]) for r in rows], dtype=np.int64)
    values = np.array([[float(v) for v in r[1:]] for r in rows])
    return header[1:], epochs, values
