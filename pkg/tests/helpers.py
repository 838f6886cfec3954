"""Finite-difference references and random model factories shared by tests."""

from __future__ import annotations

import numpy as np

from pdescl.jets import MLP


def random_mlp(rng: np.random.Generator, input_width: int, max_depth: int = 4, max_width: int = 16) -> MLP:
    depth = int(rng.integers(1, max_depth + 1))
    widths = [input_width] + [int(rng.integers(1, max_width + 1)) for _ in range(depth)] + [1]
    weights = [rng.normal(0, 1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(widths[:-1], widths[1:])]
    biases = [rng.normal(0, 0.3, size=b) for b in widths[1:]]
    return MLP(weights, biases)


def fd_input_derivatives(model: MLP, x: np.ndarray, h: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Five-point central differences of the network along every input coordinate.

    Both stencils are 4th order, so with h = 1e-3 truncation (~h^4) and
    rounding (~eps / h^2) both sit well below 1e-8 relative.
    """
    d = x.size
    grad, diag2 = np.empty(d), np.empty(d)
    f0 = model(x[None])[0]
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fp, fm = model((x + e)[None])[0], model((x - e)[None])[0]
        fp2, fm2 = model((x + 2 * e)[None])[0], model((x - 2 * e)[None])[0]
        grad[i] = (-fp2 + 8 * fp - 8 * fm + fm2) / (12 * h)
        diag2[i] = (-fp2 + 16 * fp - 30 * f0 + 16 * fm - fm2) / (12 * h * h)
    return grad, diag2


def fd_param_gradient(loss, model: MLP, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss(model)`` over the flat parameter vector."""
    theta = model.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        out[i] = (loss(model.with_flat(tp)) - loss(model.with_flat(tm))) / (2 * h)
    return out


def rel_err(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def norm_rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
