"""Exact input derivatives of tanh MLPs by forward jet propagation.

A jet carries, for every point of a batch, the network value together with
first derivatives and diagonal second derivatives along selected input
coordinates.  Each affine layer maps ``(a, a', a'') -> (Wa + b, Wa', Wa'')``
and each tanh layer maps ``z -> (s, s' z', s'' z'^2 + s' z'')``.

Parameter gradients of any scalar loss built from jets are obtained by a
hand-written reverse sweep over the recorded forward computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, PdesclError

CHECKPOINT_FORMAT = "pdescl-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class MLP:
    """Fully connected network, tanh on hidden layers, identity on the output.

    ``weights[l]`` has shape ``(n_in, n_out)`` so a batch ``X`` of shape
    ``(B, n_in)`` maps to ``X @ W + b``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if not self.weights or len(self.weights) != len(self.biases):
            raise DimensionError("need one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {l}: weight {w.shape} and bias {b.shape} do not match")
            if l > 0 and w.shape[0] != self.weights[l - 1].shape[1]:
                raise DimensionError(
                    f"layer {l} expects width {w.shape[0]}, previous layer gives {self.weights[l - 1].shape[1]}"
                )
        if self.weights[-1].shape[1] != 1:
            raise DimensionError("output width must be 1")
        self.check_finite()

    @classmethod
    def glorot(cls, layer_widths: Sequence[int], seed: int = 0) -> "MLP":
        """Glorot-uniform weights, zero biases."""
        widths = [int(w) for w in layer_widths]
        if len(widths) < 2 or min(widths) < 1:
            raise DimensionError(f"bad layer widths {widths}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def layer_widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def check_finite(self) -> None:
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NonFiniteError(f"non-finite parameter in layer {l}")

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def with_flat(self, theta: np.ndarray) -> "MLP":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise DimensionError(f"expected {self.n_params} parameters, got {theta.size}")
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[i : i + w.size].reshape(w.shape))
            i += w.size
            biases.append(theta[i : i + b.size].copy())
            i += b.size
        return MLP(weights, biases)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Plain forward pass, returns values of shape ``(B,)``."""
        return forward(self, points, order=0).value


@dataclass
class Jet:
    """Value, input gradient and diagonal input Hessian at one point."""

    value: float
    grad: np.ndarray | None = None
    diag2: np.ndarray | None = None


@dataclass
class _LayerRecord:
    a_in: np.ndarray
    g_in: np.ndarray | None
    h_in: np.ndarray | None
    zg: np.ndarray | None
    zh: np.ndarray | None
    s: np.ndarray | None


@dataclass
class JetBatch:
    """Jets of a batch of points.

    ``grad[:, j]`` and ``diag2[:, j]`` hold derivatives along input
    coordinate ``wrt[j]``.
    """

    points: np.ndarray
    value: np.ndarray
    grad: np.ndarray | None
    diag2: np.ndarray | None
    order: int
    wrt: tuple[int, ...]
    _tape: list[_LayerRecord] | None = field(default=None, repr=False)

    def col(self, coord: int) -> int:
        try:
            return self.wrt.index(coord)
        except ValueError:
            raise DimensionError(f"jet carries no derivative along input {coord}") from None

    def du(self, coord: int) -> np.ndarray:
        if self.grad is None:
            raise DimensionError("jet was computed at order 0")
        return self.grad[:, self.col(coord)]

    def d2u(self, coord: int) -> np.ndarray:
        if self.diag2 is None:
            raise DimensionError("jet was computed below order 2")
        return self.diag2[:, self.col(coord)]

    def __len__(self) -> int:
        return self.value.shape[0]


@dataclass
class JetAdjoint:
    """Sensitivities of a loss with respect to the entries of a JetBatch."""

    value: np.ndarray
    grad: np.ndarray | None = None
    diag2: np.ndarray | None = None


@dataclass
class ParamGradient:
    """Gradient arrays congruent with an MLP's weights and biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, model: MLP) -> "ParamGradient":
        return cls([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def __mul__(self, c: float) -> "ParamGradient":
        return ParamGradient([c * a for a in self.weights], [c * a for a in self.biases])

    __rmul__ = __mul__

    def add_scaled_(self, other: "ParamGradient", c: float) -> "ParamGradient":
        for a, b in zip(self.weights, other.weights):
            a += c * b
        for a, b in zip(self.biases, other.biases):
            a += c * b
        return self

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.weights + self.biases)


def forward(
    model: MLP,
    points: np.ndarray,
    order: int = 2,
    wrt: Sequence[int] | None = None,
    record: bool = False,
) -> JetBatch:
    """Propagate jets of ``order`` through ``model`` for a batch of points.

    ``wrt`` selects the input coordinates to differentiate along (all of
    them by default).  With ``record=True`` the intermediates needed by
    :func:`backward` are kept.
    """
    if order not in (0, 1, 2):
        raise DimensionError(f"order must be 0, 1 or 2, got {order}")
    if isinstance(model, AnalyticField):
        return model.jets(points, order, wrt)
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise DimensionError(f"model takes {model.input_width} inputs, got array of shape {X.shape}")
    if not np.isfinite(X).all():
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
        raise NonFiniteError("non-finite input", bad, X[bad])
    model.check_finite()
    wrt = tuple(range(model.input_width)) if wrt is None else tuple(int(i) for i in wrt)
    if any(i < 0 or i >= model.input_width for i in wrt):
        raise DimensionError(f"derivative coordinates {wrt} out of range")
    if order == 0:
        wrt = ()

    B, k = X.shape[0], len(wrt)
    last = len(model.weights) - 1
    a, G, H = X, None, None
    tape: list[_LayerRecord] = []
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        n_in, n_out = W.shape
        z = a @ W + b
        zg = zh = None
        if order >= 1:
            if l == 0:
                zg = np.broadcast_to(W[list(wrt)][:, None, :], (k, B, n_out))
            else:
                zg = (G.reshape(-1, n_in) @ W).reshape(k, B, n_out)
        if order == 2 and l > 0:
            zh = (H.reshape(-1, n_in) @ W).reshape(k, B, n_out)

        if l == last:
            if record:
                tape.append(_LayerRecord(a, G, H, None, None, None))
            a, G, H = z, zg, zh
            break

        s = np.tanh(z)
        d1 = 1.0 - s * s
        G_next = H_next = None
        if order >= 1:
            G_next = d1 * zg
        if order == 2:
            d2 = -2.0 * s * d1
            H_next = d2 * zg * zg
            if zh is not None:
                H_next += d1 * zh
        if record:
            tape.append(_LayerRecord(a, G, H, zg, zh, s))
        a, G, H = s, G_next, H_next

    value = a[:, 0].copy()
    grad = diag2 = None
    if order >= 1:
        grad = np.ascontiguousarray(G[:, :, 0].T)
    if order == 2:
        diag2 = np.zeros((B, k)) if H is None else np.ascontiguousarray(H[:, :, 0].T)
    return JetBatch(X, value, grad, diag2, order, wrt, tape if record else None)


@dataclass
class AnalyticField:
    """A closed-form field that stands in for a network when verifying losses
    and metrics.  It has no parameters, so it supports jets but not
    :func:`backward`.

    ``fn(points)`` returns the value ``(B,)``, the gradient ``(B, d)`` and the
    diagonal second derivatives ``(B, d)`` over all ``d`` input coordinates.
    """

    input_width: int
    fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.jets(points, 0, None).value

    def jets(self, points, order: int, wrt: Sequence[int] | None) -> JetBatch:
        X = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if X.shape[1] != self.input_width:
            raise DimensionError(f"field takes {self.input_width} inputs, got array of shape {X.shape}")
        wrt = tuple(range(self.input_width)) if wrt is None or order == 0 else tuple(int(i) for i in wrt)
        if order == 0:
            wrt = ()
        value, grad, diag2 = self.fn(X)
        cols = list(wrt)
        return JetBatch(
            X,
            np.asarray(value, dtype=np.float64),
            np.asarray(grad)[:, cols] if order >= 1 else None,
            np.asarray(diag2)[:, cols] if order == 2 else None,
            order,
            wrt,
        )


def backward(model: MLP, jets: JetBatch, adjoint: JetAdjoint) -> ParamGradient:
    """Pull a loss sensitivity on jet entries back to the parameters."""
    if jets._tape is None:
        raise PdesclError("jets were computed without record=True")
    B, k = len(jets), len(jets.wrt)
    wrt = list(jets.wrt)
    ga = np.asarray(adjoint.value, dtype=np.float64).reshape(B, 1)
    gG = gH = None
    if adjoint.grad is not None and k:
        gG = np.asarray(adjoint.grad, dtype=np.float64).T.reshape(k, B, 1)
    if adjoint.diag2 is not None and k:
        gH = np.asarray(adjoint.diag2, dtype=np.float64).T.reshape(k, B, 1)

    n_layers = len(model.weights)
    gws: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gbs: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for l in range(n_layers - 1, -1, -1):
        rec = jets._tape[l]
        W = model.weights[l]
        n_in, n_out = W.shape
        if l == n_layers - 1:
            gz, gzg, gzh = ga, gG, gH
        else:
            s = rec.s
            d1 = 1.0 - s * s
            d2 = -2.0 * s * d1
            gz = ga * d1
            gzg = gzh = None
            gd1 = None
            if gG is not None:
                gzg = gG * d1
                gd1 = np.einsum("kbn,kbn->bn", gG, rec.zg)
            if gH is not None:
                gzh = gH * d1
                zg2 = rec.zg * rec.zg
                t = gH * d2 * 2.0 * rec.zg
                gzg = t if gzg is None else gzg + t
                if rec.zh is not None:
                    t = np.einsum("kbn,kbn->bn", gH, rec.zh)
                    gd1 = t if gd1 is None else gd1 + t
                gd2 = np.einsum("kbn,kbn->bn", gH, zg2)
                gz = gz + gd2 * d1 * (6.0 * s * s - 2.0)
            if gd1 is not None:
                gz = gz + gd1 * d2

        gW = rec.a_in.T @ gz
        if gzg is not None:
            if l == 0:
                np.add.at(gW, wrt, gzg.sum(axis=1))
            else:
                gW += rec.g_in.reshape(-1, n_in).T @ gzg.reshape(-1, n_out)
        if gzh is not None and l > 0 and rec.h_in is not None:
            gW += rec.h_in.reshape(-1, n_in).T @ gzh.reshape(-1, n_out)
        gws[l] = gW
        gbs[l] = gz.sum(axis=0)

        if l > 0:
            WT = W.T
            ga = gz @ WT
            gG = None if gzg is None else (gzg.reshape(-1, n_out) @ WT).reshape(k, B, n_in)
            gH = None if gzh is None else (gzh.reshape(-1, n_out) @ WT).reshape(k, B, n_in)
    return ParamGradient(gws, gbs)


LossFn = Callable[[JetBatch], tuple[np.ndarray, JetAdjoint]]


def value_and_param_gradient(
    model: MLP,
    points: np.ndarray,
    loss_fn: LossFn,
    order: int = 2,
    wrt: Sequence[int] | None = None,
) -> tuple[float, ParamGradient]:
    """Loss value and its parameter gradient.

    ``loss_fn`` receives the jets of ``points`` and returns the per-item
    loss contributions (summed into the scalar loss) together with the
    adjoint of that sum with respect to the jets.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0, ParamGradient.zeros_like(model)
    jets = forward(model, points, order=order, wrt=wrt, record=True)
    items, adjoint = loss_fn(jets)
    items = np.atleast_1d(np.asarray(items, dtype=np.float64))
    bad = np.flatnonzero(~np.isfinite(items))
    if bad.size:
        i = int(bad[0])
        raise NonFiniteError("non-finite loss", i, jets.points[min(i, len(jets) - 1)])
    return float(items.sum()), backward(model, jets, adjoint)


def param_gradient(
    model: MLP,
    points: np.ndarray,
    loss_fn: LossFn,
    order: int = 2,
    wrt: Sequence[int] | None = None,
) -> ParamGradient:
    return value_and_param_gradient(model, points, loss_fn, order=order, wrt=wrt)[1]


def jet_forward(model: MLP, point: Sequence[float], order: int = 2) -> Jet:
    """Jet of ``model`` at a single input point."""
    x = np.asarray(point, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a single input vector, got shape {x.shape}")
    jb = forward(model, x[None, :], order=order)
    return Jet(
        value=float(jb.value[0]),
        grad=None if jb.grad is None else jb.grad[0].copy(),
        diag2=None if jb.diag2 is None else jb.diag2[0].copy(),
    )


def save_checkpoint(model: MLP, path: str | Path, meta: dict | None = None) -> Path:
    """Write ``model`` as JSON text.

    Floats are written with ``repr`` precision, so loading is exact.
    """
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "activation": "tanh",
        "output_activation": "identity",
        "layer_widths": model.layer_widths,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "meta": meta or {},
    }
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> tuple[MLP, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise PdesclError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise PdesclError(f"{path}: unsupported checkpoint version {doc.get('format_version')}")
    model = MLP([np.array(w) for w in doc["weights"]], [np.array(b) for b in doc["biases"]])
    if model.layer_widths != doc["layer_widths"]:
        raise DimensionError(f"{path}: layer widths disagree with stored arrays")
    return model, doc.get("meta", {})
