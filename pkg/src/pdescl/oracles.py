"""Reference solutions, evaluation grids, error metrics and field files."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bvp import BVPSpec, PointCloud, Shape
from .jets import AnalyticField
from .errors import CoefficientError, DimensionError, NoOracleError, NonFiniteError, PdesclError

FIELD_MAGIC = b"PDSCLFLD"
FIELD_VERSION = 1


@dataclass(frozen=True)
class EvalGrid:
    """Tensor grid; ``points`` lists nodes in row-major order (last axis fastest)."""

    names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.names) != len(self.axes):
            raise DimensionError("one name per axis")
        for name, ax in zip(self.names, self.axes):
            if ax.ndim != 1 or ax.size < 2:
                raise DimensionError(f"axis {name!r} needs at least 2 nodes")

    @classmethod
    def regular(
        cls,
        names: Sequence[str],
        lo: Sequence[float],
        hi: Sequence[float],
        counts: Sequence[int],
        endpoint: Sequence[bool] | None = None,
    ) -> "EvalGrid":
        endpoint = endpoint or [True] * len(names)
        axes = tuple(
            np.linspace(a, b, n, endpoint=e) for a, b, n, e in zip(lo, hi, counts, endpoint)
        )
        return cls(tuple(names), axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def to_dict(self) -> dict:
        return {"names": list(self.names), "axes": [ax.tolist() for ax in self.axes]}


def default_grid(spec: BVPSpec, nx: int = 256, nt: int = 100) -> EvalGrid:
    """Evaluation grid of a catalog problem.

    Periodic axes omit their upper end, which duplicates the lower one.
    """
    d = spec.domain
    if spec.id == "helmholtz":
        return EvalGrid.regular(("x", "y"), d.space_lo, d.space_hi, (256, 256))
    if spec.id == "eikonal":
        return EvalGrid.regular(("x", "y"), d.space_lo, d.space_hi, (256, 256))
    return EvalGrid.regular(
        ("x", "t"), (d.space_lo[0], 0.0), (d.space_hi[0], d.time_hi), (nx, nt), (not d.periodic[0], True)
    )


@dataclass
class ErrorReport:
    relative_l2: float
    max_abs_error: float
    per_coefficient: list[tuple[tuple[float, ...], float]] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.relative_l2) and self.relative_l2 >= 0):
            raise NonFiniteError(f"relative error must be finite and nonnegative, got {self.relative_l2}")

    def to_dict(self) -> dict:
        out = {"relative_l2": self.relative_l2, "max_abs_error": self.max_abs_error}
        if self.per_coefficient is not None:
            out["per_coefficient"] = [{"coefficients": list(c), "relative_l2": e} for c, e in self.per_coefficient]
        return out


# ----------------------------------------------------------------------------
# closed forms


def convection_exact(x, t, beta):
    return np.sin(np.asarray(x) - np.asarray(beta) * np.asarray(t))


def helmholtz_exact(x, y, a1, a2):
    return np.sin(math.pi * np.asarray(a1) * np.asarray(x)) * np.sin(math.pi * np.asarray(a2) * np.asarray(y))


def eikonal_signed_distance(point, shape: Shape):
    if isinstance(shape, PointCloud):
        raise NoOracleError("point-cloud shapes have no exact signed distance")
    p = np.asarray(point, dtype=np.float64)
    out = shape.sdf(np.atleast_2d(p))
    return float(out[0]) if p.ndim == 1 else out


def exact_field(spec: BVPSpec) -> AnalyticField:
    """The closed-form solution of ``spec`` as a model stand-in with exact jets.

    Inputs follow :meth:`BVPSpec.model_inputs`: point coordinates, then the
    coefficients for parametric problems.
    """
    width = spec.input_width

    if spec.id == "convection":
        fixed = None if spec.parametric else float(spec.coeffs.value[0])

        def fn(X):
            x, t = X[:, 0], X[:, 1]
            beta = X[:, 2] if fixed is None else np.full_like(x, fixed)
            phase = x - beta * t
            s, c = np.sin(phase), np.cos(phase)
            cols = [(c, -s), (-beta * c, -beta * beta * s)]
            if fixed is None:
                cols.append((-t * c, -t * t * s))
            return s, np.stack([g for g, _ in cols], axis=1), np.stack([h for _, h in cols], axis=1)

    elif spec.id == "helmholtz":
        fixed = None if spec.parametric else spec.coeffs.value

        def fn(X):
            x, y = X[:, 0], X[:, 1]
            a1, a2 = (X[:, 2], X[:, 3]) if fixed is None else (np.full_like(x, fixed[0]), np.full_like(x, fixed[1]))
            px, py = math.pi * a1 * x, math.pi * a2 * y
            sx, cx, sy, cy = np.sin(px), np.cos(px), np.sin(py), np.cos(py)
            u = sx * sy
            cols = [
                (math.pi * a1 * cx * sy, -((math.pi * a1) ** 2) * u),
                (math.pi * a2 * sx * cy, -((math.pi * a2) ** 2) * u),
            ]
            if fixed is None:
                cols += [(math.pi * x * cx * sy, -((math.pi * x) ** 2) * u), (math.pi * y * sx * cy, -((math.pi * y) ** 2) * u)]
            return u, np.stack([g for g, _ in cols], axis=1), np.stack([h for _, h in cols], axis=1)

    else:
        raise NoOracleError(f"no closed-form solution for {spec.id}")
    return AnalyticField(width, fn)


def relative_l2(pred, ref) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise DimensionError(f"field lengths differ: {pred.size} vs {ref.size}")
    denom = float(np.sum(ref * ref))
    if denom == 0.0:
        raise PdesclError("reference field is identically zero")
    return math.sqrt(float(np.sum((pred - ref) ** 2)) / denom)


# ----------------------------------------------------------------------------
# reaction-diffusion reference


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def rd_reference(grid: EvalGrid, nu: float, rho: float, dt: float = 1e-3, length: float = 2 * math.pi, tol: float = 1e-9) -> np.ndarray:
    """Strang-split reference for ``u_t = nu u_xx + rho u (1 - u)``, periodic in x.

    The grid's first axis must be the periodic x axis ``[0, length)`` with a
    power-of-two node count; the second axis lists output times.  Returns a
    flat array aligned with ``grid.points``.
    """
    if dt <= 0:
        raise PdesclError(f"time step must be positive, got {dt}")
    if len(grid.axes) != 2:
        raise DimensionError("reaction-diffusion grid must have axes (x, t)")
    x, times = grid.axes
    n = x.size
    if not _is_power_of_two(n):
        raise DimensionError(f"spatial node count must be a power of two, got {n}")
    if not np.allclose(x, length * np.arange(n) / n, rtol=0, atol=1e-12 * length):
        raise DimensionError("x axis must be the periodic grid [0, L) without its endpoint")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise DimensionError("output times must be sorted and nonnegative")

    u = np.exp(-0.5 * ((x - math.pi) / (math.pi / 4)) ** 2)
    k = 2 * math.pi * np.fft.rfftfreq(n, d=length / n)
    out = np.empty((n, times.size))
    t_now = 0.0
    for j, t_target in enumerate(times):
        span = t_target - t_now
        if span > 0:
            steps = max(1, math.ceil(span / dt - 1e-12))
            h = span / steps
            growth = math.exp(rho * h / 2)
            damp = np.exp(-nu * k * k * h)
            for _ in range(steps):
                u = u * growth / (u * growth + 1.0 - u)
                u = np.fft.irfft(np.fft.rfft(u) * damp, n)
                u = u * growth / (u * growth + 1.0 - u)
            if u.min() < -tol or u.max() > 1.0 + tol or not np.all(np.isfinite(u)):
                raise NonFiniteError(f"reaction-diffusion reference left [0, 1] at t={t_target:.6g}")
            t_now = t_target
        out[:, j] = u
    return out.ravel()


# ----------------------------------------------------------------------------
# dispatch


def oracle_field(spec: BVPSpec, grid: EvalGrid, pi: Sequence[float] | None = None, dt: float = 1e-3) -> np.ndarray:
    """Reference solution of ``spec`` at coefficients ``pi`` on ``grid``."""
    pts = grid.points
    c = spec.coeff_array(pi, 1)[0]
    if spec.id == "convection":
        return convection_exact(pts[:, 0], pts[:, 1], c[0])
    if spec.id == "reaction_diffusion":
        return rd_reference(grid, c[0], c[1], dt=dt, length=spec.domain.space_hi[0] - spec.domain.space_lo[0])
    if spec.id == "helmholtz":
        return helmholtz_exact(pts[:, 0], pts[:, 1], c[0], c[1])
    if spec.id == "eikonal":
        return eikonal_signed_distance(pts, spec.shape)
    raise NoOracleError(f"no reference solution for {spec.id}")


def synthesize_observations(
    spec: BVPSpec,
    coefficients: Sequence[Sequence[float]],
    grid: EvalGrid,
    noise_std: float = 0.0,
    seed: int = 0,
    dt: float = 1e-3,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reference fields for each coefficient vector, plus seeded Gaussian noise."""
    if noise_std < 0:
        raise PdesclError("noise standard deviation must be nonnegative")
    rng = np.random.default_rng(seed)
    out = []
    for pi in coefficients:
        p = np.atleast_1d(np.asarray(pi, dtype=np.float64))
        if not spec.coeffs.contains(p)[0]:
            raise CoefficientError(f"coefficients {tuple(p)} lie outside the box")
        field = oracle_field(spec, grid, p, dt=dt)
        if noise_std > 0:
            field = field + noise_std * rng.standard_normal(field.shape)
        out.append((p, field))
    return out


# ----------------------------------------------------------------------------
# field files
#
# CSV: header is the axis names followed by the field name; one row per grid
# node in row-major order, floats written with repr (round-trip exact).
#
# Binary, little-endian:
#   8 bytes  magic "PDSCLFLD"
#   uint32   format version (1)
#   uint32   number of axes A
#   A times: uint32 name length, UTF-8 name, uint32 node count n, n float64
#   uint64   number of values V (product of node counts)
#   V float64 field values in row-major order


def write_field_csv(path: str | Path, grid: EvalGrid, field: np.ndarray, name: str = "u") -> None:
    field = np.asarray(field, dtype=np.float64).ravel()
    if field.size != grid.size:
        raise DimensionError(f"field has {field.size} values, grid has {grid.size} nodes")
    lines = [",".join(list(grid.names) + [name])]
    for row, v in zip(grid.points, field):
        lines.append(",".join(repr(float(c)) for c in row) + "," + repr(float(v)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Returns the header and an array of rows (coordinates then value)."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    rows = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line])
    return header, rows


def write_field_binary(path: str | Path, grid: EvalGrid, field: np.ndarray) -> None:
    field = np.asarray(field, dtype="<f8").ravel()
    if field.size != grid.size:
        raise DimensionError(f"field has {field.size} values, grid has {grid.size} nodes")
    chunks = [FIELD_MAGIC, struct.pack("<II", FIELD_VERSION, len(grid.axes))]
    for name, ax in zip(grid.names, grid.axes):
        raw = name.encode("utf-8")
        chunks += [struct.pack("<I", len(raw)), raw, struct.pack("<I", ax.size), ax.astype("<f8").tobytes()]
    chunks += [struct.pack("<Q", field.size), field.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def read_field_binary(path: str | Path) -> tuple[EvalGrid, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != FIELD_MAGIC:
        raise PdesclError(f"{path} is not a field file")
    version, n_axes = struct.unpack_from("<II", data, 8)
    if version != FIELD_VERSION:
        raise PdesclError(f"unsupported field format version {version}")
    pos = 16
    names, axes = [], []
    for _ in range(n_axes):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        names.append(data[pos : pos + ln].decode("utf-8"))
        pos += ln
        (cnt,) = struct.unpack_from("<I", data, pos)
        pos += 4
        axes.append(np.frombuffer(data, "<f8", cnt, pos).copy())
        pos += 8 * cnt
    (nv,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    field = np.frombuffer(data, "<f8", nv, pos).copy()
    return EvalGrid(tuple(names), tuple(axes)), field
