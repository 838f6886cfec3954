"""Boundary-value problem catalog.

Points are arrays whose columns are the spatial coordinates followed by
time (for evolution problems).  Coefficients ``pi`` are arrays of shape
``(B, q)``.  A model of a parametric problem takes ``(point, pi)`` as input;
a single-instance model takes the point only.

Residual operators return the signed residual together with its partial
derivatives with respect to the jet entries, which the trainer chains into
parameter gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BoundaryPointError, CoefficientError, DimensionError, NoOracleError
from .jets import MLP, Jet, JetAdjoint, JetBatch, forward

CATALOG = ("convection", "reaction_diffusion", "eikonal", "helmholtz", "burgers")
EXPERIMENTAL = ("burgers",)

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class DomainBox:
    """Spatial box, time horizon and the boundary treatment of each spatial axis.

    ``periodic[i]`` True means the faces ``x_i = lo`` and ``x_i = hi`` are
    tied together; False means Dirichlet data on both faces.
    """

    space_lo: tuple[float, ...]
    space_hi: tuple[float, ...]
    time_hi: float = 0.0
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        if len(self.space_lo) != len(self.space_hi) or not self.space_lo:
            raise DimensionError("space bounds must be nonempty and of equal length")
        if any(lo >= hi for lo, hi in zip(self.space_lo, self.space_hi)):
            raise DimensionError(f"need lo < hi, got {self.space_lo} / {self.space_hi}")
        if self.time_hi < 0:
            raise DimensionError("time horizon must be nonnegative")
        if self.periodic and len(self.periodic) != len(self.space_lo):
            raise DimensionError("one periodicity flag per spatial axis")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * len(self.space_lo))

    @property
    def space_dim(self) -> int:
        return len(self.space_lo)

    @property
    def has_time(self) -> bool:
        return self.time_hi > 0

    @property
    def point_dim(self) -> int:
        return self.space_dim + int(self.has_time)

    @property
    def time_axis(self) -> int | None:
        return self.space_dim if self.has_time else None

    @property
    def lo(self) -> np.ndarray:
        return np.array(list(self.space_lo) + ([0.0] if self.has_time else []))

    @property
    def hi(self) -> np.ndarray:
        return np.array(list(self.space_hi) + ([self.time_hi] if self.has_time else []))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.point_dim))


@dataclass(frozen=True)
class CoefficientBox:
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise CoefficientError("coefficient bounds of unequal length")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise CoefficientError(f"need lo <= hi, got {self.lo} / {self.hi}")

    @classmethod
    def point(cls, *values: float) -> "CoefficientBox":
        return cls(tuple(float(v) for v in values), tuple(float(v) for v in values))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def fixed(self) -> bool:
        return all(a == b for a, b in zip(self.lo, self.hi))

    @property
    def value(self) -> np.ndarray:
        if not self.fixed:
            raise CoefficientError("coefficient box is not a single value")
        return np.array(self.lo, dtype=np.float64)

    def contains(self, pi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pi, dtype=np.float64))
        if p.shape[1] != self.dim:
            raise CoefficientError(f"expected {self.dim} coefficients, got {p.shape[1]}")
        return np.all((p >= np.array(self.lo) - tol) & (p <= np.array(self.hi) + tol), axis=1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))


# ----------------------------------------------------------------------------
# eikonal shapes


class Shape:
    """Closed curve in the plane; ``boundary_points`` samples it evenly."""

    def sdf(self, points: np.ndarray) -> np.ndarray:
        raise NoOracleError(f"{type(self).__name__} has no exact signed distance")

    def boundary_points(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def perimeter(self) -> float:
        raise NotImplementedError

    def on_boundary(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return np.abs(self.sdf(points)) <= tol


@dataclass(frozen=True)
class Circle(Shape):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.5

    def sdf(self, points):
        p = np.atleast_2d(points) - np.asarray(self.center)
        return np.hypot(p[:, 0], p[:, 1]) - self.radius

    def perimeter(self):
        return 2 * math.pi * self.radius

    def boundary_points(self, n):
        a = 2 * math.pi * np.arange(n) / n
        return np.column_stack([self.center[0] + self.radius * np.cos(a), self.center[1] + self.radius * np.sin(a)])


@dataclass(frozen=True)
class Square(Shape):
    """Axis-aligned square of half side ``half``."""

    center: tuple[float, float] = (0.0, 0.0)
    half: float = 0.5

    def sdf(self, points):
        q = np.abs(np.atleast_2d(points) - np.asarray(self.center)) - self.half
        outside = np.hypot(np.maximum(q[:, 0], 0.0), np.maximum(q[:, 1], 0.0))
        inside = np.minimum(np.maximum(q[:, 0], q[:, 1]), 0.0)
        return outside + inside

    def perimeter(self):
        return 8 * self.half

    def boundary_points(self, n):
        s = 8 * self.half * np.arange(n) / n
        side, u = np.divmod(s, 2 * self.half)
        cx, cy, h = self.center[0], self.center[1], self.half
        x = np.select([side == 0, side == 1, side == 2], [cx - h + u, cx + h, cx + h - u], cx - h)
        y = np.select([side == 0, side == 1, side == 2], [cy - h, cy - h + u, cy + h], cy + h - u)
        return np.column_stack([x, y])


@dataclass(frozen=True)
class Union(Shape):
    """Union of disjoint shapes; min of signed distances is exact then."""

    parts: tuple[Shape, ...] = ()

    def sdf(self, points):
        return np.min([s.sdf(points) for s in self.parts], axis=0)

    def perimeter(self):
        return sum(s.perimeter() for s in self.parts)

    def boundary_points(self, n):
        lengths = np.array([s.perimeter() for s in self.parts])
        counts = np.floor(n * lengths / lengths.sum()).astype(int)
        counts[np.argmax(lengths)] += n - counts.sum()
        return np.vstack([s.boundary_points(int(c)) for s, c in zip(self.parts, counts)])


@dataclass(frozen=True)
class PointCloud(Shape):
    """Boundary given only as points; no exact distance field exists."""

    points: tuple[tuple[float, float], ...] = ()

    @classmethod
    def load(cls, path: str | Path) -> "PointCloud":
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y = line.split()[:2]
            rows.append((float(x), float(y)))
        return cls(tuple(rows))

    def perimeter(self):
        p = np.asarray(self.points)
        return float(np.hypot(*np.diff(np.vstack([p, p[:1]]), axis=0).T).sum())

    def boundary_points(self, n):
        p = np.asarray(self.points)
        idx = np.linspace(0, len(p), n, endpoint=False).astype(int)
        return p[idx]

    def on_boundary(self, points, tol=1e-9):
        p = np.atleast_2d(points)
        cloud = np.asarray(self.points)
        d = np.min(np.hypot(p[:, None, 0] - cloud[None, :, 0], p[:, None, 1] - cloud[None, :, 1]), axis=1)
        return d <= tol


def two_circles() -> Union:
    return Union((Circle((-0.45, 0.0), 0.3), Circle((0.45, 0.1), 0.25)))


# ----------------------------------------------------------------------------
# invariances


@dataclass(frozen=True)
class Invariance:
    """Transform ``gamma(pi)`` acting on points; the true solution is unchanged by it."""

    name: str
    apply: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _convection_period_shift(points: np.ndarray, pi: np.ndarray, time_hi: float) -> np.ndarray:
    # shift t by one period 2*pi/beta; images beyond T are moved back by the
    # largest whole number of periods that fits in (0, T]
    period = 2 * math.pi / pi[:, 0]
    whole = np.floor(time_hi / period) * period
    t = points[:, 1] + period
    t = np.where(t > time_hi, t - whole, t)
    out = points.copy()
    out[:, 1] = t
    return out


# ----------------------------------------------------------------------------
# the BVP record


@dataclass(frozen=True)
class BVPSpec:
    id: str
    domain: DomainBox
    coeffs: CoefficientBox
    wave_number: float = 1.0
    shape: Shape | None = None

    def __post_init__(self):
        if self.id not in CATALOG:
            raise CoefficientError(f"unknown problem {self.id!r}; choose from {CATALOG}")
        expected = len(_COEFF_NAMES[self.id])
        if self.coeffs.dim != expected:
            raise CoefficientError(f"{self.id} takes {expected} coefficients, box has {self.coeffs.dim}")
        if self.id == "eikonal" and self.shape is None:
            raise CoefficientError("eikonal problem needs a boundary shape")

    @property
    def parametric(self) -> bool:
        return not self.coeffs.fixed

    @property
    def coeff_names(self) -> tuple[str, ...]:
        return _COEFF_NAMES[self.id]

    @property
    def input_width(self) -> int:
        return self.domain.point_dim + (self.coeffs.dim if self.parametric else 0)

    @property
    def residual_order(self) -> int:
        return 1 if self.id in ("convection", "eikonal") else 2

    @property
    def derivative_coords(self) -> tuple[int, ...]:
        return tuple(range(self.domain.point_dim))

    @property
    def invariances(self) -> tuple[Invariance, ...]:
        if self.id == "convection":
            T = self.domain.time_hi
            return (Invariance("period_shift", lambda p, pi: _convection_period_shift(p, pi, T)),)
        return ()

    def coeff_array(self, pi: np.ndarray | Sequence[float] | None, n: int) -> np.ndarray:
        """Broadcast coefficients to shape ``(n, q)`` and check they lie in the box."""
        if pi is None:
            if self.parametric:
                raise CoefficientError(f"{self.id} is parametric; coefficients are required")
            pi = self.coeffs.value
        p = np.asarray(pi, dtype=np.float64)
        if p.ndim <= 1:
            p = np.broadcast_to(p.reshape(1, -1), (n, p.size))
        if p.shape != (n, self.coeffs.dim):
            raise CoefficientError(f"{self.id} takes {self.coeffs.dim} coefficients, got shape {p.shape}")
        if self.coeffs.dim and not self.coeffs.contains(p).all():
            raise CoefficientError(f"coefficients outside the box {self.coeffs.lo}..{self.coeffs.hi}")
        return p

    def model_inputs(self, points: np.ndarray, pi: np.ndarray | None = None) -> np.ndarray:
        """Rows fed to the network: the point, then the coefficients if parametric."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if p.shape[1] != self.domain.point_dim:
            raise DimensionError(f"{self.id} points have {self.domain.point_dim} coordinates, got {p.shape[1]}")
        if not self.parametric:
            return p
        return np.hstack([p, self.coeff_array(pi, p.shape[0])])


_COEFF_NAMES = {
    "convection": ("beta",),
    "reaction_diffusion": ("nu", "rho"),
    "eikonal": (),
    "helmholtz": ("a1", "a2"),
    "burgers": ("nu",),
}

TWO_PI = 2 * math.pi


def convection(beta: float | tuple[float, float] = 30.0) -> BVPSpec:
    lo, hi = (beta, beta) if np.isscalar(beta) else beta
    return BVPSpec(
        "convection", DomainBox((0.0,), (TWO_PI,), 1.0, (True,)), CoefficientBox((float(lo),), (float(hi),))
    )


def reaction_diffusion(nu: float | tuple = 3.0, rho: float | tuple = 3.0) -> BVPSpec:
    nlo, nhi = (nu, nu) if np.isscalar(nu) else nu
    rlo, rhi = (rho, rho) if np.isscalar(rho) else rho
    return BVPSpec(
        "reaction_diffusion",
        DomainBox((0.0,), (TWO_PI,), 1.0, (True,)),
        CoefficientBox((float(nlo), float(rlo)), (float(nhi), float(rhi))),
    )


def eikonal(shape: Shape | None = None) -> BVPSpec:
    return BVPSpec("eikonal", DomainBox((-1.0, -1.0), (1.0, 1.0)), CoefficientBox(), shape=shape or two_circles())


def helmholtz(a1: float | tuple = 1.0, a2: float | tuple = 1.0, k: float = 1.0) -> BVPSpec:
    lo1, hi1 = (a1, a1) if np.isscalar(a1) else a1
    lo2, hi2 = (a2, a2) if np.isscalar(a2) else a2
    return BVPSpec(
        "helmholtz",
        DomainBox((0.0, 0.0), (1.0, 1.0)),
        CoefficientBox((float(lo1), float(lo2)), (float(hi1), float(hi2))),
        wave_number=float(k),
    )


def burgers(nu: float | tuple = 0.01) -> BVPSpec:
    lo, hi = (nu, nu) if np.isscalar(nu) else nu
    return BVPSpec(
        "burgers", DomainBox((0.0,), (1.0,), 1.0, (True,)), CoefficientBox((float(lo),), (float(hi),))
    )


def make_bvp(problem_id: str, **kw) -> BVPSpec:
    builders = {
        "convection": convection,
        "reaction_diffusion": reaction_diffusion,
        "eikonal": eikonal,
        "helmholtz": helmholtz,
        "burgers": burgers,
    }
    if problem_id not in builders:
        raise CoefficientError(f"unknown problem {problem_id!r}; choose from {CATALOG}")
    return builders[problem_id](**kw)


# ----------------------------------------------------------------------------
# forcing, boundary data, residuals


def _forcing_batch(spec: BVPSpec, points: np.ndarray, pi: np.ndarray) -> np.ndarray:
    if spec.id != "helmholtz":
        return np.zeros(points.shape[0])
    k2 = spec.wave_number**2
    a1, a2 = pi[:, 0], pi[:, 1]
    x, y = points[:, 0], points[:, 1]
    return (k2 - math.pi**2 * a1**2 - math.pi**2 * a2**2) * np.sin(math.pi * a1 * x) * np.sin(math.pi * a2 * y)


def forcing(spec: BVPSpec, point: np.ndarray, pi: np.ndarray | Sequence[float] | None = None):
    """Forcing term; nonzero only for the Helmholtz entry."""
    p = np.asarray(point, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    out = _forcing_batch(spec, p, spec.coeff_array(pi, p.shape[0]))
    return float(out[0]) if single else out


def boundary_data(spec: BVPSpec, points: np.ndarray, pi: np.ndarray | None = None) -> np.ndarray:
    """Prescribed values ``h`` on the Dirichlet/initial part of the boundary."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c = spec.coeff_array(pi, p.shape[0])
    x = p[:, 0]
    if spec.id == "convection":
        return np.sin(x)
    if spec.id == "reaction_diffusion":
        return np.exp(-0.5 * ((x - math.pi) / (math.pi / 4)) ** 2)
    if spec.id == "helmholtz":
        return np.sin(math.pi * c[:, 0] * x) * np.sin(math.pi * c[:, 1] * p[:, 1])
    if spec.id == "burgers":
        return np.sin(2 * math.pi * x)
    return np.zeros(p.shape[0])


@dataclass
class ResidualPartials:
    """Partial derivatives of a residual with respect to jet entries."""

    value: np.ndarray
    grad: np.ndarray | None
    diag2: np.ndarray | None

    def adjoint(self, weight: np.ndarray) -> JetAdjoint:
        w = weight[:, None]
        return JetAdjoint(
            weight * self.value,
            None if self.grad is None else w * self.grad,
            None if self.diag2 is None else w * self.diag2,
        )


def pde_residual_batch(spec: BVPSpec, jets: JetBatch, pi: np.ndarray | None = None) -> tuple[np.ndarray, ResidualPartials]:
    """Signed residual ``D_pi[u] - tau`` at every jet point, with partials."""
    n = len(jets)
    if jets.order < spec.residual_order:
        raise DimensionError(f"{spec.id} residual needs jets of order {spec.residual_order}")
    pts = jets.points[:, : spec.domain.point_dim]
    c = spec.coeff_array(pi, n)
    k = len(jets.wrt)
    u = jets.value
    dv = np.zeros(n)
    dg = np.zeros((n, k))
    dh = np.zeros((n, k)) if jets.diag2 is not None else None

    if spec.id == "convection":
        beta = c[:, 0]
        r = jets.du(1) + beta * jets.du(0)
        dg[:, jets.col(1)] = 1.0
        dg[:, jets.col(0)] = beta
    elif spec.id == "reaction_diffusion":
        nu, rho = c[:, 0], c[:, 1]
        r = jets.du(1) - nu * jets.d2u(0) - rho * u * (1.0 - u)
        dv = -rho * (1.0 - 2.0 * u)
        dg[:, jets.col(1)] = 1.0
        dh[:, jets.col(0)] = -nu
    elif spec.id == "eikonal":
        gx, gy = jets.du(0), jets.du(1)
        norm = np.hypot(gx, gy)
        r = norm - 1.0
        safe = np.where(norm > 0, norm, 1.0)
        dg[:, jets.col(0)] = np.where(norm > 0, gx / safe, 0.0)
        dg[:, jets.col(1)] = np.where(norm > 0, gy / safe, 0.0)
    elif spec.id == "helmholtz":
        k2 = spec.wave_number**2
        r = jets.d2u(0) + jets.d2u(1) + k2 * u - _forcing_batch(spec, pts, c)
        dv = np.full(n, k2)
        dh[:, jets.col(0)] = 1.0
        dh[:, jets.col(1)] = 1.0
    else:  # burgers
        nu = c[:, 0]
        ux = jets.du(0)
        r = jets.du(1) + u * ux - nu * jets.d2u(0)
        dv = ux
        dg[:, jets.col(0)] = u
        dg[:, jets.col(1)] = 1.0
        dh[:, jets.col(0)] = -nu
    return r, ResidualPartials(dv, dg, dh)


def pde_residual(spec: BVPSpec, jet: Jet, pi: Sequence[float] | None, point: Sequence[float]) -> float:
    """Residual at one point from a jet taken with respect to all model inputs."""
    if jet.grad is None:
        raise DimensionError("jet has no first derivatives")
    grad = np.asarray(jet.grad, dtype=np.float64)[None, :]
    diag2 = None if jet.diag2 is None else np.asarray(jet.diag2, dtype=np.float64)[None, :]
    order = 1 if diag2 is None else 2
    pts = np.asarray(point, dtype=np.float64)[None, :]
    jb = JetBatch(pts, np.array([float(jet.value)]), grad, diag2, order, tuple(range(grad.shape[1])))
    r, _ = pde_residual_batch(spec, jb, None if pi is None else np.asarray(pi, dtype=np.float64))
    return float(r[0])


def boundary_residual(
    spec: BVPSpec,
    u_value: float,
    point: Sequence[float],
    pi: Sequence[float] | None = None,
    partner_value: float | None = None,
) -> float:
    """Signed boundary mismatch at one boundary point.

    Initial slice and Dirichlet faces give ``u - h``.  On a periodic face the
    caller supplies the value at the opposite face and the result is
    ``u(lo face) - u(hi face)``.  For the eikonal entry the boundary is the
    zero level of the shape.
    """
    p = np.asarray(point, dtype=np.float64)
    d = spec.domain
    if p.shape != (d.point_dim,):
        raise DimensionError(f"{spec.id} points have {d.point_dim} coordinates")
    if not d.contains(p, tol=_BOUNDARY_TOL)[0]:
        raise BoundaryPointError(f"point {tuple(p)} lies outside the domain")
    h = lambda: float(boundary_data(spec, p[None, :], pi)[0])  # noqa: E731

    if spec.id == "eikonal":
        if spec.shape.on_boundary(p[None, :], tol=_BOUNDARY_TOL)[0]:
            return float(u_value) - 0.0
        raise BoundaryPointError(f"point {tuple(p)} is not on the shape boundary")

    if d.has_time and abs(p[d.time_axis]) <= _BOUNDARY_TOL:
        return float(u_value) - h()
    for axis in range(d.space_dim):
        on_lo = abs(p[axis] - d.space_lo[axis]) <= _BOUNDARY_TOL
        on_hi = abs(p[axis] - d.space_hi[axis]) <= _BOUNDARY_TOL
        if not (on_lo or on_hi):
            continue
        if d.periodic[axis]:
            if partner_value is None:
                raise BoundaryPointError("periodic face needs the value at the opposite face")
            return float(u_value - partner_value) if on_lo else float(partner_value - u_value)
        return float(u_value) - h()
    raise BoundaryPointError(f"point {tuple(p)} is not on the boundary of {spec.id}")


def invariance_residual(
    spec: BVPSpec,
    model: MLP,
    pi: Sequence[float] | None,
    point: Sequence[float],
    transform_index: int = 0,
) -> float:
    """``u(point) - u(gamma(point))`` for the registered transform."""
    inv = spec.invariances
    if not 0 <= transform_index < len(inv):
        raise DimensionError(f"{spec.id} has {len(inv)} invariance transforms")
    p = np.asarray(point, dtype=np.float64)[None, :]
    c = spec.coeff_array(pi, 1)
    image = inv[transform_index].apply(p, c)
    both = spec.model_inputs(np.vstack([p, image]), np.vstack([c, c]))
    u = forward(model, both, order=0).value
    return float(u[0] - u[1])


def structural_hinge(u_value):
    """``max(0, -u)``: penalizes negative values on the outer boundary."""
    out = np.maximum(0.0, -np.asarray(u_value, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# boundary point sets used by the BC objective


@dataclass
class BoundarySet:
    """Fixed boundary points of a problem.

    ``dirichlet`` rows carry data ``h`` and a part label (``"ic"`` or
    ``"bc"``); ``periodic_lo``/``periodic_hi`` are matched pairs on opposite
    faces.
    """

    dirichlet: np.ndarray
    labels: np.ndarray
    periodic_lo: np.ndarray
    periodic_hi: np.ndarray

    @property
    def n_items(self) -> int:
        return self.dirichlet.shape[0] + self.periodic_lo.shape[0]

    def parts(self) -> list[str]:
        names = set(self.labels.tolist())
        if self.periodic_lo.shape[0]:
            names.add("bc")
        return sorted(names)


def boundary_set(spec: BVPSpec, n_initial: int = 256, n_face: int = 100, n_shape: int = 2234) -> BoundarySet:
    """Equispaced boundary points.

    Evolution problems get ``n_initial`` points on the initial slice over the
    closed spatial interval and ``n_face`` times in ``(0, T]`` per periodic
    face pair.  Helmholtz gets ``n_initial`` points per side of the square,
    the eikonal entry ``n_shape`` points on the shape.
    """
    d = spec.domain
    empty = np.zeros((0, d.point_dim))
    if spec.id == "eikonal":
        pts = spec.shape.boundary_points(n_shape)
        return BoundarySet(pts, np.array(["bc"] * len(pts)), empty, empty)
    if spec.id == "helmholtz":
        s = np.linspace(0.0, 1.0, n_initial, endpoint=False)
        lo, hi = d.space_lo, d.space_hi
        x = lo[0] + (hi[0] - lo[0]) * s
        y = lo[1] + (hi[1] - lo[1]) * s
        sides = [
            np.column_stack([x, np.full_like(x, lo[1])]),
            np.column_stack([np.full_like(y, hi[0]), y]),
            np.column_stack([hi[0] - (x - lo[0]), np.full_like(x, hi[1])]),
            np.column_stack([np.full_like(y, lo[0]), hi[1] - (y - lo[1])]),
        ]
        pts = np.vstack(sides)
        return BoundarySet(pts, np.array(["bc"] * len(pts)), empty, empty)

    # 1D space + time: initial slice and one periodic face pair
    x = np.linspace(d.space_lo[0], d.space_hi[0], n_initial)
    ic = np.column_stack([x, np.zeros_like(x)])
    t = np.linspace(0.0, d.time_hi, n_face + 1)[1:]
    lo = np.column_stack([np.full_like(t, d.space_lo[0]), t])
    hi = np.column_stack([np.full_like(t, d.space_hi[0]), t])
    return BoundarySet(ic, np.array(["ic"] * len(ic)), lo, hi)


def outer_boundary_points(spec: BVPSpec, n: int = 40) -> np.ndarray:
    """``n`` equispaced points on the boundary of a 2D spatial box."""
    d = spec.domain
    sq = Square(
        ((d.space_lo[0] + d.space_hi[0]) / 2, (d.space_lo[1] + d.space_hi[1]) / 2),
        (d.space_hi[0] - d.space_lo[0]) / 2,
    )
    return sq.boundary_points(n)


@dataclass(frozen=True)
class BoundarySegment:
    """Straight piece of the boundary from ``start`` to ``end``.

    ``kind`` is ``"dirichlet"`` (data ``h``) or ``"periodic"``, in which case
    each point is paired with ``point + shift`` on the opposite face.
    """

    kind: str
    label: str
    start: tuple[float, ...]
    end: tuple[float, ...]
    shift: tuple[float, ...] | None = None


def boundary_segments(spec: BVPSpec) -> list[BoundarySegment]:
    """Boundary as segments, for sampling boundary points by a scalar parameter."""
    d = spec.domain
    if spec.id == "eikonal":
        raise BoundaryPointError("the eikonal boundary is a curve, not a union of box faces")
    if spec.id == "helmholtz":
        (x0, y0), (x1, y1) = d.space_lo, d.space_hi
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        return [BoundarySegment("dirichlet", "bc", corners[i], corners[(i + 1) % 4]) for i in range(4)]
    lo, hi, T = d.space_lo[0], d.space_hi[0], d.time_hi
    segs = [BoundarySegment("dirichlet", "ic", (lo, 0.0), (hi, 0.0))]
    if d.periodic[0]:
        segs.append(BoundarySegment("periodic", "bc", (lo, 0.0), (lo, T), (hi - lo, 0.0)))
    else:
        segs += [BoundarySegment("dirichlet", "bc", (lo, 0.0), (lo, T)), BoundarySegment("dirichlet", "bc", (hi, 0.0), (hi, T))]
    return segs


def segment_points(segments: Sequence[BoundarySegment], s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map parameters ``s`` in ``[0, len(segments)]`` to boundary points and segment indices."""
    s = np.asarray(s, dtype=np.float64)
    idx = np.minimum(np.floor(s).astype(int), len(segments) - 1)
    frac = s - idx
    start = np.array([seg.start for seg in segments])[idx]
    end = np.array([seg.end for seg in segments])[idx]
    return start + frac[:, None] * (end - start), idx
