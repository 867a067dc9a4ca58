"""Closed planar curves sampled uniformly in a periodic parameter.

A curve is stored as ``N`` nodes ``v_j = v(x_j)`` with ``x_j = 2*pi*j/N``.
All per-node geometry (parameter derivatives, tangent, outer normal,
curvature, the angle between position vector and outer normal) is computed
with periodic central differences of order 2 or 4.  Integrals over the
parameter circle use the trapezoid rule.

Conventions: curves are oriented counterclockwise, the outer normal is the
tangent rotated clockwise, ``n = (v2', -v1') / |v'|``, and a CCW circle of
radius ``r`` has curvature ``+1/r``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

MIN_NODES = 16
DEGENERACY_TOL = 1e-12


class GeometryError(ValueError):
    """Base class for invalid or degenerate curve data."""


class DegenerateCurveError(GeometryError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class OriginCrossingError(GeometryError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


def _signed_area(nodes: np.ndarray) -> float:
    dv = spectral_derivative(nodes)
    integrand = 0.5 * (nodes[:, 0] * dv[:, 1] - nodes[:, 1] * dv[:, 0])
    return float(integrand.sum() * 2.0 * np.pi / len(nodes))


def spectral_derivative(nodes: np.ndarray) -> np.ndarray:
    """Derivative in x of periodic samples via the FFT.

    Used only for quadratures (area, length) where spectral accuracy on
    smooth data is wanted; the flow itself uses finite differences.
    """
    n = len(nodes)
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    coeffs = np.fft.fft(nodes, axis=0)
    return np.real(np.fft.ifft(1j * k[:, None] * coeffs, axis=0))


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Periodic array of ``N`` points in the plane, oriented CCW.

    Construction validates the node count and spacing and reverses the node
    order (keeping node 0 in place) if the signed area is negative.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise GeometryError(f"nodes must have shape (N, 2), got {nodes.shape}")
        if len(nodes) < MIN_NODES:
            raise GeometryError(f"need at least {MIN_NODES} nodes, got {len(nodes)}")
        if not np.all(np.isfinite(nodes)):
            raise GeometryError("nodes contain non-finite values")
        chords = np.linalg.norm(np.roll(nodes, -1, axis=0) - nodes, axis=1)
        length = chords.sum()
        j = int(np.argmin(chords))
        if length <= 0 or chords[j] < DEGENERACY_TOL * length:
            raise DegenerateCurveError(
                f"nodes {j} and {(j + 1) % len(nodes)} coincide", node=j)
        if _signed_area(nodes) < 0:
            nodes = np.roll(nodes[::-1], 1, axis=0)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def __len__(self):
        return self.n

    def rotated(self, angle: float) -> "ClosedCurve":
        c, s = np.cos(angle), np.sin(angle)
        return ClosedCurve(self.nodes @ np.array([[c, s], [-s, c]]))

    def scaled(self, factor: float) -> "ClosedCurve":
        return ClosedCurve(self.nodes * factor)


@dataclass(frozen=True, eq=False)
class CurveGeometry:
    """Per-node derived quantities of a :class:`ClosedCurve`.

    ``r``, ``cos_psi`` and ``psi`` are ``None`` when the geometry was built
    with ``with_angle=False``.
    """

    curve: ClosedCurve
    order: int
    d1: np.ndarray
    d2: np.ndarray
    speed: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    ds: np.ndarray
    r: Optional[np.ndarray] = None
    cos_psi: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None

    @property
    def nodes(self) -> np.ndarray:
        return self.curve.nodes

    @property
    def dx(self) -> float:
        return self.curve.dx

    def integrate(self, integrand: np.ndarray) -> float:
        """Trapezoid rule over x in [0, 2*pi) for per-node ``integrand``."""
        return float(np.sum(integrand) * self.curve.dx)


_STENCILS = {
    2: ({1: 0.5}, {0: -2.0, 1: 1.0}),
    4: ({1: 2.0 / 3.0, 2: -1.0 / 12.0},
        {0: -5.0 / 2.0, 1: 4.0 / 3.0, 2: -1.0 / 12.0}),
}


def _periodic_fd(nodes: np.ndarray, h: float, order: int):
    first, second = _STENCILS[order]
    d1 = np.zeros_like(nodes)
    d2 = second[0] * nodes
    for k, w in first.items():
        d1 += w * (np.roll(nodes, -k, axis=0) - np.roll(nodes, k, axis=0))
    for k, w in second.items():
        if k:
            d2 = d2 + w * (np.roll(nodes, -k, axis=0) + np.roll(nodes, k, axis=0))
    return d1 / h, d2 / h**2


def periodic_differences(nodes: np.ndarray, order: int = 2):
    """First and second x-derivatives of raw periodic node data."""
    return _periodic_fd(nodes, 2.0 * np.pi / len(nodes), order)


def derivatives(curve: ClosedCurve, order: int = 2,
                with_angle: bool = True) -> CurveGeometry:
    """Populate a :class:`CurveGeometry` with periodic central differences.

    Parameters
    ----------
    curve : ClosedCurve
    order : {2, 4}
        Accuracy order of the difference stencils.
    with_angle : bool
        Also compute ``r = |v|`` and the angle ``psi`` between the position
        vector and the outer normal.  Raises :class:`OriginCrossingError` if
        a node sits at the origin.
    """
    if order not in _STENCILS:
        raise ValueError(f"order must be 2 or 4, got {order}")
    v = curve.nodes
    d1, d2 = _periodic_fd(v, curve.dx, order)
    speed = np.hypot(d1[:, 0], d1[:, 1])
    chords = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    threshold = DEGENERACY_TOL * chords.sum()
    if np.min(speed) * curve.dx < threshold:
        j = int(np.argmin(speed))
        raise DegenerateCurveError(f"vanishing speed |v'| at node {j}", node=j)
    tangent = d1 / speed[:, None]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    kappa = (d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]) / speed**3
    geom = dict(curve=curve, order=order, d1=d1, d2=d2, speed=speed,
                tangent=tangent, normal=normal, kappa=kappa,
                ds=speed * curve.dx)
    if with_angle:
        r = np.hypot(v[:, 0], v[:, 1])
        if np.min(r) < DEGENERACY_TOL:
            j = int(np.argmin(r))
            raise OriginCrossingError(f"curve passes through the origin at node {j}",
                                      node=j)
        cos_psi = np.clip(np.einsum("ij,ij->i", v, normal) / r, -1.0, 1.0)
        geom.update(r=r, cos_psi=cos_psi, psi=np.arccos(cos_psi))
    return CurveGeometry(**geom)


def is_star_shaped(geom: CurveGeometry, margin: float = 0.0) -> bool:
    """True iff ``cos(psi) >= margin`` at every node."""
    if geom.cos_psi is None:
        raise ValueError("geometry was computed without angles")
    return bool(np.all(geom.cos_psi >= margin))


def enclosed_area(curve: ClosedCurve) -> float:
    return _signed_area(curve.nodes)


def total_length(curve: ClosedCurve) -> float:
    dv = spectral_derivative(curve.nodes)
    return float(np.hypot(dv[:, 0], dv[:, 1]).sum() * curve.dx)


# Gauss-Legendre rule for arclength of each spline piece.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _spline_speed(spline, x):
    d = spline(x, 1)
    return np.hypot(d[..., 0], d[..., 1])


def resample_uniform_arclength(curve: ClosedCurve) -> ClosedCurve:
    """Redistribute nodes to equal arclength along a periodic cubic spline.

    Node 0 stays fixed.  Equal spacing is measured in the spline's own
    arclength and is achieved to Newton tolerance.
    """
    n = curve.n
    knots = np.append(curve.x, 2.0 * np.pi)
    pts = np.vstack([curve.nodes, curve.nodes[:1]])
    spline = CubicSpline(knots, pts, bc_type="periodic", axis=0)

    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    xq = mid[:, None] + half[:, None] * _GL_X[None, :]
    pieces = (_spline_speed(spline, xq) * _GL_W).sum(axis=1) * half
    cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
    length = cumulative[-1]
    if not np.all(pieces > DEGENERACY_TOL * length):
        j = int(np.argmin(pieces))
        raise DegenerateCurveError(f"degenerate spline piece at node {j}", node=j)

    target = np.arange(n) * length / n
    idx = np.clip(np.searchsorted(cumulative, target, side="right") - 1, 0, n - 1)
    # initial guess by linear interpolation within the piece
    xs = a[idx] + (target - cumulative[idx]) / pieces[idx] * (b[idx] - a[idx])

    def arclength_from_knot(x):
        h = 0.5 * (x - a[idx])
        m = 0.5 * (x + a[idx])
        q = m[:, None] + h[:, None] * _GL_X[None, :]
        return cumulative[idx] + (_spline_speed(spline, q) * _GL_W).sum(axis=1) * h

    for _ in range(30):
        err = arclength_from_knot(xs) - target
        xs = xs - err / _spline_speed(spline, xs)
        if np.max(np.abs(err)) < 1e-14 * length:
            break
    xs[0] = 0.0
    return ClosedCurve(spline(xs))


def make_circle(r: float, center=(0.0, 0.0), n: int = 256) -> ClosedCurve:
    if r <= 0:
        raise GeometryError("radius must be positive")
    x = np.arange(n) * 2.0 * np.pi / n
    c = np.asarray(center, dtype=float)
    return ClosedCurve(np.column_stack([c[0] + r * np.cos(x), c[1] + r * np.sin(x)]))


def make_ellipse(a: float, b: float, n: int = 256) -> ClosedCurve:
    if a <= 0 or b <= 0:
        raise GeometryError("semi-axes must be positive")
    x = np.arange(n) * 2.0 * np.pi / n
    return ClosedCurve(np.column_stack([a * np.cos(x), b * np.sin(x)]))


def make_polar(radius: Callable[[np.ndarray], np.ndarray], n: int = 256) -> ClosedCurve:
    """Curve ``theta -> radius(theta) * (cos theta, sin theta)`` with ``theta = x``."""
    x = np.arange(n) * 2.0 * np.pi / n
    rho = np.broadcast_to(np.asarray(radius(x), dtype=float), x.shape)
    return ClosedCurve(np.column_stack([rho * np.cos(x), rho * np.sin(x)]))


def read_curve_csv(path) -> ClosedCurve:
    """Load nodes from a CSV with header ``v1,v2``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["v1", "v2"]:
            raise GeometryError(f"{path}: expected header 'v1,v2', got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[0]), float(row[1])])
            except (ValueError, IndexError):
                raise GeometryError(f"{path}:{lineno}: malformed row {row!r}") from None
    return ClosedCurve(np.array(rows).reshape(-1, 2))


def write_curve_csv(curve: ClosedCurve, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["v1", "v2"])
        for p in curve.nodes:
            writer.writerow([f"{p[0]:.17g}", f"{p[1]:.17g}"])
