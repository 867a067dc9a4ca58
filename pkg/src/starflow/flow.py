"""Time integration of the physical and the self-similarly rescaled flow.

Physical flow (anisotropic curvature flow, parametrized form)::

    dv/dt = g(v') * (-v1'' v2' + v1' v2'') / |v'|^4 * (-v2', v1')

which moves every node along the inner normal with speed ``g * kappa``.
Rescaled flow in ``tau = -log(T - t)``, ``v -> (T - t)^(-1/2) v``::

    dv/dtau = v / 2 + (physical right-hand side)

The isotropic rescaled flow has the circle of radius ``sqrt(2)`` as a
stationary solution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from .geometry import (
    ClosedCurve,
    DegenerateCurveError,
    derivatives,
    enclosed_area,
    periodic_differences,
    resample_uniform_arclength,
    total_length,
    write_curve_csv,
)


class UnsupportedAnisotropyError(ValueError):
    pass


@dataclass(frozen=True)
class Anisotropy:
    """Positive weight ``g`` of a direction, homogeneous of order 0.

    ``of_angle`` maps the polar angle of the argument to the weight; the
    argument's length never matters.  ``g`` is evaluated on the tangent
    ``(v1', v2')``.
    """

    of_angle: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "iso"

    @property
    def isotropic(self) -> bool:
        return self.of_angle is None

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.of_angle is None:
            return np.ones(w.shape[:-1])
        return np.asarray(self.of_angle(np.arctan2(w[..., 1], w[..., 0])), dtype=float)

    def at_angle(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if self.of_angle is None:
            return np.ones_like(phi)
        return np.asarray(self.of_angle(phi), dtype=float)

    def maximum(self, samples: int = 720) -> float:
        return float(np.max(self.at_angle(np.linspace(0, 2 * np.pi, samples, endpoint=False))))

    def minimum(self, samples: int = 720) -> float:
        return float(np.min(self.at_angle(np.linspace(0, 2 * np.pi, samples, endpoint=False))))

    @classmethod
    def harmonic(cls, eps: float, k: int = 2) -> "Anisotropy":
        """``g(phi) = 1 + eps * cos(k * phi)``; requires ``|eps| < 1``."""
        if not abs(eps) < 1:
            raise ValueError("harmonic anisotropy needs |eps| < 1 to stay positive")
        return cls(lambda phi: 1.0 + eps * np.cos(k * phi), label=f"harmonic:eps={eps!r},k={k}")


ISOTROPIC = Anisotropy()


class Scheme(str, Enum):
    FORWARD_EULER = "euler"
    RK4 = "rk4"


class RhsKind(str, Enum):
    PHYSICAL = "physical"
    RESCALED = "rescaled"


@dataclass(frozen=True)
class FlowConfig:
    cfl: float = 0.25
    resample_every: int = 10
    scheme: Scheme = Scheme.RK4
    order: int = 2

    def __post_init__(self):
        if not 0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if self.resample_every < 0:
            raise ValueError("resample_every must be >= 0")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass(frozen=True)
class FlowClock:
    """Physical time ``t`` and blow-up time ``T`` with ``tau = -log(T - t)``."""

    t: float
    T: float

    def __post_init__(self):
        if not self.t < self.T:
            raise ValueError(f"need t < T, got t={self.t}, T={self.T}")

    @property
    def tau(self) -> float:
        return -np.log(self.T - self.t)


def _physical_from_nodes(nodes, g, order):
    d1, d2 = periodic_differences(nodes, order)
    s2 = d1[:, 0] ** 2 + d1[:, 1] ** 2
    factor = g(d1) * (d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]) / s2**2
    return factor[:, None] * np.column_stack([-d1[:, 1], d1[:, 0]])


def physical_rhs(curve: ClosedCurve, g: Anisotropy = ISOTROPIC, order: int = 2) -> np.ndarray:
    """Per-node velocity ``g * kappa`` along the inner normal."""
    return _physical_from_nodes(curve.nodes, g, order)


def rescaled_rhs(curve: ClosedCurve, g: Anisotropy = ISOTROPIC, order: int = 2) -> np.ndarray:
    return 0.5 * curve.nodes + _physical_from_nodes(curve.nodes, g, order)


def _rhs_function(kind: RhsKind, g, order):
    kind = RhsKind(kind)
    if kind is RhsKind.PHYSICAL:
        return lambda nodes: _physical_from_nodes(nodes, g, order)
    return lambda nodes: 0.5 * nodes + _physical_from_nodes(nodes, g, order)


def stable_dt(curve: ClosedCurve, g: Anisotropy = ISOTROPIC, cfl: float = 0.25) -> float:
    """``cfl * h_min**2 / max g`` with ``h_min`` the shortest chord."""
    chords = np.linalg.norm(np.roll(curve.nodes, -1, axis=0) - curve.nodes, axis=1)
    return cfl * float(np.min(chords)) ** 2 / g.maximum()


def _advance(nodes, rhs, dt, scheme):
    if scheme is Scheme.FORWARD_EULER:
        return nodes + dt * rhs(nodes)
    k1 = rhs(nodes)
    k2 = rhs(nodes + 0.5 * dt * k1)
    k3 = rhs(nodes + 0.5 * dt * k2)
    k4 = rhs(nodes + dt * k3)
    return nodes + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(curve: ClosedCurve, rhs_kind=RhsKind.RESCALED, g: Anisotropy = ISOTROPIC,
         config: FlowConfig = FlowConfig(), dt: Optional[float] = None,
         step_index: int = 0) -> ClosedCurve:
    """Advance one explicit step.

    Resampling to uniform arclength happens after the update when
    ``step_index + 1`` is a multiple of ``config.resample_every``.
    Raises :class:`DegenerateCurveError` if the updated curve collapses.
    """
    if dt is None:
        dt = stable_dt(curve, g, config.cfl)
    if dt == 0:
        return curve
    rhs = _rhs_function(rhs_kind, g, config.order)
    new = ClosedCurve(_advance(curve.nodes, rhs, dt, config.scheme))
    # rejects the step if |v'| has collapsed anywhere
    derivatives(new, order=config.order, with_angle=False)
    if config.resample_every and (step_index + 1) % config.resample_every == 0:
        new = resample_uniform_arclength(new)
    return new


def estimate_blowup_time(curve: ClosedCurve, g: Anisotropy = ISOTROPIC) -> float:
    """Extinction time from the area law ``dA/dt = -2*pi`` (isotropic only)."""
    if not g.isotropic:
        raise UnsupportedAnisotropyError(
            "blow-up time estimate is only available for isotropic flow")
    return enclosed_area(curve) / (2.0 * np.pi)


def to_rescaled(curve: ClosedCurve, t: float, T: float) -> Tuple[ClosedCurve, float]:
    clock = FlowClock(t, T)
    return curve.scaled((T - t) ** -0.5), clock.tau


def rescaled_initial(curve: ClosedCurve, g: Anisotropy = ISOTROPIC) -> Tuple[ClosedCurve, float]:
    """Rescaled data at ``t = 0`` using the estimated blow-up time.

    The result has enclosed area ``2*pi`` and starts at ``tau0 = -log T``.
    """
    return to_rescaled(curve, 0.0, estimate_blowup_time(curve, g))


@dataclass
class Trajectory:
    rhs_kind: RhsKind
    times: List[float] = field(default_factory=list)
    curves: List[ClosedCurve] = field(default_factory=list)
    singular: bool = False
    message: str = ""
    blowup_time: Optional[float] = None

    def __len__(self):
        return len(self.times)

    def taus(self) -> np.ndarray:
        t = np.asarray(self.times)
        if self.rhs_kind is RhsKind.RESCALED:
            return t
        if self.blowup_time is None:
            return np.full_like(t, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(self.blowup_time - t)

    def summary_rows(self, order: int = 2):
        taus = self.taus()
        for i, (time, curve) in enumerate(zip(self.times, self.curves)):
            try:
                cmin = float(np.min(derivatives(curve, order=order).cos_psi))
            except ValueError:
                cmin = float("nan")
            yield dict(sample_index=i, time=time, tau=float(taus[i]),
                       area=enclosed_area(curve), length=total_length(curve),
                       min_cospsi=cmin)

    def dump(self, directory, order: int = 2) -> Path:
        """Write ``trajectory.csv`` and ``curves/sample_XXXXX.csv``."""
        directory = Path(directory)
        (directory / "curves").mkdir(parents=True, exist_ok=True)
        columns = ["sample_index", "time", "tau", "area", "length", "min_cospsi"]
        path = directory / "trajectory.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in self.summary_rows(order):
                writer.writerow([row["sample_index"]] + [f"{row[c]:.17g}" for c in columns[1:]])
        for i, curve in enumerate(self.curves):
            write_curve_csv(curve, directory / "curves" / f"sample_{i:05d}.csv")
        return path


def run(initial: ClosedCurve, rhs_kind=RhsKind.RESCALED, g: Anisotropy = ISOTROPIC,
        config: FlowConfig = FlowConfig(), horizon: float = 1.0,
        observer_stride: int = 1, dt: Optional[float] = None,
        t0: float = 0.0, collapse_fraction: float = 1e-3) -> Trajectory:
    """Integrate from ``t0`` to ``t0 + horizon``.

    With ``dt`` given, the step is fixed and adjusted down so that an
    integer number of steps hits the horizon exactly; samples are then
    equally spaced.  Without ``dt`` every step uses :func:`stable_dt` and the
    last step is clipped.  A sample is recorded every ``observer_stride``
    steps and at the end.  Degeneracy stops the run with ``singular`` set,
    as does shrinking below ``collapse_fraction`` of the initial length
    (the curve is then within a few steps of its extinction).

    When resampling is enabled the initial curve is first redistributed to
    uniform arclength, so sample 0 is already uniformly spaced; otherwise
    the first resample would show up as a jump in discretization error.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if observer_stride < 1:
        raise ValueError("observer_stride must be >= 1")
    rhs_kind = RhsKind(rhs_kind)
    traj = Trajectory(rhs_kind=rhs_kind)
    if rhs_kind is RhsKind.PHYSICAL and g.isotropic:
        traj.blowup_time = t0 + estimate_blowup_time(initial)
    if config.resample_every:
        initial = resample_uniform_arclength(initial)
    traj.times.append(t0)
    traj.curves.append(initial)

    fixed = dt is not None
    if fixed:
        nsteps = max(1, int(np.ceil(horizon / dt - 1e-9)))
        dt_fixed = horizon / nsteps
    t_end = t0 + horizon
    curve, t, k = initial, t0, 0
    min_length = collapse_fraction * total_length(initial)
    while True:
        if fixed:
            if k >= nsteps:
                break
            h = dt_fixed
        else:
            if t >= t_end - 1e-14 * max(1.0, abs(t_end)):
                break
            h = min(stable_dt(curve, g, config.cfl), t_end - t)
        try:
            curve = step(curve, rhs_kind, g, config, dt=h, step_index=k)
        except DegenerateCurveError as exc:
            traj.singular = True
            traj.message = f"stopped at t={t!r}: {exc}"
            break
        k += 1
        t = t0 + k * dt_fixed if fixed else t + h
        if total_length(curve) < min_length:
            traj.singular = True
            traj.message = (f"stopped at t={t!r}: length {total_length(curve):.3e} fell below "
                            f"{collapse_fraction:g} of its initial value")
            traj.times.append(t)
            traj.curves.append(curve)
            break
        last = (k >= nsteps) if fixed else (t >= t_end - 1e-14 * max(1.0, abs(t_end)))
        if k % observer_stride == 0 or last:
            traj.times.append(t)
            traj.curves.append(curve)
    return traj
