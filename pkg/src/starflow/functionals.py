"""Monotonicity functionals of the rescaled flow and their discrete identities.

Densities are written as ``F(xi, eta)`` with ``xi = v`` the position and
``eta = v'`` the parameter derivative, so every functional is
``int_0^{2pi} F(v, v') dx`` and is independent of the parametrization.

Kinds
-----
``huisken``
    ``F = rho = exp(-|xi|^2/4) |eta|``.
``raw``
    ``F = |eta|/|xi| * f(psi)`` with the profile
    ``f(psi) = psi sin(psi) + cos(psi) log(cos(psi))``, weight
    ``rho = |eta|^2 / <xi, eta_nu>``.
``repaired``
    ``raw`` plus the gauge ``a(|xi|) |eta| cos(psi)`` with
    ``a(r) = r/4 + log(r)/r``.
``corrected``
    ``raw`` plus the gauge with ``a(r) = log(r)/r - r/4``.

Along the rescaled isotropic flow each kind obeys
``dF/dtau + D = E`` where ``D`` is the dissipation and

* ``E = 0`` for ``huisken`` and ``corrected``;
* ``E = area_rate`` for ``repaired``, and ``E = extra_term + area_rate``
  for ``raw``, where ``area_rate = int (d_tau v . n) ds = dA/dtau``.

``area_rate`` vanishes identically when the rescaling uses the exact
blow-up time (``A == 2*pi``), which is how :func:`flow.rescaled_initial`
prepares data.  The ``repaired`` and ``corrected`` values differ by exactly
the enclosed area.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .flow import ISOTROPIC, Anisotropy, Trajectory
from .geometry import ClosedCurve, CurveGeometry, derivatives

STAR_MARGIN = 0.05
PSI_LIMIT = np.pi / 2 - 1e-9
KINDS = ("huisken", "raw", "repaired", "corrected")
STAR_KINDS = ("raw", "repaired", "corrected")


class NotStarShapedError(ValueError):
    def __init__(self, message, node=None, cos_psi=None):
        super().__init__(message)
        self.node = node
        self.cos_psi = cos_psi


class ConeViolationError(ValueError):
    """``<xi, eta_nu> <= 0``: the point lies outside the star-shaped cone."""


# --- the profile ----------------------------------------------------------

def _check_psi(psi):
    psi = np.asarray(psi, dtype=float)
    if np.any(np.abs(psi) >= PSI_LIMIT):
        raise ValueError("|psi| must stay below pi/2 - 1e-9")
    return psi


def f_profile(psi):
    """``psi sin(psi) + cos(psi) log(cos(psi))``, the even solution of
    ``f'' + f = 1/cos(psi)`` with ``f(0) = f'(0) = 0``."""
    psi = _check_psi(psi)
    c = np.cos(psi)
    return psi * np.sin(psi) + c * np.log(c)


def f_prime(psi):
    psi = _check_psi(psi)
    c = np.cos(psi)
    return psi * c - np.sin(psi) * np.log(c)


def f_second(psi):
    return 1.0 / np.cos(_check_psi(psi)) - f_profile(psi)


def repaired_gauge(r):
    return r / 4.0 + np.log(r) / r


def repaired_gauge_prime(r):
    return 0.25 + (1.0 - np.log(r)) / r**2


def corrected_gauge(r):
    return np.log(r) / r - r / 4.0


def corrected_gauge_prime(r):
    return (1.0 - np.log(r)) / r**2 - 0.25


# --- pointwise densities --------------------------------------------------

def _cone_dot(xi, eta):
    """``<xi, eta_nu>`` with ``eta_nu = (eta2, -eta1)``."""
    return xi[..., 0] * eta[..., 1] - xi[..., 1] * eta[..., 0]


def huisken_density(xi, eta):
    xi, eta = np.asarray(xi, float), np.asarray(eta, float)
    return np.exp(-np.sum(xi**2, axis=-1) / 4.0) * np.linalg.norm(eta, axis=-1)


def _star_parts(xi, eta):
    xi, eta = np.asarray(xi, float), np.asarray(eta, float)
    dot = _cone_dot(xi, eta)
    if np.any(dot <= 0):
        raise ConeViolationError("<xi, eta_nu> must be positive")
    r = np.linalg.norm(xi, axis=-1)
    ne = np.linalg.norm(eta, axis=-1)
    cos_psi = np.clip(dot / (r * ne), -1.0, 1.0)
    return r, ne, dot, cos_psi


def big_F(xi, eta, kind: str = "repaired"):
    """Density ``F(xi, eta)`` of the given kind (see module docstring)."""
    if kind == "huisken":
        return huisken_density(xi, eta)
    if kind not in STAR_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    r, ne, _, cos_psi = _star_parts(xi, eta)
    out = ne / r * f_profile(np.arccos(cos_psi))
    if kind == "repaired":
        out = out + ne * repaired_gauge(r) * cos_psi
    elif kind == "corrected":
        out = out + ne * corrected_gauge(r) * cos_psi
    return out


def rho(xi, eta, kind: str = "repaired"):
    """Dissipation weight: ``F`` itself for Huisken, ``|eta|^2/<xi, eta_nu>``
    for the star kinds."""
    if kind == "huisken":
        return huisken_density(xi, eta)
    if kind not in STAR_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    _, ne, dot, _ = _star_parts(xi, eta)
    return ne**2 / dot


# --- functionals on a discrete curve --------------------------------------

def _geom(curve_or_geom, order=2) -> CurveGeometry:
    if isinstance(curve_or_geom, CurveGeometry):
        return curve_or_geom
    return derivatives(curve_or_geom, order=order)


def require_star(geom: CurveGeometry, margin: float = STAR_MARGIN) -> None:
    j = int(np.argmin(geom.cos_psi))
    if geom.cos_psi[j] < margin:
        raise NotStarShapedError(
            f"not star-shaped: cos(psi) = {geom.cos_psi[j]:.6g} < {margin} at node {j}",
            node=j, cos_psi=float(geom.cos_psi[j]))


def normal_velocity(geom: CurveGeometry, g: Anisotropy = ISOTROPIC) -> np.ndarray:
    """``d_tau v . n`` of the rescaled flow, taken from the spatial terms."""
    vn = np.einsum("ij,ij->i", geom.nodes, geom.normal)
    return 0.5 * vn - g(geom.d1) * geom.kappa


def huisken_value(curve_or_geom, order: int = 2) -> float:
    geom = _geom(curve_or_geom, order)
    return geom.integrate(np.exp(-geom.r**2 / 4.0) * geom.speed)


def huisken_dissipation(curve_or_geom, g: Anisotropy = ISOTROPIC, order: int = 2) -> float:
    geom = _geom(curve_or_geom, order)
    return geom.integrate(normal_velocity(geom, g) ** 2 * np.exp(-geom.r**2 / 4.0) * geom.speed)


def _star_integrand(geom, kind):
    f = f_profile(geom.psi)
    r = geom.r
    if kind == "raw":
        bracket = f
    elif kind == "repaired":
        # log(r) rather than log(r^2)/2 to avoid cancellation near r = 1
        bracket = f + (np.log(r) + r**2 / 4.0) * geom.cos_psi
    elif kind == "corrected":
        bracket = f + (np.log(r) - r**2 / 4.0) * geom.cos_psi
    else:
        raise ValueError(f"unknown star kind {kind!r}")
    return geom.speed / r * bracket


def star_value(curve_or_geom, kind: str = "repaired", margin: float = STAR_MARGIN,
               order: int = 2) -> float:
    """Star functional; ``kind='repaired'`` is the main monotone quantity."""
    geom = _geom(curve_or_geom, order)
    require_star(geom, margin)
    return geom.integrate(_star_integrand(geom, kind))


def star_dissipation(curve_or_geom, g: Anisotropy = ISOTROPIC, margin: float = STAR_MARGIN,
                     order: int = 2) -> float:
    geom = _geom(curve_or_geom, order)
    require_star(geom, margin)
    return geom.integrate(normal_velocity(geom, g) ** 2 * geom.speed / (geom.r * geom.cos_psi))


def extra_term(curve_or_geom, g: Anisotropy = ISOTROPIC, order: int = 2) -> float:
    """``-int (v2' d_tau v1 - v1' d_tau v2) (1/2 + 1/|v|^2) dx``.

    ``v2' d_tau v1 - v1' d_tau v2 = |v'| (d_tau v . n)``.
    """
    geom = _geom(curve_or_geom, order)
    w = geom.speed * normal_velocity(geom, g)
    return -geom.integrate(w * (0.5 + 1.0 / geom.r**2))


def area_rate(curve_or_geom, g: Anisotropy = ISOTROPIC, order: int = 2) -> float:
    """``dA/dtau = int (d_tau v . n) ds``; equals ``A - 2*pi`` for embedded
    isotropic data."""
    geom = _geom(curve_or_geom, order)
    return geom.integrate(normal_velocity(geom, g) * geom.speed)


def value(curve_or_geom, kind: str, order: int = 2, margin: float = STAR_MARGIN) -> float:
    if kind == "huisken":
        return huisken_value(curve_or_geom, order)
    return star_value(curve_or_geom, kind, margin, order)


def dissipation(curve_or_geom, kind: str, g: Anisotropy = ISOTROPIC, order: int = 2,
                margin: float = STAR_MARGIN) -> float:
    if kind == "huisken":
        return huisken_dissipation(curve_or_geom, g, order)
    return star_dissipation(curve_or_geom, g, margin, order)


# --- identities along trajectories ----------------------------------------

@dataclass(frozen=True)
class FunctionalReport:
    """One interior trajectory sample of an identity ``dF/dtau + D = E``.

    ``residual`` is ``dF/dtau + D - extra_term``, with ``dF/dtau`` from a
    three-point difference across neighbouring samples.  ``area_rate`` is
    the continuum value of the residual for the ``raw`` and ``repaired``
    kinds (zero for the others); it is reported but not subtracted.
    """

    tau: float
    kind: str
    value: float
    dissipation: float
    extra_term: float
    residual: float
    rate: float
    area_rate: float


def three_point_rate(taus: Sequence[float], values: Sequence[float]) -> float:
    """Second-order derivative at the middle of three (possibly uneven) samples."""
    (t0, t1, t2), (f0, f1, f2) = taus, values
    hm, hp = t1 - t0, t2 - t1
    if hm <= 0 or hp <= 0:
        raise ValueError("sample times must increase")
    return (-hp / (hm * (hm + hp)) * f0 + (hp - hm) / (hm * hp) * f1
            + hm / (hp * (hm + hp)) * f2)


def identity_report(triple: Sequence[Tuple[float, ClosedCurve]], kind: str,
                    g: Anisotropy = ISOTROPIC, order: int = 2,
                    margin: float = STAR_MARGIN) -> FunctionalReport:
    """Evaluate the identity of ``kind`` at the middle of three samples.

    ``triple`` holds ``(tau, curve)`` pairs of a rescaled trajectory.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if kind != "huisken" and not g.isotropic:
        raise ValueError("star functionals are defined for isotropic flow only")
    taus = [t for t, _ in triple]
    geoms = [derivatives(c, order=order) for _, c in triple]
    values = [value(gm, kind, order, margin) for gm in geoms]
    mid = geoms[1]
    rate = three_point_rate(taus, values)
    diss = dissipation(mid, kind, g, order, margin)
    extra = extra_term(mid, g, order) if kind == "raw" else 0.0
    arate = area_rate(mid, g, order) if kind in ("raw", "repaired") else 0.0
    return FunctionalReport(tau=taus[1], kind=kind, value=values[1], dissipation=diss,
                            extra_term=extra, residual=rate + diss - extra, rate=rate,
                            area_rate=arate)


def raw_star_identity(triple, g: Anisotropy = ISOTROPIC, order: int = 2,
                      margin: float = STAR_MARGIN) -> FunctionalReport:
    """Identity with the extra term for the ungauged star density."""
    return identity_report(triple, "raw", g, order, margin)


def repaired_star_identity(triple, g: Anisotropy = ISOTROPIC, order: int = 2,
                           margin: float = STAR_MARGIN) -> FunctionalReport:
    return identity_report(triple, "repaired", g, order, margin)


def huisken_identity(triple, g: Anisotropy = ISOTROPIC, order: int = 2) -> FunctionalReport:
    return identity_report(triple, "huisken", g, order)


def trajectory_values(traj: Trajectory, kind: str, order: int = 2,
                      margin: float = STAR_MARGIN) -> np.ndarray:
    return np.array([value(c, kind, order, margin) for c in traj.curves])


def trajectory_reports(traj: Trajectory, kind: str, g: Anisotropy = ISOTROPIC,
                       order: int = 2, margin: float = STAR_MARGIN) -> List[FunctionalReport]:
    """Reports at every interior sample of a rescaled trajectory.

    Values and geometry are computed once per sample.
    """
    taus = list(traj.taus())
    geoms = [derivatives(c, order=order) for c in traj.curves]
    values = [value(gm, kind, order, margin) for gm in geoms]
    out = []
    for i in range(1, len(geoms) - 1):
        rate = three_point_rate(taus[i - 1:i + 2], values[i - 1:i + 2])
        gm = geoms[i]
        diss = dissipation(gm, kind, g, order, margin)
        extra = extra_term(gm, g, order) if kind == "raw" else 0.0
        arate = area_rate(gm, g, order) if kind in ("raw", "repaired") else 0.0
        out.append(FunctionalReport(tau=taus[i], kind=kind, value=values[i],
                                    dissipation=diss, extra_term=extra,
                                    residual=rate + diss - extra, rate=rate,
                                    area_rate=arate))
    return out


REPORT_COLUMNS = ("tau", "kind", "value", "dissipation", "extra_term", "residual")


def write_reports(reports: Iterable[FunctionalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for rep in reports:
            writer.writerow([f"{rep.tau:.17g}", rep.kind] + [
                f"{getattr(rep, c):.17g}" for c in REPORT_COLUMNS[2:]])


def profile_table(n: int = 257, psi_max: float = 1.5) -> np.ndarray:
    """Rows ``(psi, f, f', f'')`` on a uniform grid over ``[-psi_max, psi_max]``."""
    psi = np.linspace(-psi_max, psi_max, n)
    return np.column_stack([psi, f_profile(psi), f_prime(psi), f_second(psi)])


def write_profile(path, n: int = 257, psi_max: float = 1.5) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["psi", "f", "f_prime", "f_second"])
        for row in profile_table(n, psi_max):
            writer.writerow([f"{x:.17g}" for x in row])
