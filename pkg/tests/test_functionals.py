import csv

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starflow import functionals as fn
from starflow.flow import Anisotropy, FlowConfig, RhsKind, run
from starflow.geometry import (
    ClosedCurve,
    derivatives,
    make_circle,
    make_ellipse,
    make_polar,
    resample_uniform_arclength,
)

SQRT2 = np.sqrt(2.0)
N = 256
# exact discrete speed factor of the order-2 first difference on a circle
SINC2 = np.sin(2 * np.pi / N) / (2 * np.pi / N)


def star3(theta):
    return SQRT2 * (1.0 + 0.2 * np.cos(3.0 * theta))


def f_mp(psi):
    psi = mpmath.mpf(psi)
    return psi * mpmath.sin(psi) + mpmath.cos(psi) * mpmath.log(mpmath.cos(psi))


cone_points = st.builds(
    lambda r, theta, psi, speed: (
        r * np.array([np.cos(theta), np.sin(theta)]),
        speed * np.array([-np.sin(theta - psi), np.cos(theta - psi)]),
    ),
    st.floats(0.3, 4.0), st.floats(-np.pi, np.pi), st.floats(-1.3, 1.3), st.floats(0.2, 3.0))


# --- the profile f ----------------------------------------------------------

class TestProfile:
    @pytest.mark.parametrize("psi, expected", [(0.0, 0.0), (np.pi / 4, 0.31029), (1.5, 1.30886),
                                               (-1.5, 1.30886), (0.5, 0.12512)])
    def test_values(self, psi, expected):
        assert fn.f_profile(psi) == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize("psi", [0.1, np.pi / 4, 1.0, 1.5, 1.57])
    def test_matches_extended_precision(self, psi):
        assert fn.f_profile(psi) == pytest.approx(float(f_mp(psi)), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("psi", [np.pi / 2, -np.pi / 2, 2.0, np.pi / 2 - 1e-10])
    def test_domain(self, psi):
        with pytest.raises(ValueError):
            fn.f_profile(psi)

    def test_ode_residual(self):
        psi = np.linspace(-1.4, 1.4, 561)
        h = 1e-4
        second = (fn.f_profile(psi + h) - 2 * fn.f_profile(psi) + fn.f_profile(psi - h)) / h**2
        assert np.max(np.abs(second + fn.f_profile(psi) - 1.0 / np.cos(psi))) <= 1e-6

    def test_derivatives_match_extended_precision(self):
        for psi in (-1.2, 0.3, 0.9, 1.45):
            assert fn.f_prime(psi) == pytest.approx(float(mpmath.diff(f_mp, psi)), rel=1e-10)
            assert fn.f_second(psi) == pytest.approx(float(mpmath.diff(f_mp, psi, 2)), rel=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(psi=st.floats(1e-6, 1.56))
    def test_shape(self, psi):
        f = fn.f_profile(psi)
        assert fn.f_profile(-psi) == f
        assert 0.0 < f <= np.pi / 2
        assert fn.f_second(psi) > 0

    def test_profile_table(self, tmp_path):
        table = fn.profile_table(257, 1.5)
        assert table.shape == (257, 4)
        assert table[0, 0] == -1.5 and table[-1, 0] == 1.5 and table[128, 1] == 0.0
        path = tmp_path / "f.csv"
        fn.write_profile(path, 257, 1.5)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["psi", "f", "f_prime", "f_second"]
        assert len(rows) == 258
        assert np.array_equal(np.array(rows[1:], dtype=float), table)


# --- gauges -----------------------------------------------------------------

@pytest.mark.parametrize("r", [0.3, 1.0, 2.0, 5.0])
def test_gauges(r):
    assert fn.repaired_gauge(r) == pytest.approx(r / 4 + np.log(r) / r)
    assert fn.corrected_gauge(r) == pytest.approx(np.log(r) / r - r / 4)
    h = 1e-6
    assert fn.repaired_gauge_prime(r) == pytest.approx(
        (fn.repaired_gauge(r + h) - fn.repaired_gauge(r - h)) / (2 * h), rel=1e-7)
    assert fn.corrected_gauge_prime(r) == pytest.approx(
        (fn.corrected_gauge(r + h) - fn.corrected_gauge(r - h)) / (2 * h), rel=1e-7)


# --- pointwise densities ----------------------------------------------------

class TestDensities:
    def test_repaired_on_circle_point(self):
        F = fn.big_F([SQRT2, 0.0], [0.0, SQRT2], "repaired")
        assert F == pytest.approx(0.5 + np.log(2) / 2, abs=1e-14)
        assert F == pytest.approx(0.84657, abs=1e-5)

    def test_huisken_homogeneity(self):
        xi, eta = np.array([0.3, -1.1]), np.array([0.7, 0.2])
        assert fn.huisken_density(xi, 3 * eta) == pytest.approx(3 * fn.huisken_density(xi, eta))
        assert fn.big_F(xi, eta, "huisken") == fn.rho(xi, eta, "huisken")

    @pytest.mark.parametrize("kind", fn.STAR_KINDS)
    def test_rho_homogeneity(self, kind):
        xi, eta = np.array([1.2, 0.3]), np.array([-0.3, 1.2])
        assert fn.rho(xi, 2.5 * eta, kind) == pytest.approx(2.5 * fn.rho(xi, eta, kind), rel=1e-14)
        assert fn.big_F(xi, 2.5 * eta, kind) == pytest.approx(2.5 * fn.big_F(xi, eta, kind), rel=1e-14)

    @pytest.mark.parametrize("kind", fn.STAR_KINDS)
    def test_cone_violation(self, kind):
        with pytest.raises(fn.ConeViolationError):
            fn.big_F([1.0, 0.0], [1.0, 0.0], kind)
        with pytest.raises(fn.ConeViolationError):
            fn.rho([1.0, 0.0], [0.0, -1.0], kind)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            fn.big_F([1.0, 0.0], [0.0, 1.0], "bogus")

    @settings(max_examples=200, deadline=None)
    @given(point=cone_points)
    def test_gauge_difference(self, point):
        xi, eta = point
        r, ne = np.hypot(*xi), np.hypot(*eta)
        cos_psi = (xi[0] * eta[1] - xi[1] * eta[0]) / (r * ne)
        diff = fn.big_F(xi, eta, "repaired") - fn.big_F(xi, eta, "raw")
        assert diff == pytest.approx(ne * (r / 4 + np.log(r) / r) * cos_psi, abs=1e-12)
        diff = fn.big_F(xi, eta, "repaired") - fn.big_F(xi, eta, "corrected")
        assert diff == pytest.approx(ne * r / 2 * cos_psi, abs=1e-12)

    def test_vectorized(self):
        xi = np.array([[1.0, 0.0], [0.0, 2.0]])
        eta = np.array([[0.0, 1.0], [-1.0, 0.0]])
        out = fn.big_F(xi, eta, "repaired")
        assert out.shape == (2,)
        assert out[1] == pytest.approx(fn.big_F(xi[1], eta[1], "repaired"))


# --- functionals on curves --------------------------------------------------

class TestCircleClosedForms:
    def test_huisken_value(self):
        exact = 2 * SQRT2 * np.pi * np.exp(-0.5)
        c = make_circle(SQRT2, n=N)
        assert fn.huisken_value(c, order=4) == pytest.approx(exact, abs=1e-6)
        assert fn.huisken_value(c, order=2) == pytest.approx(exact * SINC2, abs=1e-12)

    def test_star_value_stationary(self):
        exact = np.pi * (1 + np.log(2))
        c = make_circle(SQRT2, n=N)
        assert fn.star_value(c, order=4) == pytest.approx(exact, abs=1e-6)
        assert fn.star_value(c, order=2) == pytest.approx(exact * SINC2, abs=1e-12)

    def test_star_value_unit_circle(self):
        c = make_circle(1.0, n=N)
        assert fn.star_value(c, order=4) == pytest.approx(np.pi / 2, abs=1e-6)

    def test_raw_value_vanishes_on_centered_circles(self):
        assert abs(fn.star_value(make_circle(1.7, n=64), "raw")) < 1e-12

    def test_not_star_shaped(self):
        with pytest.raises(fn.NotStarShapedError) as info:
            fn.star_value(make_circle(1.0, center=(2.0, 0.0), n=N))
        assert info.value.cos_psi < 0
        assert f"node {info.value.node}" in str(info.value)

    def test_dissipation_stationary(self):
        c = make_circle(SQRT2, n=N)
        assert fn.star_dissipation(c, order=4) <= 1e-6
        assert fn.huisken_dissipation(c, order=4) <= 1e-6

    def test_dissipation_unit_circle(self):
        c = make_circle(1.0, n=N)
        assert fn.star_dissipation(c, order=4) == pytest.approx(np.pi / 2, abs=1e-6)
        assert fn.huisken_dissipation(c, order=4) == pytest.approx(
            np.pi / 2 * np.exp(-0.25), abs=1e-6)

    def test_extra_term_unit_circle(self):
        # d_tau v . n = 1/2 - 1 and (1/2 + 1/r^2) = 3/2 at every node
        c = make_circle(1.0, n=N)
        assert fn.extra_term(c, order=4) == pytest.approx(3 * np.pi / 2, abs=1e-5)

    def test_area_rate(self):
        c = make_circle(1.0, n=N)
        assert fn.area_rate(c, order=4) == pytest.approx(np.pi - 2 * np.pi, abs=1e-5)

    def test_anisotropic_normal_velocity(self):
        g = Anisotropy.harmonic(0.3, 2)
        geom = derivatives(make_ellipse(1.5, 1.0, n=64))
        vn = fn.normal_velocity(geom, g)
        phi = np.arctan2(geom.d1[:, 1], geom.d1[:, 0])
        expected = 0.5 * np.einsum("ij,ij->i", geom.nodes, geom.normal) - g.at_angle(phi) * geom.kappa
        assert np.allclose(vn, expected, atol=1e-13)


def test_dissipation_nonnegative_on_star_curve():
    c = make_polar(star3, 128)
    assert fn.star_dissipation(c) >= 0
    assert fn.huisken_dissipation(c) >= 0


def test_repaired_minus_corrected_is_polygon_area():
    c = make_polar(star3, 128)
    v = c.nodes
    polygon = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    diff = fn.star_value(c, "repaired") - fn.star_value(c, "corrected")
    assert diff == pytest.approx(polygon, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(angle=st.floats(-np.pi, np.pi))
def test_rotation_invariance(angle):
    c = make_polar(star3, 128)
    rc = c.rotated(angle)
    for kind in fn.KINDS:
        assert fn.value(rc, kind) == pytest.approx(fn.value(c, kind), abs=1e-10)
        assert fn.dissipation(rc, kind) == pytest.approx(fn.dissipation(c, kind), abs=1e-10)


@pytest.mark.parametrize("kind", fn.KINDS)
def test_resampling_changes_values_at_second_order(kind):
    diffs = []
    for n in (128, 256):
        x = 2 * np.pi * np.arange(n) / n
        theta = x + 0.2 * np.sin(x)  # non-uniform in arclength
        v = star3(theta)[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        c = ClosedCurve(v)
        diffs.append(abs(fn.value(resample_uniform_arclength(c), kind) - fn.value(c, kind)))
    assert diffs[1] < 1e-3
    assert diffs[0] / diffs[1] > 3.0


# --- identities -------------------------------------------------------------

def test_three_point_rate_exact_on_quadratics():
    taus = [0.0, 0.1, 0.35]
    q = lambda t: 2.0 - 3.0 * t + 5.0 * t**2
    assert fn.three_point_rate(taus, [q(t) for t in taus]) == pytest.approx(-3.0 + 10 * 0.1)
    with pytest.raises(ValueError):
        fn.three_point_rate([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])


def _triple(curve, dt, order=2, n_steps=1):
    traj = run(curve, RhsKind.RESCALED, config=FlowConfig(order=order, resample_every=0),
               horizon=2 * n_steps * dt, observer_stride=n_steps, dt=dt)
    return list(zip(traj.times, traj.curves))


@pytest.mark.parametrize("kind", fn.KINDS)
def test_identity_on_stationary_circle(kind):
    rep = fn.identity_report(_triple(make_circle(SQRT2, n=N), 1e-3, order=4), kind, order=4)
    assert abs(rep.residual) <= 1e-6
    assert abs(rep.dissipation) <= 1e-6
    assert abs(rep.extra_term) <= 1e-6
    assert abs(rep.rate) <= 1e-6


def test_named_identities():
    triple = _triple(make_polar(star3, 128), 1e-3)
    assert fn.raw_star_identity(triple).kind == "raw"
    assert fn.repaired_star_identity(triple).kind == "repaired"
    assert fn.huisken_identity(triple).kind == "huisken"
    assert fn.raw_star_identity(triple).extra_term != 0
    assert fn.repaired_star_identity(triple).extra_term == 0


def test_unnormalized_residual_equals_area_rate():
    # the star curve encloses 2 pi * 1.02, so the stated forms pick up dA/dtau
    # (fourth-order stencils keep the discretization error well below it)
    triple = _triple(make_polar(star3, 256), 1e-4, order=4)
    rep = {k: fn.identity_report(triple, k, order=4) for k in fn.KINDS}
    arate = rep["repaired"].area_rate
    assert arate == pytest.approx(0.02 * 2 * np.pi, rel=1e-3)
    for kind in ("raw", "repaired"):
        assert rep[kind].residual == pytest.approx(arate, rel=1e-3)
    for kind in ("huisken", "corrected"):
        assert abs(rep[kind].residual) < 1e-3 * arate


def test_star_identity_rejects_anisotropy():
    triple = _triple(make_polar(star3, 64), 1e-4)
    with pytest.raises(ValueError):
        fn.identity_report(triple, "repaired", g=Anisotropy.harmonic(0.2))
    fn.identity_report(triple, "huisken", g=Anisotropy.harmonic(0.2))


def test_trajectory_reports_and_csv(tmp_path):
    traj = run(make_polar(star3, 64), RhsKind.RESCALED, horizon=0.02, observer_stride=2, dt=1e-3)
    reports = fn.trajectory_reports(traj, "raw")
    assert len(reports) == len(traj) - 2
    values = fn.trajectory_values(traj, "raw")
    assert reports[0].value == values[1]
    path = tmp_path / "report.csv"
    fn.write_reports(reports, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == list(fn.REPORT_COLUMNS)
    assert float(rows[0]["residual"]) == reports[0].residual
    # same numbers whether evaluated per triple or along the trajectory
    triple = list(zip(traj.times[:3], traj.curves[:3]))
    assert fn.raw_star_identity(triple).residual == pytest.approx(reports[0].residual, abs=1e-14)
