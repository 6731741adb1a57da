import math

import numpy as np
import pytest

from qkflow import symfunc, translator
from qkflow.errors import DomainError


@pytest.fixture(scope="module")
def bowl2():
    return translator.integrate_profile(0, 2, 12.0, 1e-3)


@pytest.fixture(scope="module")
def bowl3():
    return translator.integrate_profile(1, 3, 12.0, 1e-3)


@pytest.mark.parametrize("n, k, a", [(2, 0, 0.5), (3, 1, 1.0), (3, 2, 3.0), (4, 1, 2 / 3)])
def test_vertex_curvature_formula(n, k, a):
    assert translator.vertex_curvature(n, k) == pytest.approx(a)
    assert symfunc.qk(np.full(n, a), k) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("n, k", [(2, 0), (3, 1), (2, 1), (3, 2)])
def test_measured_vertex_curvature(n, k):
    prof = translator.integrate_profile(k, n, 0.5, 1e-3)
    got = translator.measured_vertex_curvature(prof)
    assert abs(got - translator.vertex_curvature(n, k)) <= 1e-8


def test_series_start(bowl2, bowl3):
    # near the vertex u ~ a r^2 / 2
    np.testing.assert_allclose(bowl2.u[:5], bowl2.r[:5] ** 2 / 4, rtol=1e-5)
    np.testing.assert_allclose(bowl3.u[:5], bowl3.r[:5] ** 2 / 2, rtol=1e-5)


def test_mean_curvature_rhs_matches_direct_formula():
    # n = 2, k = 0: H = u''/w^3 + u'/(r w) = 1/w
    rng = np.random.default_rng(0)
    for r, up in zip(rng.uniform(0.05, 5, 100), rng.uniform(0, 20, 100)):
        w = math.sqrt(1 + up * up)
        want = w**3 * (1 / w - up / (r * w))
        assert translator.radial_rhs(r, up, 0, 2) == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_rhs_matches_quotient_of_curvatures():
    rng = np.random.default_rng(1)
    for n, k in [(3, 1), (4, 2), (3, 2)]:
        checked = 0
        for r, up in zip(rng.uniform(0.05, 0.5, 50), rng.uniform(0, 1, 50)):
            try:
                upp = translator.radial_rhs(r, up, k, n)
            except DomainError:
                continue  # states far from any translator may leave the cone
            checked += 1
            w = math.sqrt(1 + up * up)
            lam = np.array([upp / w**3] + [up / (r * w)] * (n - 1))
            assert symfunc.qk(lam, k) * w == pytest.approx(1.0, rel=1e-11)
        assert checked >= 10


def test_rhs_rejects_bad_radius():
    with pytest.raises(ValueError):
        translator.radial_rhs(0.0, 0.0, 0, 2)


def test_roundtrip_residual(bowl2, bowl3):
    for prof in (bowl2, bowl3):
        assert np.max(translator.roundtrip_residual(prof)) <= 1e-8


def test_profile_is_convex_and_increasing(bowl2, bowl3):
    for prof in (bowl2, bowl3):
        assert np.all(np.diff(prof.u) > 0)
        assert np.all(prof.kappa_rad > 0) and np.all(prof.kappa_ang > 0)
        assert prof.vertical_radius is None


@pytest.mark.parametrize("n, k, r_star", [(2, 1, 1.0), (3, 2, math.pi / 4)])
def test_top_order_profiles_turn_vertical(n, k, r_star):
    prof = translator.integrate_profile(k, n, 2.0, 1e-3)
    assert prof.vertical_radius == pytest.approx(r_star, abs=1e-5)
    assert prof.r[-1] <= prof.vertical_radius


def test_growth_exponent_of_power_laws():
    r = np.linspace(1, 200, 4000)
    assert translator.growth_exponent_arrays(r, 3 * r**2, 10, 100) == pytest.approx(2.0, abs=1e-12)
    assert translator.growth_exponent_arrays(r, 0.5 * r, 10, 100) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        translator.growth_exponent_arrays(r, r, 10, 300)


def test_bowl_grows_superlinearly(bowl2):
    assert translator.growth_exponent(bowl2, 4.0, 12.0) > 1.2


@pytest.mark.parametrize("n, k", [(2, 0), (3, 1)])
def test_intrinsic_height_identity_converges(n, k):
    errs = [translator.intrinsic_height_identity(translator.integrate_profile(k, n, 4.0, h),
                                                 r_lo=0.05)
            for h in (2e-3, 1e-3)]
    assert errs[1] <= 1e-4
    assert errs[0] / errs[1] >= 3.0


def test_intrinsic_height_identity_flat_disk():
    r = 0.01 * np.arange(1, 101)
    zero = np.zeros_like(r)
    flat = translator.TranslatorProfile(r=r, u=zero, up=zero, upp=zero, k=0, n=2, h=0.01)
    assert translator.intrinsic_height_identity(flat) == 0.0


def test_bowl_slope_on_large_annulus():
    prof = translator.integrate_profile(0, 2, 100.0, 1e-3)
    assert 1.5 < translator.growth_exponent(prof, 10.0, 100.0) < 2.1


def test_relaxation_from_profile_is_already_steady():
    prof = translator.integrate_profile(0, 2, 2.0, 1e-3)
    first = translator.relax_to_translator(prof, 1 / 8, 1.0, rtol=1.0)
    res = translator.relax_to_translator(prof, 1 / 8, 1.0, rtol=first.residual * (1 + 1e-6))
    assert res.steps == 0 and res.max_error == 0.0


def test_relaxation_from_paraboloid():
    prof = translator.integrate_profile(0, 2, 2.0, 1e-3)
    res = translator.relax_to_translator(prof, 1 / 8, 1.0, initial="paraboloid", rtol=1e-8)
    assert res.residual <= 1e-8
    assert res.max_error <= 1e-3
    vals = res.report.values("residual")
    assert vals[-1] < vals[0]


def test_relaxation_needs_planar_grid(bowl3):
    with pytest.raises(DomainError):
        translator.relax_to_translator(bowl3, 0.25, 1.0)


def test_invalid_indices():
    with pytest.raises(DomainError):
        translator.integrate_profile(2, 2, 1.0, 1e-2)
    with pytest.raises(ValueError):
        translator.integrate_profile(0, 2, 0.05, 1e-2)
