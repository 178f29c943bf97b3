import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import clouds, grade_vectors, line_cloud, subsets
from credalfilter.errors import ColdStartError, CredalError
from credalfilter.possibility import SupportCloud, TrapezoidPossibility, credal_width_exact, necessity_of
from credalfilter.width import (
    CLOSED_FORM,
    QUADRATURE,
    NeesWindow,
    SwitchThresholds,
    UpdateStats,
    additive_extension,
    aggregate_width_cloud,
    aggregate_width_trapezoid,
    credal_pseudometric,
    domain_expand,
    ewm_report,
    fragility_estimate,
    pointwise_width,
    restrict,
    w_hat,
    w_hat_from_nees,
)


def riemann_width(dist, n=1_000_000):
    """Midpoint Riemann sum of pi - n over the domain, divided by its length."""
    lo, hi = dist.domain_lo, dist.domain_hi
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    ell, d = dist.plateau_width, dist.delta
    pi = dist(x)
    kernel = np.maximum(0.0, pi - 2 * d / (ell + 2 * d))
    return float(np.mean(pi - kernel))


@st.composite
def trapezoids(draw, lo=0.0, hi=1.0):
    span = hi - lo
    delta = draw(st.floats(0.0, 0.3 * span))
    a = draw(st.floats(lo + delta, hi - delta))
    b = draw(st.floats(a, hi - delta))
    return TrapezoidPossibility(a, b, delta, lo, hi)


# --------------------------------------------------------------------------- pointwise


def test_pointwise_width():
    ign = line_cloud(np.ones(4))
    for A in subsets(4):
        if len(A) < 4:
            assert pointwise_width(ign, A) == 1.0
    collapsed = line_cloud([0.0, 1.0, 0.0])
    assert pointwise_width(collapsed, [1]) == 0.0
    assert pointwise_width(collapsed, [0, 1]) == 0.0
    assert pointwise_width(line_cloud([1.0, 0.4]), [1]) == pytest.approx(0.4)


# --------------------------------------------------------------------------- trapezoid width


def test_closed_form_table_values():
    assert aggregate_width_trapezoid(TrapezoidPossibility(0.14, 0.50, 0.14), CLOSED_FORM) == pytest.approx(0.219, abs=5e-4)
    assert aggregate_width_trapezoid(TrapezoidPossibility(0.26, 0.36, 0.05), CLOSED_FORM) == pytest.approx(0.075, abs=5e-4)
    assert aggregate_width_trapezoid(TrapezoidPossibility.ignorance(), CLOSED_FORM) == 1.0


def test_quadrature_against_riemann():
    dist = TrapezoidPossibility(0.14, 0.50, 0.14)
    q = aggregate_width_trapezoid(dist, QUADRATURE)
    assert q == pytest.approx(riemann_width(dist), abs=1e-6)
    assert q == pytest.approx(0.253, abs=1e-3)
    # the two width formulas genuinely disagree
    assert abs(q - aggregate_width_trapezoid(dist, CLOSED_FORM)) > 0.03


def test_unknown_method():
    with pytest.raises(CredalError):
        aggregate_width_trapezoid(TrapezoidPossibility(0.2, 0.4, 0.1), "simpson")


@given(trapezoids())
def test_trapezoid_width_bounds(dist):
    for method in (CLOSED_FORM, QUADRATURE):
        w = aggregate_width_trapezoid(dist, method)
        assert -1e-12 <= w <= 1 + 1e-12


@given(trapezoids(), st.floats(0.5, 20.0))
def test_trapezoid_width_scale_invariant(dist, c):
    scaled = TrapezoidPossibility(c * dist.a, c * dist.b, c * dist.delta, 0.0, c)
    for method in (CLOSED_FORM, QUADRATURE):
        assert aggregate_width_trapezoid(scaled, method) == pytest.approx(
            aggregate_width_trapezoid(dist, method), abs=1e-8)


@given(trapezoids(), st.floats(0.0, 1.0))
def test_trapezoid_width_monotone_in_ramp(dist, shrink):
    narrower = TrapezoidPossibility(dist.a, dist.b, shrink * dist.delta)
    assert aggregate_width_trapezoid(narrower, CLOSED_FORM) <= aggregate_width_trapezoid(dist, CLOSED_FORM) + 1e-12


def test_crisp_trapezoid_has_zero_width():
    assert aggregate_width_trapezoid(TrapezoidPossibility(0.2, 0.4, 0.0), CLOSED_FORM) == 0.0
    assert aggregate_width_trapezoid(TrapezoidPossibility(0.2, 0.4, 0.0), QUADRATURE) == pytest.approx(0.0, abs=1e-12)


# --------------------------------------------------------------------------- cloud width


def test_cloud_width_endpoints():
    assert aggregate_width_cloud(line_cloud(np.ones(5))) == 1.0
    assert aggregate_width_cloud(line_cloud([0.0, 1.0, 0.0])) == 0.0


def test_cloud_width_hand_enumerated():
    # singleton necessities: N({x1}) = 1 - 0.5, N({x_i}) = 0 for the rest
    cloud = line_cloud([1.0, 0.5, 0.5, 0.5])
    kernel = [max(0.0, g - (1 - necessity_of(cloud, [i]))) for i, g in enumerate(cloud.grades)]
    assert kernel == [0.5, 0.0, 0.0, 0.0]
    assert aggregate_width_cloud(cloud) == pytest.approx((0.5 + 3 * 0.5) / 4)


@given(clouds(max_size=10))
def test_cloud_width_axioms(cloud):
    w = aggregate_width_cloud(cloud)
    g = cloud.grades
    assert 0.0 <= w <= 1.0
    collapsed = np.sum(g == 1.0) == 1 and np.all((g == 1.0) | (g == 0.0))
    assert (w == 0.0) == (collapsed or cloud.size == 1)


@given(grade_vectors(1, 10), st.data())
def test_cloud_width_monotone_under_narrowing(grades, data):
    m = len(grades)
    factors = np.array(data.draw(st.lists(st.floats(0, 1), min_size=m, max_size=m)))
    wide = line_cloud(grades)
    narrow = line_cloud(grades * factors)
    assert aggregate_width_cloud(narrow) <= aggregate_width_cloud(wide) + 1e-12


def test_width_axioms_on_many_random_clouds(rng):
    for _ in range(500):
        m = int(rng.integers(1, 12))
        g = rng.uniform(0, 1, m)
        g[rng.integers(m)] = 1.0
        w = aggregate_width_cloud(line_cloud(g))
        assert 0.0 <= w <= 1.0
        assert aggregate_width_cloud(line_cloud(g * rng.uniform(0, 1, m))) <= w + 1e-12


# --------------------------------------------------------------------------- Ŵ


def test_w_hat_values():
    th = SwitchThresholds(0.5, 0.1, 0.5)
    win = NeesWindow(5, 1)
    with pytest.raises(ColdStartError, match="cold start"):
        w_hat(win, th)
    win.push(0.0)
    assert w_hat(win, th) == 0.0
    win.clear()
    win.push(1.0)
    assert w_hat(win, th) == pytest.approx(1 - math.exp(-0.5))
    assert w_hat_from_nees(1e6, 0.5) == pytest.approx(1.0)


def test_nees_window_mean_per_dim():
    win = NeesWindow(3, 2)
    for v in (1.0, 2.0, 3.0, 10.0):
        win.push(v)
    assert len(win) == 3
    assert win.nees() == pytest.approx((2 + 3 + 10) / 3 / 2)
    with pytest.raises(CredalError):
        win.push(-1.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_w_hat_monotone(a, b):
    lo, hi = sorted((a, b))
    assert 0 <= w_hat_from_nees(lo, 0.5) <= w_hat_from_nees(hi, 0.5) <= 1
    if hi - lo > 1e-6 and hi < 50:
        assert w_hat_from_nees(lo, 0.5) < w_hat_from_nees(hi, 0.5)


def test_thresholds_validation():
    with pytest.raises(CredalError):
        SwitchThresholds(0.95, 0.1)
    with pytest.raises(CredalError):
        SwitchThresholds(0.5, 0.0)


# --------------------------------------------------------------------------- domain expansion


def test_domain_expand():
    collapsed = line_cloud([1.0, 0.0])
    assert aggregate_width_cloud(collapsed) == 0.0
    grown = domain_expand(collapsed, [[5.0]])
    assert aggregate_width_cloud(grown) > 0
    assert domain_expand(collapsed, np.zeros((0, 1))) is collapsed
    ign = line_cloud(np.ones(3))
    assert aggregate_width_cloud(domain_expand(ign, [[7.0], [8.0]])) == 1.0
    with pytest.raises(CredalError):
        domain_expand(collapsed, [[1.0]])


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.3, 0.6, 0.9])
def test_extension_restricts_back(alpha, rng):
    p_star = rng.dirichlet(np.ones(4))
    r = rng.uniform(0.1, 1, 3)
    ext = additive_extension(p_star, alpha, r)
    assert ext.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(restrict(ext, 4), p_star, atol=1e-12)
    cloud = SupportCloud(np.arange(4.0), p_star / p_star.max())
    grown = domain_expand(cloud, 10.0 + np.arange(3.0))
    np.testing.assert_array_equal(grown.grades[:4], cloud.grades)


def test_fragility():
    collapsed = line_cloud(np.eye(40)[3])
    f1 = fragility_estimate(collapsed, 0.1)
    f2 = fragility_estimate(collapsed, 0.05)
    assert f1 > 0 and f2 > 0
    assert f2 / f1 == pytest.approx(1.0, rel=0.6)
    assert fragility_estimate(line_cloud(np.ones(4)), 0.1) == 0.0
    with pytest.raises(CredalError):
        fragility_estimate(collapsed, 0.0)


@given(clouds(max_size=8), st.floats(0.01, 1.0))
def test_fragility_nonnegative(cloud, frac):
    assert fragility_estimate(cloud, frac) >= 0.0


# --------------------------------------------------------------------------- pseudometric


def brute_metric(g1, g2):
    return max(abs(max(g1[list(A)]) - max(g2[list(A)])) for A in subsets(len(g1)))


def test_pseudometric_examples():
    a, b = line_cloud([1.0, 0.4]), line_cloud([1.0, 0.9])
    assert credal_pseudometric(a, a) == 0.0
    assert credal_pseudometric(a, b) == pytest.approx(0.5)
    assert credal_pseudometric(line_cloud([1.0, 1.0]), line_cloud([1.0, 0.0])) == 1.0
    with pytest.raises(CredalError):
        credal_pseudometric(a, line_cloud([1.0, 0.4, 0.1]))


def test_pseudometric_axioms(rng):
    for _ in range(100):
        m = int(rng.integers(1, 7))
        g = rng.uniform(0, 1, (3, m))
        g[:, 0] = 1.0
        c = [line_cloud(x) for x in g]
        d = lambda i, j: credal_pseudometric(c[i], c[j])  # noqa: E731
        assert d(0, 1) == pytest.approx(brute_metric(g[0], g[1]))
        assert d(0, 1) == d(1, 0)
        assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12
        assert (d(0, 1) == 0) == np.array_equal(g[0], g[1])


# --------------------------------------------------------------------------- report


def test_report_collapsed_cloud():
    rep = ewm_report(line_cloud([1.0, 0.0]), UpdateStats(min_stat=0.0, gate_r2=1.0))
    assert rep.w_bar == 0.0 and rep.w_tv == 0.0 and rep.surprisal == 0.0
    assert rep.alpha_c == pytest.approx(101.0)
    doc = rep.to_dict()
    assert set(doc) == {"w_bar", "w_tv", "w_hat", "prune_count", "necessity_saturation", "surprisal", "alpha_c"}


def test_report_large_cloud_uses_closed_form_tv():
    g = np.linspace(0.1, 1.0, 30)
    cloud = line_cloud(g)
    rep = ewm_report(cloud, UpdateStats(prune_count=3, min_stat=4.0, gate_r2=2.0, necessity_saturation=0.2))
    assert rep.w_tv == pytest.approx(g[-2])
    assert rep.surprisal == 2.0 and rep.prune_count == 3
    assert rep.w_tv == pytest.approx(credal_width_exact(line_cloud(g[-15:])))
