import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specklamp import correlations as corr
from specklamp import statistics as sts
from specklamp.coefficients import mean_coefficients
from specklamp.exceptions import (
    DegenerateNoLight,
    NumericalFailure,
    ValidationError,
    ValidityWarning,
    WindowOverlap,
)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        yield


# --- windowed variance ------------------------------------------------------


def _exp_closed(T):
    return 2.0 / T - 2.0 / T**2 * (1.0 - math.exp(-T))


@pytest.mark.parametrize("T", [1e-3, 0.5, 10.0, 1e3, 1e6])
def test_constant_correlation(T):
    assert sts.windowed_variance(lambda t: 0.37, T) == pytest.approx(0.37, rel=1e-12)
    assert sts.windowed_variance_batch(lambda t: np.full_like(t, 0.37), [T])[0] == pytest.approx(0.37, rel=1e-12)


@pytest.mark.parametrize("T", [1e-2, 1.0, 1e3])
def test_exponential_correlation(T):
    assert sts.windowed_variance(lambda t: math.exp(-t), T) == pytest.approx(_exp_closed(T), rel=1e-10)
    assert sts.windowed_variance_batch(lambda t: np.exp(-t), [T])[0] == pytest.approx(
        _exp_closed(T), rel=1e-10)


@pytest.mark.parametrize("T", [1e-4, 1.0, 1e4, 1e8])
def test_inverse_sqrt_tail_coefficient(T):
    g = 100.0
    C = lambda t: np.sqrt(1.0 / np.asarray(t)) / g  # noqa: E731
    expected = 8.0 / (3.0 * g) * math.sqrt(1.0 / T)
    assert sts.windowed_variance(lambda t: float(C(t)), T) == pytest.approx(expected, rel=1e-10)
    assert sts.windowed_variance_batch(C, [T])[0] == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kind", corr.KINDS)
def test_short_window_returns_equal_time_value(kind):
    got = sts.windowed_kernel(kind, 1.0, 1e-8, method="adaptive")
    assert got == pytest.approx(sts.equal_time(kind, 1.0), rel=1e-6)


@pytest.mark.parametrize("kind", corr.KINDS)
@pytest.mark.parametrize("x", [0.0, 1.0, 2.5])
def test_batch_matches_adaptive(kind, x):
    taus = np.array([1e-3, 0.3, 10.0, 1e4])
    b = sts.windowed_kernel(kind, x, taus, method="batch")
    a = sts.windowed_kernel(kind, x, taus, method="adaptive")
    np.testing.assert_allclose(b, a, rtol=1e-10)


def test_budget_exhaustion_reports_diagnostics():
    with pytest.raises(NumericalFailure) as exc:
        sts.windowed_variance(corr.kernel("vv", 1.0), 1e6, budget=10)
    assert "neval" in exc.value.diagnostics


def test_bad_window_rejected():
    with pytest.raises(ValueError):
        sts.windowed_variance(lambda t: 1.0, 0.0)
    with pytest.raises(ValueError):
        sts.windowed_variance_batch(lambda t: t, [1.0, -1.0])
    with pytest.raises(ValueError):
        sts.windowed_kernel("vv", 1.0, 1.0, method="simpson")


@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_windowed_variance_decreases_with_window(T1, T2):
    lo, hi = sorted((T1, T2))
    d = sts.windowed_kernel("vv", 1.0, np.array([lo, hi]))
    assert d[1] <= d[0] * (1 + 1e-12)


# --- composition ------------------------------------------------------------


def _coherent(x=1.0, nb=100.0, eta=-1.0, kappa=10.0):
    m = sts.strong_wave_model(x, nb, kappa=kappa)
    return m if eta == -1.0 else m.with_gain(eta=eta)


def test_no_emission_reduces_to_semiclassical_form():
    m = _coherent(eta=0.0)
    b = sts.photocount_variance(m)
    assert b.phi == 0.0
    assert b.total == pytest.approx(1.0 / b.nb + b.delta2["tt"], rel=1e-14)


def test_no_gain_reduces_to_semiclassical_form():
    m = _coherent(x=0.0)
    b = sts.photocount_variance(m)
    assert b.phi == 0.0 and b.interference == 0.0
    assert b.total == pytest.approx(1.0 / b.nb + b.delta2["tt"], rel=1e-14)


def test_pure_emission_composition():
    m = sts.ase_model(1.0, 50.0)
    b = sts.photocount_variance(m)
    vb = mean_coefficients(m).Vb
    expected = (1.0 - m.eta * vb * (1.0 + b.equal_time["vv"])) / b.nb + b.delta2["vv"]
    assert b.phi == 1.0
    assert b.total == pytest.approx(expected, rel=1e-14)


def test_pure_emission_without_medium_fluctuations():
    m = sts.ase_model(1.0, 50.0)
    b = sts.photocount_variance(m)
    vb = mean_coefficients(m).Vb
    shot_without_cvv = b.shot + m.eta * vb * b.equal_time["vv"] / b.nb
    assert shot_without_cvv == pytest.approx(1.0 / b.nb + 2.0 * math.pi / m.tau_domega, rel=1e-13)


@given(st.floats(0.0, 3.0), st.floats(1e-2, 1e8), st.floats(1.0, 1e3), st.floats(-3.0, 0.0))
def test_breakdown_sums_to_total(x, nb, kappa, eta):
    m = sts.strong_wave_model(x, nb, kappa=kappa).with_gain(eta=eta)
    b = sts.photocount_variance(m)
    assert b.total == pytest.approx(b.shot + b.classical_tt + b.cross_tv + b.ase_vv, rel=1e-15)
    assert b.shot == pytest.approx(1.0 / b.nb + b.interference, rel=1e-15)
    assert b.shot > 0 and 0.0 <= b.phi <= 1.0
    assert b.weights["tt"] + b.weights["tv"] + b.weights["vv"] == pytest.approx(1.0, rel=1e-14)


def test_static_mode_uses_equal_time_values():
    b = sts.photocount_variance(_coherent(), static=True)
    assert b.delta2 == b.equal_time


def test_approach_to_no_emission_is_linear_in_phi():
    base = _coherent()
    ref = sts.photocount_variance(base.with_gain(eta=0.0)).total
    slopes = []
    for eta in (-1e-2, -1e-3, -1e-4):
        b = sts.photocount_variance(base.with_gain(eta=eta))
        slopes.append((b.total - ref) / b.phi)
    assert slopes[1] == pytest.approx(slopes[0], rel=1e-2)
    assert slopes[2] == pytest.approx(slopes[1], rel=1e-3)


def test_strong_wave_limit_is_second_order_accurate():
    base = _coherent()
    ratios = []
    for eta in (-1e-1, -1e-2, -1e-3):
        m = base.with_gain(eta=eta)
        b = sts.photocount_variance(m)
        ratios.append((b.total - sts.strong_wave_variance(m)) / b.phi**2)
    assert ratios[2] == pytest.approx(ratios[1], rel=1e-2)


def test_strong_wave_without_medium_fluctuations():
    # zeroing all correlations leaves [1 - 2 eta V_b] / nb
    m = _coherent()
    mc = mean_coefficients(m)
    with_c = sts.strong_wave_variance(m, static=True)
    c0 = {k: sts.equal_time(k, m.x, a=m.a, g=m.g) for k in ("tt", "tv")}
    corrections = (-2.0 * m.eta * mc.Vb * c0["tv"] / mc.nb
                   + 2.0 * m.eta * mc.Vb / (mc.Tb * m.kappa) * (c0["tt"] - c0["tv"]) + c0["tt"])
    assert with_c - corrections == pytest.approx((1.0 - 2.0 * m.eta * mc.Vb) / mc.nb, rel=1e-12)


def test_strong_wave_input_checks():
    with pytest.raises(ValidationError):
        sts.strong_wave_variance(sts.ase_model(1.0, 10.0))
    with pytest.warns(ValidityWarning):
        warnings.simplefilter("always")
        sts.strong_wave_variance(_coherent(kappa=0.1))


def test_variance_decreases_with_photocount():
    nb = np.logspace(-3, 12, 61)
    for curve in (sts.strong_wave_curve(1.0, nb), sts.ase_variance_curve(1.0, nb)):
        assert np.all(np.diff(curve.ordinate) < 0)


def test_curve_matches_pointwise_adaptive_evaluation():
    nb = np.array([0.01, 10.0, 1e5])
    curve = sts.ase_variance_curve(2.0, nb)
    direct = [sts.photocount_variance(sts.ase_model(2.0, v)).total for v in nb]
    np.testing.assert_allclose(curve.ordinate, direct, rtol=1e-10)


# --- special cases ------------------------------------------------------------


def test_ase_asymptote_value():
    m = sts.ase_model(1.0, 1000.0)  # nb / nb_c = 100
    s = sts.ase_statistics(m)
    assert s.asymptote == pytest.approx(8.0 / 3000.0, rel=1e-14)
    assert s.variance == pytest.approx(s.breakdown.total)


def test_ase_statistics_input_checks():
    with pytest.raises(ValidationError):
        sts.ase_statistics(_coherent())
    m = sts.ase_model(1.0, 10.0)
    with pytest.raises(DegenerateNoLight):
        sts.ase_statistics(m.with_gain(eta=0.0))


def test_averaging_conventions_have_opposite_excess():
    m = _coherent(x=0.1)
    c = sts.variance_convention_compare(m)
    assert c.excess_joint < 0 < c.excess_primed


def test_weak_gain_excess_noise_form():
    m = _coherent(x=0.1)
    c = sts.variance_convention_compare(m)
    vb = mean_coefficients(m).Vb
    target = 2.0 * m.eta * vb * c.nb * m.tau_domega / (2.0 * math.pi)
    assert c.excess_joint == pytest.approx(target, rel=0.03)


def test_conventions_coincide_without_emission():
    m = _coherent(eta=0.0)
    c = sts.variance_convention_compare(m)
    b = sts.photocount_variance(m, static=True)
    assert c.excess_joint == 0.0 and c.excess_primed == 0.0
    assert c.var_joint == pytest.approx(c.nb + c.nb**2 * b.equal_time["tt"], rel=1e-14)


def test_regime_examples():
    assert sts.regime_classifier(0.1, 10.0, 100.0).label == "shot"
    r = sts.regime_classifier(10 * 100.0**2 * 10.0, 10.0, 100.0)
    assert r.label == "long-range" and r.slope == -0.5
    assert sts.regime_classifier(50.0, 10.0, 100.0).label == "classical"


def test_ase_crossover_rule():
    assert sts.regime_classifier(1.0, 1e3, 100.0, "ase").crossovers == (100.0,)
    assert sts.regime_classifier(1.0, 10.0, 100.0, "ase").crossovers == (1000.0,)
    with pytest.raises(ValueError):
        sts.regime_classifier(1.0, 10.0, 100.0, "laser")


def test_autocorrelation_pure_emission_is_vv():
    m = sts.ase_model(1.0, 10.0)
    t = np.logspace(1, 6, 30)
    np.testing.assert_allclose(sts.photocount_autocorrelation(m, t), corr.c_vv(m.x, np.sqrt(t), m.g),
                               rtol=1e-12)


def test_autocorrelation_no_emission_is_tt():
    m = _coherent(eta=0.0)
    t = np.logspace(0, 4, 30) * m.tau_over_tc * 1.01
    np.testing.assert_allclose(sts.photocount_autocorrelation(m, t), corr.c_tt(m.x, np.sqrt(t), m.a, m.g),
                               rtol=1e-12)


def test_autocorrelation_tail():
    m = sts.ase_model(1.0, 10.0)
    t = np.array([1e6, 1e8])
    c = sts.photocount_autocorrelation(m, t)
    np.testing.assert_allclose(c * m.g * np.sqrt(t), 1.0, atol=2e-3)


def test_autocorrelation_short_time_matches_equal_time_weight():
    m = sts.ase_model(1.0, 1e-7)
    s = sts.ase_statistics(m)
    c = sts.photocount_autocorrelation(m, 2.0 * m.tau_over_tc)
    assert c == pytest.approx(s.breakdown.equal_time["vv"], rel=1e-6)


def test_autocorrelation_rejects_overlap():
    m = sts.ase_model(1.0, 100.0)
    with pytest.raises(WindowOverlap):
        sts.photocount_autocorrelation(m, m.tau_over_tc)


# --- containers -------------------------------------------------------------


def test_noise_curve_round_trip(tmp_path):
    c = sts.NoiseCurve([1.0, 2.0, 3.0], [0.3, 0.2, 0.1], {"k": 1}, sigma=[0.01, 0.02, 0.03])
    p = tmp_path / "c.csv"
    c.to_csv(p, ("nb", "delta_b2"))
    back = sts.NoiseCurve.from_csv(p)
    np.testing.assert_array_equal(back.abscissa, c.abscissa)
    np.testing.assert_array_equal(back.ordinate, c.ordinate)
    np.testing.assert_array_equal(back.sigma, c.sigma)
    assert back.meta["columns"] == ["nb", "delta_b2", "sigma"]


@pytest.mark.parametrize("args", [([2.0, 1.0], [1.0, 1.0]), ([1.0, 2.0], [1.0, -1.0]),
                                  ([1.0, 2.0], [1.0, np.nan]), ([1.0], [1.0, 2.0])])
def test_noise_curve_validation(args):
    with pytest.raises(ValidationError):
        sts.NoiseCurve(*args)


def test_loglog_slope_exact_power():
    x = np.logspace(0, 3, 10)
    assert sts.loglog_slope(x, 3 * x**-0.5) == pytest.approx(-0.5, abs=1e-12)
