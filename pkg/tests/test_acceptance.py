"""Acceptance criteria 1-11 at their stated tolerances.

Each check logs a PASS/FAIL line that is printed in the "acceptance
criteria" section at the end of the pytest run.  Checks that cannot meet
the stated tolerance are strict xfails and log FAIL.
"""

import json
import math
import os
import subprocess
import sys
import warnings

import numpy as np
import pytest

from specklamp import correlations as corr
from specklamp import montecarlo as mcs
from specklamp import spectroscopy as sp
from specklamp import statistics as sts
from specklamp.coefficients import ase_coefficient, total_reflection, total_transmission
from specklamp.exceptions import IllConditioned, ValidityWarning

import oracles

G = 100.0


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        warnings.simplefilter("ignore", IllConditioned)
        yield


# 1 -------------------------------------------------------------------------------


def test_1_conservation(acceptance):
    x = np.linspace(0.0, 0.999 * math.pi, 200)
    worst = 0.0
    for a in (1e-3, 1e-2, 1e-1):
        err = total_transmission(x, a) + total_reflection(x, a) - ase_coefficient(x, a) - 1.0
        worst = max(worst, float(np.max(np.abs(err))))
    assert acceptance(1, worst < 1e-12, f"max |T+R-V-1| = {worst:.2e} (< 1e-12)")


# 2 -------------------------------------------------------------------------------


def test_2_threshold_divergence(acceptance):
    eps = np.geomspace(1e-5, 1e-6, 11)  # last decade of approach
    x = math.pi - eps
    for name, fn in (("V", ase_coefficient), ("T", total_transmission)):
        prod = eps * fn(x, 0.01)
        drift = float(prod.max() / prod.min() - 1.0)
        ok = np.all(np.isfinite(prod)) and drift < 1e-3
        assert acceptance(2, ok, f"(pi-x)*{name}b -> {prod[-1]:.6g}, drift {drift:.2e} (< 1e-3)")


# 3 -------------------------------------------------------------------------------


def test_3_equal_time_identities(acceptance):
    c1 = [corr.c1_tt(x, 0.0, 0.01) for x in np.linspace(0.0, 3.1, 32)]
    assert acceptance(3, all(v == 1.0 for v in c1), "C1(t=0) == 1 exactly")
    y = 1e-5
    pairs = (("F2 (general) -> F2 (equal time)", corr.f2, corr.f2_equal_time),
             ("C_TV (general) -> C_TV (equal time)", lambda x, y: corr.c_tv(x, y, G),
              lambda x: corr.c_tv_equal_time(x, G)),
             ("C_VV (general) -> C_VV (equal time)", lambda x, y: corr.c_vv(x, y, G),
              lambda x: corr.c_vv_equal_time(x, G)))
    for label, gen, zero in pairs:
        rel = max(abs(gen(x, y) / zero(x) - 1.0) for x in (0.5, 1.0, 2.0, 3.0))
        assert acceptance(3, rel < 1e-6, f"{label} at y=1e-5: max rel {rel:.1e} (< 1e-6)")


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 3.0])
def test_3_branch_continuity(acceptance, x):
    eps = 1e-6 * x
    worst = 0.0
    for name, f in (("f2", corr.f2), ("c_tv", lambda x, y: corr.c_tv(x, y, 1.0)),
                    ("c_vv", lambda x, y: corr.c_vv(x, y, 1.0))):
        # the jump across y = x must equal the smooth change of the function
        jump = f(x, x + eps) - f(x, x - eps)
        smooth = 2.0 * eps * oracles.slope_in_y(name, x, x)
        worst = max(worst, abs(jump - smooth) / abs(f(x, x)))
    assert acceptance(3, worst < 1e-8, f"branch continuity at x={x}: {worst:.1e} (< 1e-8)")


# 4 -------------------------------------------------------------------------------


@pytest.mark.parametrize("x", [0.5, 1.0])
def test_4a_ase_tail_amplitude(acceptance, x):
    t = np.logspace(4, 12, 33)
    v = G * corr.c_vv(x, np.sqrt(t), G) * np.sqrt(t)
    ok = bool(np.all((v >= 0.98) & (v <= 1.02)))
    assert acceptance(4, ok, f"g*C_VV*sqrt(t) in [{v.min():.4f}, {v.max():.4f}] for t>=1e4, x={x}")


@pytest.mark.xfail(strict=True, reason="subleading 1/t tail: -10% at tau=1e4 (see ledger)")
@pytest.mark.parametrize("x", [0.5, 1.0])
def test_4b_windowed_tail(acceptance, x):
    tau = np.logspace(4, 10, 13)
    rel = sts.windowed_kernel("vv", x, tau, g=G) / (8.0 / (3.0 * G) / np.sqrt(tau)) - 1.0
    worst = float(np.max(np.abs(rel)))
    assert acceptance(4, worst < 0.05, f"delta2_VV vs (8/3g)sqrt(tc/tau), tau>=1e4, x={x}: worst {worst:.3f} (< 0.05)")


def test_4b_windowed_tail_far_asymptote(acceptance):
    tau = np.logspace(6, 12, 13)
    rel = sts.windowed_kernel("vv", 1.0, tau, g=G) / (8.0 / (3.0 * G) / np.sqrt(tau)) - 1.0
    worst = float(np.max(np.abs(rel)))
    assert acceptance(4, worst < 0.02, f"same, tau>=1e6, x=1: worst {worst:.3f} (< 0.02, supplementary)")


# 5 -------------------------------------------------------------------------------


def _phi_model(phi):
    x, a = 1.0, 0.01
    if phi == 0.0:
        return sts.strong_wave_model(x, 100.0).with_gain(eta=0.0)
    if phi == 1.0:
        return sts.ase_model(x, 100.0)
    kappa = float(ase_coefficient(x, a) * (1.0 - phi) / (phi * total_transmission(x, a)))
    return sts.strong_wave_model(x, 100.0, kappa=kappa)


@pytest.mark.parametrize("phi", [0.0, 0.3, 1.0])
def test_5_main_result_vs_quadrature_oracle(acceptance, phi):
    m = _phi_model(phi)
    assert m.tau_over_tc == pytest.approx(10.0) and m.g == pytest.approx(G)
    b = sts.photocount_variance(m)
    assert b.phi == pytest.approx(phi, abs=1e-12)
    r = mcs.run_quadrature_oracle(m, 10_000, seed=7)
    ok = abs(r.zscore) < 3.0
    assert acceptance(5, ok, f"phi={phi}: oracle {r.delta2:.6g} +/- {r.stderr:.2g}, analytic {r.analytic:.6g}, "
                             f"z={r.zscore:.2f} (|z| < 3)")


# 6 -------------------------------------------------------------------------------


@pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
def test_6_semiclassical_monte_carlo(acceptance, tau):
    x, a, nbar, n = 1.0, 0.01, 50.0, 200
    pair = mcs.sample_pair(x, a, G, tau / n, n + 1, 10_000, seed=3)
    ev = mcs.count_variance(mcs.cox_count(pair, nbar / tau, tau, seed=3))
    expected = 1.0 / nbar + float(sts.windowed_kernel("tt", x, tau, a=a, g=G))
    z = (ev.value - expected) / ev.stderr
    assert acceptance(6, abs(z) < 3.0, f"tau={tau}: empirical {ev.value:.5f}, 1/nb + delta2_TT {expected:.5f}, "
                                       f"z={z:.2f} (|z| < 3)")


def test_6_siegert(acceptance):
    x, a, dt = 1.0, 0.01, 0.05
    tr = mcs.sample_speckle(lambda t: np.sqrt(corr.c1_tt(x, np.sqrt(t), a)), dt, 101, 5, realizations=10_000)
    lags = np.array([0, 5, 10, 20, 40, 100])
    est, se = mcs.intensity_autocorrelation(tr.values, lags)
    z = (est - corr.c1_tt(x, np.sqrt(lags * dt), a)) / se
    worst = float(np.max(np.abs(z)))
    assert acceptance(6, worst < 3.0, f"Siegert <I I'>/<I>^2 - 1 = |g1|^2: max |z| {worst:.2f} (< 3)")


# 7 -------------------------------------------------------------------------------

NB = np.logspace(-3, 12, 151)


def _decade_slope(curve, lo):
    sel = (curve.abscissa >= lo * (1 - 1e-9)) & (curve.abscissa <= 10 * lo * (1 + 1e-9))
    return sts.loglog_slope(curve.abscissa[sel], curve.ordinate[sel])


def _curves():
    out = {f"fig5 x={x}": (sts.strong_wave_curve(x, NB), 1e9) for x in (0.0, 1.0)}
    out.update({f"fig9 x={x}": (sts.ase_variance_curve(x, NB), 1e7) for x in (0.5, 1.0, 2.0)})
    return out


def test_7_shot_and_long_range_slopes(acceptance):
    for label, (curve, long_lo) in _curves().items():
        s_shot = _decade_slope(curve, 1e-3)
        s_long = _decade_slope(curve, long_lo)
        assert acceptance(7, abs(s_shot + 1.0) < 0.05, f"{label} shot [1e-3, 1e-2]: slope {s_shot:.3f} (-1 +/- 0.05)")
        assert acceptance(7, abs(s_long + 0.5) < 0.05,
                          f"{label} long-range [{long_lo:.0e}, {10 * long_lo:.0e}]: slope {s_long:.3f} (-1/2 +/- 0.05)")


@pytest.mark.xfail(strict=True, reason="classical plateau too short at g=100, nb_c=10 (see ledger)")
@pytest.mark.parametrize("x", [0.0, 1.0])
def test_7_classical_slope(acceptance, x):
    curve = sts.strong_wave_curve(x, NB)
    labels = np.array([sts.regime_classifier(v, 10.0, G).label for v in NB])
    starts = [v for v in NB if labels[NB == v][0] == "classical" and 10 * v <= NB[labels == "classical"].max()]
    best = min((_decade_slope(curve, v) for v in starts), key=lambda s: abs(s + 1.0))
    assert acceptance(7, abs(best + 1.0) < 0.05,
                      f"fig5 x={x} classical regime: steepest decade slope {best:.3f} (-1 +/- 0.05)")


# 8 -------------------------------------------------------------------------------


def test_8_averaging_conventions(acceptance):
    for x in (0.05, 0.1):
        c = sts.variance_convention_compare(sts.strong_wave_model(x, 100.0))
        ok = c.excess_joint < 0.0 < c.excess_primed
        assert acceptance(8, ok, f"x={x}, eta=-1: excess(var) {c.excess_joint:.3g} < 0 < excess(var') "
                                 f"{c.excess_primed:.3g}")


# 9 -------------------------------------------------------------------------------


def test_9_autocorrelation_limits(acceptance):
    m = sts.ase_model(1.0, 10.0)
    t = np.logspace(0.5, 8, 60)
    rel = np.max(np.abs(sts.photocount_autocorrelation(m, t) / corr.c_vv(m.x, np.sqrt(t), m.g) - 1.0))
    assert acceptance(9, rel < 1e-12, f"phi=1: max |C_nn/C_VV - 1| = {rel:.1e} (< 1e-12)")
    m = sts.strong_wave_model(1.0, 100.0).with_gain(eta=0.0)
    t = np.logspace(1.1, 6, 60)
    rel = np.max(np.abs(sts.photocount_autocorrelation(m, t) / corr.c_tt(m.x, np.sqrt(t), m.a, m.g) - 1.0))
    assert acceptance(9, rel < 1e-12, f"phi=0 coherent: max |C_nn/C_TT - 1| = {rel:.1e} (< 1e-12)")


# 10 ------------------------------------------------------------------------------

FIT_NB = np.logspace(-1, 8, 30)


def test_10_self_inversion(acceptance):
    y = sp.ase_variance_model(FIT_NB, G, 10.0, x=1.0)
    r = sp.fit_ase_variance(sts.NoiseCurve(FIT_NB, y), x=1.0)
    rel = max(abs(r.params["g"] / G - 1.0), abs(r.params["nb_c"] / 10.0 - 1.0))
    assert acceptance(10, rel < 1e-4, f"ASE self-inversion: max rel error {rel:.1e} (< 1e-4)")
    t = np.logspace(-1, 4, 40)
    r = sp.fit_autocorrelation(sts.NoiseCurve(t, sp.autocorrelation_model(t, G, 2.0, 1.0)), x=1.0)
    rel = max(abs(r.params["g"] / G - 1.0), abs(r.params["tc"] / 2.0 - 1.0))
    assert acceptance(10, rel < 1e-4, f"autocorrelation self-inversion: max rel error {rel:.1e} (< 1e-4)")


@pytest.mark.xfail(strict=True, reason="Fisher limit of 1% noise exceeds 5% for nb_c (see ledger)")
def test_10_noisy_recovery(acceptance):
    rng = np.random.default_rng(2024)
    clean = sp.ase_variance_model(FIT_NB, G, 10.0, x=1.0)
    good = 0
    for _ in range(100):
        y = clean * (1.0 + 0.01 * rng.standard_normal(clean.size))
        r = sp.fit_ase_variance(sts.NoiseCurve(FIT_NB, y), x=1.0, log_sigma=0.01)
        good += abs(r.params["g"] / G - 1.0) < 0.05 and abs(r.params["nb_c"] / 10.0 - 1.0) < 0.05
    assert acceptance(10, good >= 90, f"1% noise: g and nb_c within 5% in {good}/100 datasets (>= 90)")


# 11 ------------------------------------------------------------------------------


def test_11_determinism(acceptance, tmp_path):
    cfg = sts.ase_model(1.0, 10.0).with_tau_over_tc(2.0).to_config()
    cfg["simulation"] = {"realizations": 1000, "min_points": 40}
    config = tmp_path / "sim.json"
    config.write_text(json.dumps(cfg))
    outputs = {}
    for threads in (1, 8):
        out = tmp_path / f"threads{threads}"
        env = dict(os.environ, SPECKLAMP_THREADS=str(threads))
        subprocess.run([sys.executable, "-m", "specklamp", "simulate", "--config", str(config), "--seed", "11",
                        "--out", str(out)], check=True, env=env, capture_output=True)
        outputs[threads] = [(out / n).read_bytes() for n in ("simulate.csv", "simulate.manifest.json")]
    data = mcs.sample_pair(1.0, 0.01, G, 0.05, 41, 700, 11, threads=1)
    again = mcs.sample_pair(1.0, 0.01, G, 0.05, 41, 700, 11, threads=8)
    ok = outputs[1] == outputs[8] and np.array_equal(data.T, again.T) and np.array_equal(data.V, again.V)
    assert acceptance(11, ok, "simulate output and sampled traces byte-identical for 1 and 8 workers")
