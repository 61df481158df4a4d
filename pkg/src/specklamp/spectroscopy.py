"""Noise spectroscopy: recover conductance and correlation time from noise curves.

Two inverse problems:

* ASE variance curve ``delta_b^2(nb)`` (no incident light) gives ``g`` and
  ``nb_c``, the photocount per correlation time.
* ASE photocount autocorrelation ``C_nn(t)`` gives ``g``, ``t_c`` and
  optionally ``x``.

Both are fitted in log-log space with a damped Gauss-Newton
(Levenberg-Marquardt) iteration over log-parameters.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from . import correlations as corr
from .coefficients import ase_coefficient
from .exceptions import FitFailed, IllConditioned, ValidationError
from .statistics import NoiseCurve, windowed_variance_batch

__all__ = [
    "FitResult",
    "levenberg_marquardt",
    "ase_shape",
    "ase_variance_model",
    "autocorrelation_model",
    "fit_ase_variance",
    "fit_autocorrelation",
    "AseNoiseSpectrometer",
    "AutocorrelationSpectrometer",
]

MAX_ITER = 200
FD_STEP = 1e-6
CONDITION_LIMIT = 1e8
SENSITIVITY_FLOOR = 1e-2


# --- solver ---------------------------------------------------------------------


@dataclass
class LMStep:
    iteration: int
    cost: float
    damping: float
    accepted: bool


@dataclass
class _Solution:
    p: np.ndarray
    cost: float
    jac: np.ndarray
    iterations: int
    converged: bool
    history: list


def _jacobian(fun, p, r0, step):
    J = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = step * max(1.0, abs(p[j]))
        dp = np.zeros_like(p)
        dp[j] = h
        J[:, j] = (fun(p + dp) - fun(p - dp)) / (2.0 * h)
    return J


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], p0, *, max_iter: int = MAX_ITER,
                        step: float = FD_STEP, ftol: float = 1e-10, xtol: float = 1e-10,
                        gtol: float = 1e-12, damping: float = 1e-3) -> _Solution:
    """Minimize ``0.5 * sum(fun(p)**2)``.

    The Jacobian is a central difference with step ``step * max(1, |p_j|)``.
    A trial step is accepted only if it lowers the cost, so the cost never
    increases across accepted iterations; otherwise the damping grows.
    Marquardt scaling by ``diag(J^T J)`` is used.

    Raises
    ------
    FitFailed
        If no convergence within ``max_iter`` iterations; ``trace`` holds
        the per-iteration history.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = fun(p)
    if not np.all(np.isfinite(r)):
        raise FitFailed("residuals are not finite at the starting point", trace=[])
    cost = 0.5 * float(r @ r)
    history = [LMStep(0, cost, damping, True)]
    J = _jacobian(fun, p, r, step)
    lam = damping
    for it in range(1, max_iter + 1):
        grad = J.T @ r
        if np.max(np.abs(grad)) <= gtol * max(1.0, cost):
            return _Solution(p, cost, J, it - 1, True, history)
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-300)
        while True:
            try:
                delta = np.linalg.solve(A + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + delta
            r_new = fun(trial)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost:
                history.append(LMStep(it, cost_new, lam, True))
                small_step = np.max(np.abs(delta)) <= xtol * (1.0 + np.max(np.abs(p)))
                small_gain = cost - cost_new <= ftol * cost
                p, r, cost = trial, r_new, cost_new
                lam = max(lam / 3.0, 1e-12)
                J = _jacobian(fun, p, r, step)
                if small_step or small_gain or cost == 0.0:
                    return _Solution(p, cost, J, it, True, history)
                break
            history.append(LMStep(it, cost_new, lam, False))
            lam *= 4.0
            if lam > 1e16:
                # no descent possible at this resolution: a stationary point
                return _Solution(p, cost, J, it, True, history)
    raise FitFailed(f"no convergence after {max_iter} iterations", trace=[asdict(h) for h in history])


# --- results ----------------------------------------------------------------------


@dataclass
class FitResult:
    """Estimated parameters with covariance and solver diagnostics.

    ``covariance`` is for the natural parameters (delta method from the
    log-parameter covariance ``log_covariance``).  ``degenerate`` names the
    poorly determined direction in log-parameter space when the problem is
    ill-conditioned.
    """

    params: dict
    covariance: np.ndarray
    residual: float
    iterations: int
    converged: bool
    names: tuple = ()
    log_covariance: np.ndarray | None = None
    condition: float = 1.0
    ill_conditioned: bool = False
    degenerate: dict | None = None
    history: list = field(default_factory=list, repr=False)

    def stderr(self) -> dict:
        return {k: float(math.sqrt(max(self.covariance[i, i], 0.0))) for i, k in enumerate(self.names)}

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": self.params,
                "stderr": self.stderr(),
                "covariance": self.covariance.tolist(),
                "names": list(self.names),
                "residual": self.residual,
                "iterations": self.iterations,
                "converged": self.converged,
                "condition": self.condition,
                "ill_conditioned": self.ill_conditioned,
                "degenerate": self.degenerate,
            },
            indent=2,
            sort_keys=True,
        )


def _finish(sol: _Solution, names, weights, fixed: dict) -> FitResult:
    J = sol.jac
    m = J.shape[0]
    A = J.T @ J
    lam, vec = np.linalg.eigh(A)
    top = max(lam.max(), 1e-300)
    cond = top / max(lam.min(), 1e-300 * top) if lam.min() > 0 else math.inf
    # rms change of log(data) per unit change of the weakest log-parameter combination
    Ju = J / np.asarray(weights, dtype=float)[:, None]
    lam_u, vec_u = np.linalg.eigh(Ju.T @ Ju)
    sens_all = np.sqrt(np.clip(lam_u, 0.0, None) / m)
    sens = float(sens_all[0])
    dof = max(m - len(names), 1)
    s2 = 2.0 * sol.cost / dof
    floor = top * 1e-16
    cov_log = (vec / np.maximum(lam, floor)) @ vec.T * s2
    ill = cond > CONDITION_LIMIT or sens < SENSITIVITY_FLOOR
    degenerate = None
    if ill:
        # weak directions are undetermined to at least a factor e
        for k in np.flatnonzero(sens_all < SENSITIVITY_FLOOR):
            v = vec_u[:, k]
            short = max(1.0 - float(v @ cov_log @ v), 0.0)
            cov_log = cov_log + short * np.outer(v, v)
        direction = vec_u[:, 0] / np.max(np.abs(vec_u[:, 0]))
        degenerate = {f"log_{k}": float(v) for k, v in zip(names, direction)}
        warnings.warn(
            f"ill-conditioned fit (condition {cond:.3g}, weakest sensitivity {sens:.3g}); "
            f"poorly determined direction {degenerate}",
            IllConditioned,
            stacklevel=3,
        )
    values = np.exp(sol.p)
    D = np.diag(values)
    params = {k: float(v) for k, v in zip(names, values)}
    params.update(fixed)
    return FitResult(
        params=params, covariance=D @ cov_log @ D, residual=2.0 * sol.cost, iterations=sol.iterations,
        converged=sol.converged, names=tuple(names), log_covariance=cov_log, condition=float(cond),
        ill_conditioned=ill, degenerate=degenerate, history=sol.history,
    )


# --- forward models ----------------------------------------------------------------------


_LOG_T_MIN, _LOG_T_MAX, _PER_DECADE = -10.0, 16.0, 25


@functools.lru_cache(maxsize=64)
def _ase_table(x: float):
    T = np.logspace(_LOG_T_MIN, _LOG_T_MAX, int((_LOG_T_MAX - _LOG_T_MIN) * _PER_DECADE) + 1)
    W = windowed_variance_batch(corr.kernel("vv", x, g=1.0), T)
    return CubicSpline(np.log(T), np.log(W)), float(corr.c_vv_equal_time(x, 1.0))


def ase_shape(x: float, tau_over_tc) -> np.ndarray:
    """``g * delta^2_VV(tau)``, independent of ``g``; tabulated once per ``x``."""
    spline, s0 = _ase_table(float(x))
    lt = np.log(np.asarray(tau_over_tc, dtype=float))
    inside = np.exp(spline(np.clip(lt, math.log(10.0) * _LOG_T_MIN, math.log(10.0) * _LOG_T_MAX)))
    out = np.where(lt < math.log(10.0) * _LOG_T_MIN, s0, inside)
    return np.where(lt > math.log(10.0) * _LOG_T_MAX, 8.0 / 3.0 * np.exp(-0.5 * lt), out)


def ase_variance_model(nb, g: float, nb_c: float, *, x: float, a: float = 0.01, eta: float = -1.0,
                       scale: float = 1.0) -> np.ndarray:
    """``delta_b^2(nb)`` for pure spontaneous emission."""
    nb = np.asarray(nb, dtype=float)
    Vb = float(ase_coefficient(x, a))
    s0 = _ase_table(float(x))[1]
    shot = (1.0 - eta * Vb * (1.0 + s0 / g)) / nb
    return scale * (shot + ase_shape(x, nb / nb_c) / g)


def autocorrelation_model(t, g: float, tc: float, x: float, *, scale: float = 1.0) -> np.ndarray:
    """``C_nn(t) = C_VV(t)`` for pure spontaneous emission."""
    return scale * corr.c_vv(x, np.sqrt(np.asarray(t, dtype=float) / tc), g)


# --- fits ----------------------------------------------------------------------------------


def _log_sigma(curve: NoiseCurve, log_sigma):
    if curve.sigma is not None:
        return curve.sigma / curve.ordinate
    return np.broadcast_to(np.asarray(log_sigma, dtype=float), curve.ordinate.shape)


def _grid_start(cost_fn, grid):
    costs = [cost_fn(v) for v in grid]
    return grid[int(np.nanargmin(costs))]


def fit_ase_variance(curve: NoiseCurve, *, x: float, a: float = 0.01, eta: float = -1.0,
                     fit_scale: bool = False, scale: float = 1.0, log_sigma: float = 1.0,
                     p0: Sequence[float] | None = None, max_iter: int = MAX_ITER) -> FitResult:
    """Fit ``g`` and ``nb_c`` (and optionally an overall scale) to an ASE variance curve.

    ``scale`` is the fixed value, or the starting value when ``fit_scale``.
    Residuals are ``log(model) - log(data)`` divided by the relative errors
    (``curve.sigma / ordinate`` if present, else ``log_sigma``).
    """
    if len(curve) < 8:
        raise ValidationError(f"need at least 8 points, got {len(curve)}")
    nb, y = curve.abscissa, curve.ordinate
    ly = np.log(y)
    ws = 1.0 / _log_sigma(curve, log_sigma)

    def model(p):
        s = math.exp(p[2]) if fit_scale else scale
        return ase_variance_model(nb, math.exp(p[0]), math.exp(p[1]), x=x, a=a, eta=eta, scale=s)

    def resid(p):
        with np.errstate(all="ignore"):
            return (np.log(model(p)) - ly) * ws

    if p0 is None:
        p0 = _ase_start(nb, y, x, a, eta, scale, resid, fit_scale)
    else:
        p0 = np.log(np.asarray(p0, dtype=float))
    sol = levenberg_marquardt(resid, p0, max_iter=max_iter)
    names = ("g", "nb_c", "scale") if fit_scale else ("g", "nb_c")
    return _finish(sol, names, ws, {} if fit_scale else {"scale": scale})


def _ase_start(nb, y, x, a, eta, scale, resid, fit_scale):
    # tail intercept fixes q = sqrt(nb_c)/g; scan nb_c along that line
    Vb = float(ase_coefficient(x, a))
    excess = y / scale - (1.0 - eta * Vb) / nb
    top = np.argsort(nb)[-3:]
    q_vals = excess[top] * np.sqrt(nb[top]) * 3.0 / 8.0
    q = float(np.median(q_vals[q_vals > 0])) if np.any(q_vals > 0) else 1e-2
    extra = [math.log(scale)] if fit_scale else []

    def cost(log_nbc):
        p = np.array([0.5 * log_nbc - math.log(q), log_nbc] + extra)
        r = resid(p)
        return float(r @ r) if np.all(np.isfinite(r)) else np.inf

    grid = np.linspace(math.log(1e-4), math.log(1e6), 61)
    lnbc = _grid_start(cost, grid)
    return np.array([0.5 * lnbc - math.log(q), lnbc] + extra)


def fit_autocorrelation(curve: NoiseCurve, *, x: float = 1.0, fit_x: bool = False, fit_scale: bool = False,
                        scale: float = 1.0, log_sigma: float = 1.0, p0: Sequence[float] | None = None,
                        max_iter: int = MAX_ITER) -> FitResult:
    """Fit ``g``, ``t_c`` (and optionally ``x``) to the ASE photocount autocorrelation.

    ``x`` is the fixed gain, or the starting value when ``fit_x``.  With
    tail-only data just ``sqrt(t_c)/g`` is determined; the fit then warns
    :class:`IllConditioned` and reports the degenerate direction.
    """
    if len(curve) < 3:
        raise ValidationError("need at least 3 points")
    t, y = curve.abscissa, curve.ordinate
    ly = np.log(y)
    ws = 1.0 / _log_sigma(curve, log_sigma)
    names = ["g", "tc"] + (["x"] if fit_x else []) + (["scale"] if fit_scale else [])

    def unpack(p):
        vals = dict(zip(names, np.exp(p)))
        return vals["g"], vals["tc"], vals.get("x", x), vals.get("scale", scale)

    def resid(p):
        g, tc, xx, s = unpack(p)
        if not (0.0 < xx < math.pi):
            return np.full(t.shape, np.inf)
        with np.errstate(all="ignore"):
            return (np.log(autocorrelation_model(t, g, tc, xx, scale=s)) - ly) * ws

    if p0 is None:
        extra = ([math.log(x)] if fit_x else []) + ([math.log(scale)] if fit_scale else [])
        top = np.argsort(t)[-3:]
        q = float(np.median(y[top] * np.sqrt(t[top]) / scale))  # sqrt(tc)/g from the tail

        def cost(log_tc):
            p = np.array([0.5 * log_tc - math.log(q), log_tc] + extra)
            r = resid(p)
            return float(r @ r) if np.all(np.isfinite(r)) else np.inf

        span = np.log(t)
        grid = np.linspace(span.min() - 3.0, span.max() + 3.0, 61)
        ltc = _grid_start(cost, grid)
        p0 = np.array([0.5 * ltc - math.log(q), ltc] + extra)
    else:
        p0 = np.log(np.asarray(p0, dtype=float))
    sol = levenberg_marquardt(resid, p0, max_iter=max_iter)
    fixed = {}
    if not fit_x:
        fixed["x"] = x
    if not fit_scale:
        fixed["scale"] = scale
    return _finish(sol, names, ws, fixed)


# --- estimator wrappers ---------------------------------------------------------------------


class AseNoiseSpectrometer(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_ase_variance`.

    ``X`` is a single column of mean photocounts ``nb``; ``y`` the measured
    ``delta_b^2``.  Fitted attributes: ``g_``, ``nb_c_``, ``scale_``,
    ``result_``.
    """

    def __init__(self, x=1.0, a=0.01, eta=-1.0, fit_scale=False, max_iter=MAX_ITER):
        self.x = x
        self.a = a
        self.eta = eta
        self.fit_scale = fit_scale
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=8)
        nb = X[:, 0]
        order = np.argsort(nb)
        sigma = None
        if sample_weight is not None:
            sigma = 1.0 / np.sqrt(np.asarray(sample_weight, dtype=float))[order] * y[order]
        curve = NoiseCurve(nb[order], y[order], sigma=sigma)
        self.result_ = fit_ase_variance(curve, x=self.x, a=self.a, eta=self.eta, fit_scale=self.fit_scale,
                                        max_iter=self.max_iter)
        self.g_ = self.result_.params["g"]
        self.nb_c_ = self.result_.params["nb_c"]
        self.scale_ = self.result_.params["scale"]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        return ase_variance_model(X[:, 0], self.g_, self.nb_c_, x=self.x, a=self.a, eta=self.eta,
                                  scale=self.scale_)


class AutocorrelationSpectrometer(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_autocorrelation`.

    ``X`` is a single column of lag times ``t``; ``y`` the measured
    ``C_nn(t)``.  Fitted attributes: ``g_``, ``tc_``, ``x_``, ``result_``.
    """

    def __init__(self, x=1.0, fit_x=False, max_iter=MAX_ITER):
        self.x = x
        self.fit_x = fit_x
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        t = X[:, 0]
        order = np.argsort(t)
        sigma = None
        if sample_weight is not None:
            sigma = 1.0 / np.sqrt(np.asarray(sample_weight, dtype=float))[order] * y[order]
        curve = NoiseCurve(t[order], y[order], sigma=sigma)
        self.result_ = fit_autocorrelation(curve, x=self.x, fit_x=self.fit_x, max_iter=self.max_iter)
        self.g_ = self.result_.params["g"]
        self.tc_ = self.result_.params["tc"]
        self.x_ = self.result_.params["x"]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        return autocorrelation_model(X[:, 0], self.g_, self.tc_, self.x_)
