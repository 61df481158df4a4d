"""Photocount statistics built from the mean coefficients and correlations.

The central object is the normalized variance ``delta_b^2`` of the number
of photocounts collected in a window ``tau``.  Temporal fluctuations of the
medium enter through windowed variances

    delta^2_XY(tau) = (2/tau) int_0^tau (1 - t/tau) C_XY(t) dt,

computed here in the reduced time ``t/t_c``.  Everything else is algebra on
``nb``, ``phi``, ``V_b`` and equal-time correlations.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from . import correlations as corr
from .coefficients import ase_coefficient, mean_coefficients, total_transmission
from .exceptions import (
    DegenerateNoLight,
    NumericalFailure,
    ValidationError,
    ValidityWarning,
    WindowOverlap,
)
from .model import DetectionSetup, DynamicsModel, GainModel, SlabGeometry, ValidatedModel, validate

__all__ = [
    "NoiseCurve",
    "VarianceBreakdown",
    "AseStatistics",
    "ConventionComparison",
    "Regime",
    "windowed_variance",
    "windowed_variance_batch",
    "windowed_kernel",
    "equal_time",
    "photocount_variance",
    "strong_wave_variance",
    "ase_statistics",
    "variance_convention_compare",
    "regime_classifier",
    "photocount_autocorrelation",
    "strong_wave_model",
    "ase_model",
    "strong_wave_curve",
    "ase_variance_curve",
    "loglog_slope",
]

QUAD_RTOL = 1e-8
QUAD_BUDGET = 1_000_000
STRONG_WAVE_PHI_MAX = 0.1

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


# --- windowed variance --------------------------------------------------------


def windowed_variance(
    C: Callable, tau_over_tc: float, *, rtol: float = QUAD_RTOL, budget: int = QUAD_BUDGET
) -> float:
    """``(2/T) int_0^T (1 - t/T) C(t) dt`` with ``T = tau/t_c``.

    ``C`` takes ``t/t_c``.  The integral is done in ``u = sqrt(t/t_c)``,
    where ``1/sqrt(t)`` tails and the ``sqrt(t)`` structure of the
    correlation functions become smooth, on geometrically growing panels.

    Raises
    ------
    NumericalFailure
        If a panel does not converge, the error estimate exceeds ``rtol``
        or more than ``budget`` evaluations are needed.
    """
    T = float(tau_over_tc)
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"tau/t_c must be positive and finite, got {tau_over_tc}")
    U = math.sqrt(T)

    def integrand(u):
        return (1.0 - u * u / T) * float(C(u * u)) * u

    edges = [0.0]
    edge = min(U, 1.0)
    while True:
        edges.append(edge)
        if edge >= U:
            break
        edge = min(edge * 4.0, U)
    total, abserr, neval = 0.0, 0.0, 0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err, info, *rest = integrate.quad(
            integrand, lo, hi, epsabs=0.0, epsrel=rtol / 10.0, limit=200, full_output=1
        )
        neval += info["neval"]
        if rest and not (len(rest) == 1 and isinstance(rest[0], str) and "roundoff" in rest[0]):
            raise NumericalFailure(
                f"quadrature did not converge on u in [{lo:.4g}, {hi:.4g}]",
                panel=(lo, hi), value=val, abserr=err, neval=neval, message=rest[0],
            )
        total += val
        abserr += err
        if neval > budget:
            raise NumericalFailure("evaluation budget exhausted", neval=neval, budget=budget)
    if not math.isfinite(total) or abserr > rtol * abs(total) + 1e-300:
        raise NumericalFailure(
            "windowed variance error estimate above tolerance",
            value=total, abserr=abserr, rtol=rtol, neval=neval,
        )
    return 4.0 * total / T


def windowed_variance_batch(C: Callable, taus_over_tc, *, ratio: float = 1.25, u_min: float = 1e-3) -> np.ndarray:
    """Windowed variance for many window lengths from one pass over ``C``.

    Composite 16-point Gauss-Legendre in ``u = sqrt(t/t_c)`` on panels that
    grow geometrically by ``ratio``, with every ``sqrt(tau/t_c)`` inserted as
    a panel edge.  ``C`` must accept arrays.  Agrees with
    :func:`windowed_variance` to about ``1e-10``.
    """
    taus = np.asarray(taus_over_tc, dtype=float)
    if np.any(~(taus > 0)) or not np.all(np.isfinite(taus)):
        raise ValueError("all tau/t_c must be positive and finite")
    roots = np.sqrt(taus.ravel())
    U = roots.max()
    n_geo = max(int(np.ceil(np.log(max(U, u_min) / u_min) / np.log(ratio))), 0)
    geo = u_min * ratio ** np.arange(n_geo + 1)
    edges = np.unique(np.concatenate([[0.0], geo[geo < U], roots]))
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    u = (lo + half)[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]
    cu = np.asarray(C(u * u), dtype=float).reshape(u.shape) * u
    cum0 = np.concatenate([[0.0], np.cumsum((w * cu).sum(axis=1))])
    cum1 = np.concatenate([[0.0], np.cumsum((w * cu * u * u).sum(axis=1))])
    idx = np.searchsorted(edges, roots)
    T = roots * roots
    out = 4.0 / T * (cum0[idx] - cum1[idx] / T)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite windowed variance", taus=taus)
    return out.reshape(taus.shape)


def windowed_kernel(kind: str, x: float, tau_over_tc, *, a: float = 0.01, g: float = 100.0, dq: float = 0.0,
                    method: str = "batch"):
    """``delta^2_XY(tau)`` for a correlation ``kind`` in :data:`correlations.KINDS`."""
    C = corr.kernel(kind, x, a=a, g=g, dq=dq)
    if method == "batch":
        return windowed_variance_batch(C, tau_over_tc)
    if method == "adaptive":
        taus = np.asarray(tau_over_tc, dtype=float)
        out = np.array([windowed_variance(C, T) for T in taus.ravel()]).reshape(taus.shape)
        return out[()] if out.ndim == 0 else out
    raise ValueError(f"method must be 'batch' or 'adaptive', got {method!r}")


def equal_time(kind: str, x: float, *, a: float = 0.01, g: float = 100.0, dq: float = 0.0) -> float:
    """Equal-time value ``C_XY(0)``."""
    return float(corr.kernel(kind, x, a=a, g=g, dq=dq)(0.0))


# --- data containers ----------------------------------------------------------


@dataclass
class NoiseCurve:
    """Sampled noise curve: ``(nb, delta_b^2)`` or ``(t/t_c, C_nn)``.

    ``sigma`` holds optional one-standard-deviation errors of the ordinate.
    """

    abscissa: np.ndarray
    ordinate: np.ndarray
    meta: dict = field(default_factory=dict)
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.ordinate = np.asarray(self.ordinate, dtype=float)
        if self.abscissa.ndim != 1 or self.abscissa.shape != self.ordinate.shape:
            raise ValidationError("abscissa and ordinate must be 1-d arrays of equal length")
        if self.abscissa.size and np.any(np.diff(self.abscissa) <= 0):
            raise ValidationError("abscissa must be strictly increasing")
        if not np.all(np.isfinite(self.ordinate)) or np.any(self.ordinate <= 0):
            raise ValidationError("ordinate must be finite and positive")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.ordinate.shape or np.any(~(self.sigma > 0)):
                raise ValidationError("sigma must be positive with the ordinate's shape")

    def __len__(self):
        return self.abscissa.size

    def to_csv(self, path, names: tuple[str, str] = ("abscissa", "ordinate")) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = list(names) + (["sigma"] if self.sigma is not None else [])
            writer.writerow(header)
            cols = [self.abscissa, self.ordinate] + ([self.sigma] if self.sigma is not None else [])
            for row in zip(*cols):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, meta: Mapping | None = None) -> "NoiseCurve":
        """Read a CSV with header ``abscissa,ordinate[,sigma]`` (any names, by position)."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValidationError(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        if len(header) not in (2, 3):
            raise ValidationError(f"{path}: expected 2 or 3 columns, got {header}")
        try:
            data = np.array([[float(v) for v in r] for r in body if r], dtype=float)
        except ValueError as exc:
            raise ValidationError(f"{path}: non-numeric cell ({exc})") from None
        data = data.reshape(-1, len(header))
        info = {"columns": header, "source": str(path)}
        info.update(meta or {})
        sigma = data[:, 2] if len(header) == 3 else None
        return cls(data[:, 0], data[:, 1], info, sigma)


@dataclass(frozen=True)
class VarianceBreakdown:
    """Terms of the normalized variance.

    ``total = shot + classical_tt + cross_tv + ase_vv``.  ``shot`` is the
    whole ``1/nb`` brace, of which ``interference`` is the eta-weighted
    equal-time part (so ``shot = 1/nb + interference``).  ``weights`` holds
    the multipliers of each windowed variance and ``delta2`` the windowed
    variances themselves.
    """

    shot: float
    interference: float
    classical_tt: float
    cross_tv: float
    ase_vv: float
    total: float
    nb: float
    phi: float
    weights: dict = field(default_factory=dict)
    delta2: dict = field(default_factory=dict)
    equal_time: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AseStatistics:
    nb: float
    variance: float
    asymptote: float
    breakdown: VarianceBreakdown | None = None


@dataclass(frozen=True)
class ConventionComparison:
    """Disorder-averaging conventions at weak gain.

    ``var_joint`` averages quantum and disorder expectation values jointly;
    ``var_primed`` averages the quantum variance over disorder.  The excess
    terms are what remains after removing ``nb`` (shot noise) and, for the
    joint convention, the classical ``nb^2 C_TT(0)`` term.
    """

    nb: float
    var_joint: float
    var_primed: float
    excess_joint: float
    excess_primed: float


@dataclass(frozen=True)
class Regime:
    label: str
    slope: float
    crossovers: tuple[float, ...]


# --- compositions -------------------------------------------------------------


def _inputs(model: ValidatedModel, static: bool, dq: float, method: str):
    x, a, g = model.x, model.a, model.g
    c0 = {k: equal_time(k, x, a=a, g=g, dq=dq) for k in ("tt", "tv", "vv")}
    if static:
        d2 = dict(c0)
    else:
        T = model.tau_over_tc
        d2 = {k: float(windowed_kernel(k, x, T, a=a, g=g, dq=dq, method=method)) for k in ("tt", "tv", "vv")}
    return c0, d2


def photocount_variance(
    model: ValidatedModel, *, static: bool = False, dq: float = 0.0, method: str = "adaptive",
    delta2: Mapping[str, float] | None = None,
) -> VarianceBreakdown:
    """Normalized photocount variance of the outgoing mode.

    The ``1/nb`` brace is written as
    ``1 - eta V_b [2 (1 - phi)(1 + C_TV(0)) + phi (1 + C_VV(0))]``, which
    equals the form with ``phi T_b (2 pi I_a / N domega)`` prefactors but
    stays finite at ``phi = 1``.

    Parameters
    ----------
    static
        Replace each windowed variance by its equal-time value (quenched
        medium).
    delta2
        Precomputed windowed variances ``{"tt", "tv", "vv"}``; skips the
        quadrature.
    """
    mc = mean_coefficients(model)
    nb, phi = mc.nb, mc.phi
    c0, d2 = _inputs(model, static, dq, method) if delta2 is None else (
        {k: equal_time(k, model.x, a=model.a, g=model.g, dq=dq) for k in ("tt", "tv", "vv")}, dict(delta2))
    eta, Vb = model.eta, mc.Vb
    interference = -eta * Vb * (2.0 * (1.0 - phi) * (1.0 + c0["tv"]) + phi * (1.0 + c0["vv"])) / nb
    shot = 1.0 / nb + interference
    na = model.detection.na
    q = model.detection.Qa / na if na > 0 else 0.0
    w_tt, w_tv, w_vv = (1.0 - phi) ** 2, 2.0 * phi * (1.0 - phi), phi * phi
    classical = w_tt * ((1.0 + q) * d2["tt"] + q)
    cross = w_tv * d2["tv"]
    ase = w_vv * d2["vv"]
    total = shot + classical + cross + ase
    if not math.isfinite(total):
        raise NumericalFailure("non-finite variance", nb=nb, phi=phi, delta2=d2)
    return VarianceBreakdown(
        shot=shot, interference=interference, classical_tt=classical, cross_tv=cross, ase_vv=ase,
        total=total, nb=nb, phi=phi,
        weights={"tt": w_tt * (1.0 + q), "tv": w_tv, "vv": w_vv, "qa": w_tt * q},
        delta2=d2, equal_time=c0,
    )


def strong_wave_variance(model: ValidatedModel, *, static: bool = False, dq: float = 0.0,
                         method: str = "adaptive") -> float:
    """Variance to first order in the ASE fraction ``phi`` (coherent input).

    ``static=True`` gives the quenched-medium variant with equal-time
    correlations.  Warns when ``phi >= 0.1``.
    """
    if model.detection.Ia <= 0:
        raise ValidationError("strong-wave limit needs incident light (Ia > 0)")
    if model.detection.Qa != 0:
        raise ValidationError("strong-wave limit assumes a coherent incident state (Qa = 0)")
    mc = mean_coefficients(model)
    if mc.phi >= STRONG_WAVE_PHI_MAX:
        warnings.warn(f"phi = {mc.phi:.3g} is not small; first-order expansion in phi", ValidityWarning,
                      stacklevel=2)
    c0, d2 = _inputs(model, static, dq, method)
    eta, Vb = model.eta, mc.Vb
    first = (1.0 - 2.0 * eta * Vb * (1.0 + c0["tv"])) / mc.nb
    second = 2.0 * eta * Vb / (mc.Tb * model.kappa) * (d2["tt"] - d2["tv"])
    return first + second + d2["tt"]


def ase_statistics(model: ValidatedModel, *, dq: float = 0.0, method: str = "adaptive") -> AseStatistics:
    """Mean, variance and large-``nb`` asymptote for pure spontaneous emission.

    The asymptote is ``(8 / 3g) sqrt(nb_c / nb)`` with ``nb_c / nb = t_c / tau``.
    """
    if model.detection.Ia > 0:
        raise ValidationError("ASE statistics assume no incident light (Ia = 0)")
    if model.eta == 0 or model.x == 0:
        raise DegenerateNoLight("no spontaneous emission (eta = 0 or x = 0)")
    bd = photocount_variance(model, dq=dq, method=method)
    asym = 8.0 / (3.0 * model.g) * math.sqrt(1.0 / model.tau_over_tc)
    return AseStatistics(bd.nb, bd.total, asym, bd)


def variance_convention_compare(model: ValidatedModel, *, static: bool = True) -> ConventionComparison:
    """Compare ``var`` (joint average) with ``var'`` (disorder-averaged quantum variance).

    Built from the strong-wave result with ``nb / (T_b kappa) = tau domega / 2 pi``.
    """
    if model.detection.Ia <= 0:
        raise ValidationError("convention comparison needs incident light")
    mc = mean_coefficients(model)
    c0, d2 = _inputs(model, static, 0.0, "adaptive")
    nb, eta, Vb = mc.nb, model.eta, mc.Vb
    m = model.tau_domega / (2.0 * math.pi)
    excess_joint = eta * Vb * nb * (2.0 * m * (d2["tt"] - d2["tv"]) - 2.0 * (1.0 + c0["tv"]))
    var_joint = nb + nb * nb * d2["tt"] + excess_joint
    excess_primed = -2.0 * eta * Vb * nb
    return ConventionComparison(nb, var_joint, nb + excess_primed, excess_joint, excess_primed)


def regime_classifier(nb: float, nb_c: float, g: float, mode: str = "strong-wave") -> Regime:
    """Label the power-law regime of ``delta_b^2(nb)``.

    Strong wave: shot noise below ``nb = 1``, classical ``C1``-dominated
    noise up to ``g^2 nb_c``, then the long-range ``nb^-1/2`` regime.  ASE:
    a single crossover at ``g`` when ``nb_c > g`` and at ``g^2 / nb_c``
    otherwise.
    """
    if nb <= 0 or nb_c <= 0 or g <= 0:
        raise ValueError("nb, nb_c and g must be positive")
    if mode == "strong-wave":
        edges = (1.0, g * g * nb_c)
        if nb < edges[0]:
            return Regime("shot", -1.0, edges)
        if nb < edges[1]:
            return Regime("classical", -1.0, edges)
        return Regime("long-range", -0.5, edges)
    if mode == "ase":
        edge = g if nb_c > g else g * g / nb_c
        if nb < edge:
            return Regime("shot", -1.0, (edge,))
        return Regime("long-range", -0.5, (edge,))
    raise ValueError(f"mode must be 'strong-wave' or 'ase', got {mode!r}")


def photocount_autocorrelation(model: ValidatedModel, t_over_tc, *, Cnana=0.0, dq: float = 0.0):
    """Photocount autocorrelation ``C_nn(t)`` for non-overlapping windows.

    ``Cnana`` is the incident light's own photocount autocorrelation (0 for
    a coherent state), scalar or callable of ``t/t_c``.  Assumes the
    correlations vary little over ``tau``.
    """
    t = np.asarray(t_over_tc, dtype=float)
    if np.any(t <= model.tau_over_tc):
        raise WindowOverlap(f"need t > tau = {model.tau_over_tc:g} t_c for non-overlapping windows")
    phi = mean_coefficients(model).phi
    x, a, g = model.x, model.a, model.g
    y = np.sqrt(t)
    cvv = corr.c_vv(x, y, g)
    if phi == 1.0:
        return cvv
    cna = Cnana(t) if callable(Cnana) else np.asarray(Cnana, dtype=float)
    ctt = corr.c_tt(x, y, a, g, dq)
    ctv = corr.c_tv(x, y, g)
    out = (1.0 - phi) ** 2 * ((1.0 + cna) * ctt + cna) + 2.0 * phi * (1.0 - phi) * ctv + phi * phi * cvv
    return out[()] if out.ndim == 0 else out


# --- model builders and curves --------------------------------------------------


def _geometry(L_over_ell: float, g: float) -> SlabGeometry:
    N = round(0.75 * g * L_over_ell)
    return SlabGeometry.from_ratio(L_over_ell, N)


def strong_wave_model(x: float, nb: float, *, nb_c: float = 10.0, kappa: float = 10.0, g: float = 100.0,
                      L_over_ell: float = 100.0, eta: float = -1.0) -> ValidatedModel:
    """Model with incident coherent light and given ``nb_c``, ``2 pi I_a / N domega``.

    Times are in units of ``t_c``; ``tau = nb / nb_c``.
    """
    geo = _geometry(L_over_ell, g)
    Tb = float(total_transmission(x, geo.a))
    Vb = float(ase_coefficient(x, geo.a))
    Ia = geo.N * nb_c / (Tb - eta * Vb / kappa)
    domega = 2.0 * math.pi * Ia / (geo.N * kappa)
    det = DetectionSetup(tau=nb / nb_c, domega=domega, Ia=Ia)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        return validate(geo, GainModel(x, eta), DynamicsModel(tc=1.0), det)


def ase_model(x: float, nb: float, *, nb_c: float = 10.0, g: float = 100.0, L_over_ell: float = 100.0,
              eta: float = -1.0) -> ValidatedModel:
    """Vacuum-input model with ``nb_c`` ASE photocounts per ``t_c``."""
    geo = _geometry(L_over_ell, g)
    Vb = float(ase_coefficient(x, geo.a))
    if Vb <= 0 or eta == 0:
        raise DegenerateNoLight("no spontaneous emission (x = 0 or eta = 0)")
    domega = 2.0 * math.pi * nb_c / (-eta * Vb)
    det = DetectionSetup(tau=nb / nb_c, domega=domega, Ia=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        return validate(geo, GainModel(x, eta), DynamicsModel(tc=1.0), det)


def _curve(models, nb_grid, kind, meta):
    m0 = models[0]
    taus = np.array([m.tau_over_tc for m in models])
    d2 = {k: windowed_kernel(k, m0.x, taus, a=m0.a, g=m0.g) for k in ("tt", "tv", "vv")}
    vals = np.array([
        photocount_variance(m, delta2={k: float(d2[k][i]) for k in d2}).total
        for i, m in enumerate(models)
    ])
    return NoiseCurve(np.asarray(nb_grid, dtype=float), vals, meta)


def strong_wave_curve(x: float, nb_grid, *, nb_c: float = 10.0, kappa: float = 10.0, g: float = 100.0,
                      L_over_ell: float = 100.0, eta: float = -1.0) -> NoiseCurve:
    """``delta_b^2`` against ``nb`` for a strong coherent incident wave."""
    nb_grid = np.asarray(nb_grid, dtype=float)
    models = [strong_wave_model(x, nb, nb_c=nb_c, kappa=kappa, g=g, L_over_ell=L_over_ell, eta=eta)
              for nb in nb_grid]
    meta = {"kind": "variance", "mode": "strong-wave", "x": x, "nb_c": nb_c, "kappa": kappa, "g": g,
            "L_over_ell": L_over_ell, "eta": eta, "phi": mean_coefficients(models[0]).phi}
    return _curve(models, nb_grid, "strong-wave", meta)


def ase_variance_curve(x: float, nb_grid, *, nb_c: float = 10.0, g: float = 100.0, L_over_ell: float = 100.0,
                       eta: float = -1.0) -> NoiseCurve:
    """``delta_b^2`` against ``nb`` for pure spontaneous emission."""
    nb_grid = np.asarray(nb_grid, dtype=float)
    models = [ase_model(x, nb, nb_c=nb_c, g=g, L_over_ell=L_over_ell, eta=eta) for nb in nb_grid]
    meta = {"kind": "variance", "mode": "ase", "x": x, "nb_c": nb_c, "g": g, "L_over_ell": L_over_ell,
            "eta": eta}
    return _curve(models, nb_grid, "ase", meta)


def loglog_slope(abscissa, ordinate) -> float:
    """Least-squares slope of ``log(ordinate)`` against ``log(abscissa)``."""
    return float(np.polyfit(np.log(abscissa), np.log(ordinate), 1)[0])
