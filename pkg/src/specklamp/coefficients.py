"""Diffusion-approximation mean coefficients of an amplifying slab.

With ``x = L/L_a`` and ``a = ell/L``::

    T_b = sin(a x) / sin(x)
    R_b = sin((1 - a) x) / sin(x)
    V_b = T_b + R_b - 1

All three diverge at the laser threshold ``x = pi``.  Within ``1e-4`` of
either end of ``[0, pi)`` fourth-order series are used; elsewhere closed
forms arranged to avoid the ``T_b + R_b - 1`` cancellation at weak gain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateNoLight, ValidityWarning
from .model import SlabGeometry, ValidatedModel

__all__ = [
    "SERIES_WINDOW",
    "MeanCoefficients",
    "total_transmission",
    "total_reflection",
    "ase_coefficient",
    "mean_transmission",
    "mean_reflection",
    "mean_ase",
    "conductance",
    "mean_photocount_and_fraction",
    "mean_coefficients",
]

SERIES_WINDOW = 1e-4
# true pi minus its double rounding; pi - x needs it once x is within ~1e-6 of threshold
_PI_LO = 1.2246467991473532e-16


def _csc_near_zero(eps):
    return 1.0 / eps + eps / 6.0 + 7.0 * eps**3 / 360.0


def _ratio_small_x(c, x):
    # sin(c x) / sin(x) to O(x^4)
    c2 = c * c
    return c * (1.0 + x * x * (1.0 - c2) / 6.0 + x**4 * (7.0 - 10.0 * c2 + 3.0 * c2 * c2) / 360.0)


def _sine_ratio(c, x, series: bool | None = None):
    x = np.asarray(x, dtype=float)
    eps = (np.pi - x) + _PI_LO
    direct = np.sin(c * x) / np.where(x == 0.0, 1.0, np.sin(x))
    low = _ratio_small_x(c, x)
    high = np.sin(c * x) * _csc_near_zero(np.where(eps == 0, 1.0, eps))
    if series is None:
        out = np.where(x < SERIES_WINDOW, low, np.where(eps < SERIES_WINDOW, high, direct))
    elif series:
        out = np.where(x < np.pi / 2, low, high)
    else:
        out = np.where(x == 0.0, c, direct)
    return out[()] if out.ndim == 0 else out


def total_transmission(x, a, *, series: bool | None = None):
    """``T_b = sin(a x)/sin(x)``; ``series`` forces (True) or forbids (False) the series path."""
    return _sine_ratio(a, x, series)


def total_reflection(x, a, *, series: bool | None = None):
    """``R_b = sin((1-a) x)/sin(x)``."""
    return _sine_ratio(1.0 - a, x, series)


def ase_coefficient(x, a, *, series: bool | None = None):
    """``V_b = T_b + R_b - 1``.

    The direct path uses the equivalent product
    ``2 sin(a x/2) sin((1-a) x/2) / cos(x/2)``, which keeps full relative
    precision as ``x -> 0``.
    """
    x = np.asarray(x, dtype=float)
    b = 1.0 - a
    ab = a * b
    direct = 2.0 * np.sin(a * x / 2.0) * np.sin(b * x / 2.0) / np.cos(x / 2.0)
    low = 0.5 * ab * x * x + ab * (1.0 + ab) * x**4 / 24.0
    eps = (np.pi - x) + _PI_LO
    high = (np.sin(a * x) + np.sin(b * x)) * _csc_near_zero(np.where(eps == 0, 1.0, eps)) - 1.0
    if series is None:
        out = np.where(x < SERIES_WINDOW, low, np.where(eps < SERIES_WINDOW, high, direct))
    elif series:
        out = np.where(x < np.pi / 2, low, high)
    else:
        out = direct
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class MeanCoefficients:
    Tab: float
    Tb: float
    Rb: float
    Vb: float
    g: float
    phi: float
    nb: float


def mean_transmission(model: ValidatedModel) -> tuple[float, float]:
    """Return ``(T_ab, T_b)`` with ``T_ab = T_b / N``."""
    Tb = float(total_transmission(model.x, model.a))
    return Tb / model.N, Tb


def mean_reflection(model: ValidatedModel) -> float:
    return float(total_reflection(model.x, model.a))


def mean_ase(model: ValidatedModel) -> float:
    return float(ase_coefficient(model.x, model.a))


def conductance(model: ValidatedModel | SlabGeometry) -> float:
    """Dimensionless conductance ``g = (4/3) N ell / L`` of the passive slab."""
    geometry = model.geometry if isinstance(model, ValidatedModel) else model
    g = geometry.conductance
    if g <= 1.0:
        warnings.warn(f"g = {g:.4g} <= 1: Anderson localization regime", ValidityWarning, stacklevel=2)
    return g


def mean_photocount_and_fraction(model: ValidatedModel, Tab: float | None = None, Vb: float | None = None):
    """Mean photocount over ``tau`` and the fraction ``phi`` due to ASE.

    ``nb = T_ab <n_a> - eta V_b tau domega / (2 pi)``.
    """
    if Tab is None:
        Tab = mean_transmission(model)[0]
    if Vb is None:
        Vb = mean_ase(model)
    ase = -model.eta * Vb * model.tau_domega / (2.0 * math.pi)
    nb = Tab * model.detection.na + ase
    if nb <= 0.0:
        raise DegenerateNoLight("no incident light and no spontaneous emission: <n_b> = 0")
    return nb, ase / nb


def mean_coefficients(model: ValidatedModel) -> MeanCoefficients:
    Tab, Tb = mean_transmission(model)
    Rb = mean_reflection(model)
    Vb = mean_ase(model)
    nb, phi = mean_photocount_and_fraction(model, Tab, Vb)
    return MeanCoefficients(Tab=Tab, Tb=Tb, Rb=Rb, Vb=Vb, g=model.g, phi=phi, nb=nb)
