"""Frozen parameter registry for the published figures, emitted as tables.

Each entry records the parameters stated in its caption separately from
the choices this package had to make where a caption leaves values open.
Multi-curve figures are written in long format: one row per point, with
the curve parameter as a leading column.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import correlations as corr
from .coefficients import ase_coefficient
from .exceptions import ValidationError
from .montecarlo import worker_count
from .statistics import ase_variance_curve, strong_wave_curve, windowed_kernel

__all__ = ["REGISTRY_VERSION", "Table", "FigureSpec", "FIGURES", "figure_table"]

REGISTRY_VERSION = "1"

# dense near both ends of the subthreshold range
X_GRID = np.unique(np.concatenate([
    np.geomspace(1e-2, 1.0, 41),
    math.pi - np.geomspace(math.pi - 1.0, 1e-3, 41),
]))


@dataclass
class Table:
    """Column-named numeric table; rows are kept in a deterministic order."""

    columns: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[1] != len(self.columns):
            raise ValidationError(f"table has {self.rows.shape[1]} columns, header has {len(self.columns)}")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


@dataclass(frozen=True)
class FigureSpec:
    """One figure: caption parameters, open choices, and the table builder."""

    id: str
    quantity: str
    caption: dict
    choices: dict
    build: Callable[[dict, dict], Table] = field(repr=False)


def _stack(params, blocks):
    rows = [np.column_stack([np.full(len(b[0]), p), *b]) for p, b in zip(params, blocks)]
    return np.vstack(rows)


def _map(fn, items):
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(fn, items))


def _fig3(cap, ch):
    x = np.asarray(ch["x"])
    blocks = _map(lambda L: (x, ase_coefficient(x, 1.0 / L)), cap["L_over_ell"])
    return Table(("L_over_ell", "x", "Vb"), _stack(cap["L_over_ell"], blocks))


def _equal_time_fig(fn, name):
    def build(cap, ch):
        x = np.asarray(ch["x"])
        g = ch["g"]
        return Table(("x", name), np.column_stack([x, g * fn(x, g)]))
    return build


def _fig5(cap, ch):
    nb = np.logspace(*ch["log10_nb"])
    kw = {k: cap[k] for k in ("nb_c", "kappa", "g", "L_over_ell", "eta")}
    blocks = _map(lambda x: (nb, strong_wave_curve(x, nb, **kw).ordinate), cap["x"])
    return Table(("x", "nb", "delta_b2"), _stack(cap["x"], blocks))


def _fig6(cap, ch):
    y = np.linspace(*ch["y"])
    blocks = _map(lambda x: (y, ch["g"] * corr.c_vv(x, y, ch["g"])), ch["x"])
    return Table(("x", "y", "gC_VV"), _stack(ch["x"], blocks))


def _fig8(cap, ch):
    y = np.geomspace(*ch["y"])
    a = 1.0 / ch["L_over_ell"]
    blocks = _map(lambda x: (y, ch["g"] * windowed_kernel("vv", x, y * y, a=a, g=ch["g"])), ch["x"])
    return Table(("x", "y", "g_delta2_VV"), _stack(ch["x"], blocks))


def _fig9(cap, ch):
    nb = np.logspace(*ch["log10_nb"])
    kw = {k: cap[k] for k in ("nb_c", "g", "L_over_ell", "eta")}
    blocks = _map(lambda x: (nb, ase_variance_curve(x, nb, **kw).ordinate), ch["x"])
    return Table(("x", "nb", "delta_b2"), _stack(ch["x"], blocks))


_X = [float(v) for v in X_GRID]

FIGURES: dict[str, FigureSpec] = {
    "fig3": FigureSpec(
        "fig3", "mean spontaneous emission coefficient against x",
        {"L_over_ell": [10.0, 100.0, 1000.0]},
        {"x": _X},
        _fig3,
    ),
    "fig4": FigureSpec(
        "fig4", "equal-time transmission/emission cross-correlation, scaled by g",
        {},
        {"x": _X, "g": 100.0},
        _equal_time_fig(corr.c_tv_equal_time, "gC_TV0"),
    ),
    "fig5": FigureSpec(
        "fig5", "normalized photocount variance for a strong incident wave",
        {"L_over_ell": 100.0, "nb_c": 10.0, "kappa": 10.0, "g": 100.0, "eta": -1.0, "x": [0.0, 1.0]},
        {"log10_nb": [-3.0, 12.0, 151]},
        _fig5,
    ),
    "fig6": FigureSpec(
        "fig6", "emission autocorrelation against sqrt(t/t_c), scaled by g",
        {},
        {"x": [0.5, 1.0, 2.0, 3.0], "g": 100.0, "y": [0.0, 3.0, 301]},
        _fig6,
    ),
    "fig7": FigureSpec(
        "fig7", "equal-time emission variance, scaled by g",
        {},
        {"x": _X, "g": 100.0},
        _equal_time_fig(corr.c_vv_equal_time, "gC_VV0"),
    ),
    "fig8": FigureSpec(
        "fig8", "windowed emission variance against sqrt(tau/t_c), scaled by g",
        {},
        {"x": [0.5, 1.0, 2.0, 3.0], "g": 100.0, "L_over_ell": 100.0, "y": [1e-2, 1e2, 81]},
        _fig8,
    ),
    "fig9": FigureSpec(
        "fig9", "normalized photocount variance of pure spontaneous emission",
        {"L_over_ell": 100.0, "nb_c": 10.0, "g": 100.0, "eta": -1.0},
        {"x": [0.5, 1.0, 2.0], "log10_nb": [-3.0, 10.0, 131]},
        _fig9,
    ),
}


def figure_table(fig_id: str) -> tuple[Table, FigureSpec]:
    """Build the table for ``fig_id``; raises ``ValidationError`` on an unknown id."""
    try:
        spec = FIGURES[fig_id]
    except KeyError:
        raise ValidationError(f"unknown figure id {fig_id!r}; choose from {sorted(FIGURES)}") from None
    return spec.build(spec.caption, spec.choices), spec
