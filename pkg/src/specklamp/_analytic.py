"""Evaluation of closed forms with removable singularities.

The correlation functions are written in terms of ``x`` and ``Y = y**2``
and contain quotients that are 0/0 at ``x = 0``, ``Y = 0`` and
``Y = x**2`` (where ``s = sqrt(Y - x**2)`` changes from imaginary to
real).  All of them are analytic in ``(x, Y)`` there, so near such points
we replace the value by its average over a small complex torus around the
evaluation point (mean-value property).  The torus radii stay below the
distance to the true poles at ``Y = x**2 - pi**2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

X_WINDOW = 0.1
Y_WINDOW = 3e-2
W_WINDOW = 1e-2
TRANSITION_WINDOW = 1e-6
X_RADIUS = 0.5
Y_RADIUS_MAX = 1.0
N_NODES = 32

_offset = np.exp(2j * np.pi * (np.arange(N_NODES) + 0.5) / N_NODES)


def coth_over_s(s):
    """``coth(s)/s`` for complex ``s`` with ``Re s >= 0``, overflow free."""
    e = np.exp(-2.0 * s)
    return (1.0 + e) / (-np.expm1(-2.0 * s) * s)


def csch2(s):
    """``1/sinh(s)**2`` for complex ``s`` with ``Re s >= 0``."""
    e = np.exp(-2.0 * s)
    d = np.expm1(-2.0 * s)
    return 4.0 * e / (d * d)


def sinhc(w):
    """``sinh(sqrt(w))/sqrt(w)``, entire in ``w``."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 0.5
    ws = np.where(small, w, 0.0)
    term = np.ones_like(ws)
    acc = np.ones_like(ws)
    for k in range(1, 12):
        term = term * ws / ((2 * k) * (2 * k + 1))
        acc = acc + term
    s = np.sqrt(np.where(small, 1.0, w))
    return np.where(small, acc, np.sinh(s) / s)


def sinc(z):
    """Unnormalized ``sin(z)/z`` for complex ``z``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, np.sin(zs) / zs)


def regularized(raw, x, Y, *, near_x=True, near_y=True, near_w=True):
    """Evaluate ``raw(x, Y)`` (complex-capable), resolving removable points.

    Returns the real part; the imaginary residue of the direct path is
    discarded.
    """
    x, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(Y, dtype=float))
    shape = x.shape
    x = x.ravel()
    Y = Y.ravel()
    fx = (np.abs(x) < X_WINDOW) if near_x else np.zeros(x.shape, bool)
    fy = (np.abs(Y) < Y_WINDOW) if near_y else np.zeros(x.shape, bool)
    fw = (np.abs(Y - x * x) < W_WINDOW) if near_w else np.zeros(x.shape, bool)
    flagged = fx | fy | fw
    out = np.empty(x.shape, dtype=float)
    plain = ~flagged
    if plain.any():
        with np.errstate(all="ignore"):
            out[plain] = raw(x[plain] + 0j, Y[plain] + 0j).real
    if flagged.any():
        xf, Yf = x[flagged], Y[flagged]
        rx = np.where(fx[flagged], X_RADIUS, 0.0)
        # keep the Y-disc clear of the poles at Y = x^2 - pi^2 (x on its circle)
        dist = np.abs(Yf + np.pi**2 - xf * xf) - 2.0 * np.abs(xf) * rx - rx * rx
        ry = np.where(fy[flagged] | fw[flagged], np.minimum(Y_RADIUS_MAX, 0.4 * dist), 0.0)
        xs = xf[:, None, None] + rx[:, None, None] * _offset[None, :, None]
        Ys = Yf[:, None, None] + ry[:, None, None] * _offset[None, None, :]
        with np.errstate(all="ignore"):
            vals = raw(xs, Ys)
        out[flagged] = vals.mean(axis=(1, 2)).real
    return out.reshape(shape)[()] if shape == () else out.reshape(shape)


@dataclass(frozen=True)
class BranchValue:
    """A real correlation value tagged with the branch of ``sqrt(y^2 - x^2)``.

    ``branch`` is ``"oscillatory"`` for ``y < x`` (imaginary root),
    ``"hyperbolic"`` for ``y > x`` and ``"transition"`` within
    ``|y^2 - x^2| < 1e-6``.
    """

    value: float
    branch: str


def classify_branch(x, y):
    w = np.asarray(y, dtype=float) ** 2 - np.asarray(x, dtype=float) ** 2
    tag = np.where(np.abs(w) < TRANSITION_WINDOW, "transition", np.where(w < 0, "oscillatory", "hyperbolic"))
    return tag[()] if tag.ndim == 0 else tag
