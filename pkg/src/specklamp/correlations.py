"""Classical correlation functions of the transmission and ASE coefficients.

Arguments are ``x = L/L_a``, the reduced time ``y = gamma(t) L =
sqrt(t/t_c)``, ``a = ell/L``, the conductance ``g`` and the transverse
wave-vector mismatch ``dq`` (in units of ``1/L``).  All functions broadcast
over numpy arrays.

* ``c1_tt``  short-range speckle correlation, order 1
* ``c2_tt``  long-range correlation ``(1/g) [F2(x, y) + F2(x, sqrt(y^2 + dq^2))]``
* ``c_tv``   cross-correlation of ``T_ab`` and ``V_b``
* ``c_vv``   autocorrelation of ``V_b``

The infinite-range ``C3`` contribution is not modelled (it is smaller by
``1/(g Delta^2)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._analytic import (
    BranchValue,
    classify_branch,
    coth_over_s,
    csch2,
    regularized,
    sinc,
    sinhc,
)

__all__ = [
    "CorrelationArgs",
    "BranchValue",
    "classify_branch",
    "y_from_time",
    "c1_tt",
    "f2",
    "f2_equal_time",
    "c2_tt",
    "c_tt",
    "c_tv",
    "c_tv_equal_time",
    "c_vv",
    "c_vv_equal_time",
    "evaluate",
    "kernel",
    "KINDS",
]


def y_from_time(t_over_tc):
    """Reduced time ``y = sqrt(t/t_c)``."""
    return np.sqrt(np.asarray(t_over_tc, dtype=float))


@dataclass(frozen=True)
class CorrelationArgs:
    x: float
    y: float
    a: float = 0.01
    g: float = 100.0
    dq: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.x < np.pi):
            raise ValueError(f"x must lie in [0, pi), got {self.x}")
        if self.y < 0 or self.dq < 0:
            raise ValueError("y and dq must be nonnegative")

    @classmethod
    def from_time(cls, x, t_over_tc, **kw) -> "CorrelationArgs":
        return cls(x=x, y=float(np.sqrt(t_over_tc)), **kw)


# --- raw closed forms in (x, Y = y^2); complex-capable -------------------


def _f2_raw(x, Y):
    w = Y - x * x
    s = np.sqrt(w)
    return (x * (2.0 * Y - x * x) * 2.0 * coth_over_s(s) - (2.0 * x * Y + w * np.sin(2.0 * x)) * csch2(s)) / (
        4.0 * x * Y
    )


def _f2_zero_raw(x, Y=None):
    return 0.25 * (2.0 - 1.0 / (np.tan(x) * x) + 1.0 / np.sin(x) ** 2)


def _ctv_raw(x, Y):
    w = Y - x * x
    s = np.sqrt(w)
    return (
        -x / (2.0 * Y * np.tan(x / 2.0))
        + coth_over_s(s) * (1.0 - x * x / (2.0 * Y))
        - 0.5 * csch2(s) * (1.0 - np.sin(x) * w / (x * Y))
    )


def _ctv_zero_raw(x, Y=None):
    return (x / np.sin(x) * (1.5 + np.cos(x)) - 1.5 * np.cos(x) - 1.0) / (2.0 * x * np.sin(x))


def _cvv_raw(x, Y):
    w = Y - x * x
    s = np.sqrt(w)
    sx = np.sin(x)
    bracket = (
        2.0 * x * (Y - w * np.cos(x)) * coth_over_s(s)
        - 2.0 * (x * Y - w * sx) * csch2(s)
        - 2.0 * x * x * sx
    )
    return bracket / (4.0 * x * Y * np.sin(x / 2.0) ** 2)


def _cvv_zero_raw(x, Y=None):
    num = 4.0 * x * (2.0 + np.cos(x)) - 7.0 * np.sin(x) - 4.0 * np.sin(2.0 * x) + np.sin(3.0 * x)
    return num / (16.0 * x * (np.sin(x) * np.sin(x / 2.0)) ** 2)


def _equal_time(raw, x):
    return regularized(raw, x, np.ones_like(np.asarray(x, dtype=float)), near_y=False, near_w=False)


def _general(raw, zero_raw, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.atleast_1d(regularized(raw, x, y * y)).astype(float)
    xf, yf = np.atleast_1d(x), np.atleast_1d(y)
    at_zero = yf == 0.0
    if at_zero.any():
        out[at_zero] = _equal_time(zero_raw, xf[at_zero])
    return out.reshape(x.shape)[()] if x.ndim == 0 else out.reshape(x.shape)


def _sinh_ratio(a, w):
    # sinh(a s) / (a sinh s) with s = sqrt(w), overflow free for large |w|
    w = np.asarray(w, dtype=complex)
    big = np.abs(w) > 1.0
    s = np.sqrt(np.where(big, w, 1.0))
    far = np.exp(-(1.0 - a) * s) * np.expm1(-2.0 * a * s) / (a * np.expm1(-2.0 * s))
    near = sinhc(a * a * np.where(big, 0.0, w)) / sinhc(np.where(big, 0.0, w))
    return np.where(big, far, near)


# --- public functions -----------------------------------------------------


def c1_tt(x, y, a, *, same_mode=True):
    """Short-range correlation ``C1_TT(t)``; exactly 1 at ``y = 0``.

    ``|sinh(a s)/sinh(s) * sin(x)/sin(a x)|^2`` with ``s = sqrt(y^2 - x^2)``.
    Different incoming modes (``same_mode=False``) are uncorrelated.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if not same_mode:
        return np.zeros(x.shape)[()] if x.ndim == 0 else np.zeros(x.shape)
    w = y * y - x * x
    with np.errstate(all="ignore"):
        ratio = _sinh_ratio(a, w) * sinc(x) / sinc(a * x)
    out = (ratio * ratio).real
    out = np.where(y == 0.0, 1.0, out)
    return out[()] if out.ndim == 0 else out


def f2(x, y):
    """Long-range shape function ``F2(x, y)``; ``F2(0, 0) = 2/3``, ``F2 ~ 1/y`` for large ``y``."""
    return _general(_f2_raw, _f2_zero_raw, x, y)


def f2_equal_time(x):
    """``F2(x, 0) = [2 - cot(x)/x + 1/sin(x)^2] / 4``."""
    return _equal_time(_f2_zero_raw, x)


def c2_tt(x, y, g, dq=0.0):
    """Long-range correlation ``C2_TT = (1/g)[F2(x, y) + F2(x, sqrt(y^2 + dq^2))]``."""
    y = np.asarray(y, dtype=float)
    first = f2(x, y)
    if np.all(np.asarray(dq) == 0.0):
        return 2.0 * first / g
    second = f2(x, np.sqrt(y * y + np.asarray(dq, dtype=float) ** 2))
    return (first + second) / g


def c_tt(x, y, a, g, dq=0.0):
    """Total transmission autocorrelation ``C1 + C2`` used in ``delta^2_TT``."""
    return c1_tt(x, y, a) + c2_tt(x, y, g, dq)


def c_tv(x, y, g):
    """Cross-correlation ``C_TV(t)`` of single-channel transmission and ASE."""
    return _general(_ctv_raw, _ctv_zero_raw, x, y) / g


def c_tv_equal_time(x, g):
    """``C_TV(0)``; tends to ``1/(3g)`` as ``x -> 0``."""
    return _equal_time(_ctv_zero_raw, x) / g


def c_vv(x, y, g):
    """ASE autocorrelation ``C_VV(t)``; ``~ sqrt(t_c/t)/g`` for ``t >> t_c``."""
    return _general(_cvv_raw, _cvv_zero_raw, x, y) / g


def c_vv_equal_time(x, g):
    """``C_VV(0)``; tends to ``4/(15 g)`` as ``x -> 0``."""
    return _equal_time(_cvv_zero_raw, x) / g


KINDS = ("tt", "c1", "c2", "tv", "vv")


def kernel(kind: str, x: float, a: float = 0.01, g: float = 100.0, dq: float = 0.0):
    """Correlation as a function of ``t/t_c``, for windowed-variance integrals."""
    if kind == "tt":
        return lambda t: c_tt(x, np.sqrt(t), a, g, dq)
    if kind == "c1":
        return lambda t: c1_tt(x, np.sqrt(t), a)
    if kind == "c2":
        return lambda t: c2_tt(x, np.sqrt(t), g, dq)
    if kind == "tv":
        return lambda t: c_tv(x, np.sqrt(t), g)
    if kind == "vv":
        return lambda t: c_vv(x, np.sqrt(t), g)
    raise ValueError(f"unknown correlation kind {kind!r}; expected one of {KINDS}")


_BY_NAME = {
    "c1_tt": lambda args: c1_tt(args.x, args.y, args.a),
    "f2": lambda args: f2(args.x, args.y),
    "c2_tt": lambda args: c2_tt(args.x, args.y, args.g, args.dq),
    "c_tv": lambda args: c_tv(args.x, args.y, args.g),
    "c_vv": lambda args: c_vv(args.x, args.y, args.g),
}


def evaluate(name: str, args: CorrelationArgs) -> BranchValue:
    """Evaluate one correlation at scalar ``args``, tagged with its branch."""
    try:
        fn = _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown correlation {name!r}") from None
    return BranchValue(float(fn(args)), str(classify_branch(args.x, args.y)))
