"""Stochastic cross-checks of the analytic photocount statistics.

Time is measured in units of ``t_c`` throughout.  Realizations are drawn in
fixed blocks of :data:`BLOCK` from counter-based Philox streams keyed by
``(seed, block, role)``, so results do not depend on how many worker
threads process the blocks.

Joint transmission / ASE process
--------------------------------
Only second-order statistics of ``T_ab(t)`` and ``V_b(t)`` are known.  We
use normalized processes

    T(t) = |E(t)|^2 + xi(t),      V(t) = 1 + zeta(t)

with ``E`` a circular complex Gaussian field whose correlation is
``sqrt(C1)``, and ``(xi, zeta)`` jointly Gaussian with auto- and
cross-covariances ``C2``, ``C_VV`` and ``C_TV``.  All second moments then
match the analytic correlations exactly; higher moments are a modelling
choice.  ``T`` can dip below zero where ``xi`` outweighs a dark speckle;
counting clips such windows and reports how many.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import correlations as corr
from .coefficients import mean_coefficients
from .exceptions import PrecisionNotReached, SynthesisError, ValidationError
from .model import ValidatedModel
from .statistics import photocount_variance

__all__ = [
    "BLOCK",
    "ROLES",
    "SpeckleTrace",
    "PairTrace",
    "CountingRecord",
    "EmpiricalVariance",
    "OracleResult",
    "stream",
    "worker_count",
    "GaussianFactor",
    "sample_gaussian",
    "sample_speckle",
    "sample_pair",
    "cox_count",
    "window_means",
    "windowed_variance_empirical",
    "count_variance",
    "intensity_autocorrelation",
    "quadrature_oracle_nb2",
    "run_quadrature_oracle",
    "save_trace",
    "load_trace",
]

BLOCK = 256
ROLES = {"field": 0, "gauss": 1, "pair": 2, "count": 3}
EIG_TOL = 1e-8

_MAGIC = b"SPKT"
_VERSION = 1
_HEADER = struct.Struct("<4sIdQQ")


def stream(seed: int, block: int, role: str) -> np.random.Generator:
    """Independent Philox generator for one ``(seed, block, role)`` key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block), ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SPECKLAMP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _blocks(realizations: int, fn: Callable[[int, int], object], threads: int | None):
    """Run ``fn(block, count)`` over blocks; results in block order."""
    if realizations < 1:
        raise ValueError("need at least one realization")
    nblk = -(-realizations // BLOCK)
    sizes = [min(BLOCK, realizations - b * BLOCK) for b in range(nblk)]
    nw = min(worker_count(threads), nblk)
    if nw == 1:
        return [fn(b, n) for b, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(fn, range(nblk), sizes))


# --- Gaussian synthesis -----------------------------------------------------------


class GaussianFactor:
    """Square-root factor ``F`` of a covariance matrix, ``K = F F^T``.

    Built from a symmetric eigendecomposition; eigenvalues below
    ``-EIG_TOL * max`` mean the covariance is not positive semidefinite on
    this grid and raise :class:`SynthesisError`.  Tiny negative eigenvalues
    from rounding are set to zero.
    """

    def __init__(self, cov: np.ndarray):
        cov = np.asarray(cov, dtype=float)
        lam, vec = np.linalg.eigh(0.5 * (cov + cov.T))
        top = max(lam.max(), 0.0)
        if lam.min() < -EIG_TOL * top:
            raise SynthesisError(
                f"covariance not positive semidefinite: min eigenvalue {lam.min():.3e} (max {top:.3e})"
            )
        self.factor = vec * np.sqrt(np.clip(lam, 0.0, None))
        self.min_eigenvalue = float(lam.min())

    @classmethod
    def toeplitz(cls, c: Callable, dt: float, steps: int) -> "GaussianFactor":
        return cls(_toeplitz(np.asarray(c(dt * np.arange(steps)), dtype=float)))

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        z = rng.standard_normal((count, self.factor.shape[1]))
        return z @ self.factor.T

    def draw_complex(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Circular complex samples with ``E[X X'^*] = K``."""
        n = self.factor.shape[1]
        z = (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))) / math.sqrt(2.0)
        return z @ self.factor.T


class _Circulant:
    """Circulant-embedding (spectral) synthesis of a long stationary series."""

    def __init__(self, c: Callable, dt: float, steps: int, max_doublings: int = 4):
        m = 2 * (steps - 1)
        for _ in range(max_doublings + 1):
            k = np.arange(m // 2 + 1)
            row = np.asarray(c(dt * k), dtype=float)
            emb = np.concatenate([row, row[-2:0:-1]])
            lam = np.fft.fft(emb).real
            if lam.min() >= -EIG_TOL * lam.max():
                break
            m *= 2
        else:
            raise SynthesisError(f"circulant embedding not nonnegative: min {lam.min():.3e}")
        self.sqrt_lam = np.sqrt(np.clip(lam, 0.0, None) / emb.size)
        self.steps = steps

    def draw_complex(self, rng: np.random.Generator, count: int) -> np.ndarray:
        m = self.sqrt_lam.size
        z = rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))
        out = np.fft.fft(self.sqrt_lam * z, axis=1)[:, : self.steps]
        return out / math.sqrt(2.0)

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return math.sqrt(2.0) * self.draw_complex(rng, count).real


def _synth(c: Callable, dt: float, steps: int, method: str):
    if method == "auto":
        method = "eigh" if steps <= 2048 else "circulant"
    if method == "eigh":
        return GaussianFactor.toeplitz(c, dt, steps)
    if method == "circulant":
        return _Circulant(c, dt, steps)
    raise ValueError(f"unknown synthesis method {method!r}")


# --- traces ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeckleTrace:
    """Speckle intensities ``|E|^2`` on a uniform grid, one row per realization."""

    dt: float
    values: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PairTrace:
    """Normalized transmission ``T`` and ASE ``V`` processes (mean 1 each)."""

    dt: float
    T: np.ndarray
    V: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class CountingRecord:
    counts: np.ndarray
    window: float
    rate: float
    clipped: int = 0


@dataclass(frozen=True)
class EmpiricalVariance:
    value: float
    stderr: float
    realizations: int


@dataclass(frozen=True)
class OracleResult:
    """Ensemble estimate of the photocount variance from per-realization integrals."""

    mean_n: float
    mean_n2: float
    variance: float
    delta2: float
    stderr: float
    analytic: float
    realizations: int

    @property
    def zscore(self) -> float:
        return (self.delta2 - self.analytic) / self.stderr if self.stderr > 0 else math.inf


def sample_gaussian(c: Callable, dt: float, steps: int, realizations: int, seed: int, *, method: str = "auto",
                    threads: int | None = None) -> np.ndarray:
    """Zero-mean real stationary Gaussian series with covariance ``c(lag)``."""
    synth = _synth(c, dt, steps, method)
    parts = _blocks(realizations, lambda b, n: synth.draw(stream(seed, b, "gauss"), n), threads)
    return np.concatenate(parts, axis=0)


def sample_speckle(g1: Callable, dt: float, steps: int, seed: int, *, realizations: int = 1,
                   method: str = "auto", threads: int | None = None) -> SpeckleTrace:
    """Speckle intensity ``|E(t)|^2`` of a circular Gaussian field with correlation ``g1``.

    ``g1`` takes the lag in units of ``t_c`` and must satisfy ``g1(0) = 1``.
    """
    if not math.isclose(float(g1(0.0)), 1.0, rel_tol=1e-12):
        raise SynthesisError(f"field correlation must be 1 at zero lag, got {float(g1(0.0))}")
    synth = _synth(g1, dt, steps, method)

    def block(b, n):
        E = synth.draw_complex(stream(seed, b, "field"), n)
        return (E * E.conj()).real

    values = np.concatenate(_blocks(realizations, block, threads), axis=0)
    return SpeckleTrace(dt, values, int(seed), {"method": method})


def _toeplitz(row: np.ndarray) -> np.ndarray:
    n = row.size
    return row[np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])]


def _pair_covariance(x, a, g, dt, steps, dq):
    y = np.sqrt(dt * np.arange(steps))
    k2 = _toeplitz(corr.c2_tt(x, y, g, dq))
    ktv = _toeplitz(corr.c_tv(x, y, g))
    kvv = _toeplitz(corr.c_vv(x, y, g))
    return np.block([[k2, ktv], [ktv, kvv]])


def sample_pair(x: float, a: float, g: float, dt: float, steps: int, realizations: int, seed: int, *,
                dq: float = 0.0, threads: int | None = None) -> PairTrace:
    """Joint normalized ``(T, V)`` traces matching ``C_TT``, ``C_TV`` and ``C_VV``."""
    field_factor = GaussianFactor.toeplitz(lambda t: np.sqrt(corr.c1_tt(x, np.sqrt(t), a)), dt, steps)
    pair_factor = GaussianFactor(_pair_covariance(x, a, g, dt, steps, dq))

    def block(b, n):
        E = field_factor.draw_complex(stream(seed, b, "field"), n)
        xz = pair_factor.draw(stream(seed, b, "pair"), n)
        return (E * E.conj()).real + xz[:, :steps], 1.0 + xz[:, steps:]

    parts = _blocks(realizations, block, threads)
    T = np.concatenate([p[0] for p in parts], axis=0)
    V = np.concatenate([p[1] for p in parts], axis=0)
    meta = {"x": x, "a": a, "g": g, "dq": dq, "joint_process": "speckle + Gaussian long-range (second-order exact)"}
    return PairTrace(dt, T, V, int(seed), meta)


# --- estimators ---------------------------------------------------------------------------


def _trapezoid_weights(steps: int) -> np.ndarray:
    w = np.ones(steps)
    w[0] = w[-1] = 0.5
    return w / (steps - 1)


def window_means(values: np.ndarray, dt: float, tau: float) -> np.ndarray:
    """Trapezoid average of each realization over ``[0, tau]``."""
    n = int(round(tau / dt))
    if n < 1 or not math.isclose(n * dt, tau, rel_tol=1e-9):
        raise ValidationError(f"tau = {tau} is not a positive multiple of dt = {dt}")
    if values.shape[1] < n + 1:
        raise ValidationError(f"trace of {values.shape[1]} points is shorter than tau = {tau}")
    return values[:, : n + 1] @ _trapezoid_weights(n + 1)


def _jackknife(columns: np.ndarray, stat: Callable) -> tuple[float, float]:
    """Delete-one jackknife of ``stat(column means)``; columns are per-realization values."""
    cols = np.atleast_2d(np.asarray(columns, dtype=float))
    n = cols.shape[1]
    total = cols.sum(axis=1, keepdims=True)
    full = stat(total[:, 0] / n)
    loo = stat((total - cols) / (n - 1))
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(full), se


def _normalized_variance(means):
    m1, m2 = means[0], means[1]
    return (m2 - m1 * m1) / (m1 * m1)


def windowed_variance_empirical(values: np.ndarray, dt: float, tau: float) -> EmpiricalVariance:
    """Estimate ``delta^2(tau) = var(m)/<m>^2`` of the window mean ``m``, with jackknife error."""
    m = window_means(np.asarray(values, dtype=float), dt, tau)
    if m.size < 100:
        raise ValidationError(f"need at least 100 realizations, got {m.size}")
    value, se = _jackknife(np.vstack([m, m * m]), _normalized_variance)
    return EmpiricalVariance(value, se, m.size)


def count_variance(record: CountingRecord) -> EmpiricalVariance:
    """Normalized photocount variance ``var(n)/<n>^2`` with jackknife error."""
    n = record.counts.astype(float)
    value, se = _jackknife(np.vstack([n, n * n]), _normalized_variance)
    return EmpiricalVariance(value, se, n.size)


def intensity_autocorrelation(values: np.ndarray, lags) -> tuple[np.ndarray, np.ndarray]:
    """``<T(0) T(k)>/<T>^2 - 1`` at integer lags, averaged over time origins.

    Returns estimates and jackknife standard errors over realizations.
    """
    values = np.asarray(values, dtype=float)
    mean_r = values.mean(axis=1)
    est, err = [], []
    for k in np.atleast_1d(lags):
        k = int(k)
        prod = (values[:, : values.shape[1] - k] * values[:, k:]).mean(axis=1)
        v, s = _jackknife(np.vstack([mean_r, prod]), lambda m: m[1] / (m[0] * m[0]) - 1.0)
        est.append(v)
        err.append(s)
    return np.array(est), np.array(err)


def cox_count(trace, flux: float, tau: float, seed: int, *, threads: int | None = None) -> CountingRecord:
    """Doubly stochastic Poisson counts, one window ``[0, tau]`` per realization.

    ``trace`` is a :class:`SpeckleTrace`, the ``T`` of a :class:`PairTrace`,
    or ``(values, dt)``.  The Poisson mean is ``flux * int_0^tau T dt``;
    negative integrals are clipped to zero and counted in ``clipped``.
    """
    if isinstance(trace, SpeckleTrace):
        values, dt = trace.values, trace.dt
    elif isinstance(trace, PairTrace):
        values, dt = trace.T, trace.dt
    else:
        values, dt = trace
    lam = flux * tau * window_means(np.asarray(values, dtype=float), dt, tau)
    if not np.all(np.isfinite(lam)):
        raise ValidationError("flux * tau must be finite")
    clipped = int(np.count_nonzero(lam < 0))
    lam = np.clip(lam, 0.0, None)

    def block(b, n):
        return stream(seed, b, "count").poisson(lam[b * BLOCK: b * BLOCK + n])

    counts = np.concatenate(_blocks(lam.size, block, threads))
    return CountingRecord(counts.astype(np.int64), tau, flux, clipped)


# --- quadrature oracle ------------------------------------------------------------------------


def quadrature_oracle_nb2(model: ValidatedModel, pair: PairTrace, *, target_rse: float | None = None,
                          analytic: float | None = None) -> OracleResult:
    """Photocount variance from per-realization integrals of ``T`` and ``V``.

    For each realization the mean and second moment of the count are
    assembled from window integrals of ``T``, ``V``, ``T V`` and ``V^2``
    (long-sampling limit), then averaged over the ensemble; the variance is
    ``mean <n^2> - (mean <n>)^2``.  ``analytic`` defaults to
    :func:`statistics.photocount_variance`.

    Raises
    ------
    PrecisionNotReached
        If the jackknife relative error exceeds ``target_rse``.
    """
    tau = model.tau_over_tc
    mc = mean_coefficients(model)
    A = mc.Tab * model.detection.na
    B = -model.eta * mc.Vb * model.tau_domega / (2.0 * math.pi)
    w = -model.eta * mc.Vb
    na = model.detection.na
    q = model.detection.Qa / na if na > 0 else 0.0
    dt = pair.dt
    mT = window_means(pair.T, dt, tau)
    mV = window_means(pair.V, dt, tau)
    mTV = window_means(pair.T * pair.V, dt, tau)
    mVV = window_means(pair.V * pair.V, dt, tau)
    n1 = A * mT + B * mV
    n2 = n1 + A * A * (1.0 + q) * mT * mT + 2.0 * A * B * mT * mV + B * B * mV * mV + w * (2.0 * A * mTV + B * mVV)
    d2, se = _jackknife(np.vstack([n1, n2]), _normalized_variance)
    if target_rse is not None and se > target_rse * abs(d2):
        raise PrecisionNotReached(f"relative error {se / abs(d2):.3g} above target {target_rse:.3g}",
                                  achieved=se / abs(d2))
    if analytic is None:
        analytic = photocount_variance(model).total
    m1, m2 = float(n1.mean()), float(n2.mean())
    return OracleResult(m1, m2, m2 - m1 * m1, d2, se, float(analytic), n1.size)


def run_quadrature_oracle(model: ValidatedModel, realizations: int, seed: int, *, points_per_tc: int = 20,
                          min_points: int = 200, dq: float = 0.0, target_rse: float | None = None,
                          threads: int | None = None) -> OracleResult:
    """Synthesize ``(T, V)`` pairs for ``model`` and run :func:`quadrature_oracle_nb2`."""
    tau = model.tau_over_tc
    n = max(min_points, int(math.ceil(points_per_tc * tau)))
    dt = tau / n
    pair = sample_pair(model.x, model.a, model.g, dt, n + 1, realizations, seed, dq=dq, threads=threads)
    return quadrature_oracle_nb2(model, pair, target_rse=target_rse)


# --- binary cache --------------------------------------------------------------------------------


def save_trace(path, trace: SpeckleTrace) -> None:
    """Write ``trace`` as a little-endian header then raw float64 values."""
    values = np.ascontiguousarray(trace.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, float(trace.dt), values.shape[1], int(trace.seed)))
        fh.write(values.tobytes())


def load_trace(path) -> SpeckleTrace:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, dt, steps, seed = _HEADER.unpack(head)
        if magic != _MAGIC or version != _VERSION:
            raise ValidationError(f"{path}: not a trace file (magic {magic!r}, version {version})")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if steps == 0 or raw.size % steps:
        raise ValidationError(f"{path}: payload of {raw.size} values is not a multiple of {steps} steps")
    return SpeckleTrace(dt, raw.reshape(-1, steps).astype(float), int(seed))
