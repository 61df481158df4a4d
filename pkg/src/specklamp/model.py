"""Domain types, validation, and the JSON configuration schema.

Every downstream formula is dimensionless: lengths enter through
``a = ell / L`` and the mode count ``N``, gain through ``x = L / L_a`` and
``eta``, and times are measured in units of the transmission correlation
time ``t_c``.  Physical inputs are converted once, here.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .exceptions import (
    ConfigError,
    NotAmplifying,
    NotDiffusive,
    ThresholdExceeded,
    ValidationError,
    ValidityWarning,
)

__all__ = [
    "SlabGeometry",
    "GainModel",
    "DynamicsModel",
    "DetectionSetup",
    "ValidatedModel",
    "validate",
    "model_from_config",
    "load_config",
    "DEFAULT_DELTA_FACTOR",
    "DEFAULT_TAU_DOMEGA_MIN",
]

DEFAULT_DELTA_FACTOR = 3.0
DEFAULT_TAU_DOMEGA_MIN = 100.0


@dataclass(frozen=True)
class SlabGeometry:
    """Slab of thickness ``L`` with transport mean free path ``ell``.

    ``N`` counts transverse modes propagating in one direction on one side
    (both polarizations included).
    """

    L: float
    ell: float
    N: int

    @property
    def a(self) -> float:
        return self.ell / self.L

    @property
    def conductance(self) -> float:
        return 4.0 / 3.0 * self.N * self.a

    @classmethod
    def from_ratio(cls, L_over_ell: float, N: int) -> "SlabGeometry":
        return cls(L=float(L_over_ell), ell=1.0, N=N)


@dataclass(frozen=True)
class GainModel:
    """Uniform amplification, ``x = L / L_a`` below the threshold ``x = pi``."""

    x: float
    eta: float = -1.0

    @property
    def delta(self) -> float:
        return 1.0 - self.x / math.pi

    @classmethod
    def from_lengths(cls, L: float, ell: float, ell_a: float, eta: float = -1.0) -> "GainModel":
        """Build from the inverse amplification coefficient ``ell_a``."""
        L_a = math.sqrt(ell * ell_a / 3.0)
        return cls(x=L / L_a, eta=eta)


@dataclass(frozen=True)
class DynamicsModel:
    """Brownian scatterer dynamics.

    Give either ``tc`` or ``t0`` (or ``D_B`` with wavenumber ``k``); the
    missing times are filled in by :func:`validate` using
    ``tc = (2/3) t0 a**2`` and ``t0 = 1 / (4 k**2 D_B)``.
    """

    t0: float | None = None
    tc: float | None = None
    D_B: float | None = None
    k: float | None = None

    def resolved(self, a: float) -> "DynamicsModel":
        t0, tc = self.t0, self.tc
        if t0 is None and tc is None and self.D_B is not None:
            if self.k is None:
                raise ValidationError("D_B given without wavenumber k")
            t0 = 1.0 / (4.0 * self.k**2 * self.D_B)
        if t0 is None and tc is None:
            raise ValidationError("dynamics needs one of tc, t0, or D_B with k")
        if tc is None:
            tc = 2.0 / 3.0 * t0 * a * a
        elif t0 is None:
            t0 = 1.5 * tc / (a * a)
        elif not math.isclose(tc, 2.0 / 3.0 * t0 * a * a, rel_tol=1e-12):
            raise ValidationError("tc and t0 are inconsistent with tc = (2/3) t0 a^2")
        if not (tc > 0 and t0 > 0):
            raise ValidationError("correlation times must be positive")
        return dataclasses.replace(self, t0=t0, tc=tc)

    def gamma2_ell2(self, t):
        """Decorrelation rate ``gamma(t)**2 * ell**2 = 1.5 t / t0``."""
        return 1.5 * t / self.t0


@dataclass(frozen=True)
class DetectionSetup:
    """Photodetector with filter bandwidth ``domega`` and sampling time ``tau``.

    ``Ia`` is the incident photon flux and ``Qa`` its Mandel parameter
    (0 for a coherent state).  ``omega0`` is carried as metadata only.
    """

    tau: float
    domega: float
    Ia: float = 0.0
    Qa: float = 0.0
    omega0: float | None = None

    @property
    def na(self) -> float:
        return self.Ia * self.tau

    @property
    def Fa(self) -> float:
        """Second-order correlator of the incident light."""
        if self.tau <= 0:
            return self.Ia**2
        return self.Ia**2 + self.Qa * self.Ia / self.tau


@dataclass(frozen=True)
class ValidatedModel:
    """Immutable, checked parameter set with frozen derived quantities."""

    geometry: SlabGeometry
    gain: GainModel
    dynamics: DynamicsModel
    detection: DetectionSetup
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def a(self) -> float:
        return self.geometry.a

    @property
    def N(self) -> int:
        return self.geometry.N

    @property
    def g(self) -> float:
        return self.geometry.conductance

    @property
    def x(self) -> float:
        return self.gain.x

    @property
    def eta(self) -> float:
        return self.gain.eta

    @property
    def delta(self) -> float:
        return self.gain.delta

    @property
    def tc(self) -> float:
        return self.dynamics.tc

    @property
    def tau_over_tc(self) -> float:
        return self.detection.tau / self.dynamics.tc

    @property
    def tau_domega(self) -> float:
        return self.detection.tau * self.detection.domega

    @property
    def kappa(self) -> float:
        """Flux-to-bandwidth ratio ``2 pi I_a / (N domega)``."""
        return 2.0 * math.pi * self.detection.Ia / (self.N * self.detection.domega)

    def with_detection(self, **changes: Any) -> "ValidatedModel":
        det = dataclasses.replace(self.detection, **changes)
        return validate(self.geometry, self.gain, self.dynamics, det, _quiet=True)

    def with_tau_over_tc(self, tau_over_tc: float) -> "ValidatedModel":
        return self.with_detection(tau=tau_over_tc * self.tc)

    def with_gain(self, **changes: Any) -> "ValidatedModel":
        gain = dataclasses.replace(self.gain, **changes)
        return validate(self.geometry, gain, self.dynamics, self.detection, _quiet=True)

    def to_config(self) -> dict:
        return {
            "geometry": {"L_over_ell": self.geometry.L / self.geometry.ell, "N": self.N},
            "gain": {"x": self.x, "eta": self.eta},
            "dynamics": {"tc": self.tc},
            "detection": {
                "tau_over_tc": self.tau_over_tc,
                "domega_tc": self.detection.domega * self.tc,
                "Ia": self.detection.Ia,
                "Qa": self.detection.Qa,
            },
        }


def validate(
    geometry,
    gain: GainModel | None = None,
    dynamics: DynamicsModel | None = None,
    detection: DetectionSetup | None = None,
    *,
    delta_factor: float = DEFAULT_DELTA_FACTOR,
    tau_domega_min: float = DEFAULT_TAU_DOMEGA_MIN,
    _quiet: bool = False,
) -> ValidatedModel:
    """Check invariants and freeze derived quantities.

    Hard violations raise (:class:`ThresholdExceeded`, :class:`NotDiffusive`,
    :class:`NotAmplifying`); soft ones are collected in
    ``ValidatedModel.warnings`` and emitted as :class:`ValidityWarning`.
    Passing an already validated model returns it unchanged.
    """
    if isinstance(geometry, ValidatedModel):
        return geometry
    if gain is None or dynamics is None or detection is None:
        raise ValidationError("geometry, gain, dynamics and detection are all required")

    if not (geometry.ell > 0 and geometry.L > 0):
        raise ValidationError("L and ell must be positive")
    if geometry.ell >= geometry.L:
        raise NotDiffusive(f"ell={geometry.ell} must be smaller than L={geometry.L}")
    if geometry.N < 1 or int(geometry.N) != geometry.N:
        raise ValidationError(f"N must be a positive integer, got {geometry.N}")
    if not (0.0 <= gain.x):
        raise ValidationError(f"x must be nonnegative, got {gain.x}")
    if gain.x >= math.pi:
        raise ThresholdExceeded(
            f"x = L/L_a = {gain.x} is at or above the laser threshold pi"
        )
    if gain.eta > 0:
        raise NotAmplifying(f"eta = {gain.eta} > 0 describes an absorbing medium")
    if not (detection.tau > 0 and detection.domega > 0):
        raise ValidationError("tau and domega must be positive")
    if detection.Ia < 0:
        raise ValidationError("Ia must be nonnegative")

    dyn = dynamics.resolved(geometry.a)
    det = detection
    if det.Ia == 0 and det.Qa != 0:
        det = dataclasses.replace(det, Qa=0.0)

    notes = []
    g = geometry.conductance
    if geometry.N * geometry.a <= 0.75:
        notes.append(f"g = {g:.4g} <= 1: outside the diffusive g >> 1 regime (localization)")
    if gain.delta * math.sqrt(g) < delta_factor:
        notes.append(
            f"Delta*sqrt(g) = {gain.delta * math.sqrt(g):.4g} < {delta_factor}: "
            "too close to threshold for the C2-dominated correlation hierarchy"
        )
    if det.tau * det.domega < tau_domega_min:
        notes.append(
            f"tau*domega = {det.tau * det.domega:.4g} < {tau_domega_min}: "
            "long-sampling-time limit not reached"
        )
    if not _quiet:
        for note in notes:
            warnings.warn(note, ValidityWarning, stacklevel=2)
    return ValidatedModel(geometry, gain, dyn, det, tuple(notes))


_SCHEMA = {
    "geometry": {"L_over_ell", "N"},
    "gain": {"x", "eta"},
    "dynamics": {"tc", "t0"},
    "detection": {"tau_over_tc", "domega_tc", "Ia", "Qa"},
}
_REQUIRED = {
    "geometry": {"L_over_ell", "N"},
    "gain": {"x"},
    "detection": {"tau_over_tc", "domega_tc"},
}


def _check_keys(config: Mapping[str, Any]) -> None:
    if not isinstance(config, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(config) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    for section, allowed in _SCHEMA.items():
        body = config.get(section)
        if body is None:
            raise ConfigError(f"missing config section {section!r}")
        if not isinstance(body, Mapping):
            raise ConfigError(f"section {section!r} must be an object")
        bad = set(body) - allowed
        if bad:
            raise ConfigError(f"unknown key(s) in {section!r}: {sorted(bad)}")
        missing = _REQUIRED.get(section, set()) - set(body)
        if missing:
            raise ConfigError(f"missing key(s) in {section!r}: {sorted(missing)}")
    dyn = config["dynamics"]
    if len(dyn) != 1:
        raise ConfigError("dynamics takes exactly one of 'tc' or 't0'")


def model_from_config(config: Mapping[str, Any], **validate_kwargs) -> ValidatedModel:
    """Build a :class:`ValidatedModel` from the JSON config layout.

    Times are in arbitrary units; ``tau_over_tc`` and ``domega_tc`` are
    dimensionless and ``Ia`` is photons per unit time of those units.
    """
    _check_keys(config)
    geo = config["geometry"]
    N = geo["N"]
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    geometry = SlabGeometry.from_ratio(float(geo["L_over_ell"]), N)
    gain = GainModel(x=float(config["gain"]["x"]), eta=float(config["gain"].get("eta", -1.0)))
    dyn_cfg = config["dynamics"]
    if "tc" in dyn_cfg:
        dynamics = DynamicsModel(tc=float(dyn_cfg["tc"]))
    else:
        dynamics = DynamicsModel(t0=float(dyn_cfg["t0"]))
    tc = dynamics.resolved(geometry.a).tc
    det = config["detection"]
    detection = DetectionSetup(
        tau=float(det["tau_over_tc"]) * tc,
        domega=float(det["domega_tc"]) / tc,
        Ia=float(det.get("Ia", 0.0)),
        Qa=float(det.get("Qa", 0.0)),
    )
    return validate(geometry, gain, dynamics, detection, **validate_kwargs)


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
