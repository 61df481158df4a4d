"""Photocount statistics of light transmitted through or emitted by random laser amplifiers.

Modules
-------
model         validated physical parameters
coefficients  mean transmission, reflection and spontaneous-emission coefficients
correlations  temporal correlation functions of those coefficients
statistics    photocount variance, noise curves and autocorrelation
montecarlo    reproducible synthesis of fluctuating media and photocounting
spectroscopy  inverse problem: recover g, t_c and n_c from measured noise
figures       frozen parameter sets of the published figures
cli           command-line front end
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    DegenerateNoLight,
    FitFailed,
    IllConditioned,
    NotAmplifying,
    NotDiffusive,
    NumericalFailure,
    PrecisionNotReached,
    SpecklampError,
    SynthesisError,
    ThresholdExceeded,
    ValidationError,
    ValidityWarning,
    WindowOverlap,
)
from .model import (  # noqa: E402
    DetectionSetup,
    DynamicsModel,
    GainModel,
    SlabGeometry,
    ValidatedModel,
    load_config,
    model_from_config,
    validate,
)
from .coefficients import mean_coefficients  # noqa: E402
from .statistics import (  # noqa: E402
    NoiseCurve,
    ase_statistics,
    photocount_autocorrelation,
    photocount_variance,
    strong_wave_variance,
)
