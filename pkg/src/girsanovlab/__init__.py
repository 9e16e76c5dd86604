"""Spectral-Galerkin laboratory for Girsanov-type law equivalence between
stochastic Kuramoto-Sivashinsky / fractional Navier-Stokes equations and
their linear Ornstein-Uhlenbeck counterparts."""

__version__ = "0.1.0"

from .spectral import ModelSpec, OperatorSpectrum, SpectralField, build_spectrum, sample_gaussian_field
from .operators import b_ks, b_ns, drift, growth_ratio
from .linsim import PathRecord, joint_increment, simulate_linear, transition_moments
from .nonlinsim import BlowUpError, simulate_nonlinear, step_nonlinear, twin_path_divergence
from .girsanov import (
    FORWARD,
    REVERSE,
    GirsanovLedger,
    accumulate,
    importance_estimate,
    normalization_check,
    reverse_density,
)
from .ergodics import ergodic_average, mixing_test, stationary_stats
from .regimes import RegimeReport, check_ks, check_ns, series_tail
