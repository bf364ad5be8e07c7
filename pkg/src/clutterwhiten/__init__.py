"""Whitening of cluttered image sequences for point-target enhancement.

A recursive sliding-window engine estimates a local 3-D spectrum at every
pixel; the smoothed spectral autocorrelation yields a background optical-
flow field; velocity-tuned prediction-error filters subtract the moving
background, leaving foreground targets plus noise.
"""

__version__ = "0.1.0"

from .params import FilterParams, ParamError, default_params, load_params, validate
from .parallel import ExecStrategy
from .spectrum import (
    NaiveSpectrumStream,
    SpectrumField,
    SpectrumStream,
    basis,
    naive_local_spectrum,
    naive_spectrum_field,
)
from .design import (
    FilterBank,
    FreqKernel,
    SampleKernel,
    build_bank,
    dirichlet,
    freq_response,
    kernel_to_freq,
    sample_kernel,
    sampled_freq_kernel,
)
from .flow import (
    VelocityField,
    autocorr,
    hann_condition,
    pick_velocity,
    power_spectrum,
    smooth,
    suppress_spatial_dc,
)
from .pipeline import Pipeline, WhitenedOutput, apply_pef, valid_bounds, valid_mask
from .scenegen import GroundTruth, SimConfig, add_noise, generate, inject_target
from .seqio import SequenceError, SequenceHeader, read_sequence, write_sequence
from .bench import BenchConfig, BenchReport, StrategySpec, run_bench, verify_equivalence

__all__ = [
    "__version__",
    "FilterParams",
    "ParamError",
    "default_params",
    "load_params",
    "validate",
    "ExecStrategy",
    "SpectrumField",
    "SpectrumStream",
    "NaiveSpectrumStream",
    "basis",
    "naive_local_spectrum",
    "naive_spectrum_field",
    "FilterBank",
    "FreqKernel",
    "SampleKernel",
    "build_bank",
    "dirichlet",
    "freq_response",
    "kernel_to_freq",
    "sample_kernel",
    "sampled_freq_kernel",
    "VelocityField",
    "autocorr",
    "hann_condition",
    "pick_velocity",
    "power_spectrum",
    "smooth",
    "suppress_spatial_dc",
    "Pipeline",
    "WhitenedOutput",
    "apply_pef",
    "valid_bounds",
    "valid_mask",
    "SimConfig",
    "GroundTruth",
    "generate",
    "inject_target",
    "add_noise",
    "SequenceError",
    "SequenceHeader",
    "read_sequence",
    "write_sequence",
    "BenchConfig",
    "BenchReport",
    "StrategySpec",
    "run_bench",
    "verify_equivalence",
]
