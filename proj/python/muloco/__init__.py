"""Deterministic laboratory for communication-efficient local-update training.

Thin re-export of the compiled extension; see the C++ headers for contracts.
"""

from ._core import (
    ContractError,
    NumericalError,
    ConfigError,
    newton_schulz,
    svd,
    frobenius_norm,
    nuclear_norm,
    cosine_sim,
    interference_gap,
    compress_roundtrip,
    comm_bytes,
    smoothed_final_loss,
    run_experiment,
    fit_power_law,
    critical_batch,
    estimate_wallclock,
)

__all__ = [
    "ContractError",
    "NumericalError",
    "ConfigError",
    "newton_schulz",
    "svd",
    "frobenius_norm",
    "nuclear_norm",
    "cosine_sim",
    "interference_gap",
    "compress_roundtrip",
    "comm_bytes",
    "smoothed_final_loss",
    "run_experiment",
    "fit_power_law",
    "critical_batch",
    "estimate_wallclock",
]
