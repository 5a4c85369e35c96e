"""Search-free DOA estimation for transmit-beamspace MIMO radar.

The received data of one coherent processing interval is arranged as a
beam x receiver x pulse tensor, decomposed by CP-ALS, and each target angle
is recovered by rooting a polynomial built from its beam-mode signature.
"""
__version__ = "0.1.0"

from .array_model import (
    ArrayGeometry,
    BeamspaceMatrix,
    Scene,
    SimulationConfig,
    Target,
    design_beamspace,
    receive_steering,
    simulate_cpi,
    snr_to_noise_variance,
    transmit_steering,
)
from .cp_als import CpConfig, CpResult, als_decompose, match_columns, normalize_factors
from .rooting import DoaEstimate, estimate_doas, grid_oracle, transmit_beampattern
from .tensor import FactorTriple, cp_fit, cp_reconstruct, fold, khatri_rao, unfold

__all__ = [
    "ArrayGeometry", "BeamspaceMatrix", "Scene", "SimulationConfig", "Target",
    "design_beamspace", "receive_steering", "simulate_cpi", "snr_to_noise_variance",
    "transmit_steering", "CpConfig", "CpResult", "als_decompose", "match_columns",
    "normalize_factors", "DoaEstimate", "estimate_doas", "grid_oracle",
    "transmit_beampattern", "FactorTriple", "cp_fit", "cp_reconstruct", "fold",
    "khatri_rao", "unfold",
]
