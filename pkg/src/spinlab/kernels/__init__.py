"""Markov kernels: samplers, exact matrices and the joint-space factorization."""

from .blocks import region_plan, resample_region
from .edwards_sokal import ESFactorization, es_factorize, es_joint_weight, es_spin_marginal, monochromatic_mask
from .exact import DENSE_LIMIT, ExactChain, exact_matrix, heatbath_chain, heatbath_matrix, kernel_matrix
from .samplers import (
    block_dynamics_step, edge_probability, even_odd_step, glauber_step, heatbath_block_step,
    isolated_sw_step, resolve_order, run_chain, scan_sweep, step, sw_step, tiled_generic_step,
    tiled_heatbath_step, tiled_isolated_step, tilings_for,
)
from .spec import KINDS, KernelSpec, spec_from_dict, spec_from_json

__all__ = [
    "DENSE_LIMIT", "ESFactorization", "ExactChain", "KINDS", "KernelSpec", "block_dynamics_step",
    "edge_probability", "es_factorize", "es_joint_weight", "es_spin_marginal", "even_odd_step", "exact_matrix",
    "glauber_step", "heatbath_block_step", "heatbath_chain", "heatbath_matrix", "isolated_sw_step",
    "kernel_matrix", "monochromatic_mask", "region_plan", "resample_region", "resolve_order",
    "run_chain", "scan_sweep", "spec_from_dict", "spec_from_json", "step", "sw_step",
    "tiled_generic_step", "tiled_heatbath_step", "tiled_isolated_step", "tilings_for",
]
