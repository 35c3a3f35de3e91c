"""One-step samplers for every kernel kind.

Each sampler returns a new configuration and leaves its input untouched.
Randomness is drawn from a ``numpy.random.Generator`` as uniforms and handed
to the compiled loops, which is what makes the backends agree exactly.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateMeasureError, UnsupportedModelError
from ..lattice import build_tilings, even_odd_partition
from ..measures import SpinSystem
from . import _loops
from .blocks import region_plan, resample_region
from .spec import SW_KINDS, KernelSpec, spec_from_dict


def _spins(system: SpinSystem, config) -> np.ndarray:
    spins = np.array(config, dtype=np.int64)
    if spins.shape != (system.n,):
        raise ValueError(f"configuration must have length {system.n}")
    if spins.min(initial=0) < 0 or spins.max(initial=0) >= system.q:
        raise ValueError("spin out of range")
    return spins


def _args(system: SpinSystem):
    m = system.model
    return (system.cube.nbr_ptr, system.cube.nbr_idx, m.U, m.hard, system.h, system.allowed, system.orders)


def tilings_for(system: SpinSystem, L: int):
    key = ("tilings", int(L))
    if key not in system.cache:
        system.cache[key] = build_tilings(system.cube, int(L))
    return system.cache[key]


def resolve_order(system: SpinSystem, order) -> np.ndarray:
    """Vertex sequence of a scan: ``"EO"``, ``"EOE"``, ``"lex"`` or an explicit list."""
    if isinstance(order, str):
        even, odd = even_odd_partition(system.cube)
        seq = {"EO": [even, odd], "EOE": [even, odd, even], "lex": [np.arange(system.n)]}[order]
        return np.concatenate(seq).astype(np.int64)
    seq = np.asarray(order, dtype=np.int64)
    if seq.ndim != 1 or seq.min(initial=0) < 0 or seq.max(initial=0) >= system.n:
        raise ValueError("scan order must list vertex indices")
    if len(np.unique(seq)) != system.n:
        raise ValueError("scan order must visit every vertex")
    return seq


def glauber_step(system: SpinSystem, config, rng: np.random.Generator) -> np.ndarray:
    """Heat-bath update at a uniformly random site."""
    spins = _spins(system, config)
    if not _loops.glauber_steps(spins, rng.random((1, 2)), *_args(system)):
        raise DegenerateMeasureError("no allowed spin at the chosen site")
    return spins


def heatbath_block_step(system: SpinSystem, config, block, rng: np.random.Generator) -> np.ndarray:
    """Resample ``block`` from its conditional law given the rest."""
    spins = _spins(system, config)
    plan = region_plan(system, block)
    return resample_region(system, spins, plan, rng.random(plan.n_uniforms))


def check_cover(system: SpinSystem, blocks):
    """Block families must cover every vertex."""
    covered = np.zeros(system.n, dtype=bool)
    for b in blocks:
        covered[np.asarray(b, dtype=np.int64)] = True
    if not covered.all():
        raise ValueError("blocks must cover every vertex")


def block_dynamics_step(system: SpinSystem, config, blocks, rng: np.random.Generator) -> np.ndarray:
    """Heat-bath update of a uniformly chosen block."""
    check_cover(system, blocks)
    k = min(int(rng.random() * len(blocks)), len(blocks) - 1)
    return heatbath_block_step(system, config, blocks[k], rng)


def even_odd_step(system: SpinSystem, config, rng: np.random.Generator) -> np.ndarray:
    return block_dynamics_step(system, config, even_odd_partition(system.cube), rng)


def tiled_heatbath_step(system: SpinSystem, config, tilings, rng: np.random.Generator) -> np.ndarray:
    """Pick a tiling uniformly and resample all of its cubes."""
    k = min(int(rng.random() * tilings.m), tilings.m - 1)
    return heatbath_block_step(system, config, tilings.block(k), rng)


def scan_sweep(system: SpinSystem, config, order, rng: np.random.Generator) -> np.ndarray:
    """One sweep of single-site heat-bath updates in the given order."""
    spins = _spins(system, config)
    seq = resolve_order(system, order)
    if not _loops.scan_sweeps(spins, seq, rng.random((1, len(seq))), *_args(system)):
        raise DegenerateMeasureError("no allowed spin during the sweep")
    return spins


def _require_sw(system: SpinSystem):
    if not system.model.is_potts_zero_field or not system.bc.is_free:
        raise UnsupportedModelError(
            "Swendsen-Wang kernels need a ferromagnetic zero-field Potts model with free boundary")


def edge_probability(beta: float) -> float:
    """Bond probability ``1 - exp(-beta)``."""
    return -math.expm1(-beta)


def _sw(system, config, rng, mode, tile_mask=None):
    _require_sw(system)
    spins = _spins(system, config)
    n, E = system.n, system.cube.num_edges
    u = rng.random(E + n)
    mask = np.zeros(n, dtype=bool) if tile_mask is None else tile_mask
    _loops.sw_update(spins, system.cube.edges, edge_probability(system.model.beta), u[:E], u[E:],
                     system.q, mode, mask, np.empty(n, np.int64), np.empty(n, np.int64))
    return spins


def sw_step(system: SpinSystem, config, rng: np.random.Generator) -> np.ndarray:
    """Swendsen-Wang: percolate monochromatic edges, recolour every cluster."""
    return _sw(system, config, rng, 0)


def isolated_sw_step(system: SpinSystem, config, rng: np.random.Generator) -> np.ndarray:
    """Percolate monochromatic edges, recolour only isolated vertices."""
    return _sw(system, config, rng, 1)


def tiled_isolated_step(system: SpinSystem, config, tilings, rng: np.random.Generator) -> np.ndarray:
    """Pick a tiling, percolate, recolour isolated vertices inside the tiling."""
    k = min(int(rng.random() * tilings.m), tilings.m - 1)
    mask = np.zeros(system.n, dtype=bool)
    mask[tilings.block(k)] = True
    return _sw(system, config, rng, 2, mask)


def tiled_generic_step(system: SpinSystem, config, tilings, inner: str, rng: np.random.Generator) -> np.ndarray:
    """Pick a tiling and apply ``inner`` restricted to it."""
    if inner == "isolated":
        return tiled_isolated_step(system, config, tilings, rng)
    k = min(int(rng.random() * tilings.m), tilings.m - 1)
    block = tilings.block(k)
    if inner == "heatbath":
        return heatbath_block_step(system, config, block, rng)
    if inner == "even_odd":
        even, odd = even_odd_partition(system.cube)
        side = even if rng.random() < 0.5 else odd
        return heatbath_block_step(system, config, np.intersect1d(block, side), rng)
    raise ValueError(f"unknown inner kernel {inner!r}")


def _reversed_sampler(system, base: KernelSpec):
    """Sampler for the adjoint of ``base`` when it is available in closed form."""
    if base.kind == "scan":
        seq = resolve_order(system, base.params["order"])[::-1]
        return KernelSpec("scan", {"order": seq.tolist()})
    if base.kind == "composition":
        parts = [_reversed_sampler(system, k) for k in base.params["kernels"][::-1]]
        return KernelSpec("composition", {"kernels": parts})
    if base.kind == "lazy":
        return KernelSpec("lazy", {"base": _reversed_sampler(system, base.params["base"]),
                                   "hold": base.params["hold"]})
    if base.kind == "reversiblization":
        return base
    return base  # every remaining kind is reversible


def step(system: SpinSystem, spec, config, rng: np.random.Generator) -> np.ndarray:
    """Apply one step of the kernel described by ``spec``."""
    spec = spec_from_dict(spec)
    p = spec.params
    kind = spec.kind
    if kind == "glauber":
        return glauber_step(system, config, rng)
    if kind == "heatbath_block":
        return heatbath_block_step(system, config, p["block"], rng)
    if kind == "block_dynamics":
        return block_dynamics_step(system, config, p["blocks"], rng)
    if kind == "even_odd":
        return even_odd_step(system, config, rng)
    if kind == "tiled_heatbath":
        return tiled_heatbath_step(system, config, tilings_for(system, p["L"]), rng)
    if kind == "tiled_generic":
        return tiled_generic_step(system, config, tilings_for(system, p["L"]), p["inner"], rng)
    if kind == "sw":
        return sw_step(system, config, rng)
    if kind == "isolated_sw":
        return isolated_sw_step(system, config, rng)
    if kind == "tiled_isolated_sw":
        return tiled_isolated_step(system, config, tilings_for(system, p["L"]), rng)
    if kind == "scan":
        return scan_sweep(system, config, p["order"], rng)
    if kind == "composition":
        out = _spins(system, config)
        for k in p["kernels"]:
            out = step(system, k, out, rng)
        return out
    if kind == "lazy":
        if rng.random() < float(p["hold"]):
            return _spins(system, config)
        return step(system, p["base"], config, rng)
    if kind == "reversiblization":
        out = step(system, p["base"], config, rng)
        return step(system, _reversed_sampler(system, p["base"]), out, rng)
    raise ValueError(f"unknown kernel kind {kind!r}")


def run_chain(system: SpinSystem, spec, config, steps: int, rng: np.random.Generator) -> np.ndarray:
    """``steps`` successive applications of ``spec``; returns the final state."""
    out = _spins(system, config)
    for _ in range(int(steps)):
        out = step(system, spec, out, rng)
    return out


__all__ = [
    "SW_KINDS", "block_dynamics_step", "edge_probability", "even_odd_step", "glauber_step",
    "heatbath_block_step", "isolated_sw_step", "resolve_order", "run_chain", "scan_sweep", "step",
    "sw_step", "tiled_generic_step", "tiled_heatbath_step", "tiled_isolated_step", "tilings_for",
]
