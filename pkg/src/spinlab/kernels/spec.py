"""Declarative description of a Markov kernel."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ConfigError

SCAN_ORDERS = ("EO", "EOE", "lex")
TILED_INNER = ("heatbath", "even_odd", "isolated")

# kind -> (required params, optional params)
KINDS = {
    "glauber": (set(), set()),
    "heatbath_block": ({"block"}, set()),
    "block_dynamics": ({"blocks"}, set()),
    "even_odd": (set(), set()),
    "tiled_heatbath": ({"L"}, set()),
    "tiled_generic": ({"L", "inner"}, set()),
    "sw": (set(), set()),
    "isolated_sw": (set(), set()),
    "tiled_isolated_sw": ({"L"}, set()),
    "scan": ({"order"}, set()),
    "composition": ({"kernels"}, set()),
    "lazy": ({"base", "hold"}, set()),
    "reversiblization": ({"base"}, set()),
}

SW_KINDS = ("sw", "isolated_sw", "tiled_isolated_sw")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel kind plus parameters.

    Products follow the row-vector convention: ``composition([P1, P2])`` is
    the matrix ``P1 @ P2`` and its sampler applies ``P1`` first. A scan over
    ``v1, ..., vn`` is ``K_v1 @ ... @ K_vn``.
    """

    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        required, optional = KINDS[self.kind]
        unknown = set(self.params) - required - optional
        if unknown:
            raise ConfigError(f"unknown key(s) in kernel ({self.kind}): {', '.join(sorted(unknown))}")
        missing = required - set(self.params)
        if missing:
            raise ConfigError(f"missing key(s) in kernel ({self.kind}): {', '.join(sorted(missing))}")
        p = dict(self.params)
        for key in ("base",):
            if key in p and not isinstance(p[key], KernelSpec):
                p[key] = spec_from_dict(p[key])
        if "kernels" in p:
            p["kernels"] = tuple(k if isinstance(k, KernelSpec) else spec_from_dict(k) for k in p["kernels"])
        if "blocks" in p:
            p["blocks"] = tuple(tuple(int(v) for v in b) for b in p["blocks"])
            if not p["blocks"]:
                raise ConfigError("block dynamics needs at least one block")
        if "block" in p:
            p["block"] = tuple(int(v) for v in p["block"])
        if "hold" in p and not 0.0 <= float(p["hold"]) < 1.0:
            raise ConfigError("lazy hold probability must lie in [0, 1)")
        if "L" in p and (int(p["L"]) != p["L"] or p["L"] < 1 or p["L"] % 2 == 0):
            raise ConfigError(f"tiling side L must be a positive odd integer, got {p['L']!r}")
        if "inner" in p and p["inner"] not in TILED_INNER:
            raise ConfigError(f"inner kernel must be one of {TILED_INNER}")
        if "order" in p and isinstance(p["order"], str) and p["order"] not in SCAN_ORDERS:
            raise ConfigError(f"scan order must be one of {SCAN_ORDERS} or a vertex list")
        object.__setattr__(self, "params", p)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            if isinstance(v, KernelSpec):
                v = v.to_dict()
            elif k == "kernels":
                v = [x.to_dict() for x in v]
            elif k == "blocks":
                v = [list(b) for b in v]
            elif k == "block":
                v = list(v)
            out[k] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, KernelSpec) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.to_json())

    def __repr__(self):
        return f"KernelSpec({self.to_json()})"


def spec_from_dict(spec: Mapping) -> KernelSpec:
    if isinstance(spec, KernelSpec):
        return spec
    spec = dict(spec)
    if "kind" not in spec:
        raise ConfigError("missing key(s) in kernel: kind")
    kind = spec.pop("kind")
    return KernelSpec(kind, spec)


def spec_from_json(text: str) -> KernelSpec:
    return spec_from_dict(json.loads(text))
