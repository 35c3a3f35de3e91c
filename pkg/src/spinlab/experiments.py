"""Configuration-driven experiments with reproducible, hashed artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._accel import BACKEND
from .coupling import coupling_time, path_coupling_contraction, path_coupling_exact
from .errors import CapacityError, ConfigError
from .inequalities import INEQUALITIES, verify_comparison
from .kernels.edwards_sokal import ES_EDGE_LIMIT, ES_VERTEX_LIMIT, es_factorize
from .kernels.exact import DENSE_LIMIT, SW_EDGE_LIMIT, SW_VERTEX_LIMIT, exact_matrix
from .kernels.spec import SW_KINDS, spec_from_dict
from .lattice import LatticeCube, build_cube
from .measures import ENUMERATION_BITS, SpinSystem
from .models import boundary_from_dict, model_from_dict
from .spectral import relaxation_time, reversiblization, spectral_gap
from .ssm import EVIDENCE_NOTE, is_nonincreasing, max_profile, ssm_fit, ssm_scan
from .streams import map_ordered, substream

OUTPUT_ROOT_ENV = "SPINLAB_OUTPUT_ROOT"
EXPERIMENTS = ("gap-report", "inequality-suite", "coupling-scaling", "ssm-scan", "contraction",
               "factorization-check")

_CUBE = {
    "type": "object",
    "properties": {"d": {"type": "integer", "minimum": 1},
                   "sides": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}},
    "required": ["d", "sides"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {"type": "object"},
        "cube": _CUBE,
        "boundary": {"type": "object"},
        "kernels": {"type": "array", "items": {"type": "object"}},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "trials": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "params": {"type": "object"},
    },
    "required": ["experiment", "model", "seed"],
    "additionalProperties": False,
}

# experiment -> (required params, optional params)
PARAMS = {
    "gap-report": (set(), set()),
    "inequality-suite": (set(), {"checks", "random_block_families", "random_sts"}),
    "coupling-scaling": ({"sizes", "statistic"}, {"eps", "max_steps"}),
    "ssm-scan": (set(), {"boundaries", "targets", "sizes"}),
    "contraction": ({"L", "method"}, {"backgrounds", "vertex"}),
    "factorization-check": (set(), {"L"}),
}


def _keys(obj, required, optional, where):
    unknown = set(obj) - required - optional
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing key(s) in {where}: {', '.join(sorted(missing))}")


def load_config(source) -> dict:
    """Parse (path or dict) and validate a config; raises ConfigError."""
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        config = json.loads(json.dumps(source))
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "config"
        raise ConfigError(f"{where}: {exc.message}") from None
    _keys(config.get("params", {}), *PARAMS[config["experiment"]], where=f"params ({config['experiment']})")
    return config


def _cube(config) -> LatticeCube:
    if "cube" not in config:
        raise ConfigError("missing key(s) in config: cube")
    c = config["cube"]
    try:
        return build_cube(c["d"], c["sides"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _kernels(config):
    if not config.get("kernels"):
        raise ConfigError("missing key(s) in config: kernels")
    return [spec_from_dict(k) for k in config["kernels"]]


def _system(config, cube=None) -> SpinSystem:
    cube = _cube(config) if cube is None else cube
    model = model_from_dict(config["model"])
    try:
        bc = boundary_from_dict(config.get("boundary"), cube)
        return SpinSystem(model, cube, bc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _guard(ok: bool, guard: str, message: str):
    if not ok:
        raise CapacityError(guard, message)


def _states_bound(n: int, q: int) -> float:
    return n * math.log2(q)


def check_guards(config: dict):
    """Reject configs whose sizes exceed an exact-computation guard (names it)."""
    exp = config["experiment"]
    model = model_from_dict(config["model"])
    q = model.q
    params = config.get("params", {})
    if exp == "coupling-scaling":
        if params["statistic"] not in ("coupling_time", "sw_gap"):
            raise ConfigError("params.statistic must be 'coupling_time' or 'sw_gap'")
        if params["statistic"] == "sw_gap":
            for sides in params["sizes"]:
                c = build_cube(len(sides), sides)
                _guard(c.num_edges <= SW_EDGE_LIMIT and c.n <= SW_VERTEX_LIMIT and q ** c.n <= DENSE_LIMIT,
                       f"|E| <= {SW_EDGE_LIMIT}, n <= {SW_VERTEX_LIMIT}, states <= {DENSE_LIMIT}",
                       f"size {sides} is too large for an exact Swendsen-Wang gap")
        return
    if exp == "ssm-scan" and params.get("sizes"):
        for sides in params["sizes"]:
            _guard(_states_bound(int(np.prod(sides)), q) <= ENUMERATION_BITS, f"n*log2(q) <= {ENUMERATION_BITS}",
                   f"box {sides} exceeds the enumeration guard")
        return
    cube = _cube(config)
    n = cube.n
    if exp in ("gap-report", "inequality-suite", "factorization-check", "ssm-scan"):
        _guard(_states_bound(n, q) <= ENUMERATION_BITS, f"n*log2(q) <= {ENUMERATION_BITS}",
               f"{q}^{n} states exceed the enumeration guard")
    if exp in ("gap-report", "inequality-suite"):
        _guard(q ** n <= DENSE_LIMIT, f"states <= {DENSE_LIMIT}", f"{q}^{n} states exceed the dense spectral guard")
        kinds = [k.kind for k in _kernels(config)] if exp == "gap-report" else ["sw"]
        if any(k in SW_KINDS for k in kinds) or exp == "inequality-suite" and model.is_potts_zero_field:
            if any(k in SW_KINDS for k in kinds) or any(c.get("name") in
                                                         ("sw_ge_isolated", "isolated_ge_tiled", "local_gap_bound")
                                                         for c in params.get("checks", [])):
                _guard(cube.num_edges <= SW_EDGE_LIMIT and n <= SW_VERTEX_LIMIT,
                       f"|E| <= {SW_EDGE_LIMIT}, n <= {SW_VERTEX_LIMIT}",
                       "exact Swendsen-Wang matrices need a smaller graph")
    if exp == "factorization-check":
        _guard(cube.num_edges <= ES_EDGE_LIMIT and n <= ES_VERTEX_LIMIT,
               f"|E| <= {ES_EDGE_LIMIT}, n <= {ES_VERTEX_LIMIT}", "joint space too large to enumerate")
    if exp == "contraction":
        if params["method"] not in ("exact", "monte_carlo"):
            raise ConfigError("params.method must be 'exact' or 'monte_carlo'")
        if params["method"] == "exact":
            _guard(n * 2 ** (n - 1) <= 1 << 16, "adjacent pairs <= 65536", "too many adjacent pairs to enumerate")
        else:
            L = params["L"]
            _guard(q ** (L ** (cube.d - 1)) <= 1024, "q^slice <= 1024",
                   f"cube slices of {L ** (cube.d - 1)} sites exceed the block sampler guard")
            if "trials" not in config:
                raise ConfigError("missing key(s) in config: trials")
    if exp == "coupling-scaling" and "trials" not in config:
        raise ConfigError("missing key(s) in config: trials")


def validate(source) -> dict:
    config = load_config(source)
    model_from_dict(config["model"])
    if "kernels" in config:
        _kernels(config)
    check_guards(config)
    return config


# --- artifacts ----------------------------------------------------------------------------


def fmt(x) -> str:
    """Locale-free number formatting with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: Path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- experiments ------------------------------------------------------------------------------


def _gap_report(config, out: Path, workers: int = 1):
    system = _system(config)

    def cell(spec):
        chain = exact_matrix(system, spec)
        reversible = chain.detailed_balance_residual() <= 1e-8
        rep = spectral_gap(chain if reversible else reversiblization(chain))
        return {"kernel": spec.to_json(), "reversible": reversible, "gap": rep.gap, "lambda2": rep.lambda2,
                "lambda_min": rep.lambda_min, "psd": rep.psd, "relaxation": relaxation_time(chain),
                "gap_of": "P" if reversible else "P P*"}

    rows = map_ordered(cell, _kernels(config), workers)
    cols = ["kernel", "reversible", "gap_of", "gap", "lambda2", "lambda_min", "psd", "relaxation"]
    write_csv(out / "gaps.csv", rows, cols)
    return {"gaps": rows}


def _random_subset(rng, n, p=0.5):
    s = np.flatnonzero(rng.random(n) < p)
    return s if len(s) else np.array([int(rng.integers(n))])


def random_block_family(rng, n: int) -> list:
    """2-4 random blocks covering every vertex."""
    r = int(rng.integers(2, 5))
    blocks = [set(_random_subset(rng, n).tolist()) for _ in range(r)]
    for v in range(n):
        if not any(v in b for b in blocks):
            blocks[int(rng.integers(r))].add(v)
    return [sorted(b) for b in blocks]


def random_sts_instance(rng, n: int) -> dict:
    """Random ``a`` and heat-bath blocks ``A``, ``B`` with ``A + B = V``."""
    A = _random_subset(rng, n)
    rest = np.setdiff1d(np.arange(n), A)
    extra = A[rng.random(len(A)) < 0.3]
    B = np.union1d(rest, extra)
    if len(B) == 0:
        B = np.array([int(rng.integers(n))])
    return {"S_block": A.tolist(), "T_block": B.tolist(), "a": float(rng.uniform(0.05, 0.95))}


def _inequality_suite(config, out: Path, workers: int = 1):
    system = _system(config)
    params = config.get("params", {})
    rng = substream(config["seed"], 0)
    jobs = []
    for check in params.get("checks", []):
        check = dict(check)
        if "name" not in check:
            raise ConfigError("missing key(s) in params.checks: name")
        name = check.pop("name")
        if name not in INEQUALITIES:
            raise ConfigError(f"unknown inequality {name!r}")
        jobs.append((name, f"{name}", check))
    for i in range(params.get("random_block_families", 0)):
        jobs.append(("block_ge_even_odd", f"family-{i}", {"blocks": random_block_family(rng, system.n)}))
    for i in range(params.get("random_sts", 0)):
        jobs.append(("sts_ge_mixture", f"sts-{i}", random_sts_instance(rng, system.n)))
    rows = map_ordered(lambda job: verify_comparison(job[0], system, instance=job[1], **job[2]).to_row(), jobs, workers)
    write_csv(out / "inequalities.csv", rows, ["name", "instance", "lhs", "rhs", "margin", "holds"])
    return {"checks": len(rows), "all_hold": all(r["holds"] for r in rows),
            "min_margin": min((r["margin"] for r in rows), default=math.nan)}


def scaling_series(config, out: Path, workers: int = 1):
    """One row per size with the statistic, its CI and the ratio to log n."""
    params = config["params"]
    sizes = [list(s) for s in params["sizes"]]
    if [int(np.prod(s)) for s in sizes] != sorted(int(np.prod(s)) for s in sizes):
        raise ConfigError("params.sizes must be in ascending order of volume")
    stat = params["statistic"]
    rows, traj = [], []
    for idx, sides in enumerate(sizes):
        cube = build_cube(len(sides), sides)
        system = _system(config, cube)
        n = cube.n
        if stat == "sw_gap":
            g = spectral_gap(exact_matrix(system, {"kind": "sw"})).gap
            rows.append({"sides": "x".join(map(str, sides)), "n": n, "estimate": g, "ci_low": g, "ci_high": g,
                         "ratio": g / math.log(n) if n > 1 else math.nan, "timed_out": False})
            continue
        spec = _kernels(config)[0]
        est = coupling_time(system, spec, eps=params.get("eps", 0.25), trials=config["trials"],
                            seed=int(substream(config["seed"], idx).integers(2 ** 63)),
                            max_steps=params.get("max_steps"), workers=workers)
        rows.append({"sides": "x".join(map(str, sides)), "n": n, "estimate": est.estimate, "ci_low": est.ci_low,
                     "ci_high": est.ci_high, "ratio": est.estimate / math.log(n) if n > 1 else math.nan,
                     "timed_out": est.timed_out})
        for run in est.runs:
            for t, h in enumerate(run.hamming, start=1):
                traj.append({"sides": rows[-1]["sides"], "trial": run.trial, "step": t, "hamming": int(h),
                             "coalesced": bool(h == 0)})
    write_csv(out / "scaling.csv", rows, ["sides", "n", "estimate", "ci_low", "ci_high", "ratio", "timed_out"])
    if traj:
        write_csv(out / "trajectories.csv", traj, ["sides", "trial", "step", "hamming", "coalesced"])
    finite = [r["ratio"] for r in rows if math.isfinite(r["ratio"]) and r["ratio"] > 0]
    spread = max(finite) / min(finite) if finite else math.nan
    return {"rows": rows, "ratio_spread": spread}


def _ssm_scan(config, out: Path):
    params = config.get("params", {})
    sizes = params.get("sizes") or [_cube(config).sides]
    model = model_from_dict(config["model"])
    rows, samples = [], []
    for idx, sides in enumerate(sizes):
        cube = build_cube(len(sides), sides)
        smp = ssm_scan(cube, model, tuple(params.get("boundaries", ("plus", "minus", "random", "random"))),
                       params.get("targets", "singletons"), rng=substream(config["seed"], idx))
        samples.extend(smp)
        rows.extend(s.to_row() for s in smp)
    write_csv(out / "ssm.csv", rows, ["sides", "B", "u", "psi", "dist", "tv"])
    fit = ssm_fit(samples)
    profile = max_profile(samples)
    summary = {"fit": fit.to_dict(), "profile": profile, "profile_nonincreasing": is_nonincreasing(profile),
               "note": EVIDENCE_NOTE}
    write_json(out / "fit.json", {"a_hat": fit.a_hat, "b_hat": fit.b_hat, "rms": fit.rms, "status": fit.status})
    return summary


def _contraction(config, out: Path, workers: int = 1):
    system = _system(config)
    params = config["params"]
    L = params["L"]
    if params["method"] == "exact":
        res = path_coupling_exact(system, L)
        summary = {"worst": res.worst, "mean": res.mean, "pairs": res.pairs, "worst_pair": res.worst_pair}
        write_json(out / "contraction.json", summary)
        return summary
    rows = []
    for i, bg in enumerate(params.get("backgrounds", ["random"])):
        est = path_coupling_contraction(system, L, config["trials"], seed=int(substream(config["seed"], i).integers(2 ** 63)),
                                        vertex=params.get("vertex"), background=bg, workers=workers)
        rows.append(est.to_dict())
    write_csv(out / "contraction.csv", rows, ["background", "vertex", "trials", "mean", "ci_low", "ci_high"])
    return {"rows": rows, "worst_upper": max(r["ci_high"] for r in rows)}


def _factorization(config, out: Path):
    system = _system(config)
    L = config.get("params", {}).get("L")
    es = es_factorize(system, L)
    sw = exact_matrix(system, {"kind": "sw"}).dense()
    iso = exact_matrix(system, {"kind": "isolated_sw"}).dense()
    res = {
        "sw_vs_TRT": float(np.abs(es.T @ es.R @ es.Tstar - sw).max()),
        "isolated_vs_TQT": float(np.abs(es.T @ es.Q @ es.Tstar - iso).max()),
        "R_vs_QRQ": float(np.abs(es.Q @ es.R @ es.Q - es.R).max()),
        "marginal_vs_gibbs": float(np.abs(es.spin_marginal() - system.gibbs.probs).max()),
    }
    if L is not None:
        tiled = exact_matrix(system, {"kind": "tiled_isolated_sw", "L": L}).dense()
        res["tiled_vs_TQkT"] = float(np.abs(np.mean([es.T @ Qk @ es.Tstar for Qk in es.Qk], axis=0) - tiled).max())
        res["Q_vs_QkQQk"] = max(float(np.abs(Qk @ es.Q @ Qk - es.Q).max()) for Qk in es.Qk)
    write_json(out / "factorization.json", res)
    return res


def output_dir(config, override_root=None) -> Path:
    root = Path(override_root or os.environ.get(OUTPUT_ROOT_ENV) or ".")
    return root / config.get("output", f"{config['experiment']}-{config['seed']}")


def versions() -> dict:
    import numba
    import scipy

    return {"spinlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "backend": BACKEND}


def run(source, workers: int | None = None, output_root=None) -> dict:
    """Run an experiment; returns the manifest (also written as manifest.json)."""
    config = validate(source)
    workers = workers or config.get("workers", 1)
    out = output_dir(config, output_root)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    start = time.perf_counter()
    exp = config["experiment"]
    if exp == "gap-report":
        summary = _gap_report(config, out, workers)
    elif exp == "inequality-suite":
        summary = _inequality_suite(config, out, workers)
    elif exp == "coupling-scaling":
        summary = scaling_series(config, out, workers)
    elif exp == "ssm-scan":
        summary = _ssm_scan(config, out)
    elif exp == "contraction":
        summary = _contraction(config, out, workers)
    else:
        summary = _factorization(config, out)
    write_json(out / "summary.json", summary)
    wall = time.perf_counter() - start
    artifacts = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config": config,
        "versions": versions(),
        "seed": config["seed"],
        "wall_time": wall,
        "artifacts": [{"path": p.name, "sha256": sha256(p)} for p in artifacts],
    }
    write_json(out / "manifest.json", manifest)
    manifest["output_dir"] = str(out)
    return manifest
