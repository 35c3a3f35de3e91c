import hashlib
import json
import math

import pytest

from spinlab import SpinSystem, build_cube, ising
from spinlab.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERICAL, main
from spinlab.errors import ConfigError, NumericalError
from spinlab.experiments import OUTPUT_ROOT_ENV, fmt, load_config, run, validate
from spinlab.kernels import exact_matrix
from spinlab.spectral import spectral_gap


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


GAP = {"experiment": "gap-report", "model": {"preset": "ising", "beta": 0.0}, "cube": {"d": 2, "sides": [1, 2]},
       "kernels": [{"kind": "glauber"}, {"kind": "scan", "order": "lex"}], "seed": 1, "output": "gap"}


def test_gap_report_delegates_to_spectral_module(tmp_path):
    man = run(GAP, output_root=tmp_path)
    rows = (tmp_path / "gap" / "gaps.csv").read_text().splitlines()
    assert rows[0].startswith("kernel,reversible,gap_of,gap")
    glauber = rows[1].split(",")
    system = SpinSystem(ising(0.0), build_cube(2, [1, 2]))
    assert float(glauber[4]) == spectral_gap(exact_matrix(system, {"kind": "glauber"})).gap == 0.5
    assert man["seed"] == 1 and man["config"] == GAP
    assert {"numpy", "scipy", "numba", "spinlab", "backend", "python"} <= set(man["versions"])
    for art in man["artifacts"]:
        data = (tmp_path / "gap" / art["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == art["sha256"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = {"experiment": "coupling-scaling", "model": {"preset": "ising", "beta": 0.4},
           "kernels": [{"kind": "scan", "order": "EO"}], "seed": 5, "trials": 40,
           "params": {"sizes": [[3, 3], [5, 5]], "statistic": "coupling_time"}}
    a = run({**cfg, "output": "a"}, workers=1, output_root=tmp_path)
    b = run({**cfg, "output": "b"}, workers=4, output_root=tmp_path)
    assert [x["sha256"] for x in a["artifacts"]] == [x["sha256"] for x in b["artifacts"]]
    names = [x["path"] for x in a["artifacts"]]
    assert "scaling.csv" in names and "trajectories.csv" in names


def test_independent_ladder_is_flat(tmp_path):
    cfg = {"experiment": "coupling-scaling", "model": {"preset": "ising", "beta": 0.0},
           "kernels": [{"kind": "scan", "order": "EO"}], "seed": 2, "trials": 30, "output": "flat",
           "params": {"sizes": [[4, 4], [8, 8], [16, 16]], "statistic": "coupling_time"}}
    run(cfg, output_root=tmp_path)
    lines = (tmp_path / "flat" / "scaling.csv").read_text().splitlines()[1:]
    assert [line.split(",")[2] for line in lines] == ["1", "1", "1"]
    ratio = [float(line.split(",")[5]) for line in lines]
    assert ratio == pytest.approx([1 / math.log(16), 1 / math.log(64), 1 / math.log(256)])


def test_cluster_gap_ladder(tmp_path):
    cfg = {"experiment": "coupling-scaling", "model": {"preset": "ising", "beta": 0.3}, "seed": 0, "output": "sw",
           "params": {"sizes": [[1, 2], [1, 3], [1, 4], [1, 5]], "statistic": "sw_gap"}}
    run(cfg, output_root=tmp_path)
    rows = (tmp_path / "sw" / "scaling.csv").read_text().splitlines()[1:]
    for row, k in zip(rows, range(2, 6)):
        gap = spectral_gap(exact_matrix(SpinSystem(ising(0.3), build_cube(2, [1, k])), {"kind": "sw"})).gap
        assert float(row.split(",")[2]) == gap


def test_timeout_rows_are_kept(tmp_path):
    cfg = {"experiment": "coupling-scaling", "model": {"preset": "ising", "beta": 2.0},
           "kernels": [{"kind": "scan", "order": "EO"}], "seed": 2, "trials": 5, "output": "slow",
           "params": {"sizes": [[4, 4], [6, 6]], "statistic": "coupling_time", "max_steps": 1}}
    run(cfg, output_root=tmp_path)
    rows = (tmp_path / "slow" / "scaling.csv").read_text().splitlines()[1:]
    assert len(rows) == 2 and all(r.endswith(",true") and ",inf," in r for r in rows)


@pytest.mark.parametrize("exp,extra", [
    ("inequality-suite", {"cube": {"d": 2, "sides": [2, 2]},
                          "params": {"checks": [{"name": "sw_ge_isolated"}], "random_block_families": 2,
                                     "random_sts": 2}}),
    ("ssm-scan", {"params": {"sizes": [[2, 2]]}}),
    ("contraction", {"cube": {"d": 1, "sides": [5]}, "params": {"L": 3, "method": "exact"}}),
    ("contraction", {"cube": {"d": 2, "sides": [5, 5]}, "trials": 500,
                     "params": {"L": 1, "method": "monte_carlo", "backgrounds": ["plus", "random"]}}),
    ("factorization-check", {"cube": {"d": 2, "sides": [2, 2]}, "params": {"L": 1}}),
])
def test_every_experiment_kind_runs(tmp_path, exp, extra):
    cfg = {"experiment": exp, "model": {"preset": "ising", "beta": 0.4}, "seed": 3, **extra}
    man = run(cfg, output_root=tmp_path)
    assert man["artifacts"] and (tmp_path / f"{exp}-3" / "manifest.json").exists()
    summary = json.loads((tmp_path / f"{exp}-3" / "summary.json").read_text())
    if exp == "factorization-check":
        assert max(summary.values()) < 1e-12
    if exp == "inequality-suite":
        assert summary["all_hold"]


def test_strict_schema_names_the_key():
    bad = json.loads(json.dumps(GAP))
    bad["model"] = {"preset": "ising", "betta": 0.0}
    with pytest.raises(ConfigError, match="betta"):
        validate(bad)
    with pytest.raises(ConfigError, match="colour"):
        load_config({**GAP, "colour": 1})
    with pytest.raises(ConfigError, match="beta"):
        validate({**GAP, "model": {"preset": "ising"}})  # no default for physical parameters
    with pytest.raises(ConfigError, match="L"):
        validate({"experiment": "contraction", "model": {"preset": "ising", "beta": 0.1}, "seed": 0,
                  "cube": {"d": 1, "sides": [5]}, "params": {"method": "exact"}})


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    good = write(tmp_path, "good.json", GAP)
    assert main(["validate", str(good)]) == 0
    assert main(["run", str(good)]) == 0
    assert (tmp_path / "root" / "gap" / "manifest.json").exists()
    assert main(["report", str(tmp_path / "root" / "gap" / "manifest.json")]) == 0
    out = capsys.readouterr().out
    assert "gap-report" in out and "gaps.csv" in out

    bad = write(tmp_path, "bad.json", {**GAP, "model": {"preset": "ising", "betta": 0.0}})
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "betta" in capsys.readouterr().err

    big = write(tmp_path, "big.json", {**GAP, "cube": {"d": 2, "sides": [4, 4]}})
    assert main(["validate", str(big)]) == EXIT_GUARD
    assert "states <= 4096" in capsys.readouterr().err

    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(good), "--output-root", str(blocker)]) == EXIT_CONFIG

    def boom(*a, **k):
        raise NumericalError("eigensolver failed")

    monkeypatch.setattr("spinlab.cli.run", boom)
    assert main(["run", str(good)]) == EXIT_NUMERICAL


def test_number_format():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(True) == "true" and fmt(math.inf) == "inf"
