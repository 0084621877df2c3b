import json
import subprocess
import sys

import pytest

from jumpfilter import cli
from jumpfilter.errors import ConfigError, NumericalFailure


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(args):
    return cli.main([str(a) for a in args])


FILTER_CFG = """seed = 7
model = "clipped-linear-1d"
T = 0.3
N_particles = 300

[filter]
density_points = 51
record_every = 10
"""


def test_filter_twice_is_byte_identical(tmp_path):
    cfg = write(tmp_path, FILTER_CFG)
    for out in ("a", "b"):
        assert run(["filter", "--config", cfg, "--out-dir", tmp_path / out]) == 0
    for name in ("observations.csv", "moments.csv", "density.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head = (tmp_path / "a" / "moments.csv").read_text().splitlines()[:2]
    assert head[0].startswith("# config_sha256=") and head[1] == "# seed=7"


def test_seed_override(tmp_path):
    cfg = write(tmp_path, FILTER_CFG)
    assert run(["filter", "--config", cfg, "--out-dir", tmp_path / "o", "--seed", "8"]) == 0
    assert "# seed=8" in (tmp_path / "o" / "moments.csv").read_text()


def test_grid_oracle_column(tmp_path):
    cfg = write(tmp_path, FILTER_CFG + "grid_oracle = true\n")
    assert run(["filter", "--config", cfg, "--out-dir", tmp_path / "o"]) == 0
    header = [l for l in (tmp_path / "o" / "density.csv").read_text().splitlines() if not l.startswith("#")][0]
    assert header == "x_1,density,grid_density"


def test_verify_lemmas_trivial_constants(tmp_path):
    cfg = write(tmp_path, 'seed = 0\nmodel = "trivial-constants"\n')
    assert run(["verify-lemmas", "--config", cfg, "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "lemmas.json").read_text())
    assert doc["all_ok"] and doc["seed"] == 0 and len(doc["config_sha256"]) == 64


def test_verify_lemmas_failed_verdict_exits_2(tmp_path, monkeypatch):
    import jumpfilter.verifier as V

    real = V.lemma_suite

    def broken(*a, **k):
        reps = real(*a, **k)
        reps[0][1].verdicts["finite"] = False
        return reps

    monkeypatch.setattr(V, "lemma_suite", broken)
    cfg = write(tmp_path, 'seed = 0\nmodel = "trivial-constants"\n')
    assert run(["verify-lemmas", "--config", cfg, "--out-dir", tmp_path]) == 2


def test_verify_adjoints(tmp_path):
    cfg = write(tmp_path, "seed = 1\n[verify_adjoints]\nn_triples = 2\ndims = [1]\n")
    assert run(["verify-adjoints", "--config", cfg, "--out-dir", tmp_path]) == 0
    doc = json.loads((tmp_path / "adjoints.json").read_text())
    assert len(doc["checks"]) == 6 and doc["max_relative_error"] <= 1e-7


def test_benchmark_subset(tmp_path, capsys):
    cfg = write(tmp_path, "seed = 0\n[benchmark]\ncriteria = [3]\n")
    assert run(["benchmark", "--config", cfg, "--out-dir", tmp_path]) == 0
    table = (tmp_path / "benchmark.txt").read_text()
    assert "PASS" in table and " s)" not in table  # runtimes go to stdout only
    assert "criterion  3 PASS" in capsys.readouterr().out


def test_simulate_paths(tmp_path):
    cfg = write(tmp_path, 'seed = 2\nT = 0.1\n[simulate]\nn_paths = 2\n')
    assert run(["simulate", "--config", cfg, "--out-dir", tmp_path, "--threads", "2"]) == 0
    assert (tmp_path / "path_0000.csv").exists() and (tmp_path / "path_0001.csv").exists()


@pytest.mark.parametrize(
    "text, fragment",
    [
        ('model = "trivial-constants"\n', "missing required key 'seed'"),
        ("seed = 1\n\n[filter]\nbogus = 1\n", ":4: unknown key 'bogus' in [filter]"),
        ("seed = 1\n[nope]\nx = 1\n", ":2: unknown section [nope]"),
        ('seed = 1\nT = "long"\n', ":2: 'T' must be float"),
        ("seed = 1\ndt = 2.0\n", ":2: 'dt' must not exceed 'T'"),
        ('seed = 1\nmodel = "x"\n', ":2: unknown model 'x'"),
        ('seed = 1\nmodel = "clipped-linear-1d"\n[params]\nrate = 1.0\n', ":4: model 'clipped-linear-1d' has no parameter 'rate'"),
        ("seed = 1\n[benchmark]\ncriteria = [12]\n", ":3: 'benchmark.criteria'"),
        ("seed = = 1\n", "line 1"),
        ("seed = -3\n", ":1: 'seed' must be non-negative"),
        ("seed = 1\np = 3\n", ":2: 'p' must be an even integer"),
    ],
)
def test_config_errors_are_line_precise(tmp_path, text, fragment, capsys):
    cfg = write(tmp_path, text)
    with pytest.raises(ConfigError) as err:
        cli.load_config(cfg)
    assert fragment in str(err.value)
    assert run(["filter", "--config", cfg, "--out-dir", tmp_path]) == 1
    assert fragment in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(["filter", "--config", tmp_path / "absent.toml"]) == 1


def test_threads_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, FILTER_CFG)
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert run(["filter", "--config", cfg, "--out-dir", tmp_path]) == 1


def test_numerical_failure_exits_2(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalFailure("diverged", step=3)

    monkeypatch.setitem(cli.COMMANDS, "filter", boom)
    cfg = write(tmp_path, FILTER_CFG)
    assert run(["filter", "--config", cfg, "--out-dir", tmp_path]) == 2
    err = capsys.readouterr().err
    assert "diverged" in err and '"step": 3' in err


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, 'seed = 0\nmodel = "trivial-constants"\n')
    res = subprocess.run([sys.executable, "-m", "jumpfilter", "verify-lemmas", "--config", str(cfg),
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def test_demo_configs_validate():
    from pathlib import Path

    configs = sorted((Path(__file__).parents[1] / "demos" / "configs").glob("*.toml"))
    assert configs
    for path in configs:
        cli.load_config(path)
