"""Command line runner: ``jumpfilter <subcommand> --config run.toml``.

Exit codes: 0 ok, 1 configuration or validation error, 2 numerical failure
(including failed verifier verdicts and failed acceptance criteria).
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .errors import ConfigError, ContractViolation, NumericalFailure

THREADS_ENV = "JUMPFILTER_THREADS"
SUBCOMMANDS = ("simulate", "filter", "verify-lemmas", "verify-adjoints", "benchmark")

# key -> (type tag, default); a default of ... marks a required key
_TOP = {
    "seed": ("int", ...),
    "model": ("str", "jump-shared-1d"),
    "T": ("float", 1.0),
    "dt": ("float", 1e-3),
    "N_particles": ("int", 2000),
    "eps_out": ("float", None),
    "p": ("int", 2),
    "out_dir": ("str", "out"),
}
_SECTIONS = {
    "params": None,  # validated against the model registry
    "simulate": {"n_paths": ("int", 1)},
    "filter": {
        "grid_oracle": ("bool", False),
        "resample": ("bool", False),
        "density_points": ("int", 201),
        "record_every": ("int", 1),
    },
    "verify_lemmas": {
        "eps": ("float", 0.5),
        "n_atoms": ("int", 4),
        "models": ("list[str]", None),
    },
    "verify_adjoints": {
        "n_triples": ("int", 50),
        "dims": ("list[int]", [1, 2]),
    },
    "benchmark": {"criteria": ("list[int]", None)},
}


@dataclass
class ExperimentConfig:
    seed: int
    model: str
    T: float
    dt: float
    N_particles: int
    eps_out: float | None
    p: int
    out_dir: str
    params: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    filter: dict = field(default_factory=dict)
    verify_lemmas: dict = field(default_factory=dict)
    verify_adjoints: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)
    sha256: str = ""
    source: str = "<config>"


# --------------------------------------------------------------------------
# parsing and validation
# --------------------------------------------------------------------------

_HEADER = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-\" ]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")


def _key_lines(text):
    """Map (table, key) -> 1-based line of its definition, for error messages."""
    where = {}
    table = ""
    for i, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            table = m.group(1).replace('"', "").replace(" ", "")
            where.setdefault((table, None), i)
            continue
        m = _KEY.match(line)
        if m:
            where.setdefault((table, m.group(1).strip('"')), i)
    return where


class _Validator:
    def __init__(self, source, text):
        self.source = source
        self.lines = _key_lines(text)

    def fail(self, table, key, msg):
        line = self.lines.get((table, key)) or self.lines.get((table, None))
        loc = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{loc}: {msg}")

    def value(self, table, key, tag, v):
        name = f"{table}.{key}" if table else key
        ok = {
            "int": isinstance(v, int) and not isinstance(v, bool),
            "float": isinstance(v, (int, float)) and not isinstance(v, bool),
            "bool": isinstance(v, bool),
            "str": isinstance(v, str),
            "list[str]": isinstance(v, list) and all(isinstance(x, str) for x in v),
            "list[int]": isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        }[tag]
        if not ok:
            self.fail(table, key, f"'{name}' must be {tag}, got {type(v).__name__}")
        return float(v) if tag == "float" else v

    def table(self, table, data, schema):
        out = {}
        for key, v in data.items():
            if key not in schema:
                self.fail(table, key, f"unknown key '{key}' in [{table}]" if table else f"unknown key '{key}'")
            out[key] = self.value(table, key, schema[key][0], v)
        for key, (_, default) in schema.items():
            if key not in out:
                if default is ...:
                    self.fail(table, None, f"missing required key '{key}'")
                out[key] = default
        return out


def load_config(path, seed_override=None):
    """Parse and validate a TOML experiment file; raises ConfigError with line numbers."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    val = _Validator(str(path), text)

    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    for k, v in data.items():
        if isinstance(v, dict) and k not in _SECTIONS:
            val.fail(k, None, f"unknown section [{k}]")
    cfg = val.table("", top, _TOP)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if cfg["seed"] < 0:
        val.fail("", "seed", "'seed' must be non-negative")
    for k in ("T", "dt"):
        if not cfg[k] > 0:
            val.fail("", k, f"'{k}' must be positive")
    if cfg["dt"] > cfg["T"]:
        val.fail("", "dt", "'dt' must not exceed 'T'")
    if cfg["N_particles"] < 1:
        val.fail("", "N_particles", "'N_particles' must be at least 1")
    if cfg["eps_out"] is not None and not cfg["eps_out"] > 0:
        val.fail("", "eps_out", "'eps_out' must be positive")
    if cfg["p"] < 2 or cfg["p"] % 2:
        val.fail("", "p", "'p' must be an even integer >= 2")

    from .models import MODEL_REGISTRY, model_parameters

    if cfg["model"] not in MODEL_REGISTRY:
        val.fail("", "model", f"unknown model '{cfg['model']}'; known: {', '.join(sorted(MODEL_REGISTRY))}")
    known = model_parameters(cfg["model"])
    params = {}
    for k, v in data.get("params", {}).items():
        if k not in known:
            val.fail("params", k, f"model '{cfg['model']}' has no parameter '{k}'; known: {', '.join(sorted(known))}")
        params[k] = val.value("params", k, "float", v)
    cfg["params"] = params

    for sec, schema in _SECTIONS.items():
        if schema is not None:
            cfg[sec] = val.table(sec, data.get(sec, {}), schema)
    for key in ("n_paths",):
        if cfg["simulate"][key] < 1:
            val.fail("simulate", key, f"'simulate.{key}' must be at least 1")
    for key in ("density_points", "record_every"):
        if cfg["filter"][key] < 1:
            val.fail("filter", key, f"'filter.{key}' must be at least 1")
    vl = cfg["verify_lemmas"]
    if not vl["eps"] > 0:
        val.fail("verify_lemmas", "eps", "'verify_lemmas.eps' must be positive")
    if vl["n_atoms"] < 1:
        val.fail("verify_lemmas", "n_atoms", "'verify_lemmas.n_atoms' must be at least 1")
    for m in vl["models"] or []:
        if m not in MODEL_REGISTRY:
            val.fail("verify_lemmas", "models", f"unknown model '{m}' in 'verify_lemmas.models'")
    va = cfg["verify_adjoints"]
    if va["n_triples"] < 1:
        val.fail("verify_adjoints", "n_triples", "'verify_adjoints.n_triples' must be at least 1")
    if not va["dims"] or any(d not in (1, 2) for d in va["dims"]):
        val.fail("verify_adjoints", "dims", "'verify_adjoints.dims' must be a non-empty list drawn from [1, 2]")
    from .acceptance import CRITERIA

    crit = cfg["benchmark"]["criteria"]
    if crit is not None and (not crit or any(c not in CRITERIA for c in crit)):
        val.fail("benchmark", "criteria", f"'benchmark.criteria' must list numbers from 1 to {len(CRITERIA)}")

    return ExperimentConfig(**cfg, sha256=hashlib.sha256(raw).hexdigest(), source=str(path))


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------


def _header(cfg, sub):
    return [f"config_sha256={cfg.sha256}", f"seed={cfg.seed}", f"subcommand={sub}", f"model={cfg.model}"]


def _fmt(v):
    return repr(float(v))


def write_table(path, cfg, sub, columns, rows):
    with open(path, "w") as fh:
        for line in _header(cfg, sub):
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, cfg, sub, payload):
    from .verifier import _jsonable

    doc = {"config_sha256": cfg.sha256, "seed": cfg.seed, "subcommand": sub, **_jsonable(payload)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _model(cfg, name=None):
    from .models import get_model

    name = name or cfg.model
    return get_model(name, **(cfg.params if name == cfg.model else {}))


def _simulate_one(args):
    from .simulation import sample_bundle, simulate_system

    model_name, params, T, dt, seed = args
    from .models import get_model

    model = get_model(model_name, **params)
    c = model.coeffs
    bundle = sample_bundle(T, dt, (c.nu0, c.nu1), (c.d1, c.dprime), seed)
    return simulate_system(c, model.initial_state(np.random.default_rng(seed)), bundle)


def _paths(cfg, seeds, threads):
    jobs = [(cfg.model, cfg.params, cfg.T, cfg.dt, s) for s in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_simulate_one, jobs))  # map keeps seed order
    return [_simulate_one(j) for j in jobs]


def cmd_simulate(cfg, out, threads, log):
    n = cfg.simulate["n_paths"]
    paths = _paths(cfg, [cfg.seed + i for i in range(n)], threads)
    for i, path in enumerate(paths):
        name = out / ("path.csv" if n == 1 else f"path_{i:04d}.csv")
        path.to_csv(name, header_lines=_header(cfg, "simulate") + [f"path_seed={cfg.seed + i}"])
        log(f"wrote {name}")
    return 0


def _density_grid(model, npts):
    lo, hi, _ = model.grid
    x = np.linspace(lo, hi, npts)
    if model.coeffs.d == 1:
        return x[:, None]
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X1.ravel(), X2.ravel()])


def cmd_filter(cfg, out, threads, log):
    from .filtering import ObservationRecord, density_estimate, run_filter

    model = _model(cfg)
    fc = cfg.filter
    path = _paths(cfg, [cfg.seed], 1)[0]
    obs = ObservationRecord.from_path(path)
    obs.to_csv(out / "observations.csv", header_lines=_header(cfg, "filter"))
    run = run_filter(model, obs, cfg.N_particles, cfg.seed + 1, eps_out=cfg.eps_out, resample=fc["resample"])
    d = model.coeffs.d
    cols = ["t", "mass"] + [f"mean_{i + 1}" for i in range(d)]
    cols += [f"cov_{i + 1}{j + 1}" for i in range(d) for j in range(d)] + [f"X_{i + 1}" for i in range(d)]
    rows = []
    for k in range(0, run.times.size, fc["record_every"]):
        rows.append([run.times[k], run.mass[k], *run.mean[k], *run.cov[k].ravel(), *path.X[k]])
    write_table(out / "moments.csv", cfg, "filter", cols, rows)

    x = _density_grid(model, fc["density_points"])
    cols = [f"x_{i + 1}" for i in range(d)] + ["density"]
    dens = density_estimate(run.final, x, normalized=True)
    table = [x, dens[:, None]]
    if fc["grid_oracle"]:
        if d != 1:
            raise ConfigError(f"{cfg.source}: 'filter.grid_oracle' needs a one-dimensional model")
        from .gridsolver import l1_distance, reference_grid_solver

        lo, hi, h = model.grid
        xg = np.arange(lo, hi + 0.5 * h, h)
        grid = reference_grid_solver(model.coeffs, obs, xg, model.pi0_density(xg[:, None]), record_steps=[-1])
        ref = grid.normalized()
        cols.append("grid_density")
        table.append(np.interp(x[:, 0], xg, ref)[:, None])
        l1 = l1_distance(xg, density_estimate(run.final, xg[:, None], normalized=True), ref)
        log(f"L1 distance to grid oracle at T: {l1:.4g}")
    write_table(out / "density.csv", cfg, "filter", cols, np.hstack(table))
    log(f"wrote {out / 'moments.csv'} and {out / 'density.csv'}")
    return 0


def cmd_verify_lemmas(cfg, out, threads, log):
    from .verifier import lemma_suite

    vl = cfg.verify_lemmas
    names = vl["models"] or [cfg.model]
    result, all_ok = {}, True
    for name in names:
        reports = lemma_suite(_model(cfg, name), cfg.seed, eps=vl["eps"], p=cfg.p, n_atoms=vl["n_atoms"])
        entries = []
        for label, rep in reports:
            all_ok &= rep.ok
            entries.append({"label": label, **rep.to_dict()})
            if not rep.ok:
                bad = sorted(k for k, v in rep.verdicts.items() if not v)
                log(f"{name} {label} {rep.lemma}: failed {', '.join(bad)}")
        result[name] = entries
    write_json(out / "lemmas.json", cfg, "verify-lemmas",
               {"eps": vl["eps"], "p": cfg.p, "all_ok": all_ok, "models": result})
    log(f"{'all verdicts pass' if all_ok else 'verdict failures'}; wrote {out / 'lemmas.json'}")
    return 0 if all_ok else 2


def cmd_verify_adjoints(cfg, out, threads, log):
    from .operators import analytic_half_shift, duality_suite

    va = cfg.verify_adjoints
    recs = duality_suite(va["n_triples"], cfg.seed, dims=tuple(va["dims"]))
    analytic = analytic_half_shift()
    worst = max(r.rel_error for r in recs)
    ok = worst <= 1e-7 and all(v <= 1e-10 for v in analytic.values())
    write_json(out / "adjoints.json", cfg, "verify-adjoints",
               {"max_relative_error": worst, "analytic_half_shift": analytic, "all_ok": ok,
                "checks": [r.to_dict() for r in recs]})
    log(f"max relative duality error {worst:.3g}; wrote {out / 'adjoints.json'}")
    return 0 if ok else 2


def cmd_benchmark(cfg, out, threads, log):
    from .acceptance import run_suite

    results = run_suite(cfg.benchmark["criteria"], seed=cfg.seed, report=log)
    lines = [f"{'criterion':>9}  {'status':6}  title"]
    lines += [f"{r.number:9d}  {'PASS' if r.passed else 'FAIL':6}  {r.title}" for r in results]
    with open(out / "benchmark.txt", "w") as fh:
        for h in _header(cfg, "benchmark"):
            fh.write(f"# {h}\n")
        fh.write("\n".join(lines) + "\n")
    write_json(out / "benchmark.json", cfg, "benchmark", {"criteria": [r.to_dict() for r in results]})
    log(f"{sum(r.passed for r in results)}/{len(results)} criteria pass; wrote {out / 'benchmark.txt'}")
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "verify-lemmas": cmd_verify_lemmas,
    "verify-adjoints": cmd_verify_adjoints,
    "benchmark": cmd_benchmark,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _threads(arg):
    if arg is not None:
        n = arg
    else:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def build_parser():
    ap = argparse.ArgumentParser(prog="jumpfilter", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out-dir", default=None, help="artifact directory (default: config out_dir)")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker processes for path ensembles (default: ${THREADS_ENV} or 1)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = lambda msg: print(msg, flush=True)
    try:
        threads = _threads(args.threads)
        cfg = load_config(args.config, args.seed)
        out = Path(args.out_dir or cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.subcommand](cfg, out, threads, log)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        from .verifier import _jsonable

        print(f"numerical failure: {exc}", file=sys.stderr)
        print(json.dumps(_jsonable(exc.payload), sort_keys=True), file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# --------------------------------------------------------------------------
# determinism (acceptance criterion 11)
# --------------------------------------------------------------------------

_DETERMINISM_CONFIGS = {
    "simulate": 'model = "jump-shared-1d"\nT = 0.5\n[simulate]\nn_paths = 2\n',
    "filter": 'model = "clipped-linear-1d"\nT = 0.5\nN_particles = 500\n[filter]\ngrid_oracle = true\n'
              "density_points = 101\nrecord_every = 10\n",
    "verify-lemmas": '[verify_lemmas]\nmodels = ["trivial-constants", "jump-shared-1d"]\n',
    "verify-adjoints": "[verify_adjoints]\nn_triples = 4\n",
    "benchmark": "[benchmark]\ncriteria = [1, 3]\n",
}


def determinism_check(seed=0, workdir=None):
    """Run every subcommand twice on the same (config, seed); True where all artifacts match byte for byte."""
    ctx = tempfile.TemporaryDirectory() if workdir is None else contextlib.nullcontext(workdir)
    result = {}
    with ctx as root:
        root = Path(root)
        for sub, body in _DETERMINISM_CONFIGS.items():
            cfg_path = root / f"{sub}.toml"
            cfg_path.write_text(f"seed = {seed}\n" + body)
            outs = []
            for rep in (0, 1):
                out = root / f"{sub}_{rep}"
                with contextlib.redirect_stdout(io.StringIO()):
                    code = main([sub, "--config", str(cfg_path), "--out-dir", str(out)])
                outs.append((code, {p.name: p.read_bytes() for p in sorted(out.iterdir())}))
            result[sub] = outs[0] == outs[1] and bool(outs[0][1])
    return result


if __name__ == "__main__":
    sys.exit(main())
