"""Command-line surface: config parsing, experiment orchestration, result files.

Every subcommand reads one JSON config, runs the matching experiment, and
writes fixed-schema CSV payloads plus a JSON summary into the output
directory.  A run manifest (config echo, config hash, tool version, phase
timings, output list) is emitted for every run, success or failure.  CSV
payloads are byte-reproducible for identical config and seed; wall-clock
timestamps live only in the manifest.

Exit codes: 0 success, 2 configuration error (the message names the bad
field), 3 experiment-level failure (e.g. a solve that hit its iteration cap)
with partial outputs retained.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .anosov import ConeSpec, MapSpec, certify_cones, default_cat_map
from .coupling import CoupledMap, CouplingSpec, certify_assumptions, example_separable_coupling
from .errors import ConfigError, CouplingAdmissibilityError
from .meanfield import (
    SelfConsistentConfig,
    lipschitz_sweep,
    memory_loss_experiment,
    random_smooth_density,
    smooth_init_family,
    solve_fixed_point,
    uniqueness_experiment,
)
from .particles import meanfield_gap
from .torus import Observable, TorusDensity
from .trig import TrigPolynomial

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3

EXPERIMENTS = (
    "fixed-point",
    "uniqueness",
    "sweep",
    "memory-loss",
    "particles-gap",
    "cones",
    "certify-coupling",
)


# ---------------------------------------------------------------------------
# config handling


def _set_by_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "override path crosses a non-object value")
    node[keys[-1]] = value


def load_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("--set", f"expected key.path=json_value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        _set_by_path(cfg, key, value)
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _field(cfg: dict, name: str, default=None, required: bool = False):
    if name in cfg:
        return cfg[name]
    if required:
        raise ConfigError(name, "missing required field")
    return default


def parse_map(cfg: dict) -> MapSpec:
    spec = _field(cfg, "map", default=None)
    if spec is None:
        return default_cat_map(0.01)
    try:
        return MapSpec.from_config(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("map", str(exc))


def parse_coupling(cfg: dict) -> CouplingSpec:
    spec = _field(cfg, "coupling", default=None)
    if spec is None:
        return example_separable_coupling(0.0)
    try:
        return CouplingSpec.from_config(spec)
    except (CouplingAdmissibilityError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError("coupling", str(exc))


def parse_solver_config(cfg: dict) -> SelfConsistentConfig:
    solver = _field(cfg, "solver", default={})
    try:
        return SelfConsistentConfig(
            map=parse_map(cfg),
            coupling=parse_coupling(cfg),
            resolution=int(_field(cfg, "resolution", 256)),
            quadrature=int(_field(cfg, "quadrature", 4)),
            tol_fix=float(solver.get("tol_fix", 1e-10)),
            max_iterations=int(solver.get("max_iterations", 10_000)),
            rate_window=int(solver.get("rate_window", 30)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("solver", str(exc))


def density_from_config(spec, n: int) -> TorusDensity:
    """Initial-density spec: uniform | bump | trig | family member."""
    kind = spec.get("kind", "uniform") if isinstance(spec, dict) else str(spec)
    if kind == "uniform":
        return TorusDensity.uniform(n)
    if kind == "bump":
        return TorusDensity.bump(spec.get("center", [0.5, 0.5]), float(spec.get("width", 0.1)), n)
    if kind == "trig":
        return TorusDensity.from_trig(TrigPolynomial.from_terms(spec["terms"]), n)
    if kind == "family":
        idx = int(spec.get("index", 0))
        return smooth_init_family(n, idx + 1)[idx]
    raise ConfigError("initial", f"unknown density kind {kind!r}")


def observables_from_config(specs) -> list[Observable]:
    out = []
    for i, spec in enumerate(specs):
        out.append(
            Observable(TrigPolynomial.from_terms(spec["terms"]), spec.get("name", f"obs{i}"))
        )
    return out


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, (int, str)) else repr(float(x)) for x in row])


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Runner:
    """Tracks phase timings and the files a run produced."""

    def __init__(self, cfg: dict, out_dir: str):
        self.cfg = cfg
        self.out_dir = out_dir
        self.phases: dict[str, float] = {}
        self.outputs: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.outputs.append(name)
        return p

    def phase(self, name: str):
        runner = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                runner.phases[name] = runner.phases.get(name, 0.0) + time.perf_counter() - self.t0

        return _Timer()

    def manifest(self, status: str) -> None:
        write_json(
            os.path.join(self.out_dir, "manifest.json"),
            {
                "tool_version": __version__,
                "config": self.cfg,
                "config_hash": config_hash(self.cfg),
                "phases_seconds": self.phases,
                "outputs": self.outputs,
                "status": status,
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
            },
        )


# ---------------------------------------------------------------------------
# subcommand implementations (return process exit code)


def run_fixed_point(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    h0 = density_from_config(exp.get("initial", {"kind": "uniform"}), sc_cfg.resolution)
    with runner.phase("solve"):
        h, rep = solve_fixed_point(sc_cfg, h0)
    write_csv(
        runner.path("fixed_point.csv"),
        ("iter", "residual_l1", "proxy_bv"),
        [(k + 1, rep.residuals[k], rep.proxy_bv[k + 1]) for k in range(rep.iterations)],
    )
    h.save(runner.path("fixed_point_density.csv"))
    write_json(
        runner.path("summary.json"),
        {
            "converged": rep.converged,
            "iterations": rep.iterations,
            "final_residual": rep.final_residual,
            "gamma": rep.gamma,
            "r_squared": rep.r_squared,
            "proxy_bv_final": rep.proxy_bv[-1],
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK if rep.converged else EXIT_EXPERIMENT


def run_uniqueness(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    if "inits" in exp:
        inits = [density_from_config(s, sc_cfg.resolution) for s in exp["inits"]]
    else:
        inits = smooth_init_family(sc_cfg.resolution, int(exp.get("init_count", 5)))
    with runner.phase("solve"):
        rep = uniqueness_experiment(sc_cfg, inits)
    rows = [
        (i, j, rep.distances[i, j])
        for i in range(len(inits))
        for j in range(i + 1, len(inits))
    ]
    write_csv(runner.path("uniqueness.csv"), ("init_i", "init_j", "l1_distance"), rows)
    write_json(
        runner.path("summary.json"),
        {
            "max_pairwise_distance": rep.max_distance,
            "conclusive": rep.conclusive,
            "iterations": [r.iterations for r in rep.reports],
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK if rep.conclusive else EXIT_EXPERIMENT


def run_sweep(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    grid = exp.get("eps_grid")
    if not grid:
        raise ConfigError("experiment.eps_grid", "missing strength grid")
    try:
        with runner.phase("sweep"):
            rep = lipschitz_sweep(sc_cfg, grid)
    except ValueError as exc:
        raise ConfigError("experiment.eps_grid", str(exc))
    rows = [
        (rep.eps_grid[i], rep.eps_grid[i + 1], rep.l1_diffs[i], rep.ratios[i])
        for i in range(len(rep.eps_grid) - 1)
    ]
    write_csv(runner.path("sweep.csv"), ("eps_lo", "eps_hi", "l1_diff", "ratio"), rows)
    write_json(
        runner.path("summary.json"),
        {
            "max_ratio": rep.max_ratio,
            "failures": list(rep.failures),
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK if not rep.failures else EXIT_EXPERIMENT


def run_memory_loss(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    steps = int(exp.get("steps", 40))
    rng = np.random.default_rng(int(exp.get("driving_seed", _field(cfg, "seed", 0))))
    driving = [random_smooth_density(sc_cfg.resolution, rng) for _ in range(steps)]
    h1 = density_from_config(exp.get("h1", {"kind": "family", "index": 0}), sc_cfg.resolution)
    h2 = density_from_config(exp.get("h2", {"kind": "family", "index": 3}), sc_cfg.resolution)
    with runner.phase("push"):
        rep = memory_loss_experiment(sc_cfg, driving, h1, h2)
    write_csv(
        runner.path("memory_loss.csv"),
        ("step", "l1_diff"),
        list(enumerate(rep.decay)),
    )
    write_json(
        runner.path("summary.json"),
        {"theta": rep.theta, "r_squared": rep.r_squared, "config_hash": config_hash(cfg)},
    )
    return EXIT_OK


def run_particles_gap(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    n_values = exp.get("n_values", [100, 1000, 10000])
    steps = int(exp.get("steps", 10))
    trials = int(exp.get("trials", 8))
    if "observables" in exp:
        obs = observables_from_config(exp["observables"])
    else:
        obs = default_observables()
    h0 = density_from_config(exp.get("initial", {"kind": "family", "index": 0}), sc_cfg.resolution)
    try:
        with runner.phase("gap"):
            rep = meanfield_gap(
                sc_cfg.map,
                sc_cfg.coupling,
                h0,
                n_values,
                steps,
                obs,
                trials,
                seed=int(_field(cfg, "seed", 0)),
                quadrature=sc_cfg.quadrature,
            )
    except ValueError as exc:
        raise ConfigError("experiment.n_values", str(exc))
    rows = [
        (rep.n_values[i], rep.observable_names[j], rep.gap_mean[i, j], rep.gap_std[i, j])
        for i in range(len(rep.n_values))
        for j in range(len(rep.observable_names))
    ]
    write_csv(runner.path("particles_gap.csv"), ("N", "observable_id", "gap_mean", "gap_std"), rows)
    write_json(
        runner.path("summary.json"),
        {
            "slopes": dict(zip(rep.observable_names, rep.slopes)),
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK


def run_cones(cfg: dict, runner: Runner) -> int:
    sc_cfg = parse_solver_config(cfg)
    exp = _field(cfg, "experiment", default={})
    samples = int(exp.get("samples", 1000))
    depth = int(exp.get("depth", 20))
    n_maps = int(exp.get("n_maps", 20))
    half_angle = float(exp.get("half_angle_deg", 15.0))
    driving_n = int(exp.get("driving_resolution", 64))
    rng = np.random.default_rng(int(exp.get("driving_seed", _field(cfg, "seed", 0))))
    cone = ConeSpec.for_map(sc_cfg.map, half_angle)
    if sc_cfg.coupling.is_trivial:
        maps = [sc_cfg.map] * n_maps
    else:
        maps = [
            CoupledMap(base=sc_cfg.map, coupling=sc_cfg.coupling, mu=random_smooth_density(driving_n, rng))
            for _ in range(n_maps)
        ]
    with runner.phase("certify"):
        rep = certify_cones(maps, cone, samples=samples, depth=depth, seed=int(_field(cfg, "seed", 0)))
    min_stable = rep.min_stable_expansion()
    min_unstable = rep.min_unstable_expansion()
    write_csv(
        runner.path("cones.csv"),
        ("sample", "depth", "min_stable_expansion", "min_unstable_expansion"),
        [(i, depth, min_stable[i], min_unstable[i]) for i in range(samples)],
    )
    write_json(
        runner.path("summary.json"),
        {
            "invariance_violations": rep.invariance_violations,
            "fitted_lambda": rep.fitted_lambda,
            "fitted_nu": rep.fitted_nu,
            "fitted_c": rep.fitted_c,
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK if rep.invariance_violations == 0 else EXIT_EXPERIMENT


def run_certify_coupling(cfg: dict, runner: Runner) -> int:
    coupling = parse_coupling(cfg)
    exp = _field(cfg, "experiment", default={})
    n = int(exp.get("resolution", 64))
    count = int(exp.get("pair_count", 4))
    rng = np.random.default_rng(int(exp.get("pair_seed", _field(cfg, "seed", 0))))
    measures = [random_smooth_density(n, rng) for _ in range(count + 1)]
    pairs = list(zip(measures[:-1], measures[1:]))
    eps_pairs = [tuple(p) for p in exp.get("eps_pairs", [[0.0, coupling.eps]])]
    with runner.phase("certify"):
        rep = certify_assumptions(coupling, pairs, eps_pairs)
    write_csv(
        runner.path("certify_coupling.csv"),
        ("constant", "value"),
        [("A1", rep.a1_constant), ("A2", rep.a2_constant), ("max_ratio", rep.max_ratio)],
    )
    write_json(
        runner.path("summary.json"),
        {
            "a1_constant": rep.a1_constant,
            "a2_constant": rep.a2_constant,
            "pair_count": rep.pair_count,
            "config_hash": config_hash(cfg),
        },
    )
    return EXIT_OK


def default_observables() -> list[Observable]:
    return [
        Observable(TrigPolynomial(((1, 0),), (1.0,), (0.0,)), "cos_u"),
        Observable(TrigPolynomial(((0, 1),), (0.0,), (1.0,)), "sin_v"),
        Observable(TrigPolynomial(((1, 1),), (1.0,), (0.0,)), "cos_u_plus_v"),
    ]


_RUNNERS = {
    "fixed-point": run_fixed_point,
    "uniqueness": run_uniqueness,
    "sweep": run_sweep,
    "memory-loss": run_memory_loss,
    "particles-gap": run_particles_gap,
    "cones": run_cones,
    "certify-coupling": run_certify_coupling,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sctorus",
        description="Mean-field coupled torus map laboratory",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("config", help="path to the JSON experiment config")
        p.add_argument("--output-dir", help="override the config's output directory")
        p.add_argument("--seed", type=int, help="override the global seed")
        p.add_argument(
            "--set",
            action="append",
            dest="overrides",
            metavar="KEY.PATH=VALUE",
            help="override any config field (value parsed as JSON)",
        )
        p.add_argument("--threads", type=int, help="cap worker threads (recorded; BLAS env cap)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    try:
        cfg = load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.output_dir is not None:
            cfg["output_dir"] = args.output_dir
        out_dir = cfg.get("output_dir", "sctorus-out")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    runner = Runner(cfg, out_dir)
    try:
        code = _RUNNERS[args.command](cfg, runner)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        runner.manifest("config-error")
        return EXIT_CONFIG
    except CouplingAdmissibilityError as exc:
        print(f"config error: coupling: {exc}", file=sys.stderr)
        runner.manifest("config-error")
        return EXIT_CONFIG
    except Exception as exc:  # experiment-level failure with partial outputs retained
        print(f"experiment failed: {exc}", file=sys.stderr)
        runner.manifest("failed")
        return EXIT_EXPERIMENT
    runner.manifest("ok" if code == EXIT_OK else "experiment-failure")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
