"""Command-line front end.

    landscape-mh info     --config run.ini
    landscape-mh analyze  --config run.ini --out results/
    landscape-mh sample   --config run.ini --seed 7
    landscape-mh estimate --config run.ini
    landscape-mh anneal   --config run.ini
    landscape-mh bench    --config run.ini
    landscape-mh oracle   [--config run.ini]

Every command writes ``<command>.json`` (report plus the resolved config)
into the output directory.  Tables go to ``<name>.csv`` with ``--format csv``
(default) or inside the JSON report with ``--format json``.  Wall-clock
data lives only in ``metadata.json`` so the other files are reproducible
byte for byte.

Exit codes: 0 success, 1 an asserted inequality failed, 2 configuration or
input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ReversibilityError,
    Spectrum,
    annealed_law,
    annealed_tv_experiment,
    bias_bound,
    build_generator,
    condition_constant,
    convergence_envelope,
    critical_height,
    holley_stroock_bound,
    spectral_gap,
    spin_gap_bound,
    stationary,
    tv_distance,
)
from .config import ConfigError, ExperimentConfig, load_config
from .core import DomainError, LandscapeParams, NumericalError, PenaltyFunction, oracle_sweep
from .estimator import (
    Observable,
    chernoff_inputs,
    chernoff_time,
    deviation_table,
    self_normalized,
    variance_scaling_check,
)
from .models import IsingModel, ModelError, PottsModel
from .sim import CompiledChain, Schedule, simulate_annealed, simulate_homogeneous

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ANALYSES = ("gap", "heights", "bias", "envelope", "bounds", "conditionK")
SUITES = ("ising-hypercube", "ising-complete", "potts")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj):
    """Deterministic JSON text."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_table(rows, path):
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in (r[c] for c in cols)])


class Outcome:
    """What a command produced: a report, named tables and checked inequalities."""

    def __init__(self, report=None):
        self.report = report or {}
        self.tables = {}
        self.checks = {}

    def check(self, name, ok):
        self.checks[name] = bool(ok)

    @property
    def ok(self):
        return all(self.checks.values())


def emit(command, outcome, cfg, out_dir, fmt, argv):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = cfg.resolved()
    # where the files went is not part of the result
    config.get("output", {}).pop("dir", None)
    config = {k: v for k, v in config.items() if v}
    payload = {"command": command, "config": config, "report": outcome.report,
               "checks": outcome.checks, "passed": outcome.ok}
    if fmt == "json":
        payload["tables"] = outcome.tables
    else:
        for name, rows in outcome.tables.items():
            write_table(rows, out_dir / f"{name}.csv")
    (out_dir / f"{command}.json").write_text(dumps(payload))
    meta = {"argv": list(argv), "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "python": platform.python_version(), "version": __version__, "config_file": cfg.source,
            "out_dir": str(out_dir)}
    (out_dir / "metadata.json").write_text(dumps(meta))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _seed(cfg):
    seed = cfg.get("run", "seed")
    if seed is None:
        raise ConfigError("no seed: give --seed or [run] seed")
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return seed


def _observable(cfg, model):
    values = cfg.get("run", "g")
    if values is None:
        return Observable.indicator([model.ground()[0]], model.state_count)
    return Observable(np.array(values), cfg.get("run", "a"))


def cmd_info(cfg):
    model = cfg.model()
    n = model.state_count
    report = {"model": model.describe(), "state_count": n}
    ground, e0 = model.ground()
    report["ground_state"], report["ground_energy"] = ground, e0
    try:
        e = model.energies()
        report["h_range"] = float(e.max() - e.min())
        report["h_min"] = float(e.min())
    except ModelError:
        report["h_range"] = None
    report["proposal_gap"] = model.proposal_gap
    report["exact_proposal_gap"] = model.exact_proposal_gap
    return Outcome(report)


def cmd_analyze(cfg):
    model = cfg.model()
    params = cfg.params(model)
    which = cfg.get("analysis", "which", list(ANALYSES))
    bad = sorted(set(which) - set(ANALYSES))
    if bad:
        raise ConfigError(f"unknown analyses {bad}; choose from {', '.join(ANALYSES)}")
    out = Outcome({"params": {"alpha": params.alpha, "c": params.threshold, "f": params.f.name}})
    G = build_generator(model, params)
    G.check()
    classical = build_generator(model, LandscapeParams(0.0, params.threshold, params.f))
    if "gap" in which:
        out.report["gap"] = {"modified": spectral_gap(G), "classical": spectral_gap(classical)}
    if "heights" in which:
        m0, mf = critical_height(model), critical_height(model, params)
        out.report["heights"] = {"classical": m0.value, "modified": mf.value,
                                 "classical_witness": m0.witness, "modified_witness": mf.witness}
        out.check("modified height <= classical height", mf.value <= m0.value + 1e-12)
    if "bias" in which:
        b = bias_bound(model, params)
        out.report["bias"] = {"tv": b.tv, "bound": b.bound, "xi": b.xi}
        out.check("bias tv <= bound", b.tv <= b.bound)
    if "envelope" in which:
        times = cfg.get("analysis", "times", [0.5, 1, 2, 5, 10, 20, 50])
        x0 = cfg.get("analysis", "x0", model.ground()[0])
        spec = Spectrum.of(G)
        rows = []
        for t in times:
            env = convergence_envelope(G, x0, t, spec)
            rows.append({"t": float(t), "lower": env.lower, "tv": env.exact,
                         "max_tv": env.max_over_starts, "upper": env.upper})
        out.tables["envelope"] = rows
        out.check("envelope holds", all(r["lower"] <= r["max_tv"] + 1e-12 and r["tv"] <= r["upper"] for r in rows))
    if "bounds" in which:
        gap = spectral_gap(G)
        rep = {"gap": gap}
        if model.proposal_gap is not None:
            rep["holley_stroock"] = holley_stroock_bound(model, params)
            out.check("gap >= Holley-Stroock bound", gap >= rep["holley_stroock"])
            rep["holley_stroock_exact_proposal"] = holley_stroock_bound(model, params, model.exact_proposal_gap)
            out.check("gap >= Holley-Stroock bound (exact proposal gap)",
                      gap >= rep["holley_stroock_exact_proposal"])
        out.report["bounds"] = rep
    if "conditionK" in which:
        grid = cfg.get("analysis", "beta_grid", [0.25, 0.5, 1, 2, 4])
        c = cfg.get("analysis", "c_const", params.threshold)
        out.report["conditionK"] = {"K": condition_constant(model, c, grid), "beta_grid": grid}
    return out


def cmd_sample(cfg):
    model = cfg.model()
    seed = _seed(cfg)
    horizon = cfg.require("run", "horizon")
    x0 = cfg.get("run", "x0", model.ground()[0])
    schedule = cfg.schedule()
    if schedule.is_constant:
        params = cfg.params(model)
        traj = simulate_homogeneous(model, params, x0, horizon, seed)
    else:
        params = cfg.params(model)
        traj = simulate_annealed(model, params.f, params.threshold, schedule, x0, horizon, seed)
    out = Outcome({"events": traj.n_events, "final_state": traj.state_at(horizon), "seed": seed})
    if schedule.is_constant:
        g = _observable(cfg, model)
        out.report["self_normalized"] = self_normalized(traj, g, params)
    out.trajectory = traj
    return out


def cmd_estimate(cfg):
    model = cfg.model()
    params = cfg.params(model)
    seed = _seed(cfg)
    g = _observable(cfg, model)
    g.validate(model.state_count)
    eta = cfg.get("run", "eta", 0.5)
    eps = cfg.get("run", "eps", 0.1)
    inputs = chernoff_inputs(model, params)
    t_star = chernoff_time(eta, eps, g.a, **inputs)
    times = cfg.get("run", "times", [t_star])
    starts = cfg.get("run", "starts", list(range(model.state_count)))
    replicas = cfg.get("run", "replicas", 1000)
    mu_g = float(stationary(model, params).mu @ g.values(model.state_count))
    rows = deviation_table(model, params, g, eta, times, starts, replicas, seed)
    out = Outcome({"chernoff_time": t_star, "chernoff_inputs": inputs, "mu_g": mu_g, "eta": eta, "eps": eps})
    out.tables["deviation"] = [{
        "t": r.t, "start": r.start, "estimate-mean": r.estimate_mean, "estimate-var": r.estimate_var,
        "exceedance": r.exceedance, "half-width": r.half_width} for r in rows]
    at_star = [r for r in rows if r.t == t_star]
    if at_star:
        out.check("exceedance <= eps + 2 half-width at chernoff time",
                  all(r.exceedance <= eps + 2 * r.half_width for r in at_star))
    vt = cfg.get("run", "variance_times")
    if vt:
        table, slope = variance_scaling_check(model, params, g, vt, replicas, seed)
        out.tables["variance"] = table
        out.report["variance_slope"] = slope
    return out


def cmd_anneal(cfg):
    model = cfg.model()
    seed = _seed(cfg)
    schedule = cfg.schedule()
    params = cfg.params(model)
    times = cfg.get("run", "times", [1e2, 1e3, 1e4])
    replicas = cfg.get("run", "replicas", 1000)
    starts = cfg.get("run", "starts", [model.ground()[0]])
    rows = annealed_tv_experiment(model, params.f, params.threshold, schedule, times, replicas, seed, starts)
    chain = CompiledChain.from_model(model)
    mu = stationary(model, params).mu
    for x0 in starts:
        law = annealed_law(model, params.f, params.threshold, schedule, x0, sorted(times))
        exact = {float(t): tv_distance(p, mu) for t, p in zip(sorted(times), law)}
        for r in rows:
            if r["start"] == x0:
                r["exact_tv"] = exact[r["t"]]
    out = Outcome({"schedule": schedule.describe(), "states": chain.size, "replicas": replicas})
    out.tables["anneal"] = rows
    return out


def bench_rows(suite, sizes, delta, alpha, q=2):
    """Exact scaling table for one spin-model family."""
    f = PenaltyFunction.quadratic()
    rows = []
    for n in sizes:
        if suite == "ising-hypercube":
            model = IsingModel.hypercube(n)
        elif suite == "ising-complete":
            model = IsingModel.complete(n)
        elif suite == "potts":
            model = PottsModel(n, q)
        else:
            raise ConfigError(f"unknown bench suite {suite!r}; choose from {', '.join(SUITES)}")
        params = LandscapeParams(alpha, f=f, delta=delta).resolve(model)
        energies = model.energies()
        G0 = build_generator(model, LandscapeParams(0.0, params.threshold, f))
        Gf = build_generator(model, params)
        gap0, gapf = spectral_gap(G0), spectral_gap(Gf)
        m0 = critical_height(model, energies=energies).value
        mf = critical_height(model, params, energies=energies).value
        hs = holley_stroock_bound(model, params)
        spin = spin_gap_bound(model.proposal_gap, delta, alpha)
        # worst-start envelope at one relaxation time of the modified chain
        t_env = 1.0 / gapf
        lower = 0.5 * math.exp(-gapf * t_env)
        spread = float(energies.max() - energies.min())
        upper = 0.5 * math.exp(spread) * len(energies) * math.exp(-gapf * t_env)
        rows.append({
            "size": n, "states": len(energies), "gap_classical": gap0, "gap_modified": gapf,
            "m_classical": m0, "m_modified": mf, "holley_stroock": hs, "spin_bound": spin,
            "envelope_t": t_env, "envelope_lower": lower, "envelope_upper": upper,
            "_Gf": Gf, "_model": model,
        })
    return rows


def cmd_bench(cfg):
    suite = cfg.require("bench", "suite")
    defaults = {"ising-hypercube": [1, 2, 3], "ising-complete": [4, 6, 8], "potts": [3]}
    if suite not in SUITES:
        raise ConfigError(f"unknown bench suite {suite!r}; choose from {', '.join(SUITES)}")
    sizes = cfg.get("bench", "sizes", defaults[suite])
    delta = cfg.get("bench", "delta", 0.5)
    alpha = cfg.get("bench", "alpha", 1.0)
    rows = bench_rows(suite, sizes, delta, alpha, cfg.get("bench", "q", 2))
    out = Outcome({"suite": suite, "delta": delta, "alpha": alpha})
    times = cfg.get("bench", "times")
    for r in rows:
        G = r.pop("_Gf")
        spec = Spectrum.of(G) if G.size <= 1024 else None
        if spec is not None:
            worst = max(spec.tv(x, r["envelope_t"]) for x in range(G.size))
            r["envelope_max_tv"] = worst
            env_ok = r["envelope_lower"] <= worst + 1e-12 and worst <= r["envelope_upper"]
        else:
            r["envelope_max_tv"] = float("nan")
            env_ok = True
        out.check(f"size {r['size']}: m_modified <= m_classical", r["m_modified"] <= r["m_classical"] + 1e-12)
        out.check(f"size {r['size']}: gap >= Holley-Stroock", r["gap_modified"] >= r["holley_stroock"])
        out.check(f"size {r['size']}: envelope", env_ok)
        model = r.pop("_model")
        if times and G.size <= 1024:
            law = _bench_anneal(model, G, delta, times)
            r.update({f"anneal_tv_t{t:g}": v for t, v in law})
    out.tables["bench"] = rows
    return out


def _bench_anneal(model, G, delta, times):
    """Exact annealed TV (logarithmic schedule, p = 1) from the highest-energy state."""
    x0 = int(np.argmax(G.energies))
    c = float(G.energies.min()) + delta
    mu = np.exp(-(G.energies - G.energies.min()))
    mu /= mu.sum()
    law = annealed_law(model, PenaltyFunction.quadratic(), c, Schedule.logarithmic(1.0), x0, sorted(times))
    return [(float(t), tv_distance(p, mu)) for t, p in zip(sorted(times), law)]


def cmd_oracle(cfg):
    samples = cfg.get("oracle", "samples", 1000)
    tol = cfg.get("oracle", "tol", 1e-10)
    seed = cfg.get("run", "seed", 0)
    out = Outcome({"samples": samples, "tolerance": tol, "seed": seed})
    rows = []
    for name in ("linear", "quadratic", "exp_minus_one"):
        worst, arg = oracle_sweep(PenaltyFunction.from_name(name), samples, seed)
        rows.append({"f": name, "max_residual": worst, "alpha": arg[0], "c": arg[1], "v": arg[2], "h_min": arg[3]})
        out.check(f"{name} residual <= {tol:g}", worst <= tol)
        print(f"{name:15s} max |closed - quadrature| = {worst:.3e}")
    out.tables["oracle"] = rows
    return out


COMMANDS = {
    "info": cmd_info,
    "analyze": cmd_analyze,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "anneal": cmd_anneal,
    "bench": cmd_bench,
    "oracle": cmd_oracle,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="landscape-mh", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI experiment file")
        p.add_argument("--seed", type=int, help="top-level seed (overrides [run] seed)")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
        p.add_argument("--format", choices=("csv", "json"), help="table format")
        if name == "analyze":
            p.add_argument("--which", help=f"comma list from {', '.join(ANALYSES)}")
        if name == "bench":
            p.add_argument("--suite", choices=SUITES)
    return parser


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("output", "dir", str(args.out))
        if args.format is not None:
            cfg.set("output", "format", args.format)
        if getattr(args, "which", None):
            cfg.set("analysis", "which", [w.strip() for w in args.which.split(",") if w.strip()])
        if getattr(args, "suite", None):
            cfg.set("bench", "suite", args.suite)
        fmt = cfg.get("output", "format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError("[output] format must be csv or json")
        out_dir = Path(cfg.get("output", "dir", "."))
        outcome = COMMANDS[args.command](cfg)
    except (ConfigError, ModelError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ReversibilityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit(args.command, outcome, cfg, out_dir, fmt, argv)
    traj = getattr(outcome, "trajectory", None)
    if traj is not None:
        traj.to_csv(out_dir / "trajectory.csv")
    for name, ok in outcome.checks.items():
        if not ok:
            print(f"FAILED: {name}", file=sys.stderr)
    return EXIT_OK if outcome.ok else EXIT_ASSERT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
