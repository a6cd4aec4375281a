"""``coat-tuner`` command line: tune, compare, heatmap and oracle subcommands.

A run directory written by ``tune`` holds::

    config.json        resolved experiment configuration
    iterations.csv     every repetition's log (schema in ``runner.CSV_COLUMNS``)
    rep_NNN/iterations.csv
    summary.json       per-repetition summaries and their means
    regret.svg         cumulative regret per repetition
    heatmap.svg        posterior mean and samples of repetition 0 (2-D grids)
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import CoatError, ConfigError
from ..gp import GpModel, KernelParams
from ..sets import true_reachable_set
from .config import ExperimentConfig, load_config
from .runner import (
    RepResult,
    aggregate,
    best_known,
    csv_header,
    pick_seed,
    resolve_objective,
    run_all,
)
from .svg import HeatmapLayout, heatmap, line_chart

log = logging.getLogger("coat_tuner")

EXIT_OK = 0
EXIT_ERROR = 2


# ---------------------------------------------------------------- persistence

def config_to_json(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("source", None)
    return d


def config_from_json(d: dict) -> ExperimentConfig:
    d = dict(d)
    for key in ("points_per_dim", "lo", "hi", "rng_seeds"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    if isinstance(d.get("kernel_lengthscale"), list):
        d["kernel_lengthscale"] = tuple(d["kernel_lengthscale"])
    d["seed_coords"] = tuple(tuple(p) for p in d.get("seed_coords", ()))
    return ExperimentConfig(**d)


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_iterations(path: Path) -> list[dict]:
    if not path.is_file():
        raise ConfigError(f"missing run log {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_summary(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.is_file():
        raise ConfigError(f"missing summary file {path}")
    return json.loads(path.read_text())


def regret_curves(rows: list[dict], q_star: float) -> dict[int, np.ndarray]:
    """Cumulative regret of the tuning iterations (n >= 1), per repetition."""
    per: dict[int, list[float]] = {}
    for r in rows:
        if int(r["n"]) >= 1:
            per.setdefault(int(r["rep"]), []).append(float(r["y"]))
    return {rep: np.cumsum(q_star - np.array(ys)) for rep, ys in sorted(per.items())}


def write_run(out: Path, cfg: ExperimentConfig, results: list[RepResult]) -> dict:
    objective = resolve_objective(cfg)
    g = objective.grid
    header = csv_header(g.dims)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(_dump_json(config_to_json(cfg)))
    all_rows = []
    for res in results:
        rep_dir = out / f"rep_{res.rep:03d}"
        rep_dir.mkdir(exist_ok=True)
        (rep_dir / "iterations.csv").write_text(_csv_text(header, res.rows))
        all_rows.extend(res.rows)
    (out / "iterations.csv").write_text(_csv_text(header, all_rows))

    q_star = best_known(results, objective)
    summaries = [res.summary for res in results]
    summary = {
        "objective": cfg.objective,
        "algorithm": cfg.algorithm,
        "q_star": q_star,
        "q_star_source": "grid maximum" if objective.q_star is not None else "best measurement",
        "lipschitz": objective.lipschitz,
        "epsilon": cfg.epsilon,
        "per_rep": summaries,
        "aggregate": aggregate(summaries),
    }
    (out / "summary.json").write_text(_dump_json(summary))

    rows = read_iterations(out / "iterations.csv")
    curves = regret_curves(rows, q_star)
    series = [(f"rep {rep}", np.arange(1, len(c) + 1), c) for rep, c in curves.items()]
    (out / "regret.svg").write_text(line_chart(series, f"{cfg.algorithm} on {cfg.objective}",
                                               "iteration", "cumulative regret"))
    if g.dims == 2:
        (out / "heatmap.svg").write_text(render_heatmap(out, 0))
    return summary


# ------------------------------------------------------------------- heatmap

def posterior_mean_from_log(cfg: ExperimentConfig, rows: list[dict]) -> np.ndarray:
    """Rebuild the final GP of one repetition from its log; returns the raw-scale mean."""
    g = cfg.grid()
    seed_row = next(r for r in rows if int(r["n"]) == 0)
    first, tau = float(seed_row["y"]), float(seed_row["tau"])
    tc = cfg.tuner_config(1.0, tau=tau)
    offset = tc.resolve_offset(first, tau)
    gp = GpModel.empty(KernelParams(cfg.kernel_variance, cfg.kernel_lengthscale), cfg.noise_sigma ** 2, g)
    for r in rows:
        gp = gp.add_observation(int(r["theta_idx"]), float(r["y"]) - offset)
    mu, _ = gp.posterior()
    return mu + offset


def render_heatmap(run_dir: Path, rep: int = 0, size: int = 800) -> str:
    cfg = config_from_json(json.loads((run_dir / "config.json").read_text()))
    g = cfg.grid()
    if g.dims != 2:
        raise ConfigError(f"heatmap needs a 2-D grid, this run is {g.dims}-D")
    rows = [r for r in read_iterations(run_dir / "iterations.csv") if int(r["rep"]) == rep]
    if not rows:
        raise ConfigError(f"no rows for repetition {rep} in {run_dir / 'iterations.csv'}")
    mu = posterior_mean_from_log(cfg, rows).reshape(g.shape)
    coords = [(float(r["theta_0"]), float(r["theta_1"])) for r in rows]
    ys = [float(r["y"]) for r in rows]
    tau = float(rows[0]["tau"])
    feasible = None
    if cfg.objective_kind == "synthetic":
        objective = resolve_objective(cfg)
        feasible = (objective.truth >= tau).reshape(g.shape)
    layout = HeatmapLayout((g.lo[0], g.lo[1]), (g.hi[0], g.hi[1]), size)
    return heatmap(mu, layout, samples=coords, seed=coords[0], best=coords[int(np.argmax(ys))],
                   feasible=feasible, title=f"posterior mean, {cfg.algorithm} rep {rep}")


# ------------------------------------------------------------------ commands

def cmd_tune(config_path, overrides: dict | None = None, quiet: bool = False) -> int:
    cfg = load_config(config_path, overrides)
    out = Path(cfg.output)
    results = run_all(cfg)
    summary = write_run(out, cfg, results)
    if not quiet:
        agg = summary["aggregate"]
        print(f"{cfg.algorithm} on {cfg.objective}: {agg['repetitions']} repetitions, "
              f"mean violations {agg['violations']:g}, mean iterations {agg['iterations']:g}, "
              f"converged {agg['converged_fraction']:.0%} -> {out}")
    return EXIT_OK


def _cell(v, spec: str) -> str:
    """Formatted number, or ``n/a`` when no repetition had tuning iterations."""
    return "n/a" if v is None else format(v, spec)


def comparison_table(run_dirs: list[Path]) -> tuple[list[str], list[list[str]]]:
    header = ["run", "algorithm", "violations", "min", "mean", "std", "iterations", "converged"]
    rows = []
    for d in run_dirs:
        summary = read_summary(d)
        agg = summary["aggregate"]
        rows.append([str(d), summary["algorithm"], _cell(agg["violations"], ".2f"), _cell(agg["min"], ".4f"),
                     _cell(agg["mean"], ".4f"), _cell(agg["std"], ".4f"), _cell(agg["iterations"], ".1f"),
                     _cell(agg["converged_fraction"], ".2f")])
    return header, rows


def cmd_compare(run_dirs, out=None, quiet: bool = False) -> int:
    dirs = [Path(d) for d in run_dirs]
    if len(dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    summaries = [read_summary(d) for d in dirs]
    objectives = {s["objective"] for s in summaries}
    if len(objectives) > 1:
        raise ConfigError(f"runs use different objectives ({', '.join(sorted(objectives))}); "
                          "regret curves would not be comparable")
    q_star = max(s["q_star"] for s in summaries)
    series = []
    for d, s in zip(dirs, summaries):
        curves = regret_curves(read_iterations(d / "iterations.csv"), q_star)
        # repetitions that stopped at the seed have no tuning iterations and no curve
        if not curves:
            continue
        length = min(len(c) for c in curves.values())
        mean = np.mean([c[:length] for c in curves.values()], axis=0)
        series.append((f"{s['algorithm']} ({d.name})", np.arange(1, length + 1), mean))
    out_dir = Path(out) if out else Path("compare")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "regret.svg").write_text(line_chart(series, f"mean cumulative regret on {objectives.pop()}",
                                                   "iteration", "cumulative regret"))
    header, rows = comparison_table(dirs)
    (out_dir / "table.csv").write_text(_csv_text(header, rows))
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(line, widths)) for line in [header, *rows]) + "\n"
    (out_dir / "table.txt").write_text(text)
    if not quiet:
        print(text, end="")
    return EXIT_OK


def cmd_heatmap(run_dir, out=None, rep: int = 0, quiet: bool = False) -> int:
    run_dir = Path(run_dir)
    if not (run_dir / "config.json").is_file():
        raise ConfigError(f"missing {run_dir / 'config.json'}; is this a tune output directory?")
    svg = render_heatmap(run_dir, rep)
    path = Path(out) if out else run_dir / "heatmap.svg"
    path.write_text(svg)
    if not quiet:
        print(f"wrote {path}")
    return EXIT_OK


def oracle_report(cfg: ExperimentConfig) -> dict:
    """Grid maximum and eps-reachable set from each repetition's seed (synthetics only)."""
    if cfg.objective_kind != "synthetic":
        raise ConfigError("the oracle needs a synthetic objective")
    objective = resolve_objective(cfg)
    g, q = objective.grid, objective.truth
    best = int(np.argmax(q))
    report = {
        "objective": cfg.objective,
        "grid_max": {"index": best, "coords": [float(c) for c in g.to_physical(g.coords[best])],
                     "value": float(q[best])},
        "epsilon": cfg.epsilon,
        "lipschitz": objective.lipschitz,
        "tau": objective.tau,
        "reps": [],
    }
    if objective.tau is None:
        raise ConfigError("the oracle needs an absolute tau")
    for rep, base in enumerate(cfg.seeds()):
        seed_ss, _ = np.random.SeedSequence(base).spawn(2)
        seed = pick_seed(cfg, objective, np.random.Generator(np.random.PCG64(seed_ss)))
        reach = true_reachable_set(q, seed, objective.lipschitz, cfg.epsilon, objective.tau, g)
        entry = {"rep": rep, "rng_seed": base, "seed": seed, "reachable_size": int(reach.sum())}
        if reach.any():
            idx = np.flatnonzero(reach)
            k = int(idx[np.argmax(q[idx])])
            entry["reachable_max"] = {"index": k, "coords": [float(c) for c in g.to_physical(g.coords[k])],
                                      "value": float(q[k])}
        report["reps"].append(entry)
    return report


def cmd_oracle(config_path, overrides: dict | None = None, out=None, quiet: bool = False) -> int:
    cfg = load_config(config_path, overrides)
    text = _dump_json(oracle_report(cfg))
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    if not quiet:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coat-tuner", description="Goal-directed safe controller tuning.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--quiet", action="store_true", help="only print errors")

    t = sub.add_parser("tune", help="run repetitions and write logs, summary and plots")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (overrides the config)")
    t.add_argument("--seed", type=int, help="base rng seed (repetition r uses seed + r)")
    t.add_argument("--algorithm", help="coat, gp_ucb or safe_opt")
    common(t)

    c = sub.add_parser("compare", help="overlay regret curves and tabulate several runs")
    c.add_argument("runs", nargs="+")
    c.add_argument("--out", help="output directory (default ./compare)")
    common(c)

    h = sub.add_parser("heatmap", help="posterior-mean heatmap with the sample trajectory")
    h.add_argument("run")
    h.add_argument("--out", help="SVG path (default <run>/heatmap.svg)")
    h.add_argument("--rep", type=int, default=0)
    common(h)

    o = sub.add_parser("oracle", help="exact grid maximum and reachable set of a synthetic")
    o.add_argument("--config", required=True)
    o.add_argument("--out", help="write the JSON report here as well")
    o.add_argument("--seed", type=int)
    common(o)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "tune":
            return cmd_tune(args.config, {"output": args.out, "rng_seed": args.seed,
                                          "algorithm": args.algorithm}, args.quiet)
        if args.command == "compare":
            return cmd_compare(args.runs, args.out, args.quiet)
        if args.command == "heatmap":
            return cmd_heatmap(args.run, args.out, args.rep, args.quiet)
        return cmd_oracle(args.config, {"rng_seed": args.seed}, args.out, args.quiet)
    except CoatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
