"""Command-line front end.

Subcommands map one-to-one onto the experiment stages:

    sweep      grid sweep over designs -> metrics.csv + overlap binaries
    train      optimizer sample-efficiency sweep -> training.csv
    coopt      co-optimization vs fixed-design baseline -> run records
    dtw        sensor-homeostasis scores for listed genomes -> dtw.csv
    stats      correlation/trend reports from existing outputs
    hillclimb  parallel hill-climber runs -> lineage logs + metrics
    report     human-readable summary + plot-ready series

Every run writes a manifest (config snapshot, checksums of all artifacts);
outputs are byte-identical for a fixed config and master seed regardless of
``--workers``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, coopt, landscape, optimizers, runner, storage
from .config import ConfigError, ExperimentConfig, config_sha256, load_config
from .sim import CANONICAL_DESIGN, BodyDesign, Policy


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (defaults apply if omitted)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $MORPHO_WORKERS or CPU count)")
    parser.add_argument("--profile", choices=["full", "desk"],
                        help="override the simulation profile")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "profile", None):
        overrides["profile"] = args.profile
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "bins", None) is not None:
        overrides["bins"] = args.bins
    if getattr(args, "grid_n", None) is not None:
        overrides["grid_n"] = args.grid_n
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    return cfg


class _ManifestRun:
    """Collects artifacts and writes the manifest, marking the run
    incomplete if the body raises."""

    def __init__(self, subcommand: str, cfg: ExperimentConfig, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        self.out = out
        self.manifest = storage.RunManifest(
            tool="morpho",
            version=__version__,
            subcommand=subcommand,
            config=cfg.to_dict(),
            config_sha256=config_sha256(cfg),
            rng=runner.RNG_NAME,
        )

    def add(self, path: Path) -> Path:
        self.manifest.add_artifact(self.out, path)
        return path

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.status = "complete" if exc_type is None else "incomplete"
        self.manifest.write(self.out)
        return False


# --- sweep ---

def cmd_sweep(args) -> int:
    cfg = _load(args)
    workers = runner.resolve_workers(args.workers)
    out = Path(args.out)
    dgrid = landscape.DesignGrid(cfg.bins)
    wgrid = landscape.WeightGrid(cfg.grid_n)
    envset = cfg.environment_set()
    profile = cfg.sim_profile()
    store_success = args.store_success_matrices or cfg.store_success_matrices

    with _ManifestRun("sweep", cfg, out) as run:
        overlap_dir = out / "overlaps"
        overlap_dir.mkdir(exist_ok=True)
        success_dir = out / "success"
        if store_success:
            success_dir.mkdir(exist_ok=True)

        def on_design(row, mats):
            path = overlap_dir / storage.overlap_filename(row.design_index)
            storage.write_overlap(path, row.overlap)
            run.add(path)
            if mats is not None:
                for k, mat in enumerate(mats):
                    sp = success_dir / f"design_{row.design_index:06d}_env{k}.ovlp"
                    storage.write_overlap(
                        sp, landscape.OverlapMatrix(mat.astype(np.int64), k=1))
                    run.add(sp)

        rows = landscape.sweep_designs(
            dgrid, wgrid, envset, profile,
            workers=workers,
            exploit_symmetry=not args.no_symmetry,
            keep_success_matrices=store_success,
            on_design=on_design,
        )
        metrics_path = out / "metrics.csv"
        storage.write_metrics_csv(metrics_path, rows, k=len(envset))
        run.add(metrics_path)
    print(f"sweep: {len(rows)} designs -> {out / 'metrics.csv'}")
    return 0


# --- train ---

def _designs_from_metrics(metrics_path: Path, cfg: ExperimentConfig):
    rows = storage.read_metrics_csv(metrics_path)
    expected = cfg.bins ** 4
    if len(rows) != expected:
        raise ConfigError("bins", f"metrics table has {len(rows)} rows but the "
                                  f"configured design grid has {expected}")
    dgrid = landscape.DesignGrid(cfg.bins)
    designs = []
    for row in rows:
        design = dgrid.design_at(row["design_index"])
        got = (row["l1x"], row["l1y"], row["l2x"], row["l2y"])
        want = (*design.l1, *design.l2)
        if any(abs(a - b) > 1e-9 for a, b in zip(got, want)):
            raise ConfigError("bins", f"design {row['design_index']} in the metrics "
                                      "table does not match the configured grid")
        designs.append((row["design_index"], design, row["m_l"]))
    return designs


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.budget is not None:
        cfg = replace(cfg, train=replace(cfg.train, budget=args.budget))
    if args.sample is not None:
        cfg = replace(cfg, train=replace(cfg.train, sample=args.sample))
    if args.seeds is not None:
        cfg = replace(cfg, train=replace(cfg.train, seeds_per_design=args.seeds))
    cfg.validate()
    workers = runner.resolve_workers(args.workers)
    out = Path(args.out)

    designs = _designs_from_metrics(Path(args.metrics), cfg)
    if cfg.train.sample is not None:
        picked = landscape.stratified_indices(
            [m for _, _, m in designs], cfg.train.sample, cfg.train.strata,
            cfg.master_seed)
        designs = [designs[i] for i in picked]

    with _ManifestRun("train", cfg, out) as run:
        records = optimizers.train_sweep(
            [(i, d) for i, d, _ in designs],
            cfg.train.methods,
            cfg.train.seeds_per_design,
            cfg.train.budget,
            cfg.environment_set(),
            cfg.sim_profile(),
            workers=workers,
            master_seed=cfg.master_seed,
        )
        path = out / "training.csv"
        storage.write_training_csv(path, records)
        run.add(path)
    censored = sum(1 for r in records if r.evals_to_full_success is None)
    print(f"train: {len(records)} runs ({censored} censored) -> {out / 'training.csv'}")
    return 0


# --- coopt ---

def _coopt_task(task):
    arm, envset, profile, budget, seed, population = task
    fn = coopt.co_optimize if arm == "coopt" else coopt.baseline_optimize
    return fn(envset, profile, budget, seed, population=population)


def cmd_coopt(args) -> int:
    cfg = _load(args)
    if args.budget is not None:
        cfg = replace(cfg, coopt=replace(cfg.coopt, budget=args.budget))
    if args.arm_seeds is not None:
        cfg = replace(cfg, coopt=replace(cfg.coopt, seeds=args.arm_seeds))
    cfg.validate()
    workers = runner.resolve_workers(args.workers)
    out = Path(args.out)
    envset = cfg.environment_set()
    profile = cfg.sim_profile()

    tasks = []
    for arm_index, arm in enumerate(("coopt", "baseline")):
        for rep in range(cfg.coopt.seeds):
            seed = runner.derive_seed(cfg.master_seed, 0xC0, arm_index, rep)
            tasks.append((arm, envset, profile, cfg.coopt.budget, seed,
                          cfg.coopt.population))

    with _ManifestRun("coopt", cfg, out) as run:
        records = runner.parallel_map(_coopt_task, tasks, workers=workers)
        by_arm = {"coopt": [], "baseline": []}
        for record in records:
            by_arm[record.arm].append(record)
            path = out / f"{record.arm}_{record.seed:020d}.jsonl"
            storage.write_coopt_record(path, record)
            run.add(path)
        stat = coopt.compare_runs(by_arm["coopt"], by_arm["baseline"])
        comparison = {
            "test": "mann_whitney_two_sided",
            "statistic_u_coopt": stat.statistic,
            "p_value": stat.p_value,
            "n_coopt": stat.n,
            "n_baseline": stat.n2,
            "evals_coopt": coopt.evals_with_censoring(by_arm["coopt"]),
            "evals_baseline": coopt.evals_with_censoring(by_arm["baseline"]),
        }
        cmp_path = out / "comparison.json"
        cmp_path.write_text(json.dumps(comparison, sort_keys=True, indent=2) + "\n",
                            encoding="utf-8")
        run.add(cmp_path)
    print(f"coopt: U={stat.statistic:.1f} p={stat.p_value:.3g} -> {out}")
    return 0


# --- dtw ---

def cmd_dtw(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    envset = cfg.environment_set()
    profile = cfg.sim_profile()
    genomes = []
    with open(args.genomes, newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            genomes.append(tuple(float(record[k])
                                 for k in ("l1x", "l1y", "l2x", "l2y", "w1", "w2")))
    with _ManifestRun("dtw", cfg, out) as run:
        path = out / "dtw.csv"
        with open(path, "w", newline="\n", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["l1x", "l1y", "l2x", "l2y", "w1", "w2", "aggregate_dtw"])
            for g in genomes:
                design = BodyDesign(l1=(g[0], g[1]), l2=(g[2], g[3]))
                score = analysis.aggregate_dtw(design, Policy(g[4], g[5]),
                                               envset, profile)
                writer.writerow([format(v, ".9g") for v in g]
                                + [format(score, ".9g")])
        run.add(path)
    print(f"dtw: {len(genomes)} genomes -> {path}")
    return 0


# --- stats ---

def _stat_record(name: str, compute, **extra) -> dict:
    """Run one statistic; degenerate inputs yield an error record instead
    of aborting the report."""
    try:
        stat = compute()
    except ValueError as exc:
        return {"metric": name, "error": str(exc), **extra}
    rec = {"metric": name, "statistic": stat.statistic,
           "p_value": stat.p_value, "n": stat.n}
    if stat.n2 is not None:
        rec["n2"] = stat.n2
    rec.update(extra)
    return rec


def cmd_stats(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    records = []

    metrics_rows = storage.read_metrics_csv(Path(args.metrics)) if args.metrics else None
    if metrics_rows:
        m_l = [r["m_l"] for r in metrics_rows]
        m_ci = [r["m_ci"] for r in metrics_rows]
        records.append(_stat_record("pearson_learnability_vs_interference",
                                    lambda: analysis.pearson(m_l, m_ci)))

    if args.training:
        if not metrics_rows:
            raise ConfigError("", "--training requires --metrics for the join")
        budget = args.budget if args.budget is not None else cfg.train.budget
        training = storage.read_training_csv(Path(args.training))
        m_l_by_design = {r["design_index"]: r["m_l"] for r in metrics_rows}
        per_method: dict[str, dict[int, list[float]]] = {}
        for row in training:
            evals = row["evals_to_full_success"]
            value = budget + 1 if evals < 0 else evals
            per_method.setdefault(row["method"], {}).setdefault(
                row["design_index"], []).append(float(value))
        for method in sorted(per_method):
            designs = sorted(per_method[method])
            xs = [m_l_by_design[d] for d in designs]
            ys = [sum(per_method[method][d]) / len(per_method[method][d])
                  for d in designs]
            records.append(_stat_record(
                f"pearson_learnability_vs_mean_evals[{method}]",
                lambda xs=xs, ys=ys: analysis.pearson(xs, ys),
                censored_at=budget + 1))

    if args.coopt_dir:
        coopt_dir = Path(args.coopt_dir)
        orders, scores = [], []
        arms = {"coopt": [], "baseline": []}
        for path in sorted(coopt_dir.glob("*.jsonl")):
            record = storage.read_coopt_record(path)
            arms[record.arm].append(record)
            if record.arm == "coopt":
                for order, adm in enumerate(record.admissions):
                    if adm.dtw == adm.dtw:
                        orders.append(order)
                        scores.append(adm.dtw)
        if orders:
            records.append(_stat_record("spearman_admission_order_vs_dtw",
                                        lambda: analysis.spearman(orders, scores)))
        if arms["coopt"] and arms["baseline"]:
            records.append(_stat_record("mann_whitney_coopt_vs_baseline",
                                        lambda: coopt.compare_runs(
                                            arms["coopt"], arms["baseline"])))

    if not records:
        raise ConfigError("", "nothing to analyze: pass --metrics, --training, "
                              "and/or --coopt-dir")

    with _ManifestRun("stats", cfg, out) as run:
        path = out / "stats.jsonl"
        path.write_text(
            "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                    for r in records), encoding="utf-8")
        run.add(path)
    for r in records:
        if "error" in r:
            print(f"{r['metric']}: skipped ({r['error']})")
        else:
            print(f"{r['metric']}: statistic={r['statistic']:.4g} p={r['p_value']:.4g}")
    return 0


# --- hillclimb ---

def _hillclimb_task(task):
    envset, profile, kind, pop, generations, m, seed, design = task
    return optimizers.hill_climb(envset, profile, kind, pop, generations, m,
                                 seed, design)


def cmd_hillclimb(args) -> int:
    cfg = _load(args)
    if args.combinator:
        cfg = replace(cfg, hillclimb=replace(cfg.hillclimb,
                                             combinators=tuple(args.combinator)))
    if args.hc_seeds is not None:
        cfg = replace(cfg, hillclimb=replace(cfg.hillclimb, runs=args.hc_seeds))
    cfg.validate()
    workers = runner.resolve_workers(args.workers)
    out = Path(args.out)
    envset = cfg.environment_set()
    profile = cfg.hillclimb_profile()
    hc = cfg.hillclimb

    tasks = []
    for kind_index, kind in enumerate(hc.combinators):
        for rep in range(hc.runs):
            seed = runner.derive_seed(cfg.master_seed, 0x4C, kind_index, rep)
            tasks.append((envset, profile, kind, hc.pop, hc.generations,
                          hc.mutation_scale, seed, CANONICAL_DESIGN))

    with _ManifestRun("hillclimb", cfg, out) as run:
        logs = runner.parallel_map(_hillclimb_task, tasks, workers=workers)
        lineage_dir = out / "lineage"
        lineage_dir.mkdir(exist_ok=True)
        by_kind: dict[str, list] = {}
        for log in logs:
            by_kind.setdefault(log.kind, []).append(log)
            path = lineage_dir / f"{log.kind}_{log.seed:020d}.jsonl"
            storage.write_lineage_log(path, log)
            run.add(path)
        summary = {}
        for kind, kind_logs in by_kind.items():
            m = analysis.chapter_two_metrics(kind_logs, k=len(envset))
            summary[kind] = {
                "m1_mean_worst_distance": m.m1,
                "m2_mean_angle_deg": m.m2,
                "m3_mean_improvement_length": m.m3,
                "m4_fraction_all_positive": m.m4,
                "runs": m.runs,
                "runs_with_mutations": m.runs_with_mutations,
            }
        path = out / "interference.json"
        path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        run.add(path)
    for kind, vals in sorted(summary.items()):
        print(f"hillclimb[{kind}]: m1={vals['m1_mean_worst_distance']:.3f} "
              f"m4={vals['m4_fraction_all_positive']:.3f}")
    return 0


# --- report ---

def cmd_report(args) -> int:
    src = Path(args.results)
    out = Path(args.out)
    cfg = _load(args)
    lines = ["morpho experiment summary", "=" * 26, ""]
    with _ManifestRun("report", cfg, out) as run:
        metrics_path = src / "metrics.csv"
        if metrics_path.exists():
            rows = storage.read_metrics_csv(metrics_path)
            rows_sorted = sorted(rows, key=lambda r: (-r["m_l"], r["design_index"]))
            lines.append(f"designs swept: {len(rows)}")
            lines.append("top designs by learnability:")
            lines.append("  index   l1              l2              m_l       m_ci")
            for r in rows_sorted[:10]:
                lines.append(
                    f"  {r['design_index']:>6}  ({r['l1x']:+.3f},{r['l1y']:+.3f})"
                    f"  ({r['l2x']:+.3f},{r['l2y']:+.3f})"
                    f"  {r['m_l']:<8.5f}  {r['m_ci']:<8.5f}")
            canonical = [r for r in rows
                         if (r["l1x"], r["l1y"], r["l2x"], r["l2y"]) ==
                         (0.5, 0.5, 0.5, -0.5)]
            if canonical:
                c = canonical[0]
                lines.append(f"canonical design (index {c['design_index']}): "
                             f"m_l={c['m_l']:.5f} m_ci={c['m_ci']:.5f}")
            zero = sum(1 for r in rows if r["m_l"] == 0.0)
            lines.append(f"designs with zero learnability: {zero}/{len(rows)}")
            lines.append("")

        training_path = src / "training.csv"
        if training_path.exists():
            training = storage.read_training_csv(training_path)
            csum_path = out / "training_summary.csv"
            with open(csum_path, "w", newline="\n", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["method", "runs", "censored", "mean_evals_censored_at_budget_plus_1"])
                budget = cfg.train.budget
                for method in sorted({t["method"] for t in training}):
                    sub = [t for t in training if t["method"] == method]
                    censored = sum(1 for t in sub if t["evals_to_full_success"] < 0)
                    mean = sum(budget + 1 if t["evals_to_full_success"] < 0
                               else t["evals_to_full_success"] for t in sub) / len(sub)
                    writer.writerow([method, len(sub), censored, format(mean, ".9g")])
                    lines.append(f"training[{method}]: {len(sub)} runs, "
                                 f"{censored} censored, mean evals {mean:.1f}")
            run.add(csum_path)
            lines.append("")

        record_paths = sorted(src.glob("*.jsonl"))
        if record_paths:
            records = [storage.read_coopt_record(p) for p in record_paths]
            series_path = out / "coopt_success_series.csv"
            with open(series_path, "w", newline="\n", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["arm", "eval", "mean_envs_solved"])
                for arm in ("coopt", "baseline"):
                    arm_records = [r for r in records if r.arm == arm]
                    if not arm_records:
                        continue
                    grid = range(0, max(r.evals_used for r in arm_records) + 1,
                                 max(1, arm_records[0].population))
                    for e in grid:
                        vals = []
                        for r in arm_records:
                            solved = 0
                            for ee, ss in r.success_count_curve:
                                if ee <= e:
                                    solved = ss
                            vals.append(solved)
                        writer.writerow([arm, e,
                                         format(sum(vals) / len(vals), ".9g")])
            run.add(series_path)
            trend_path = out / "dtw_trend.csv"
            with open(trend_path, "w", newline="\n", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["arm", "seed", "admission_order", "eval", "dtw"])
                for r in records:
                    for order, adm in enumerate(r.admissions):
                        if adm.dtw == adm.dtw:
                            writer.writerow([r.arm, r.seed, order, adm.eval_index,
                                             format(adm.dtw, ".9g")])
            run.add(trend_path)
            solved = {arm: [r.envs_solved for r in records if r.arm == arm]
                      for arm in ("coopt", "baseline")}
            for arm, vals in solved.items():
                if vals:
                    lines.append(f"{arm}: {len(vals)} runs, "
                                 f"full-success runs: {sum(1 for v in vals if v == 4)}")
            lines.append("")

        report_path = out / "report.txt"
        report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        run.add(report_path)
    print(f"report -> {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morpho",
        description="Sensor-placement loss-landscape experiments for a "
                    "two-sensor phototaxis robot.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("sweep", help="grid sweep over designs and weights")
    _add_common(p)
    p.add_argument("--bins", type=int, default=None, help="design bins per axis")
    p.add_argument("--grid-n", type=int, default=None, dest="grid_n",
                   help="weight grid points per axis (odd)")
    p.add_argument("--store-success-matrices", action="store_true",
                   help="also persist per-environment success matrices")
    p.add_argument("--no-symmetry", action="store_true",
                   help="disable the mirror-symmetry fast path")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("train", help="optimizer sample-efficiency sweep")
    _add_common(p)
    p.add_argument("--metrics", required=True,
                   help="metrics.csv from a sweep over the same grid")
    p.add_argument("--sample", type=int, default=None,
                   help="stratified sample size (by learnability)")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="repetitions per design")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("coopt", help="co-optimization vs fixed-design baseline")
    _add_common(p)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, dest="arm_seeds",
                   help="seeds per arm")
    p.set_defaults(fn=cmd_coopt)

    p = sub.add_parser("dtw", help="aggregate DTW scores for listed genomes")
    _add_common(p)
    p.add_argument("--genomes", required=True,
                   help="CSV with columns l1x,l1y,l2x,l2y,w1,w2")
    p.set_defaults(fn=cmd_dtw)

    p = sub.add_parser("stats", help="correlation / trend reports")
    _add_common(p)
    p.add_argument("--metrics", help="metrics.csv")
    p.add_argument("--training", help="training.csv")
    p.add_argument("--budget", type=int, default=None,
                   help="training budget (for censoring)")
    p.add_argument("--coopt-dir", dest="coopt_dir",
                   help="directory of co-optimization run records")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("hillclimb", help="parallel hill-climber treatments")
    _add_common(p)
    p.add_argument("--combinator", action="append",
                   choices=list(optimizers.COMBINATORS),
                   help="fitness combinator (repeatable)")
    p.add_argument("--seeds", type=int, default=None, dest="hc_seeds",
                   help="runs per combinator")
    p.set_defaults(fn=cmd_hillclimb)

    p = sub.add_parser("report", help="summaries and plot-ready series")
    _add_common(p)
    p.add_argument("--results", required=True,
                   help="directory holding earlier outputs")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
