"""Command-line interface: ``gnnspace <subcommand> ...``.

Usage errors exit with status 2, domain errors with status 1 and a JSON
message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from gnnspace import evaluator
from gnnspace.errors import GnnSpaceError
from gnnspace.experiment import (
    ExperimentConfig,
    RunRegistry,
    aggregate,
    launch_batch,
    load_configs,
    perf_from_aggregate,
    read_aggregate_csv,
    resolve_task,
    run,
    sample_designs,
    task_filename,
    toy_tasks,
    write_aggregate_csv,
)
from gnnspace.space import SpaceSpec, experiment_space_size, get_space
from gnnspace.taskspace import (
    SimilarityMatrix,
    read_anchors,
    select_anchors,
    similarity_matrix,
    transfer_correlation,
    transfer_matrix,
    write_anchors,
)
from gnnspace.tasks import (
    FAMILIES,
    assemble_synthetic_tasks,
    build_link_task,
    fill_statistic_grid,
)

DESK_REFERENCE_HIDDEN = 32
DESK_EPOCHS = 50


def _epochs(text):
    if text == "design":
        return None
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("epochs must be >= 0 or 'design'")
    return value


def _space(args):
    if getattr(args, "space_file", None):
        with open(args.space_file) as fh:
            return SpaceSpec.from_descriptor(json.load(fh))
    return get_space(args.space, getattr(args, "attention", False))


def _task_refs(args):
    if args.tasks_dir:
        index = Path(args.tasks_dir) / "index.json"
        with open(index) as fh:
            return json.load(fh)["tasks"]
    return [f"toy:{t.id}" for t in toy_tasks()]


def cmd_gen_tasks(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sets = {fam: fill_statistic_grid(fam, grid=args.grid, per_bin=args.per_bin, seed=args.seed,
                                     budget=args.budget) for fam in FAMILIES}
    tasks = assemble_synthetic_tasks(sets["small_world"], sets["scale_free"])
    if args.link:
        tasks += [build_link_task(sets[f], seed=args.seed) for f in FAMILIES]
    for t in tasks:
        t.save(out / task_filename(t.id))
    with open(out / "index.json", "w") as fh:
        json.dump({"tasks": [t.id for t in tasks]}, fh, indent=2)
    print(f"wrote {len(tasks)} tasks to {out}")


def cmd_enumerate(args):
    space = _space(args)
    if args.count_only:
        print(space.cardinality)
        if args.tasks:
            print(experiment_space_size(space, args.tasks))
        return
    for i, d in enumerate(space):
        if args.limit and i >= args.limit:
            break
        print(d.id)


def cmd_sample(args):
    for d in _space(args).sample(args.n, seed=args.seed):
        print(d.id)


def cmd_configs(args):
    designs = sample_designs(args.D, args.seed, _space(args))
    configs = [ExperimentConfig(ref, d.id, reference_hidden=args.reference_hidden, epochs=args.epochs,
                                rng_seed=args.seed).to_json()
               for ref in _task_refs(args) for d in designs]
    with open(args.out, "w") as fh:
        json.dump(configs, fh, indent=2)
    print(f"wrote {len(configs)} configs ({len(designs)} designs) to {args.out}")


def cmd_run(args):
    registry = RunRegistry(args.registry)
    total = 0
    for cfg in load_configs(args.config):
        total += len(run(cfg, registry, args.tasks_dir, force=args.force))
    print(f"{total} new records; registry has {len(registry)} rows")


def cmd_launch(args):
    configs = [c for path in args.configs for c in load_configs(path)]
    registry = RunRegistry(args.registry)
    s = launch_batch(configs, registry, workers=args.workers, tasks_dir=args.tasks_dir, force=args.force)
    print(json.dumps({"completed": s.completed, "skipped": s.skipped, "failed": len(s.failed),
                      "failures": s.failed}, indent=2))


def _crs_configs(plan, args):
    return {(i, c): ExperimentConfig(task_id, design.id, reference_hidden=args.reference_hidden,
                                     epochs=args.epochs, rng_seed=args.seed)
            for i, c, design, task_id in plan.experiments()}


def cmd_crs(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    space = _space(args)
    plan = evaluator.make_crs_plan(space, _task_refs(args), args.dimension, args.S, args.seed)
    configs = _crs_configs(plan, args)
    registry = RunRegistry(out / "registry.jsonl")
    launch_batch(list(dict.fromkeys(configs.values())), registry, workers=args.workers,
                 tasks_dir=args.tasks_dir)
    results = {}
    failed = 0
    for key, cfg in configs.items():
        task_id = resolve_task(cfg.task, args.tasks_dir).id
        vals = registry.values(task_id, cfg.design)
        # a design with no surviving seed ranks last in its setup
        results[key] = float(np.mean(vals)) if vals else 0.0
        failed += not vals
    if failed:
        print(f"warning: {failed} experiments had no successful seed and score 0.0", file=sys.stderr)
    dists = evaluator.aggregate_ranks(plan, results, args.epsilon)
    m = len(plan.choices)
    evaluator.write_rank_csv(out / f"crs_{args.dimension}.csv", args.dimension, dists, m)
    with open(out / f"crs_{args.dimension}.json", "w") as fh:
        json.dump(evaluator.crs_to_json(plan, results, dists), fh, indent=2)
    for d in dists:
        print(f"{args.dimension}={d.choice}\tmean_rank={d.mean_rank:.4f}\thist={d.histogram(m)}")


def cmd_anchors(args):
    perf = perf_from_aggregate(read_aggregate_csv(args.perf))
    anchors = select_anchors(perf, args.M)
    write_anchors(args.out, anchors, perf)
    for a in anchors:
        print(a)


def cmd_simmatrix(args):
    perf = perf_from_aggregate(read_aggregate_csv(args.perf))
    sim = similarity_matrix(perf.subset(read_anchors(args.anchors)))
    sim.to_csv(args.out)
    print(f"wrote {len(sim.tasks)}x{len(sim.tasks)} similarity matrix to {args.out}"
          f" ({int(sim.undefined.sum()) // 2} undefined pairs)")


def cmd_transfer(args):
    perf = perf_from_aggregate(read_aggregate_csv(args.perf))
    sim = SimilarityMatrix.from_csv(args.sim)
    order = [perf.tasks.index(t) for t in sim.tasks]
    tm = transfer_matrix(perf)[np.ix_(order, order)]
    if args.out:
        SimilarityMatrix(sim.tasks, tm, np.zeros_like(tm, dtype=bool)).to_csv(args.out)
    print(f"pearson={transfer_correlation(sim, tm):.6f}")


def cmd_anova(args):
    print("dimension\tF\tp\tp_bonferroni\tsignificant")
    for path in args.crs:
        obj = evaluator.load_crs_json(path)
        groups = evaluator.groups_from_crs_json(obj, args.epsilon, use_ranks=args.ranks)
        f, p = evaluator.one_way_anova(list(groups.values()))
        pc = evaluator.bonferroni(p, args.dims)
        print(f"{obj['dimension']}\t{f:.6g}\t{p:.6g}\t{pc:.6g}\t{pc < args.alpha}")


def cmd_report(args):
    rows, failed = aggregate(RunRegistry(args.registry))
    write_aggregate_csv(args.out, rows)
    print(f"wrote {len(rows)} aggregate rows to {args.out} ({failed} failed rows excluded)")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="gnnspace", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, formatter_class=fmt)
        sp.set_defaults(fn=fn)
        return sp

    def space_args(sp):
        sp.add_argument("--space", choices=["full", "condensed"], default="full", help="named design space")
        sp.add_argument("--attention", action="store_true", help="add the attention dimension")
        sp.add_argument("--space-file", default=None, help="space descriptor JSON (overrides --space)")

    def budget_args(sp):
        sp.add_argument("--reference-hidden", type=int, default=DESK_REFERENCE_HIDDEN,
                        help="hidden width of the budget reference model (256 at full scale)")
        sp.add_argument("--epochs", type=_epochs, default=DESK_EPOCHS,
                        help="training epochs for every design, or 'design' to use the design's own")

    sp = add("gen-tasks", cmd_gen_tasks, "generate the synthetic task suite")
    sp.add_argument("--out", required=True, help="output directory for task JSON files")
    sp.add_argument("--grid", type=int, default=4, help="bins per statistic axis")
    sp.add_argument("--per-bin", type=int, default=2, help="graphs per bin")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--budget", type=int, default=200_000, help="maximum candidate graphs per family")
    sp.add_argument("--link", action="store_true", help="also write link-prediction tasks")

    sp = add("enumerate", cmd_enumerate, "list designs of a space or count them")
    space_args(sp)
    sp.add_argument("--count-only", action="store_true", help="print the number of designs only")
    sp.add_argument("--tasks", type=int, default=0, help="with --count-only, also print designs x tasks")
    sp.add_argument("--limit", type=int, default=0, help="stop after this many designs (0 = all)")

    sp = add("sample", cmd_sample, "sample designs uniformly")
    space_args(sp)
    sp.add_argument("--n", type=int, default=10, help="number of designs")
    sp.add_argument("--seed", type=int, default=0, help="random seed")

    sp = add("configs", cmd_configs, "write configs for D sampled designs on every task")
    sp.add_argument("--D", type=int, default=96, help="number of distinct designs")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--tasks-dir", default=None, help="directory from gen-tasks (default: bundled toy tasks)")
    sp.add_argument("--out", default="configs.json", help="output config file")
    space_args(sp)
    budget_args(sp)

    sp = add("run", cmd_run, "run experiment config(s)")
    sp.add_argument("--config", required=True, help="config JSON file (one object or a list)")
    sp.add_argument("--registry", default="results/registry.jsonl", help="registry JSONL file")
    sp.add_argument("--tasks-dir", default=None, help="directory from gen-tasks")
    sp.add_argument("--force", action="store_true", help="re-run seeds already in the registry")

    sp = add("launch", cmd_launch, "run many configs in parallel")
    sp.add_argument("--configs", nargs="+", required=True, help="config JSON files")
    sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--registry", default="results/registry.jsonl", help="registry JSONL file")
    sp.add_argument("--tasks-dir", default=None, help="directory from gen-tasks")
    sp.add_argument("--force", action="store_true", help="re-run seeds already in the registry")

    sp = add("crs", cmd_crs, "controlled random search over one dimension")
    sp.add_argument("--dimension", required=True, help="design dimension to study")
    sp.add_argument("--S", type=int, default=96, help="number of random (design, task) setups")
    sp.add_argument("--epsilon", type=float, default=evaluator.EPSILON, help="metric tolerance for a tie")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--tasks-dir", default=None, help="directory from gen-tasks (default: bundled toy tasks)")
    sp.add_argument("--out", default="results/crs", help="output directory")
    space_args(sp)
    budget_args(sp)

    sp = add("anchors", cmd_anchors, "select anchor designs from an aggregate CSV")
    sp.add_argument("--perf", required=True, help="aggregate CSV from report")
    sp.add_argument("--M", type=int, default=12, help="number of anchor designs")
    sp.add_argument("--out", default="anchors.json", help="output anchors file")

    sp = add("simmatrix", cmd_simmatrix, "task similarity matrix from anchor performance")
    sp.add_argument("--perf", required=True, help="aggregate CSV from report")
    sp.add_argument("--anchors", required=True, help="anchors file")
    sp.add_argument("--out", default="similarity.csv", help="output similarity CSV")

    sp = add("transfer", cmd_transfer, "correlate design transfer with task similarity")
    sp.add_argument("--perf", required=True, help="aggregate CSV from report")
    sp.add_argument("--sim", required=True, help="similarity CSV")
    sp.add_argument("--out", default=None, help="optional transfer matrix CSV")

    sp = add("anova", cmd_anova, "one-way ANOVA per CRS result with Bonferroni correction")
    sp.add_argument("--crs", nargs="+", required=True, help="crs_<dimension>.json files")
    sp.add_argument("--alpha", type=float, default=0.05, help="significance level")
    sp.add_argument("--dims", type=int, default=12, help="number of tests for the correction")
    sp.add_argument("--epsilon", type=float, default=evaluator.EPSILON, help="metric tolerance for a tie (with --ranks)")
    sp.add_argument("--ranks", action="store_true", help="test within-setup ranks instead of metrics")

    sp = add("report", cmd_report, "aggregate a registry into a CSV")
    sp.add_argument("--registry", default="results/registry.jsonl", help="registry JSONL file")
    sp.add_argument("--out", default="aggregate.csv", help="output aggregate CSV")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (GnnSpaceError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
