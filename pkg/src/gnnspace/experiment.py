"""Experiment configs, the results registry, and batch execution."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import random
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from gnnspace.errors import ConfigError, GnnSpaceError, IntegrityError
from gnnspace.space import REFERENCE_HIDDEN, condensed_space, parse_design_id
from gnnspace.taskspace import (
    PerfMatrix,
    select_anchors,
    similarity_matrix,
    transfer_correlation,
    transfer_matrix,
)
from gnnspace.graph import generate_scale_free, generate_small_world, is_connected
from gnnspace.tasks import Task, build_labels, load_external_task
from gnnspace.train import PROTOCOL_SEEDS, derive_seed, run_protocol

TOY_POOLS = ("smallworld", "scalefree", "mixed")
ROW_FIELDS = ("task", "design", "seed", "metric", "value", "params", "status", "config_hash")


@dataclass(frozen=True)
class ExperimentConfig:
    """One (task, design) experiment over several split seeds.

    ``epochs`` overrides the design's epoch count when set (desk-scale runs).
    ``output_dir`` is where results go and is not part of the experiment's identity.
    """

    task: str
    design: str
    seeds: tuple = PROTOCOL_SEEDS
    reference_hidden: int = REFERENCE_HIDDEN
    epochs: int | None = None
    rng_seed: int = 0
    output_dir: str = field(default="results", compare=False)

    def identity(self):
        d = asdict(self)
        d.pop("output_dir")
        d["seeds"] = [int(s) for s in self.seeds]
        return d

    def canonical_bytes(self):
        return json.dumps(self.identity(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def experiment_seed(self, split_seed):
        return derive_seed(self.config_hash, split_seed)

    def to_json(self):
        d = self.identity()
        d["output_dir"] = self.output_dir
        return d

    @classmethod
    def from_json(cls, obj):
        known = {"task", "design", "seeds", "reference_hidden", "epochs", "rng_seed", "output_dir"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "task" not in obj or "design" not in obj:
            raise ConfigError("config needs 'task' and 'design'")
        kw = dict(obj)
        if "seeds" in kw:
            kw["seeds"] = tuple(int(s) for s in kw["seeds"])
        return cls(**kw)


def load_configs(path):
    """A config file holds one config object or a list of them."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    objs = obj if isinstance(obj, list) else [obj]
    return [ExperimentConfig.from_json(o) for o in objs]


# -- task resolution ------------------------------------------------------------------

def task_filename(task_id):
    return task_id.replace("/", "_") + ".json"


def _toy_graphs(family, count, rng):
    out = []
    while len(out) < count:
        n = rng.randint(20, 32)
        small = family == "smallworld" or (family == "mixed" and len(out) % 2)
        g = generate_small_world(n, 4, 0.5, rng) if small else generate_scale_free(n, 2, 0.3, rng)
        if is_connected(g):
            out.append(g)
    return out


@lru_cache(maxsize=None)
def toy_tasks(seed=0, graphs_per_task=16, classes=5):
    """Small deterministic task set for smoke runs and desk-scale checks.

    Two node-task groups on three graph pools. ``const-degree`` predicts the
    binned degree from constant features, which only a sum aggregator can see.
    ``random-neighbormean`` predicts the binned neighbour mean of a random
    scalar feature, where mean aggregation fits directly.
    """
    tasks = []
    for i, family in enumerate(TOY_POOLS):
        graphs = _toy_graphs(family, graphs_per_task, random.Random(1000 * seed + i))
        degree = np.concatenate([g.degrees() for g in graphs]).astype(np.float64)
        n = len(degree)
        tasks.append(Task(f"node-{family}-const-degree", "node", graphs, np.ones((n, 1)),
                          build_labels(degree, classes), classes, "accuracy"))
        x = np.random.default_rng(1000 * seed + i).random((n, 1))
        offsets = np.concatenate([[0], np.cumsum([g.n for g in graphs])])
        target = np.array([x[offsets[k] + np.asarray(g.neighbors(v)), 0].mean()
                           for k, g in enumerate(graphs) for v in range(g.n)])
        tasks.append(Task(f"node-{family}-random-neighbormean", "node", graphs, x,
                          build_labels(target, classes), classes, "accuracy"))
    for t in tasks:
        t.validate()
    return tuple(sorted(tasks, key=lambda t: t.id))


@lru_cache(maxsize=256)
def resolve_task(ref, tasks_dir=None):
    """Resolve a task reference: a JSON path, ``toy:<id>``, or an id inside ``tasks_dir``."""
    if ref.startswith("toy:"):
        for t in toy_tasks():
            if t.id == ref[4:]:
                return t
        raise ConfigError(f"no toy task named {ref[4:]!r}")
    if os.path.isfile(ref):
        return load_external_task(ref)
    if tasks_dir:
        path = Path(tasks_dir) / task_filename(ref)
        if path.is_file():
            return load_external_task(path)
    raise ConfigError(f"cannot resolve task {ref!r}")


# -- registry ----------------------------------------------------------------------------

def row_digest(row):
    body = {k: row[k] for k in ROW_FIELDS}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def make_row(record):
    row = {
        "task": record.task_id,
        "design": record.design_id,
        "seed": int(record.split_seed),
        "metric": record.metric_name,
        "value": float(record.value),
        "params": int(record.param_count),
        "status": record.status,
        "config_hash": record.config_hash,
    }
    row["digest"] = row_digest(row)
    return row


def failed_row(config, seed, metric=""):
    row = {"task": config.task, "design": config.design, "seed": int(seed), "metric": metric,
           "value": 0.0, "params": 0, "status": "failed", "config_hash": config.config_hash}
    row["digest"] = row_digest(row)
    return row


class RunRegistry:
    """Results keyed by (task, design, seed), persisted as sorted JSONL.

    Each row carries a digest of its fields; loading a row whose digest does not
    match raises :class:`IntegrityError`. Flushes write a temporary file and
    rename it over the registry, so readers never see a partial file.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.rows = {}
        if self.path and self.path.exists():
            self._load()

    @staticmethod
    def key(row):
        return (row["task"], row["design"], int(row["seed"]))

    def _load(self):
        with open(self.path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                row = json.loads(line)
                missing = [k for k in ROW_FIELDS + ("digest",) if k not in row]
                if missing:
                    raise IntegrityError(f"{self.path}:{lineno}: missing fields {missing}")
                if row_digest(row) != row["digest"]:
                    raise IntegrityError(f"{self.path}:{lineno}: row digest mismatch")
                k = self.key(row)
                if k in self.rows:
                    raise IntegrityError(f"{self.path}:{lineno}: duplicate row {k}")
                self.rows[k] = row

    def __len__(self):
        return len(self.rows)

    def __contains__(self, key):
        return key in self.rows

    def add(self, row, force=False):
        k = self.key(row)
        if k in self.rows and not force:
            return False
        self.rows[k] = row
        return True

    def sorted_rows(self):
        return [self.rows[k] for k in sorted(self.rows)]

    def dumps(self):
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
                       for r in self.sorted_rows())

    def flush(self):
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".registry-")
        with os.fdopen(fd, "w") as fh:
            fh.write(self.dumps())
        os.replace(tmp, self.path)

    def values(self, task, design):
        return [r["value"] for (t, d, _), r in sorted(self.rows.items())
                if t == task and d == design and r["status"] == "ok"]


# -- execution ------------------------------------------------------------------------------

def _pending_seeds(config, task_id, design_id, registry, force):
    if force or registry is None:
        return list(config.seeds)
    return [s for s in config.seeds if (task_id, design_id, int(s)) not in registry]


def execute(config, tasks_dir=None, seeds=None):
    """Run the protocol for ``config`` and return registry rows (no registry access)."""
    try:
        design = parse_design_id(config.design)
    except GnnSpaceError as exc:
        raise ConfigError(f"bad design id: {exc}") from None
    task = resolve_task(config.task, tasks_dir)
    seeds = list(config.seeds) if seeds is None else seeds
    if not seeds:
        return []
    _, records = run_protocol(task, design, seeds, config.reference_hidden, config.epochs,
                              seed_for=config.experiment_seed, config_hash=config.config_hash)
    return [make_row(r) for r in records]


def run(config, registry, tasks_dir=None, force=False):
    """Execute ``config`` and record its rows; seeds already in the registry are skipped."""
    task = resolve_task(config.task, tasks_dir)
    todo = _pending_seeds(config, task.id, parse_design_id(config.design).id, registry, force)
    rows = execute(config, tasks_dir, todo)
    for row in rows:
        registry.add(row, force=force)
    registry.flush()
    return rows


@dataclass
class BatchSummary:
    completed: int = 0
    failed: list = field(default_factory=list)
    skipped: int = 0
    rows: list = field(default_factory=list)


def _worker(args):
    config, tasks_dir, seeds = args
    try:
        return execute(config, tasks_dir, seeds), None
    except GnnSpaceError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _plan(config, registry, tasks_dir, force):
    try:
        task = resolve_task(config.task, tasks_dir)
        design = parse_design_id(config.design)
    except GnnSpaceError:
        return list(config.seeds)  # let the worker report the failure
    return _pending_seeds(config, task.id, design.id, registry, force)


def launch_batch(configs, registry, workers=1, tasks_dir=None, force=False):
    """Run independent configs, in parallel when ``workers > 1``.

    Workers only compute; this process is the single writer. Rows are keyed
    by (task, design, seed) and stored sorted, so the registry does not depend
    on completion order or worker count.
    """
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    summary = BatchSummary()
    jobs = []
    for cfg in configs:
        seeds = _plan(cfg, registry, tasks_dir, force)
        if not seeds:
            summary.skipped += 1
            continue
        jobs.append((cfg, tasks_dir, seeds))
    if workers == 1 or len(jobs) <= 1:
        outcomes = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_worker, jobs))
    for (cfg, _, seeds), (rows, err) in zip(jobs, outcomes):
        if err is not None:
            summary.failed.append((cfg.config_hash, err))
            rows = [failed_row(cfg, s) for s in seeds]
        else:
            summary.completed += 1
        for row in rows:
            registry.add(row, force=force)
        summary.rows.extend(rows)
    registry.flush()
    return summary


# -- aggregation ----------------------------------------------------------------------------

AGGREGATE_COLUMNS = ("task", "design", "mean_value", "n_seeds", "params")


def aggregate(registry):
    """Mean value per (task, design) over successful seeds; also returns the failed-row count."""
    groups = {}
    failed = 0
    for (task, design, _), row in sorted(registry.rows.items()):
        if row["status"] != "ok":
            failed += 1
            continue
        groups.setdefault((task, design), []).append(row)
    out = [{"task": t, "design": d, "mean_value": float(np.mean([r["value"] for r in rows])),
            "n_seeds": len(rows), "params": rows[0]["params"]}
           for (t, d), rows in sorted(groups.items())]
    return out, failed


def write_aggregate_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mean_value": repr(r["mean_value"])})


def read_aggregate_csv(path):
    with open(path, newline="") as fh:
        return [{"task": r["task"], "design": r["design"], "mean_value": float(r["mean_value"]),
                 "n_seeds": int(r["n_seeds"]), "params": int(r["params"])} for r in csv.DictReader(fh)]


def perf_from_aggregate(rows):
    return PerfMatrix.from_rows([(r["task"], r["design"], r["mean_value"]) for r in rows])


# -- desk-scale task-space pipeline ----------------------------------------------------------

def perf_matrix(tasks, designs, seeds=PROTOCOL_SEEDS, reference_hidden=REFERENCE_HIDDEN, epochs=None):
    """Protocol-mean metric of every design on every task.

    Model seeds depend on the design and split seed but not on the task, so
    every task sees the same initialisations and a cloned task reproduces its
    source column exactly.
    """
    values = np.zeros((len(designs), len(tasks)))
    for j, task in enumerate(tasks):
        for i, design in enumerate(designs):
            seed_for = lambda s, d=design.id: derive_seed(d, s)  # noqa: E731
            values[i, j] = run_protocol(task, design, seeds, reference_hidden, epochs, seed_for=seed_for)[0]
    return PerfMatrix([d.id for d in designs], [t.id for t in tasks], values)


def sample_designs(D, seed=0, space=None):
    """``D`` distinct designs drawn uniformly from ``space`` (condensed by default)."""
    space = space or condensed_space()
    if D > space.cardinality:
        raise ConfigError(f"cannot draw {D} distinct designs from a space of {space.cardinality}")
    designs = {}
    rng = np.random.default_rng(seed)
    while len(designs) < D:
        for d in space.sample(D, seed=int(rng.integers(2**31))):
            designs.setdefault(d.id, d)
    return list(designs.values())[:D]


def task_space_from_perf(perf, M=6):
    """Anchors, similarity matrix, transfer matrix and their correlation for a performance matrix."""
    anchors = select_anchors(perf, M)
    sim = similarity_matrix(perf.subset(anchors))
    transfer = transfer_matrix(perf)
    return {"perf": perf, "anchors": anchors, "similarity": sim, "transfer": transfer,
            "correlation": transfer_correlation(sim, transfer)}


def task_space_pipeline(tasks, D=24, M=6, seed=0, space=None, seeds=PROTOCOL_SEEDS,
                        reference_hidden=16, epochs=60):
    """Sample ``D`` designs, train them on every task, and build the task space from anchors."""
    perf = perf_matrix(tasks, sample_designs(D, seed, space), seeds, reference_hidden, epochs)
    return task_space_from_perf(perf, M)


__all__ = [
    "AGGREGATE_COLUMNS",
    "BatchSummary",
    "ExperimentConfig",
    "RunRegistry",
    "aggregate",
    "execute",
    "launch_batch",
    "load_configs",
    "perf_from_aggregate",
    "perf_matrix",
    "read_aggregate_csv",
    "resolve_task",
    "run",
    "sample_designs",
    "task_space_from_perf",
    "task_space_pipeline",
    "toy_tasks",
    "write_aggregate_csv",
]
