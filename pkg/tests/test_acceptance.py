"""Acceptance gate: every criterion at its stated tolerance and runtime bound.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import dataclasses
import math
import random
import time

import numpy as np
import pytest
from scipy import integrate

from gnnspace import autodiff as ad
from gnnspace.evaluator import aggregate_ranks, make_crs_plan, one_way_anova, pearson, rank_choices, run_crs
from gnnspace.experiment import (
    ExperimentConfig,
    RunRegistry,
    launch_batch,
    perf_matrix,
    run,
    sample_designs,
    task_space_from_perf,
    toy_tasks,
)
from gnnspace.graph import avg_clustering, avg_path_length, generate_scale_free, is_connected
from gnnspace.model import attention_weights, build_model, match_hidden_dim, param_count, reference_budget
from gnnspace.space import REFERENCE_DESIGN, Design, SpaceSpec, condensed_space, experiment_space_size, full_space
from gnnspace.tasks import Task, assemble_synthetic_tasks, build_labels, fill_statistic_grid, make_split
from gnnspace.taskspace import PerfMatrix, kendall_tau_b
from gnnspace.train import TrainConfig, evaluate, roc_auc, train
from gradcases import MODEL_CONFIGS, attention_gradient_error, model_gradient_error, primitive_cases, toy_batch

pytestmark = pytest.mark.acceptance


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


# -- 1 ------------------------------------------------------------------------------------

def test_c01_space_cardinalities(record_property):
    with Timer() as t:
        full = full_space().cardinality
        condensed = condensed_space().cardinality
        combos = experiment_space_size(full_space(), 32)
    record_property("detail", f"full={full} condensed={condensed} x32={combos}")
    assert full == 314_928
    assert condensed == 96
    assert combos == 10_077_696
    assert t.elapsed < 1.0


# -- 2 ------------------------------------------------------------------------------------

def test_c02_autodiff_gradient_checks(record_property):
    with Timer() as t:
        prim = max(ad.gradient_check(f, x) for seed in range(20) for f, x in primitive_cases(seed).values())
        models = [model_gradient_error(d, "graph" if i % 3 == 0 else "node", seed=i)
                  for i, d in enumerate(MODEL_CONFIGS)]
    record_property("detail", f"primitives max err={prim:.1e}; {len(models)} models max err={max(models):.1e}")
    assert len(models) == 12
    assert prim < 1e-4
    assert max(models) < 1e-4
    assert t.elapsed < 60


# -- 3 ------------------------------------------------------------------------------------

def _tau_oracle(x, y):
    c = d = tx = ty = 0
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            a, b = x[i] - x[j], y[i] - y[j]
            if a == 0 and b == 0:
                continue
            if a == 0:
                tx += 1
            elif b == 0:
                ty += 1
            elif (a > 0) == (b > 0):
                c += 1
            else:
                d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def _pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return num / math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))


def _auc_oracle(s, y):
    pos = [a for a, l in zip(s, y) if l == 1]
    neg = [a for a, l in zip(s, y) if l == 0]
    return sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg) / (len(pos) * len(neg))


def _f_density(x, d1, d2):
    log_b = math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2)
    return math.exp(0.5 * d1 * math.log(d1 / d2) + (d1 / 2 - 1) * math.log(x)
                    - (d1 + d2) / 2 * math.log1p(d1 * x / d2) - log_b)


def test_c03_statistics_oracles(record_property):
    rng = np.random.default_rng(2024)
    n_instances = 10_000
    worst = {"tau": 0.0, "pearson": 0.0, "auc": 0.0, "rank": 0}
    with Timer() as t:
        done = 0
        while done < n_instances:
            n = int(rng.integers(2, 13))
            x, y = rng.integers(0, 5, n).astype(float), rng.integers(0, 5, n).astype(float)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            worst["tau"] = max(worst["tau"], abs(kendall_tau_b(x, y) - _tau_oracle(x, y)))
            done += 1
        for _ in range(n_instances):
            n = int(rng.integers(2, 13))
            x, y = rng.normal(size=n), rng.normal(size=n)
            worst["pearson"] = max(worst["pearson"], abs(pearson(x, y) - _pearson_oracle(x, y)))
        for _ in range(n_instances):
            n = int(rng.integers(2, 31))
            labels = rng.integers(0, 2, n)
            labels[:2] = (0, 1)
            scores = rng.integers(0, 8, n) / 7.0
            worst["auc"] = max(worst["auc"], abs(roc_auc(scores, labels) - _auc_oracle(scores, labels)))
        for _ in range(n_instances):
            v = np.round(rng.random(int(rng.integers(1, 7))), 2)
            brute = [1 + sum(1 for w in v if w > u + 0.02) for u in v]
            worst["rank"] += int(list(rank_choices(v, 0.02)) != brute)
        f, p = one_way_anova([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
        p_quad = integrate.quad(_f_density, 3.0, np.inf, args=(2, 6), epsabs=1e-13, epsrel=1e-12)[0]
    record_property("detail", f"tau={worst['tau']:.1e} pearson={worst['pearson']:.1e} auc={worst['auc']:.1e} "
                              f"rank mismatches={worst['rank']} F={f} p={p:.9f} quad={p_quad:.9f}")
    assert worst["tau"] <= 1e-12 and worst["pearson"] <= 1e-12 and worst["auc"] <= 1e-12
    assert worst["rank"] == 0
    assert f == 3.0
    assert abs(p - p_quad) < 1e-6
    assert t.elapsed < 60


# -- 4 ------------------------------------------------------------------------------------

def test_c04_synthetic_task_suite(record_property):
    with Timer() as t:
        sw = fill_statistic_grid("small_world", grid=4, per_bin=2, seed=0)
        sf = fill_statistic_grid("scale_free", grid=4, per_bin=2, seed=0)
        tasks = assemble_synthetic_tasks(sw, sf)
        graphs = sw.graphs + sf.graphs
        connected = all(is_connected(g) for g in graphs)
        stats = [(avg_clustering(g), avg_path_length(g)) for g in graphs]
    n_node = sum(t_.level == "node" for t_ in tasks)
    n_graph = sum(t_.level == "graph" for t_ in tasks)
    in_range = all(0.3 <= c <= 0.6 and 1.8 <= l <= 3.0 for c, l in stats)
    clash = [t_.id for t_ in tasks if t_.id.split("-")[2] == t_.id.split("-")[3]]
    record_property("detail", f"{n_node} node + {n_graph} graph tasks over {len(graphs)} graphs")
    assert (n_node, n_graph) == (12, 8)
    assert len(graphs) == 64 and connected and in_range
    assert not clash
    assert t.elapsed < 300


# -- 5 ------------------------------------------------------------------------------------

def test_c05_budget_matching(record_property):
    with Timer() as t:
        budget = reference_budget(16, 10)
        dims = []
        for d in condensed_space():
            h = match_hidden_dim(d, 16, 10, budget)
            assert param_count(d, 16, 10, h) <= budget < param_count(d, 16, 10, h + 1), d.id
            dims.append(h)
        ref = match_hidden_dim(REFERENCE_DESIGN, 16, 10, budget)
    record_property("detail", f"budget={budget} hidden range {min(dims)}..{max(dims)} reference={ref}")
    assert ref == 256
    assert len(dims) == 96
    assert t.elapsed < 10


# -- 6 ------------------------------------------------------------------------------------

def test_c06_training_sanity(record_property):
    with Timer() as t:
        g = generate_scale_free(60, 4, 0.5, seed=1)
        labels = build_labels(g.degrees().astype(float), 10)
        task = Task("node-toy-onehot-degree", "node", [g], np.eye(g.n), labels, 10, "accuracy")
        design = Design(pre_mp=1, mp=3, post_mp=2, connectivity="skip_sum", agg="sum", act="prelu",
                        bn=True, optimizer="adam", lr=0.01)
        hidden = match_hidden_dim(design, task.feature_dim, task.output_dim)
        split = make_split(task, 0.8, seed=0)
        model = build_model(design, task.feature_dim, task.output_dim, hidden, seed=0)
        train(model, task, split, TrainConfig.from_design(design, epochs=200), seed=0)
        acc = evaluate(model, task, split, "train")
    record_property("detail", f"train accuracy={acc:.4f} hidden={hidden} realized classes={len(set(labels))} of 10")
    assert acc >= 0.99
    assert t.elapsed < 60


# -- 7 ------------------------------------------------------------------------------------

def test_c07_crs_with_mock_evaluator(record_property):
    tasks = [f"task{i}" for i in range(32)]
    with Timer() as t:
        plan = make_crs_plan(full_space(), tasks, "agg", S=96, seed=0)
        win = aggregate_ranks(plan, run_crs(plan, lambda d, _: 0.9 if d.agg == "sum" else 0.5))
        tie = aggregate_ranks(plan, run_crs(plan, lambda d, _: 0.7))
    record_property("detail", "winner " + ", ".join(f"{d.choice}={d.mean_rank}" for d in win)
                    + "; ties " + ", ".join(f"{d.choice}={d.mean_rank}" for d in tie))
    assert win[0].choice == "sum" and win[0].mean_rank == 1.0
    assert all(d.mean_rank >= 2.0 for d in win[1:])
    assert all(d.mean_rank == 1.0 for d in tie)
    assert t.elapsed < 5


# -- 8 ------------------------------------------------------------------------------------

def _six_task_space(perf, M):
    cols = perf.values[:, :6]
    return task_space_from_perf(PerfMatrix(perf.designs, perf.tasks[:6], cols), M)


def test_c08_task_space_pipeline(record_property):
    tasks = list(toy_tasks())
    assert len(tasks) == 6
    clone = dataclasses.replace(tasks[0], id=tasks[0].id + "-clone")
    correlations = []
    with Timer() as t:
        for seed in range(3):
            extra = [clone] if seed == 0 else []
            perf = perf_matrix(tasks + extra, sample_designs(24, seed), reference_hidden=16, epochs=60)
            if seed == 0:
                sim7 = task_space_from_perf(perf, 6)["similarity"]
                clone_sim = sim7.get(tasks[0].id, clone.id)
            correlations.append(_six_task_space(perf, 6)["correlation"])
    positive = sum(r > 0 for r in correlations)
    record_property("detail", f"clone similarity={clone_sim}; correlations="
                              + ", ".join(f"{r:+.3f}" for r in correlations))
    assert clone_sim == 1.0
    assert positive >= 2
    assert t.elapsed < 900


# -- 9 ------------------------------------------------------------------------------------

def test_c09_determinism_and_parallelism(tmp_path, record_property):
    designs = list(condensed_space())
    toy = [f"toy:{t_.id}" for t_ in toy_tasks()]
    configs = [ExperimentConfig(toy[i % 6], designs[(11 * i) % 96].id, seeds=(0, 1), reference_hidden=8,
                                epochs=2) for i in range(16)]
    with Timer() as t:
        a, b = RunRegistry(tmp_path / "a.jsonl"), RunRegistry(tmp_path / "b.jsonl")
        run(configs[0], a)
        run(configs[0], b)
        identical_rows = (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        seq, par = RunRegistry(tmp_path / "seq.jsonl"), RunRegistry(tmp_path / "par.jsonl")
        launch_batch(configs, seq, workers=1)
        launch_batch(configs, par, workers=8)
        equal = (tmp_path / "seq.jsonl").read_bytes() == (tmp_path / "par.jsonl").read_bytes()
    record_property("detail", f"identical rows={identical_rows}; workers 1 vs 8 equal={equal} ({len(seq)} rows)")
    assert identical_rows and equal and len(seq) == 32
    assert t.elapsed < 120


# -- 10 -----------------------------------------------------------------------------------

def test_c10_attention_extension(record_property):
    with Timer() as t:
        errors = {}
        for mode in ("additive", "multiplicative"):
            weights_err = max(attention_gradient_error(mode, seed) for seed in range(5))
            model_err = model_gradient_error(Design(attention=mode, mp=2, bn=False, act="swish"), "node", seed=1)
            errors[mode] = max(weights_err, model_err)
        rng = np.random.default_rng(0)
        batch = toy_batch(0)
        worst_sum = 0.0
        for mode in ("additive", "multiplicative"):
            w = attention_weights(mode, ad.Tensor(rng.normal(size=(batch.num_nodes, 4))), batch.src, batch.dst,
                                  batch.num_nodes, ad.Tensor(rng.normal(size=(4, 1))),
                                  ad.Tensor(rng.normal(size=(4, 1)))).data[:, 0]
            sums = np.bincount(batch.dst, weights=w, minlength=batch.num_nodes)
            has_in = np.bincount(batch.dst, minlength=batch.num_nodes) > 0
            worst_sum = max(worst_sum, float(np.abs(sums[has_in] - 1).max()))
        descriptor = condensed_space().to_descriptor()
        descriptor["attention"] = ["none", "additive", "multiplicative"]
        space = SpaceSpec.from_descriptor(descriptor)
        plan = make_crs_plan(space, ["t0", "t1"], "attention", S=8, seed=0)
        dists = aggregate_ranks(plan, run_crs(plan, lambda d, _: {"none": 0.5, "additive": 0.6,
                                                                   "multiplicative": 0.7}[d.attention]))
    record_property("detail", f"grad err additive={errors['additive']:.1e} multiplicative="
                              f"{errors['multiplicative']:.1e}; max |sum-1|={worst_sum:.1e}; "
                              f"CRS choices={list(plan.choices)}")
    assert max(errors.values()) < 1e-4
    assert worst_sum < 1e-6
    assert len(space.choices("attention")) == 3 and space.cardinality == 288
    assert [d.choice for d in dists] == ["multiplicative", "additive", "none"]
    assert t.elapsed < 60
