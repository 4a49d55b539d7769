import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gnnspace.errors import AggregationError, ParameterError, UndefinedMetricError
from gnnspace.evaluator import (
    aggregate_ranks,
    bonferroni,
    f_sf,
    groups_from_crs_json,
    crs_to_json,
    make_crs_plan,
    one_way_anova,
    pearson,
    rank_choices,
    read_rank_csv,
    run_crs,
    tie_fraction,
    write_rank_csv,
)
from gnnspace.space import condensed_space, full_space


def brute_ranks(values, eps):
    return [1 + sum(1 for w in values if w > v + eps) for v in values]


def f_density(x, d1, d2):
    log_b = math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2)
    return math.exp(0.5 * d1 * math.log(d1 / d2) + (d1 / 2 - 1) * math.log(x)
                    - (d1 + d2) / 2 * math.log1p(d1 * x / d2) - log_b)


def quad_sf(f, d1, d2):
    return integrate.quad(f_density, f, np.inf, args=(d1, d2), epsabs=1e-13, epsrel=1e-12)[0]


# -- ranking ----------------------------------------------------------------------

def test_rank_examples():
    assert list(rank_choices([0.80, 0.79], 0.02)) == [1, 1]
    assert list(rank_choices([0.80, 0.77], 0.02)) == [1, 2]
    assert list(rank_choices([0.9, 0.9, 0.5], 0.02)) == [1, 1, 3]
    assert list(rank_choices([0.1, 0.5], 0.02, higher_is_better=False)) == [1, 2]


def test_rank_matches_comparator_on_10k_vectors():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        m = int(rng.integers(1, 7))
        v = np.round(rng.random(m), 2)
        assert list(rank_choices(v, 0.02)) == brute_ranks(v, 0.02)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=8))
def test_zero_epsilon_is_competition_ranking(values):
    ranks = rank_choices(values, 0.0)
    srt = sorted(values, reverse=True)
    assert list(ranks) == [1 + srt.index(v) for v in values]
    assert 1 in ranks


def test_rank_rejects_non_finite():
    with pytest.raises(ParameterError):
        rank_choices([0.1, np.nan])


# -- CRS ---------------------------------------------------------------------------------

TASKS = [f"t{i}" for i in range(32)]


def test_plan_shape_and_paired_variants():
    plan = make_crs_plan(full_space(), TASKS, "bn", S=96, seed=1)
    assert plan.num_experiments == 2 * 96
    assert len(list(plan.experiments())) == 192
    for (base, _), variants in zip(plan.setups, plan.variants):
        assert [v.bn for v in variants] == [True, False]
        for v in variants:
            for name in full_space().names:
                if name != "bn":
                    assert v.get(name) == base.get(name)
    assert 96 / len(TASKS) == 3


def test_plan_task_hits_average_three():
    plan = make_crs_plan(full_space(), TASKS, "agg", S=96, seed=0)
    hits = np.bincount([TASKS.index(t) for _, t in plan.setups], minlength=32)
    assert hits.sum() == 96 and hits.mean() == 3


def test_plan_unknown_dimension():
    with pytest.raises(ParameterError):
        make_crs_plan(full_space(), TASKS, "colour", S=4)


def test_crs_with_a_dominant_choice():
    plan = make_crs_plan(full_space(), TASKS, "agg", S=40, seed=3)
    results = run_crs(plan, lambda d, t: 0.9 if d.agg == "max" else 0.5 + 0.01 * len(d.agg))
    dists = aggregate_ranks(plan, results)
    assert dists[0].choice == "max" and dists[0].mean_rank == 1.0
    assert all(d.mean_rank >= 2.0 for d in dists[1:])


def test_crs_all_ties():
    plan = make_crs_plan(full_space(), TASKS, "act", S=20, seed=3)
    dists = aggregate_ranks(plan, run_crs(plan, lambda d, t: 0.7))
    assert [d.mean_rank for d in dists] == [1.0, 1.0, 1.0]
    assert all(d.histogram(3) == [20, 0, 0] for d in dists)


def test_aggregate_invariants_on_random_results():
    plan = make_crs_plan(full_space(), TASKS, "mp", S=50, seed=9)
    rng = np.random.default_rng(0)
    results = {(i, c): float(rng.random()) for i, c, _, _ in plan.experiments()}
    dists = aggregate_ranks(plan, results)
    m = len(plan.choices)
    assert all(1 <= d.mean_rank <= m for d in dists)
    assert sum(d.histogram(m)[0] for d in dists) >= 50
    assert [d.mean_rank for d in dists] == sorted(d.mean_rank for d in dists)


def test_missing_experiment_is_reported():
    plan = make_crs_plan(condensed_space(), TASKS, "agg", S=3, seed=0)
    results = run_crs(plan, lambda d, t: 0.5)
    del results[(1, "mean")]
    with pytest.raises(AggregationError) as info:
        aggregate_ranks(plan, results)
    assert info.value.missing == [(1, "mean")]


def test_tie_fraction_example():
    assert tie_fraction(1.15, 1.44) == pytest.approx(0.41, abs=1e-12)


def test_rank_csv_and_json_round_trip(tmp_path):
    plan = make_crs_plan(condensed_space(), TASKS, "agg", S=6, seed=0)
    rng = np.random.default_rng(1)
    results = {(i, c): float(rng.random()) for i, c, _, _ in plan.experiments()}
    dists = aggregate_ranks(plan, results)
    write_rank_csv(tmp_path / "r.csv", "agg", dists, 3)
    rows = read_rank_csv(tmp_path / "r.csv")
    assert [r["choice"] for r in rows] == [d.choice for d in dists]
    assert [r["mean_rank"] for r in rows] == [d.mean_rank for d in dists]
    assert [r["histogram"] for r in rows] == [d.histogram(3) for d in dists]
    groups = groups_from_crs_json(crs_to_json(plan, results, dists), use_ranks=True)
    for d in dists:
        assert groups[d.choice] == [float(r) for r in d.ranks]


# -- statistics ------------------------------------------------------------------------------

def test_anova_examples():
    f, p = one_way_anova([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert f == 3.0
    assert p == pytest.approx(quad_sf(3.0, 2, 6), abs=1e-6)
    assert p == pytest.approx(0.125, abs=1e-12)  # closed form for df1=2: (1 + 2F/df2)^(-df2/2)
    f, p = one_way_anova([[1, 2, 3], [3, 2, 1]])
    assert f == 0.0 and p == 1.0
    with pytest.raises(UndefinedMetricError):
        one_way_anova([[1, 1], [2, 2]])
    with pytest.raises(ParameterError):
        one_way_anova([[1, 2]])


@pytest.mark.parametrize("f,d1,d2", [(0.5, 1, 5), (3.0, 2, 6), (2.2, 4, 30), (7.1, 11, 190)])
def test_f_tail_matches_quadrature(f, d1, d2):
    assert f_sf(f, d1, d2) == pytest.approx(quad_sf(f, d1, d2), abs=1e-6)


@given(st.integers(0, 2**31 - 1), st.floats(-100, 100), st.floats(0.1, 50))
def test_anova_affine_invariance(seed, shift, factor):
    r = np.random.default_rng(seed)
    groups = [r.normal(size=int(r.integers(2, 8))) + i for i in range(3)]
    f, _ = one_way_anova(groups)
    assert one_way_anova([g + shift for g in groups])[0] == pytest.approx(f, rel=1e-9, abs=1e-9)
    assert one_way_anova([g * factor for g in groups])[0] == pytest.approx(f, rel=1e-9, abs=1e-9)


def test_bonferroni_examples():
    assert bonferroni(0.01, 12) == pytest.approx(0.12)
    assert bonferroni(0.5, 3) == 1.0
    assert bonferroni(0.004, 12) == pytest.approx(0.048) and bonferroni(0.004, 12) < 0.05
    with pytest.raises(ParameterError):
        bonferroni(1.5, 2)


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == 1.0
    assert pearson(x, -x) == -1.0
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(UndefinedMetricError):
        pearson([1, 1, 1], [1, 2, 3])


def test_pearson_matches_direct_formula():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(2, 12))
        x, y = rng.normal(size=n), rng.normal(size=n)
        mx, my = sum(x) / n, sum(y) / n
        num = sum((a - mx) * (b - my) for a, b in zip(x, y))
        den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
        assert abs(pearson(x, y) - num / den) <= 1e-12
