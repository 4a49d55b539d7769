"""Controlled random search over one design dimension, and the statistics used to read it."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from gnnspace.errors import AggregationError, ParameterError, UndefinedMetricError

EPSILON = 0.02


@dataclass
class CrsPlan:
    """``setups[i]`` is a (base design, task id) pair; ``variants[i][c]`` swaps in choice ``c``."""

    dimension: str
    choices: tuple
    setups: list
    variants: list = field(default_factory=list)

    @property
    def num_experiments(self):
        return len(self.setups) * len(self.choices)

    def experiments(self):
        """Yield ``(setup index, choice, design, task id)`` for every experiment."""
        for i, (_, task_id) in enumerate(self.setups):
            for choice, design in zip(self.choices, self.variants[i]):
                yield i, choice, design, task_id


@dataclass
class RankDistribution:
    choice: object
    ranks: list

    @property
    def mean_rank(self):
        return float(np.mean(self.ranks))

    def histogram(self, m):
        counts = np.bincount(np.asarray(self.ranks, dtype=np.int64), minlength=m + 1)[1:]
        return counts.tolist()


def make_crs_plan(space, tasks, dimension, S=96, seed=0):
    """Draw ``S`` random (design, task) setups and clone each across every choice of ``dimension``.

    All variants of a setup share every other dimension, so the comparison
    within a setup is paired.
    """
    if S < 1:
        raise ParameterError("S must be >= 1")
    choices = tuple(space.choices(dimension))
    tasks = list(tasks)
    if not tasks:
        raise ParameterError("no tasks to sample setups from")
    rng = np.random.default_rng(seed)
    designs = space.sample(S, seed=int(rng.integers(2**31)))
    task_pick = rng.integers(0, len(tasks), size=S)
    setups, variants = [], []
    for d, t in zip(designs, task_pick):
        setups.append((d, tasks[t]))
        clones = [d.with_choice(dimension, c) for c in choices]
        base = d.with_choice(dimension, choices[0])
        for c in clones:
            assert c.with_choice(dimension, choices[0]) == base
        variants.append(clones)
    return CrsPlan(dimension, choices, setups, variants)


def run_crs(plan, evaluate_fn):
    """Evaluate every experiment of ``plan``; ``evaluate_fn(design, task_id)`` returns a metric."""
    return {(i, c): float(evaluate_fn(design, task_id)) for i, c, design, task_id in plan.experiments()}


def rank_choices(values, epsilon=EPSILON, higher_is_better=True):
    """Tolerant competition ranking: rank = 1 + number of values better by more than ``epsilon``."""
    v = np.asarray(values, dtype=np.float64)
    if not higher_is_better:
        v = -v
    if not np.all(np.isfinite(v)):
        raise ParameterError("rank_choices needs finite values")
    better = v[None, :] > v[:, None] + epsilon
    return (1 + better.sum(axis=1)).astype(np.int64)


def aggregate_ranks(plan, results, epsilon=EPSILON, higher_is_better=True):
    """Rank choices inside every setup and collect the per-choice rank lists.

    Returns a list of :class:`RankDistribution`, sorted by mean rank.
    """
    missing = [(i, c) for i in range(len(plan.setups)) for c in plan.choices if (i, c) not in results]
    if missing:
        raise AggregationError(f"{len(missing)} experiments missing, e.g. {missing[:5]}", missing)
    per_choice = {c: [] for c in plan.choices}
    for i in range(len(plan.setups)):
        ranks = rank_choices([results[(i, c)] for c in plan.choices], epsilon, higher_is_better)
        for c, r in zip(plan.choices, ranks):
            per_choice[c].append(int(r))
    dists = [RankDistribution(c, per_choice[c]) for c in plan.choices]
    return sorted(dists, key=lambda d: d.mean_rank)


def tie_fraction(mean_rank_a, mean_rank_b):
    """Fraction of two-choice setups that tied, implied by the two mean ranks.

    A tie contributes ranks (1, 1), a decided setup (1, 2), so the means sum to
    ``3 - t``.
    """
    return 3.0 - (mean_rank_a + mean_rank_b)


def write_rank_csv(path, dimension, dists, m):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dimension", "choice", "mean_rank"] + [f"rank_{k}" for k in range(1, m + 1)])
        for d in dists:
            w.writerow([dimension, str(d.choice), repr(d.mean_rank)] + d.histogram(m))


def read_rank_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"dimension": r["dimension"], "choice": r["choice"], "mean_rank": float(r["mean_rank"]),
             "histogram": [int(r[k]) for k in r if k.startswith("rank_")]} for r in rows]


def crs_to_json(plan, results, dists):
    return {
        "dimension": plan.dimension,
        "choices": [str(c) for c in plan.choices],
        "setups": [
            {"task": t, "base": d.id,
             "values": {str(c): results[(i, c)] for c in plan.choices},
             "designs": {str(c): v.id for c, v in zip(plan.choices, plan.variants[i])}}
            for i, (d, t) in enumerate(plan.setups)
        ],
        "mean_rank": {str(d.choice): d.mean_rank for d in dists},
    }


def groups_from_crs_json(obj, epsilon=EPSILON, use_ranks=False):
    """Per-choice observation lists (metrics, or within-setup ranks) from a CRS JSON dump."""
    choices = obj["choices"]
    groups = {c: [] for c in choices}
    for setup in obj["setups"]:
        vals = [setup["values"][c] for c in choices]
        obs = rank_choices(vals, epsilon) if use_ranks else vals
        for c, o in zip(choices, obs):
            groups[c].append(float(o))
    return groups


def load_crs_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- statistics ----------------------------------------------------------------------------------

def f_sf(f, df1, df2):
    """Upper tail of the F distribution via the regularized incomplete beta function."""
    if f <= 0:
        return 1.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def one_way_anova(groups):
    """F statistic and p-value of the one-way ANOVA across ``groups``."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise ParameterError("ANOVA needs at least 2 groups of at least 2 observations")
    n = sum(len(g) for g in groups)
    grand = np.concatenate(groups).mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    if ssw <= 0:
        raise UndefinedMetricError("ANOVA undefined: zero within-group variance")
    df1, df2 = k - 1, n - k
    f = (ssb / df1) / (ssw / df2)
    return float(f), f_sf(f, df1, df2)


def bonferroni(p, m):
    if not 0.0 <= p <= 1.0 or m < 1:
        raise ParameterError(f"need p in [0, 1] and m >= 1, got p={p}, m={m}")
    return min(1.0, m * p)


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ParameterError("pearson needs two sequences of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = (dx * dx).sum()
    syy = (dy * dy).sum()
    if sxx == 0 or syy == 0:
        raise UndefinedMetricError("pearson correlation undefined for a constant input")
    return float(np.clip((dx * dy).sum() / np.sqrt(sxx * syy), -1.0, 1.0))
