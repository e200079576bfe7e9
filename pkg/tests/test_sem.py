import itertools
import json
import math
from pathlib import Path

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from adjset.citest import CiQuery, Dataset, fisher_z
from adjset.errors import InputError, NumericError
from adjset.graph import Dag, consistent_with_tiers, d_separated, descendants, is_adjustment_set
from adjset.sem import (
    GenConfig,
    SemModel,
    draw_weight,
    estimate_effect,
    format_model,
    load_model,
    parse_model,
    random_sem,
    random_tiered_dag,
    sample,
    true_total_effect,
    uniform_model,
)

from oracles import to_nx

BASELINE = json.loads((Path(__file__).parent / "data" / "baseline.json").read_text())


def rng(*seed):
    return np.random.default_rng(list(seed))


# --- generator --------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generator_respects_tiers(seed):
    cfg = GenConfig()
    dag, tiers = random_tiered_dag(cfg, rng(seed))
    assert consistent_with_tiers(dag, tiers)
    assert len(dag.observed) == 13 and len(dag.latent) == 5
    for u in dag.latent:
        assert not dag.parents(u)
        assert len(dag.children(u)) >= 2 and dag.children(u) <= dag.observed
    for x in ("X1", "X2"):
        assert "Y" in descendants(dag, x)


def test_generator_edge_probability_zero():
    dag, tiers = random_tiered_dag(GenConfig(edge_prob=0.0), rng(0))
    assert dag.edges == () and len(dag.nodes) == 18


def test_generator_edge_probability_one():
    dag, _ = random_tiered_dag(GenConfig(n_latents=0, edge_prob=1.0, n_covariates=3), rng(0))
    assert len(dag.edges) == 6 * 5 // 2


def test_generator_mean_degree_baseline():
    base = BASELINE["generator_mean_observed_degree"]
    degs = []
    for t in range(base["draws"]):
        dag, _ = random_tiered_dag(GenConfig(), rng(base["master_seed"], t))
        obs = dag.observed
        inner = [e for e in dag.edges if e[0] in obs and e[1] in obs]
        degs.append(2 * len(inner) / len(obs))
    assert abs(np.mean(degs) - base["value"]) <= base["tolerance"]


def test_generator_reproducible():
    a = random_tiered_dag(GenConfig(), rng(3, 4))
    b = random_tiered_dag(GenConfig(), rng(3, 4))
    assert a == b
    ma = random_sem(a[0], GenConfig(), rng(9))
    mb = random_sem(b[0], GenConfig(), rng(9))
    assert ma == mb
    da, db = sample(ma, 50, rng(1)), sample(mb, 50, rng(1))
    assert np.array_equal(da.values, db.values)


def test_gen_config_validation():
    with pytest.raises(InputError):
        GenConfig(n_treatments=0)
    with pytest.raises(InputError):
        GenConfig(edge_prob=1.5)
    with pytest.raises(InputError):
        GenConfig(weight_low=0.0)


# --- weights ----------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weights_in_interval(seed):
    dag, _ = random_tiered_dag(GenConfig(), rng(seed))
    model = random_sem(dag, GenConfig(), rng(seed, 1))
    assert set(model.weights) == set(dag.edges)
    assert all(0.1 <= abs(w) <= 1.0 for w in model.weights.values())


def test_empty_dag_model():
    model = random_sem(Dag(["A"]), GenConfig(), rng(0))
    assert model.weights == {}


def test_weight_distribution_uniform_on_union():
    w = draw_weight(GenConfig(), rng(0), 100_000)
    # fold the union [-1,-0.1] U [0.1,1] onto [0, 1.8] where it should be uniform
    folded = np.where(w < 0, w + 1.0, w - 0.1 + 0.9)
    assert stats.kstest(folded, stats.uniform(0, 1.8).cdf).pvalue > 0.01


def test_model_validation():
    dag = Dag(["A", "B"], [("A", "B")])
    with pytest.raises(InputError):
        SemModel(dag, {}, {"A": 1.0, "B": 1.0})
    with pytest.raises(InputError):
        SemModel(dag, {("A", "B"): 0.5}, {"A": 1.0})
    with pytest.raises(InputError):
        SemModel(dag, {("A", "B"): 0.5}, {"A": 1.0, "B": 0.0})


# --- sampling ---------------------------------------------------------------------

def test_single_node_variance():
    data = sample(uniform_model(Dag(["A"])), 100_000, rng(0))
    assert 0.98 <= data.values.var() <= 1.02


def test_slope_recovers_weight():
    model = uniform_model(Dag(["A", "B"], [("A", "B")]), weight=0.37)
    data = sample(model, 100_000, rng(1))
    slope = np.polyfit(data.column("A"), data.column("B"), 1)[0]
    assert abs(slope - 0.37) <= 0.02


def test_latent_columns_absent(graphs):
    data = sample(uniform_model(graphs["precision_pair"].dag), 10, rng(0))
    assert data.columns == ("W", "Z", "X", "Y")


def test_sample_size_must_be_positive(graphs):
    with pytest.raises(InputError):
        sample(uniform_model(graphs["precision_pair"].dag), 0, rng(0))


@pytest.mark.slow
def test_sample_respects_dsep():
    # 20 random models: oracle-independent pairs with |cond| <= 2 look independent at the 1% level
    passed = total = 0
    for m in range(20):
        cfg = GenConfig(n_covariates=4, n_latents=2)
        dag, _ = random_tiered_dag(cfg, rng(100, m))
        data = sample(random_sem(dag, cfg, rng(101, m)), 5000, rng(102, m))
        obs = dag.ordered_observed()
        for a, b in itertools.combinations(obs, 2):
            rest = [v for v in obs if v not in (a, b)]
            for k in range(3):
                for cond in itertools.combinations(rest, k):
                    if d_separated(dag, a, b, cond):
                        total += 1
                        passed += fisher_z(data, CiQuery(a, b, cond)) > 0.01
    assert total > 50
    assert passed / total >= 0.9


# --- total effects -------------------------------------------------------------------

def _path_sum(model, x, y):
    g = to_nx(model.dag)
    total = 0.0
    for p in nx.all_simple_paths(g, x, y):
        total += math.prod(model.weights[a, b] for a, b in zip(p, p[1:]))
    return total


def test_build_chain_total_effect(graphs):
    model = uniform_model(graphs["build_chain"].dag, 0.5)
    assert true_total_effect(model, "X1", "Y") == pytest.approx(0.75, abs=1e-12)


def test_no_path_effect_is_zero(graphs):
    model = uniform_model(graphs["latent_witness"].dag, 0.5)
    assert true_total_effect(model, "Y", "X") == 0.0
    with pytest.raises(InputError):
        true_total_effect(model, "X", "X")


def _population_coefficient(model, x, y, z):
    s = model.covariance()
    idx = {n: i for i, n in enumerate(model.dag.nodes)}
    cols = [idx[x]] + [idx[v] for v in z]
    return np.linalg.solve(s[np.ix_(cols, cols)], s[cols, idx[y]])[0]


@pytest.mark.parametrize("name", ["latent_witness", "precision_pair", "build_chain", "combine_only", "nonminimal_z1"])
def test_total_effect_matches_population_regression(graphs, name):
    gf = graphs[name]
    dag = gf.dag
    model = random_sem(dag, GenConfig(), rng(7))
    for x in dag.nodes:
        for y in dag.nodes:
            if x == y:
                continue
            eff = true_total_effect(model, x, y)
            assert eff == pytest.approx(_path_sum(model, x, y), abs=1e-12)
            # parents of x (latents included) form a valid adjustment set
            z = dag.ordered(dag.parents(x))
            if y in z:
                continue
            assert _population_coefficient(model, x, y, z) == pytest.approx(eff, abs=1e-9)


# --- estimation -------------------------------------------------------------------

def test_latent_witness_estimate_within_three_se(graphs):
    model = uniform_model(graphs["latent_witness"].dag, 0.5)
    truth = true_total_effect(model, "X", "Y")
    for seed in range(20):
        est, se = estimate_effect(sample(model, 5000, rng(5, seed)), "X", "Y", {"Z"})
        assert abs(est - truth) <= 3 * se


def test_identical_columns_rank_error():
    values = np.column_stack([np.arange(10.0), np.arange(10.0), np.random.default_rng(0).standard_normal(10)])
    data = Dataset(["A", "B", "C"], values)
    with pytest.raises(NumericError):
        estimate_effect(data, "A", "C", {"B"})
    with pytest.raises(InputError):
        estimate_effect(data, "A", "A")


def test_estimator_consistency():
    # median absolute error over seeds shrinks as n grows, for a valid adjustment set
    dag = Dag(["U", "W", "Z", "X", "Y"], [("U", "W"), ("U", "X"), ("Z", "X"), ("Z", "Y"), ("W", "Y"), ("X", "Y")], ["U"])
    assert is_adjustment_set(dag, "X", "Y", {"Z", "W"})
    model = uniform_model(dag, 0.6)
    truth = true_total_effect(model, "X", "Y")
    medians = []
    for n in (1000, 5000, 20000):
        errs = [abs(estimate_effect(sample(model, n, rng(n, s)), "X", "Y", {"Z", "W"})[0] - truth) for s in range(50)]
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_precision_pair_se_ordering_tendency(graphs):
    model = uniform_model(graphs["precision_pair"].dag, 0.5)
    hits = 0
    for seed in range(30):
        data = sample(model, 5000, rng(21, seed))
        se = {k: estimate_effect(data, "X", "Y", z)[1] for k, z in (("z", {"Z"}), ("e", set()), ("w", {"W"}))}
        hits += se["z"] <= se["e"] <= se["w"]
    assert hits >= 25


# --- serialization ------------------------------------------------------------------

def test_model_round_trip(tmp_path, graphs):
    gf = graphs["build_chain"]
    model = random_sem(gf.dag, GenConfig(noise_variance=2.0), rng(0))
    text = format_model(model, gf.tiers)
    back, tiers = parse_model(text)
    assert back == model and tiers == gf.tiers
    p = tmp_path / "m.txt"
    p.write_text(text)
    assert load_model(p)[0] == model


def test_missing_weight_rejected():
    with pytest.raises(InputError):
        parse_model("A -> B weight=0.5\nB -> C\n")
