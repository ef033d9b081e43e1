import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from spherical_dcsbm.evaluate import adjusted_rand_index
from spherical_dcsbm.exceptions import SelectionError
from spherical_dcsbm.graph import SparseGraph
from spherical_dcsbm.pipeline import (EXPERIMENTS, UsageError, choose_dimension, embed_graph,
                                      run_algorithm1, run_experiment)
from spherical_dcsbm.simulate import BlockModelSpec, RhoLaw, equal_sizes, sample, two_ray_spec

SMOKE_PARAMS = {
    "table1a": dict(m=3, K_star=3, K_values=(2,), n=150),
    "table1b": dict(m=3, K_star=3, n=150, n_prime=200),
    "fig6": dict(m=3, K_star=2, n_values=(100,)),
    "fig4": dict(m=4, n=300),
    "mardia-5.3": dict(n=600),
    "clt-fig2b": dict(n=200),
    "appendixB-n": dict(m=4, n_values=(200,)),
    "appendixB-rho": dict(m=4, n=200, r_values=(0.1,)),
}


@pytest.fixture(scope="module")
def two_ray_runs():
    out = []
    for seed in range(20):
        g, truth = sample(two_ray_spec(), seed=seed)
        res = run_algorithm1(g, m=4, K_star=4, restarts=1, seed=seed)
        out.append((res.selection.K_hat, adjusted_rand_index(res.labels, truth.z)))
    return out


def test_two_ray_graph_recovers_communities(two_ray_runs):
    k_hat = np.array([k for k, _ in two_ray_runs])
    aris = np.array([a for _, a in two_ray_runs])
    assert np.all(k_hat >= 2)
    assert np.median(aris) > 0.75


@pytest.mark.xfail(strict=True, reason="low-degree nodes give heavy-tailed angle clusters; "
                                       "BIC adds a third component at n=1000")
def test_two_ray_graph_selects_two_communities(two_ray_runs):
    assert sum(k == 2 for k, _ in two_ray_runs) > len(two_ray_runs) / 2


def test_empty_graph_fails_in_select_stage():
    g = SparseGraph.from_edges(30, 30, [])
    with pytest.raises(SelectionError) as info:
        run_algorithm1(g, m=2, K_star=2, restarts=1)
    assert info.value.stage == "select"


def test_isolated_nodes_are_unassigned():
    spec = BlockModelSpec(np.array([[0.3, 0.05], [0.05, 0.3]]), 200, sizes=(100, 100))
    g, _ = sample(spec, seed=0)
    rows = np.r_[g.rows, 200]  # widen to 201 nodes; node 200 is isolated
    cols = np.r_[g.cols, 0]
    keep = rows != 200
    g = SparseGraph.from_edges(201, 201, np.column_stack([rows[keep], cols[keep]]))
    res = run_algorithm1(g, m=2, K_star=3, restarts=1)
    assert res.labels[200] == -1
    assert np.all(res.labels[:200] >= 0)


def test_pipeline_deterministic():
    g, _ = sample(two_ray_spec(400), seed=1)
    a = run_algorithm1(g, K_star=3, restarts=1, seed=5)
    b = run_algorithm1(g, K_star=3, restarts=1, seed=5)
    assert a.m == b.m
    assert_array_equal(a.selection.bic_surface, b.selection.bic_surface)
    assert_array_equal(a.labels, b.labels)


def test_elbow_dimension_used_when_m_absent():
    g, _ = sample(two_ray_spec(400), seed=2)
    m, elbows, [e] = embed_graph(g)
    assert m == elbows.elbows[-1]
    assert e.m == m + 1
    assert choose_dimension(e.spectrum[:1].tolist() + [0.5, 0.1, 0.1], 3)[0] >= 1


def test_bipartite_sides_clustered_separately():
    B = np.array([[0.5, 0.1, 0.2], [0.1, 0.4, 0.05]])
    spec = BlockModelSpec(B, 200, sizes=equal_sizes(200, 2), rho_law=RhoLaw.beta(2, 1),
                          n_prime=300, sizes_prime=equal_sizes(300, 3),
                          rho_law_prime=RhoLaw.beta(2, 1))
    g, truth = sample(spec, seed=3)
    left, right = run_algorithm1(g, m=3, K_star=4, restarts=1, seed=0)
    assert (left.side, right.side) == ("left", "right")
    assert left.labels.size == 200 and right.labels.size == 300
    # duplicating every column leaves the left singular vectors unchanged and
    # scales the left positions, so the left angles and labels stay put
    doubled = SparseGraph.from_edges(
        200, 600, np.column_stack([np.r_[g.rows, g.rows], np.r_[g.cols, g.cols + 300]]),
        "bipartite")
    left2, right2 = run_algorithm1(doubled, m=3, K_star=4, restarts=1, seed=0)
    np.testing.assert_allclose(left2.spherical.angles, left.spherical.angles, atol=1e-8)
    assert adjusted_rand_index(left2.labels, left.labels) == 1.0
    assert right2.labels.size == 600


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_experiment_smoke(name, tmp_path):
    report = run_experiment(name, 1, seed=0, out_dir=tmp_path, **SMOKE_PARAMS[name])
    assert report.rows
    meta = json.loads((tmp_path / f"{name}.json").read_text())
    assert meta["name"] == name and meta["config"]["N"] == 1
    assert "summary" in meta
    header = (tmp_path / f"{name}.csv").read_text().splitlines()[0].split(",")
    assert "rep" in header


def test_experiment_usage_errors():
    with pytest.raises(UsageError):
        run_experiment("table9", 1)
    with pytest.raises(UsageError):
        run_experiment("table1a", 0)
    with pytest.raises(UsageError):
        run_experiment("table1a", 1, bogus=3)


def test_experiment_summary_columns():
    report = run_experiment("table1a", 2, seed=1, **SMOKE_PARAMS["table1a"])
    methods = report.summary["methods"]
    assert {row["method"] for row in methods} == {"xhat", "xtilde", "theta"}
    for row in methods:
        assert 0 <= row["prop_correct_d"] <= 1
        assert 0 <= row["prop_correct_K"] <= 1
        assert -1 <= row["mean_ari"] <= 1
