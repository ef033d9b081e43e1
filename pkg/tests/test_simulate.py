import numpy as np
import pytest
from numpy.testing import assert_array_equal

from spherical_dcsbm.graph import SparseGraph
from spherical_dcsbm.simulate import (BlockModelSpec, RhoLaw, _bernoulli_edges,
                                      block_density_stats, equal_sizes,
                                      figure1b_spec, resample_adjacency, sample, sample_dcsbm,
                                      sample_table_protocol)


def _sbm_spec(n=600):
    B = np.array([[0.3, 0.05, 0.1], [0.05, 0.2, 0.02], [0.1, 0.02, 0.4]])
    return BlockModelSpec(B, n, sizes=equal_sizes(n, 3), rho_law=RhoLaw.constant(1.0))


def test_zero_block_matrix_gives_empty_graph():
    g, truth = sample_dcsbm(BlockModelSpec(np.zeros((2, 2)), 50, rho_law=RhoLaw.uniform()), 1)
    assert g.n_edges == 0
    assert truth.z.size == 50


def test_plain_sbm_block_densities_within_three_se():
    spec = _sbm_spec()
    g, truth = sample(spec, seed=3)
    density, pairs = block_density_stats(g, truth.z)
    se = np.sqrt(spec.B * (1 - spec.B) / pairs)
    assert np.all(np.abs(density - spec.B) <= 3 * se + 1e-12)


def test_undirected_output_symmetric_without_loops():
    g, _ = sample(_sbm_spec(300), seed=0)
    a = g.to_dense()
    assert_array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)


def test_explicit_sizes_honoured():
    _, truth = sample(BlockModelSpec(np.full((3, 3), 0.1), 10, sizes=(2, 3, 5)), seed=0)
    assert_array_equal(truth.z, [0, 0, 1, 1, 1, 2, 2, 2, 2, 2])


def test_deterministic_under_seed():
    a, _ = sample(_sbm_spec(200), seed=5)
    b, _ = sample(_sbm_spec(200), seed=5)
    c, _ = sample(_sbm_spec(200), seed=6)
    assert a.edge_set() == b.edge_set()
    assert a.edge_set() != c.edge_set()


def test_bipartite_single_certain_edge():
    spec = BlockModelSpec(np.array([[1.0]]), 1, n_prime=1)
    g, truth = sample(spec, seed=0)
    assert g.mode == "bipartite"
    assert g.edge_set() == {(0, 0)}
    assert truth.z_prime is not None


def test_bipartite_mean_degree_matches_expectation():
    B = np.array([[0.6, 0.2, 0.4], [0.1, 0.7, 0.3]])
    n, n_prime, reps = 20, 800, 40
    spec = BlockModelSpec(B, n, sizes=equal_sizes(n, 2), rho_law=RhoLaw.beta(2, 1),
                          n_prime=n_prime, sizes_prime=equal_sizes(n_prime, 3),
                          rho_law_prime=RhoLaw.beta(2, 1))
    _, truth = sample(spec, seed=0)
    p = truth.rho[:, None] * truth.rho_prime[None, :] * B[truth.z][:, truth.z_prime]
    # fresh draws with the latent variables held fixed
    deg = np.zeros(n)
    for r in range(reps):
        rows, _ = _bernoulli_edges(np.random.default_rng(r), truth.rho, truth.rho_prime, B,
                                   truth.z, truth.z_prime, upper=False)
        deg += np.bincount(rows, minlength=n)
    mean = deg / reps
    expected = p.sum(axis=1)
    se = np.sqrt((p * (1 - p)).sum(axis=1) / reps)
    assert np.all(np.abs(mean - expected) <= 4 * se)


def test_table_protocol_sizes():
    [(spec, g, truth)] = list(sample_table_protocol("table1a-K2", 1, seed=0))
    assert g.shape == (1000, 1000)
    assert_array_equal(np.bincount(truth.z), [500, 500])
    [(spec, g, truth)] = list(sample_table_protocol("table1b", 1, seed=0))
    assert g.shape == (1000, 1500)
    assert_array_equal(np.bincount(truth.z_prime), [500, 500, 500])


def test_table_protocol_redraws_b_and_is_reproducible():
    specs = [s for s, _, _ in sample_table_protocol("table1a-K3", 6, seed=2, n=60)]
    stacked = np.array([s.B for s in specs])
    assert np.all(stacked.var(axis=0) > 0)
    again = [s for s, _, _ in sample_table_protocol("table1a-K3", 6, seed=2, n=60)]
    for a, b in zip(specs, again):
        assert_array_equal(a.B, b.B)


def test_table_protocol_rejects_zero_replications():
    with pytest.raises(ValueError):
        next(sample_table_protocol("table1a-K2", 0))


def test_resample_keeps_latent_variables():
    z = np.repeat([0, 1], 50)
    g = resample_adjacency(np.array([[0.5, 0.1], [0.1, 0.5]]), z, np.ones(100), seed=0)
    assert isinstance(g, SparseGraph)
    assert g.mode == "undirected"
    density, _ = block_density_stats(g, z)
    assert density[0, 0] > density[0, 1]


def test_figure1b_spec_shape():
    spec = figure1b_spec()
    assert (spec.n, spec.n_prime, spec.K, spec.K_prime) == (439, 60635, 4, 4)
    assert spec.B[0, 0] == pytest.approx(0.7)


def test_invalid_specs():
    with pytest.raises(ValueError):
        BlockModelSpec(np.array([[1.2]]), 3)
    with pytest.raises(ValueError):
        BlockModelSpec(np.array([[0.1, 0.2], [0.3, 0.1]]), 3)
    with pytest.raises(ValueError):
        BlockModelSpec(np.array([[0.1, 0.9], [0.9, 0.1]]), 4, require_psd=True)
    with pytest.raises(ValueError):
        RhoLaw.uniform(0.5, 1.5)


def test_spec_round_trip():
    spec = _sbm_spec(30)
    back = BlockModelSpec.from_dict(spec.to_dict())
    assert_array_equal(back.B, spec.B)
    assert back.sizes == spec.sizes
