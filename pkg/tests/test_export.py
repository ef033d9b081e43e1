import json

import numpy as np
from numpy.testing import assert_array_equal

from spherical_dcsbm import export
from spherical_dcsbm.embed import Embedding
from spherical_dcsbm.graph import load_edge_list
from spherical_dcsbm.mixture import select_model
from spherical_dcsbm.simulate import BlockModelSpec, equal_sizes, sample
from spherical_dcsbm.spherical import transform_embedding


def _embedding():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(6, 3))
    pos[2] = 0.0
    iso = np.zeros(6, dtype=bool)
    iso[2] = True
    return Embedding(pos, np.array([3.0, 2.0, 1.0]), "left", iso)


def test_embedding_round_trip_is_exact(tmp_path):
    e = _embedding()
    path = export.write_embedding(e, tmp_path / "e.csv")
    back = export.read_embedding(path)
    assert_array_equal(back.positions, e.positions)
    assert_array_equal(back.spectrum, e.spectrum)
    assert_array_equal(back.isolated, e.isolated)
    assert back.side == "left"


def test_angles_round_trip_keeps_exclusions(tmp_path):
    theta = transform_embedding(_embedding())
    path = export.write_angles(theta, tmp_path / "a.csv")
    back = export.read_angles(path)
    assert_array_equal(back.angles, theta.angles)
    assert_array_equal(back.kept, theta.kept)
    assert_array_equal(back.excluded, [2])
    assert json.loads((tmp_path / "a.json").read_text())["excluded"] == [2]


def test_labels_round_trip_with_unassigned(tmp_path):
    labels = np.array([0, 1, -1, 1])
    path = export.write_labels(labels, tmp_path / "l.csv", node_labels=["a", "b", "c", "d"])
    assert "c,unassigned" in path.read_text()
    assert_array_equal(export.read_labels(path), labels)


def test_selection_and_simulation_files(tmp_path):
    spec = BlockModelSpec(np.array([[0.4, 0.05], [0.05, 0.4]]), 60, sizes=equal_sizes(60, 2))
    g, truth = sample(spec, seed=0)
    path = export.write_simulation(g, truth, spec, tmp_path / "g.tsv")
    assert load_edge_list(path, "undirected").edge_set() == g.edge_set()
    assert_array_equal(export.read_labels(tmp_path / "g.json"), truth.z)
    meta = json.loads((tmp_path / "g.json").read_text())
    assert BlockModelSpec.from_dict(meta["spec"]).n == 60

    Y = (np.repeat([1.0, 2.0], 30) + 0.05 * np.random.default_rng(1).normal(size=60))[:, None]
    sel = select_model(Y, 2, restarts=1)
    export.write_selection(sel, tmp_path / "s.json", tmp_path / "s.csv")
    out = json.loads((tmp_path / "s.json").read_text())
    assert (out["d_hat"], out["K_hat"]) == (sel.d_hat, sel.K_hat)
    assert_array_equal(export.read_labels(tmp_path / "s.csv"), sel.labels)
