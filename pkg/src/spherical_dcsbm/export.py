"""CSV/JSON readers and writers for embeddings, angles, selections and simulations.

Every table is a CSV with a ``node`` column; metadata that does not fit a
table (spectrum, excluded nodes, ground truth) goes to a JSON sidecar next
to it, named ``<stem>.json``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .embed import Embedding
from .graph import SparseGraph, write_edge_list
from .mixture import UNASSIGNED, SelectionResult
from .spherical import SphericalEmbedding

UNASSIGNED_TEXT = "unassigned"


def sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    return header, rows


def _write_table(path, header, node_ids, values, fmt="{:.17g}"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for node, row in zip(node_ids, values):
            writer.writerow([node] + [fmt.format(v) for v in row])


def write_embedding(e: Embedding, path, node_labels=None) -> Path:
    """Positions as ``node,x1..xm``; spectrum, side and isolated nodes in the sidecar."""
    path = Path(path)
    nodes = range(e.n) if node_labels is None else node_labels
    _write_table(path, ["node"] + [f"x{j + 1}" for j in range(e.m)], nodes, e.positions)
    isolated = [] if e.isolated is None else np.flatnonzero(e.isolated).tolist()
    _write_json(sidecar(path), {"spectrum": e.spectrum.tolist(), "side": e.side,
                                "isolated": isolated, "n_nodes": e.n})
    return path


def read_embedding(path) -> Embedding:
    header, rows = _read_table(path)
    positions = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), -1)
    meta = json.loads(sidecar(path).read_text())
    isolated = np.zeros(len(rows), dtype=bool)
    isolated[meta.get("isolated", [])] = True
    return Embedding(positions, np.asarray(meta["spectrum"], dtype=float), meta.get("side", "single"),
                     isolated)


def write_angles(theta: SphericalEmbedding, path, node_labels=None) -> Path:
    """Angles as ``node,theta1..``; excluded nodes and source dimension in the sidecar."""
    path = Path(path)
    nodes = theta.kept if node_labels is None else [node_labels[i] for i in theta.kept]
    _write_table(path, ["node"] + [f"theta{j + 1}" for j in range(theta.n_cols)], nodes,
                 theta.angles)
    _write_json(sidecar(path), {"source_dim": theta.source_dim, "n_nodes": theta.n_nodes,
                                "kept": theta.kept.tolist(),
                                "excluded": theta.excluded.tolist()})
    return path


def read_angles(path) -> SphericalEmbedding:
    header, rows = _read_table(path)
    angles = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
    meta = json.loads(sidecar(path).read_text())
    return SphericalEmbedding(angles, int(meta["source_dim"]), np.asarray(meta["kept"], dtype=np.int64),
                              int(meta["n_nodes"]))


def read_matrix(path) -> np.ndarray:
    """Numeric columns of a ``node,...`` CSV as an array."""
    _, rows = _read_table(path)
    return np.array([[float(v) for v in r[1:]] for r in rows])


def write_labels(labels, path, node_labels=None) -> Path:
    """``node,label`` CSV; :data:`UNASSIGNED` entries are written as ``unassigned``."""
    path = Path(path)
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "label"])
        for i, lab in enumerate(labels):
            node = i if node_labels is None else node_labels[i]
            writer.writerow([node, UNASSIGNED_TEXT if lab == UNASSIGNED else int(lab)])
    return path


def read_labels(path) -> np.ndarray:
    """Labels from a ``node,label`` CSV, or ``z`` from a truth JSON file."""
    path = Path(path)
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text())["z"], dtype=np.int64)
    _, rows = _read_table(path)
    return np.array([UNASSIGNED if r[1] == UNASSIGNED_TEXT else int(r[1]) for r in rows],
                    dtype=np.int64)


def write_selection(res: SelectionResult, json_path, labels_path=None, node_labels=None):
    """Selection summary as JSON and, when labels exist, a labels CSV."""
    _write_json(json_path, res.to_dict())
    if labels_path is not None and res.labels is not None:
        write_labels(res.labels, labels_path, node_labels)
    return json_path


def write_simulation(g: SparseGraph, truth, spec, path) -> Path:
    """Edge list at ``path``; spec and ground truth in the sidecar."""
    path = Path(path)
    write_edge_list(g, path)
    _write_json(sidecar(path), {"spec": spec.to_dict(), **truth.to_dict()})
    return path
