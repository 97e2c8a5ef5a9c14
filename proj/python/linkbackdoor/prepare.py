"""Convert the Planetoid pickle layout (ind.<name>.x, .tx, .allx, .y, .ty, .ally,
.graph, .test.index) into the node/edge text files the C++ tools read.

    python -m linkbackdoor.prepare RAW_DIR OUT_DIR --name cora
"""

from __future__ import annotations

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np

from . import Graph, save_dataset

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _dense(m) -> np.ndarray:
    return np.asarray(m.todense() if hasattr(m, "todense") else m, dtype=np.float64)


def load_planetoid(raw_dir: Path, name: str):
    """Returns (features, labels, edges) in the usual Planetoid node order."""
    raw_dir = Path(raw_dir)
    objs = {}
    for part in PARTS:
        path = raw_dir / f"ind.{name}.{part}"
        if not path.exists():
            raise FileNotFoundError(f"missing {path}")
        with open(path, "rb") as f:
            objs[part] = pickle.load(f, encoding="latin1")
    index_path = raw_dir / f"ind.{name}.test.index"
    if not index_path.exists():
        raise FileNotFoundError(f"missing {index_path}")
    test_index = [int(line) for line in index_path.read_text().split()]
    test_sorted = np.sort(test_index)

    allx, tx = _dense(objs["allx"]), _dense(objs["tx"])
    ally, ty = np.asarray(objs["ally"]), np.asarray(objs["ty"])
    if name == "citeseer":
        # isolated test nodes have no rows in tx/ty
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = np.zeros((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min()] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min()] = ty
        tx, ty = tx_ext, ty_ext

    features = np.vstack([allx, tx])
    onehot = np.vstack([ally, ty])
    features[test_index] = features[test_sorted]
    onehot[test_index] = onehot[test_sorted]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1).astype(int)

    n = features.shape[0]
    edges = set()
    for u, nbrs in objs["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))
    edge_array = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return features, labels, edge_array


def convert(raw_dir: Path, out_dir: Path, name: str) -> Graph:
    features, labels, edges = load_planetoid(raw_dir, name)
    graph = Graph(features.shape[0], edges, features)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    save_dataset(out_dir, name, graph, labels.tolist())
    return graph


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("raw_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--name", required=True, help="cora, citeseer or pubmed")
    args = p.parse_args(argv)
    try:
        g = convert(args.raw_dir, args.out_dir, args.name)
    except FileNotFoundError as e:
        print(f"prepare: {e}", file=sys.stderr)
        return 2
    print(f"{args.name}: {g.n_nodes} nodes, {g.n_edges} edges, {g.n_features} features")
    return 0


if __name__ == "__main__":
    sys.exit(main())
