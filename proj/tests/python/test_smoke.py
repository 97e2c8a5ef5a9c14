import pickle
from collections import defaultdict

import numpy as np
import pytest

lbd = pytest.importorskip("linkbackdoor")


def tiny_config(data_dir, out):
    return {
        "data.name": "tiny",
        "data.dir": str(data_dir),
        "model.hidden": "16",
        "model.embedding": "8",
        "model.max_epochs": "60",
        "model.patience": "20",
        "attack.warmup": "20",
        "attack.epochs": "40",
        "attack.update_interval": "10",
        "run.out": str(out),
    }


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    g, labels = lbd.make_synthetic(nodes=150, features=30, edges=380, classes=3, seed=2)
    lbd.save_dataset(d, "tiny", g, labels)
    return d


def test_graph_roundtrip(tmp_path):
    x = np.eye(4)
    g = lbd.Graph(4, [[0, 1], [2, 1], [1, 0]], x)
    assert g.n_nodes == 4 and g.n_edges == 2
    assert g.has_edge(1, 2) and not g.has_edge(0, 3)
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])
    lbd.save_dataset(tmp_path, "toy", g, [0, 1, 1, 0])
    back, labels = lbd.load_dataset(tmp_path, "toy")
    assert labels == [0, 1, 1, 0]
    np.testing.assert_array_equal(back.features, x)


def test_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        lbd.Graph(3, [[0, 0]], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        lbd.Graph(3, [[0, 5]], np.zeros((3, 2)))


def test_auc():
    assert lbd.auc([0.9, 0.8, 0.4], [0.1, 0.2, 0.4, 0.8]) == pytest.approx(10 / 12)
    assert lbd.auc([0.5], [0.5]) == 0.5
    with pytest.raises(ValueError):
        lbd.auc([], [0.1])


def test_train_beats_chance():
    g, _ = lbd.make_synthetic(nodes=150, features=30, edges=380, classes=3, seed=4)
    s = lbd.split_edges(g, 0)
    assert len(s.test_pos) == 38 and len(s.val_pos) == 19
    m = lbd.train("gae", s, 0, {"max_epochs": "80", "hidden": "16", "embedding": "8"})
    z = m.embed(s.train_graph)
    assert z.shape == (150, 8)
    a = lbd.auc(m.score(s.train_graph, s.test_pos), m.score(s.train_graph, s.test_neg))
    assert a > 0.6


def test_run_and_artifacts(tiny_data, tmp_path):
    out = tmp_path / "run"
    code, log = lbd.run("run", "", tiny_config(tiny_data, out))
    assert code == 0, log
    reports = lbd.read_reports(out)
    assert len(reports) == 1
    r = reports[0]
    assert r["dataset"] == "tiny" and r["attack"] == "link-backdoor"
    assert 0.0 <= r["asr"] <= 1.0
    assert r["trigger_edges"] <= 5

    t = lbd.load_trigger(out / "GAE" / "seed_0" / "trigger.txt")
    assert t["m"] == 2
    assert t["pattern"].shape == (4, 4)
    np.testing.assert_array_equal(t["pattern"], t["pattern"].T)
    assert t["pattern"][0, 1] == 0
    assert len(t["edges"]) == r["trigger_edges"]

    viz = lbd.export_viz(out, tmp_path / "g.gexf")
    assert viz["injected"] == 2
    assert (tmp_path / "g.gexf").read_text().startswith("<?xml")


def test_run_is_deterministic(tiny_data, tmp_path):
    texts = []
    for name in ("a", "b"):
        cfg = tiny_config(tiny_data, tmp_path / name)
        cfg["attack.kind"] = "erb"
        code, log = lbd.run("run", "", cfg)
        assert code == 0, log
        texts.append((tmp_path / name / "GAE" / "seed_0" / "report.csv").read_text())
    assert texts[0] == texts[1]


def test_config_errors():
    with pytest.raises(ValueError, match="attack.bogus"):
        lbd.render_config("", {"attack.bogus": "1"})
    with pytest.raises(ValueError, match="<config>:2"):
        lbd.render_config("[attack]\nnope = 3\n")
    assert "poison_rate = 0.05" in lbd.render_config("[attack]\npoison_rate = 0.05\n")
    with pytest.raises(ValueError):
        lbd.run("explode")


def test_planetoid_conversion(tmp_path):
    from linkbackdoor import prepare

    scipy_sparse = pytest.importorskip("scipy.sparse")
    rng = np.random.default_rng(0)
    n, d, c = 10, 6, 3
    feats = (rng.random((n, d)) < 0.4).astype(float)
    onehot = np.eye(c)[rng.integers(0, c, n)]
    test_index = [9, 7, 8]  # unsorted on disk, like the originals
    train = list(range(7))
    parts = {
        "x": scipy_sparse.csr_matrix(feats[:3]),
        "y": onehot[:3],
        "allx": scipy_sparse.csr_matrix(feats[train]),
        "ally": onehot[train],
        "tx": scipy_sparse.csr_matrix(feats[sorted(test_index)][[2, 0, 1]]),
        "ty": onehot[sorted(test_index)][[2, 0, 1]],
        "graph": defaultdict(list, {0: [1, 1, 0], 1: [0, 2], 2: [3], 5: [9], 8: [7]}),
    }
    for k, v in parts.items():
        with open(tmp_path / f"ind.toy.{k}", "wb") as f:
            pickle.dump(v, f)
    (tmp_path / "ind.toy.test.index").write_text("\n".join(map(str, test_index)) + "\n")

    out = tmp_path / "out"
    assert prepare.main([str(tmp_path), str(out), "--name", "toy"]) == 0
    g, labels = lbd.load_dataset(out, "toy")
    assert g.n_nodes == n
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2], [2, 3], [5, 9], [7, 8]])
    np.testing.assert_array_equal(g.features, feats)
    assert labels == list(onehot.argmax(axis=1))

    (tmp_path / "ind.toy.graph").unlink()
    assert prepare.main([str(tmp_path), str(out), "--name", "toy"]) == 2
