"""Quick end-to-end check of the falcon extension module.

Build and install it first:

    cd crates/py && maturin build --release -o dist && pip install dist/falcon-*.whl
"""

import json
import math
import tempfile

import falcon


def check_features():
    assert falcon.rgb_to_hsv(255, 0, 0) == (0.0, 1.0, 1.0)
    h, s, v = falcon.rgb_to_hsv(128, 128, 128)
    assert s == 0.0 and math.isclose(v, 128 / 255)
    assert falcon.color_bin(250, 10, 10) == "red"
    assert len(falcon.feature_kinds()) == 12
    red = falcon.Image.filled(32, 32, (255, 0, 0))
    cfg = json.dumps({"features": {"colorGrid": {"gw": 4, "gh": 4}}})
    assert red.feature("red", cfg) == [1.0] * 16
    assert red.feature("yellow", cfg) == [0.0] * 16


def check_network_and_engine():
    mlp = falcon.Mlp([6, 5, 3], seed=4).with_pwl()
    assert mlp.count_mac() == 6 * 5 + 5 * 3
    x = [0.0, 0.3, 0.0, 0.9, 0.1, 0.5]
    sim = falcon.simulate_inference(mlp, x)
    assert sim["outputs"] == mlp.forward(x)
    assert sim["counters"]["gatedMacs"] == 2 * 5
    again = falcon.Mlp.from_bytes(mlp.to_bytes())
    assert again.forward(x) == mlp.forward(x)

    cal = falcon.calibrate(mlp, [x, [0.2] * 6])
    assert cal["costTable"]["sramRead"] > 0

    grouping = falcon.group_from_confidences(["a", "b", "c", "d"], ["red"], [[0.9], [0.8], [0.3], [0.2]], 0.7)
    assert grouping["groups"] == [{"kind": "red", "members": [0, 1]}]
    assert grouping["fallback"] == [2, 3]


def check_tree():
    spec = {"width": 24, "height": 24, "perClassCount": 30, "seed": 5}
    data = falcon.gen_synthetic(json.dumps(spec))
    assert len(data) == 4 * 30
    cfg = json.dumps({
        "features": {"colorGrid": {"gw": 4, "gh": 4}},
        "select": {"probeHidden": [6], "probeTrain": {"epochs": 10}, "delta": 0.3},
        "tree": {"initialTrain": {"epochs": 20}, "finalTrain": {"epochs": 20}},
        "baseline": {"hidden": [8], "train": {"epochs": 10}},
    })
    tree, cost = falcon.Tree.build(data, cfg)
    assert cost["totalUpdateMacs"] > 0
    report = tree.evaluate(data)
    print(f"tree of {tree.num_nodes} nodes, test accuracy {report['accuracy']:.3f}, avg ops {report['avgOps']:.0f}")

    first = data.split_indices("test")[0]
    label, trace = tree.classify(data.image(first))
    assert label in tree.class_names
    summary = tree.simulate(data.image(first))
    assert summary["label"] == label
    assert summary["activatedNodeIds"] == [a["node"] for a in trace["activated"]]

    rows = tree.sweep(data, [0.0, 1.01])
    assert rows[0]["baselineRate"] == 0.0 and rows[-1]["baselineRate"] == 1.0

    with tempfile.TemporaryDirectory() as d:
        tree.save(d)
        assert falcon.Tree.load(d).evaluate(data) == report


if __name__ == "__main__":
    check_features()
    check_network_and_engine()
    check_tree()
    print("smoke test passed")
