"""Generate the committed fixtures: seeded benchmark-topology models, a
synthetic low-rank training matrix, and sample inputs."""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gcinfer.fixedpt import (LayerSpec, ModelDescriptor, encode_array,
                             model_to_json, save_model)

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def fc_model(name, sizes, act, seed, scale=None):
    rng = np.random.default_rng(seed)
    layers = []
    for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = scale if scale is not None else 1.0 / np.sqrt(a)
        w = encode_array(rng.normal(0, s, (b, a)))
        layers.append(LayerSpec("FullyConnected", {"in": a, "out": b}, weights=w))
        if li < len(sizes) - 2:
            layers.append(LayerSpec("NonLinearity", {"size": b}, activation=act))
    return ModelDescriptor(name, layers, (sizes[0],))


def main():
    OUT.mkdir(exist_ok=True)

    bench3 = fc_model("bench3", [617, 50, 26], "tanh_cordic", seed=1000)
    save_model(bench3, OUT / "bench3.json")
    with open(OUT / "bench3_arch.json", "w") as fh:
        json.dump(model_to_json(bench3, include_weights=False), fh)

    desk = fc_model("desk64", [64, 16, 8], "tanh_cordic", seed=2000)
    save_model(desk, OUT / "desk64.json")
    with open(OUT / "desk64_arch.json", "w") as fh:
        json.dump(model_to_json(desk, include_weights=False), fh)

    rng = np.random.default_rng(3000)
    x = rng.normal(0, 1.0, 617)
    with open(OUT / "x_bench3.json", "w") as fh:
        json.dump({"values": [round(float(v), 6) for v in x]}, fh)
    x = rng.normal(0, 1.0, 64)
    with open(OUT / "x_desk64.json", "w") as fh:
        json.dump({"values": [round(float(v), 6) for v in x]}, fh)

    # synthetic rank-5 training matrix (columns are samples) + labels
    rng = np.random.default_rng(4000)
    basis = rng.normal(0, 1, (20, 5))
    coef = rng.normal(0, 1, (5, 200))
    A = basis @ coef + rng.normal(0, 1e-3, (20, 200))
    np.savetxt(OUT / "train_rank5.csv", A, delimiter=",", fmt="%.8f")
    labels = (coef[0] > 0).astype(int)
    np.savetxt(OUT / "labels_rank5.csv", labels[None, :], delimiter=",", fmt="%d")
    print("fixtures written to", OUT)


if __name__ == "__main__":
    main()
