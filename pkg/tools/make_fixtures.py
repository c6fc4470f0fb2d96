"""Generate the checked-in model fixtures under tests/fixtures/.

Builds a small 2-conv 2-dense polynomial-activation network with weights
scaled so every activation input stays well inside the fitted range,
cross-checks the float reference against torch, and freezes the
fixed-point logits and argmax labels that the tests replay.

Run from the repository root:  python3 tools/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from polyshare.engine import (AvgPool2D, Conv2D, FullyConnected, ModelGraph,
                              PolyActivation, load_model, oor_ratio,
                              plain_infer_fixed, plain_infer_real, save_model)
from polyshare.fitting import PolynomialSpec

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

COEFFS = (322, 512, 160, 0, -3)
FIT_PRECISION = 10
INPUT_RANGE = 5.0
N_INPUTS = 100


def build_graph() -> ModelGraph:
    rng = np.random.default_rng(20240817)
    act = PolynomialSpec(COEFFS, FIT_PRECISION, INPUT_RANGE)
    conv1 = Conv2D(rng.normal(0, 0.55, size=(4, 1, 3, 3)),
                   rng.uniform(-0.3, 0.3, size=4), stride=1, padding=1)
    conv2 = Conv2D(rng.normal(0, 0.28, size=(8, 4, 3, 3)),
                   rng.uniform(-0.2, 0.2, size=8), stride=1, padding=1)
    fc1 = FullyConnected(rng.normal(0, 0.3, size=(16, 32)),
                         rng.uniform(-0.2, 0.2, size=16))
    fc2 = FullyConnected(rng.normal(0, 0.6, size=(4, 16)),
                         np.zeros(4), )

    def assemble(last: FullyConnected) -> ModelGraph:
        return ModelGraph(
            layers=(conv1, PolyActivation(act), AvgPool2D(2),
                    conv2, PolyActivation(act), AvgPool2D(2),
                    fc1, PolyActivation(act), last),
            input_shape=(1, 8, 8), class_count=4)

    # center the class logits over a calibration batch so the argmax is
    # decided by the input, not by constant offsets
    graph = assemble(fc2)
    cal_rng = np.random.default_rng(7)
    cal = cal_rng.uniform(-1.0, 1.0, size=(64, 1, 8, 8))
    mean = np.mean([plain_infer_real(graph, x) for x in cal], axis=0)
    return assemble(FullyConnected(fc2.weights, -mean))


def torch_logits(graph: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Independent float walk of the same graph through torch ops."""
    t = torch.from_numpy(x.reshape(1, *graph.input_shape).astype(np.float64))
    real = np.array(COEFFS, dtype=np.float64) / 2.0 ** FIT_PRECISION
    for layer in graph.layers:
        if isinstance(layer, Conv2D):
            t = F.conv2d(t, torch.from_numpy(layer.kernel),
                         torch.from_numpy(layer.bias),
                         stride=layer.stride, padding=layer.padding)
        elif isinstance(layer, PolyActivation):
            acc = torch.zeros_like(t)
            for c in reversed(real):
                acc = acc * t + c
            t = acc
        elif isinstance(layer, AvgPool2D):
            t = F.avg_pool2d(t, layer.window)
        elif isinstance(layer, FullyConnected):
            t = t.reshape(1, -1) @ torch.from_numpy(layer.weights).T \
                + torch.from_numpy(layer.bias)
    return t.numpy().reshape(-1)


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    graph = build_graph()
    blob = save_model(graph)
    graph = load_model(blob)   # expectations come from the snapped weights

    rng = np.random.default_rng(99)

    # headroom gate reuses the weights with the range shrunk to 4.5
    tight = ModelGraph(
        layers=tuple(PolyActivation(PolynomialSpec(COEFFS, FIT_PRECISION, 4.5))
                     if isinstance(l, PolyActivation) else l
                     for l in graph.layers),
        input_shape=graph.input_shape, class_count=graph.class_count)

    inputs = []
    fixed_logits = []
    argmax = []
    margins = []
    tried = 0
    while len(inputs) < N_INPUTS:
        tried += 1
        assert tried < 20 * N_INPUTS, "cannot find enough decisive inputs"
        x = rng.uniform(-1.0, 1.0, size=graph.input_shape)
        if oor_ratio(tight, x[None]) > 0:
            continue
        real = plain_infer_real(graph, x)
        ref = torch_logits(graph, x)
        assert np.max(np.abs(real - ref)) < 1e-9, "torch cross-check failed"
        logits = plain_infer_fixed(graph, x)
        assert np.max(np.abs(logits - real)) < 0.02, \
            f"fixed-point drift {np.max(np.abs(logits - real))}"
        top = np.sort(logits)[-2:]
        margin = float(top[1] - top[0])
        if margin < 0.004:   # ulp noise between oracles must never flip it
            continue
        inputs.append(x)
        fixed_logits.append([float(v) for v in logits])
        argmax.append(int(np.argmax(logits)))
        margins.append(margin)

    inputs = np.array(inputs)
    min_margin = min(margins)
    classes = sorted(set(argmax))
    assert len(classes) >= 3, f"label distribution too narrow {classes}"
    print(f"accepted {N_INPUTS}/{tried} inputs")

    (FIXTURES / "toycnn.pmf").write_bytes(blob)
    np.save(FIXTURES / "toycnn_inputs.npy", inputs)
    np.save(FIXTURES / "input0.npy", inputs[0])
    (FIXTURES / "toycnn_expected.json").write_text(json.dumps(
        {"argmax": argmax, "fixed_logits": fixed_logits,
         "min_margin": min_margin}, indent=1) + "\n")
    print(f"wrote {N_INPUTS} inputs; classes {classes}; "
          f"min margin {min_margin:.4f}; model {len(blob)} bytes")


if __name__ == "__main__":
    main()
