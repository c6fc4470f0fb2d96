"""Secure inference over share tensors, plaintext oracles, and the
portable model container.

The graph is a flat layer list: convolution and fully-connected layers
ride the shared matrix product (one round each), pooling and folded
batch-norm are public-constant linear work (zero rounds), activations
dispatch to a polynomial protocol (one round for the single-round
evaluators).  Between layers every tensor is held at the working scale.

Weights enter as one masking exchange before inference starts, so the
inference transcript decomposes exactly into the per-layer round costs.
The fixed-point plaintext oracle mirrors the secure arithmetic step for
step (same encodings, same truncation points), which is what makes
prediction-equivalence testable.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ring
from .fitting import PolynomialSpec
from .kernels import matmul_mod, mul_mod
from .protocols import (CostEstimate, ScalePlan, espn_poly, hb_poly,
                        predict_cost, relu_binary, sqmul_poly)
from .ring import DEFAULT_CONFIG, RingConfig
from .sharing import ProtocolError, Role, Session, Share

_U64 = np.uint64
_MASK = (1 << 64) - 1

_MAGIC = b"PMF1"


class ModelFormatError(ValueError):
    """Invalid model container or inconsistent graph structure."""


@dataclass(frozen=True)
class FullyConnected:
    """Dense layer: weights (out, in), optional bias (out,)."""
    weights: np.ndarray
    bias: np.ndarray | None = None


@dataclass(frozen=True)
class Conv2D:
    """2-D convolution: kernel (out_c, in_c, kh, kw), optional bias."""
    kernel: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class AvgPool2D:
    """Non-overlapping average pooling with a square window."""
    window: int


@dataclass(frozen=True)
class BatchNormAffine:
    """Batch norm folded to public per-channel scale and shift."""
    scale: np.ndarray
    shift: np.ndarray


@dataclass(frozen=True)
class PolyActivation:
    """Elementwise polynomial activation."""
    spec: PolynomialSpec


Layer = FullyConnected | Conv2D | AvgPool2D | BatchNormAffine | PolyActivation


def _shape_after(layer: Layer, shape: tuple[int, ...], idx: int
                 ) -> tuple[int, ...]:
    if isinstance(layer, FullyConnected):
        flat = int(np.prod(shape))
        out, inp = layer.weights.shape
        if inp != flat:
            raise ModelFormatError(
                f"layer {idx}: dense expects {inp} inputs, got {flat}")
        return (out,)
    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise ModelFormatError(
                f"layer {idx}: convolution expects (C, H, W), got {shape}")
        c, h, w = shape
        oc, ic, kh, kw = layer.kernel.shape
        if ic != c:
            raise ModelFormatError(
                f"layer {idx}: convolution expects {ic} channels, got {c}")
        oh = (h + 2 * layer.padding - kh) // layer.stride + 1
        ow = (w + 2 * layer.padding - kw) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ModelFormatError(f"layer {idx}: kernel larger than input")
        return (oc, oh, ow)
    if isinstance(layer, AvgPool2D):
        c, h, w = shape
        if h % layer.window or w % layer.window:
            raise ModelFormatError(
                f"layer {idx}: pooling window {layer.window} does not "
                f"divide {h}x{w}")
        return (c, h // layer.window, w // layer.window)
    if isinstance(layer, BatchNormAffine):
        if layer.scale.shape[0] != shape[0]:
            raise ModelFormatError(
                f"layer {idx}: batch-norm over {layer.scale.shape[0]} "
                f"channels, input has {shape[0]}")
        return shape
    if isinstance(layer, PolyActivation):
        return shape
    raise ModelFormatError(f"layer {idx}: unsupported layer {type(layer)}")


@dataclass(frozen=True)
class ModelGraph:
    """Ordered layers plus the input/output contract."""
    layers: tuple[Layer, ...]
    input_shape: tuple[int, ...]
    class_count: int
    precision: int = DEFAULT_CONFIG.working_precision

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        self.validate()

    def validate(self) -> None:
        shape = self.input_shape
        for idx, layer in enumerate(self.layers):
            shape = _shape_after(layer, shape, idx)
        if int(np.prod(shape)) != self.class_count:
            raise ModelFormatError(
                f"graph ends with shape {shape}, expected "
                f"{self.class_count} classes")

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Input shape of every layer, then the output shape, in order."""
        shapes = [self.input_shape]
        for idx, layer in enumerate(self.layers):
            shapes.append(_shape_after(layer, shapes[-1], idx))
        return shapes


# --- container serialization ---------------------------------------------

def _layer_header(layer: Layer, cursor: int) -> tuple[dict, list, int]:
    """Header entry, blob arrays in order, advanced float cursor."""
    arrays = []
    if isinstance(layer, FullyConnected):
        entry = {"kind": "fc", "out": int(layer.weights.shape[0]),
                 "in": int(layer.weights.shape[1]),
                 "weights_offset": cursor}
        arrays.append(layer.weights)
        cursor += layer.weights.size
        if layer.bias is not None:
            entry["bias_offset"] = cursor
            arrays.append(layer.bias)
            cursor += layer.bias.size
        return entry, arrays, cursor
    if isinstance(layer, Conv2D):
        oc, ic, kh, kw = layer.kernel.shape
        entry = {"kind": "conv2d", "out_channels": oc, "in_channels": ic,
                 "kernel_size": [kh, kw], "stride": layer.stride,
                 "padding": layer.padding, "weights_offset": cursor}
        arrays.append(layer.kernel)
        cursor += layer.kernel.size
        if layer.bias is not None:
            entry["bias_offset"] = cursor
            arrays.append(layer.bias)
            cursor += layer.bias.size
        return entry, arrays, cursor
    if isinstance(layer, AvgPool2D):
        return {"kind": "avgpool", "window": layer.window}, [], cursor
    if isinstance(layer, BatchNormAffine):
        entry = {"kind": "batchnorm", "channels": int(layer.scale.shape[0]),
                 "scale_offset": cursor,
                 "shift_offset": cursor + layer.scale.size}
        arrays.extend([layer.scale, layer.shift])
        cursor += layer.scale.size + layer.shift.size
        return entry, arrays, cursor
    if isinstance(layer, PolyActivation):
        return {"kind": "poly",
                "coefficients": list(layer.spec.coefficients),
                "precision": layer.spec.precision,
                "input_range": layer.spec.input_range}, [], cursor
    raise ModelFormatError(f"cannot serialize layer {type(layer)}")


def save_model(graph: ModelGraph) -> bytes:
    """Serialize: magic, 8-byte LE header length, JSON header, then all
    weight tensors as little-endian float32 in declared order."""
    entries = []
    blobs = []
    cursor = 0
    for layer in graph.layers:
        entry, arrays, cursor = _layer_header(layer, cursor)
        entries.append(entry)
        blobs.extend(arrays)
    header = {"format_version": 1,
              "input_shape": list(graph.input_shape),
              "class_count": graph.class_count,
              "layers": entries}
    header_bytes = json.dumps(header).encode("utf-8")
    blob = b"".join(np.asarray(a, dtype="<f4").tobytes() for a in blobs)
    return _MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + blob


def _take_floats(blob: np.ndarray, offset: int, count: int, what: str
                 ) -> np.ndarray:
    if offset < 0 or offset + count > blob.size:
        raise ModelFormatError(
            f"{what} needs floats [{offset}, {offset + count}), "
            f"blob holds {blob.size}")
    return blob[offset:offset + count].astype(np.float64)


def load_model(data: bytes, cfg: RingConfig = DEFAULT_CONFIG) -> ModelGraph:
    """Parse a container and quantize weights to the working scale.

    Every weight is snapped to the cfg precision grid on load, so the
    graph's real-valued arrays are exactly representable and all three
    inference paths (real, fixed, secure) agree on the parameters.
    """
    if len(data) < len(_MAGIC) + 8:
        raise ModelFormatError(
            f"container too short: {len(data)} bytes, need at least "
            f"{len(_MAGIC) + 8} for magic and header length")
    if data[:4] != _MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, want {_MAGIC!r}")
    (header_len,) = struct.unpack("<Q", data[4:12])
    if 12 + header_len > len(data):
        raise ModelFormatError(
            f"header declares {header_len} bytes, container ends "
            f"{12 + header_len - len(data)} bytes early")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"malformed header: {e}") from e
    body = data[12 + header_len:]
    if len(body) % 4:
        raise ModelFormatError(
            f"weight blob length {len(body)} is not a whole number of "
            f"float32 values")
    blob = np.frombuffer(body, dtype="<f4")

    def snap(arr: np.ndarray) -> np.ndarray:
        p = cfg.working_precision
        return ring.decode_array(ring.encode_array(arr, p, cfg=cfg), p,
                                 cfg=cfg)

    layers: list[Layer] = []
    for idx, entry in enumerate(header.get("layers", [])):
        kind = entry.get("kind")
        where = f"layer {idx} ({kind})"
        try:
            if kind == "fc":
                out, inp = int(entry["out"]), int(entry["in"])
                w = _take_floats(blob, int(entry["weights_offset"]),
                                 out * inp, where + " weights")
                bias = None
                if "bias_offset" in entry:
                    bias = snap(_take_floats(blob, int(entry["bias_offset"]),
                                             out, where + " bias"))
                layers.append(FullyConnected(snap(w).reshape(out, inp), bias))
            elif kind == "conv2d":
                oc, ic = int(entry["out_channels"]), int(entry["in_channels"])
                kh, kw = (int(v) for v in entry["kernel_size"])
                w = _take_floats(blob, int(entry["weights_offset"]),
                                 oc * ic * kh * kw, where + " weights")
                bias = None
                if "bias_offset" in entry:
                    bias = snap(_take_floats(blob, int(entry["bias_offset"]),
                                             oc, where + " bias"))
                layers.append(Conv2D(snap(w).reshape(oc, ic, kh, kw), bias,
                                     int(entry.get("stride", 1)),
                                     int(entry.get("padding", 0))))
            elif kind == "avgpool":
                layers.append(AvgPool2D(int(entry["window"])))
            elif kind == "batchnorm":
                c = int(entry["channels"])
                sc = snap(_take_floats(blob, int(entry["scale_offset"]), c,
                                       where + " scale"))
                sh = snap(_take_floats(blob, int(entry["shift_offset"]), c,
                                       where + " shift"))
                layers.append(BatchNormAffine(sc, sh))
            elif kind == "poly":
                layers.append(PolyActivation(PolynomialSpec(
                    tuple(entry["coefficients"]), int(entry["precision"]),
                    float(entry["input_range"]))))
            else:
                raise ModelFormatError(f"{where}: unsupported layer kind")
        except (KeyError, TypeError) as e:
            raise ModelFormatError(f"{where}: missing or bad field: {e}") \
                from e
    try:
        return ModelGraph(tuple(layers),
                          tuple(int(v) for v in header["input_shape"]),
                          int(header["class_count"]),
                          cfg.working_precision)
    except KeyError as e:
        raise ModelFormatError(f"header missing field {e}") from e


# --- shared im2col plumbing ----------------------------------------------

def _im2col_index(shape: tuple[int, int, int], kh: int, kw: int,
                  stride: int, padding: int
                  ) -> tuple[np.ndarray, tuple[int, int]]:
    """Gather indices mapping a zero-padded (C,H,W) tensor to patch rows.

    Returns flat indices into the padded tensor with shape
    (oh*ow, C*kh*kw) and the output spatial dims.
    """
    c, h, w = shape
    ph, pw = h + 2 * padding, w + 2 * padding
    oh = (ph - kh) // stride + 1
    ow = (pw - kw) // stride + 1
    ci, ki, kj = np.meshgrid(np.arange(c), np.arange(kh), np.arange(kw),
                             indexing="ij")
    base = (ci * ph + ki) * pw + kj          # (c, kh, kw)
    oi, oj = np.meshgrid(np.arange(oh) * stride, np.arange(ow) * stride,
                         indexing="ij")
    offset = (oi * pw + oj).reshape(-1)      # (oh*ow,)
    idx = offset[:, None] + base.reshape(-1)[None, :]
    return idx, (oh, ow)


def _pad_flat(x: np.ndarray, shape: tuple[int, int, int], padding: int
              ) -> np.ndarray:
    """Zero-pad a flat (C,H,W) tensor spatially, staying flat."""
    if padding == 0:
        return x.reshape(-1)
    c, h, w = shape
    padded = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    padded[:, padding:padding + h, padding:padding + w] = x.reshape(c, h, w)
    return padded.reshape(-1)


# --- plaintext oracles ----------------------------------------------------

def plain_infer_real(graph: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Float reference walk using the (quantization-snapped) weights."""
    cur = np.asarray(x, dtype=np.float64).reshape(graph.input_shape)
    shape = graph.input_shape
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, FullyConnected):
            cur = layer.weights @ cur.reshape(-1)
            if layer.bias is not None:
                cur = cur + layer.bias
        elif isinstance(layer, Conv2D):
            oc, ic, kh, kw = layer.kernel.shape
            idxs, (oh, ow) = _im2col_index(shape, kh, kw, layer.stride,
                                           layer.padding)
            cols = _pad_flat(cur, shape, layer.padding)[idxs]
            out = cols @ layer.kernel.reshape(oc, -1).T
            if layer.bias is not None:
                out = out + layer.bias
            cur = out.T.reshape(oc, oh, ow)
        elif isinstance(layer, AvgPool2D):
            c, h, w = shape
            wn = layer.window
            cur = cur.reshape(c, h // wn, wn, w // wn, wn).sum(axis=(2, 4))
            cur = cur * (1.0 / (wn * wn))
        elif isinstance(layer, BatchNormAffine):
            cur = cur * layer.scale[:, None, None] \
                + layer.shift[:, None, None]
        elif isinstance(layer, PolyActivation):
            cur = layer.spec.evaluate(cur)
        shape = _shape_after(layer, shape, idx)
        cur = cur.reshape(shape)
    return cur.reshape(-1)


def _trunc_value(raw: np.ndarray, bits: int) -> np.ndarray:
    """Plaintext truncation: floor division of the signed value."""
    return (raw.view(np.int64) >> np.int64(bits)).view(_U64)


def _poly_terms_fixed(flat: np.ndarray, spec: PolynomialSpec,
                      precision: int) -> np.ndarray:
    """Value-level mirror of the protocols' truncation schedule."""
    degree = spec.degree
    terms = {1: flat}
    if degree >= 2:
        plan = ScalePlan.build(degree, precision)
        for step in plan.steps:
            xt = _trunc_value(flat, step.pre_bits)
            power = xt.copy()
            for _ in range(step.exponent - 1):
                power = mul_mod(power, xt)
            terms[step.exponent] = _trunc_value(power, step.post_bits)
    acc = np.full(flat.shape,
                  _U64((int(spec.coefficients[0]) << precision) & _MASK))
    for i in range(1, degree + 1):
        c = _U64(int(spec.coefficients[i]) & _MASK)
        acc += mul_mod(np.full(flat.shape, c), terms[i])
    return _trunc_value(acc, spec.precision)


def plain_infer_fixed(graph: ModelGraph, x: np.ndarray,
                      cfg: RingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Fixed-point oracle: the secure pipeline run on plaintext residues.

    Identical encodings, products, and truncation points as secure_infer,
    minus the sharing, so secure results may differ only by the bounded
    per-party truncation noise.  Returns decoded logits.
    """
    p = cfg.working_precision
    cur = ring.encode_array(np.asarray(x, dtype=np.float64)
                            .reshape(-1), p, cfg=cfg)
    shape = graph.input_shape
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, FullyConnected):
            w_raw = ring.encode_array(layer.weights, p, cfg=cfg)
            out = matmul_mod(w_raw, cur.reshape(-1, 1)).reshape(-1)
            if layer.bias is not None:
                out = out + ring.encode_array(layer.bias, 2 * p, cfg=cfg)
            cur = _trunc_value(out, p)
        elif isinstance(layer, Conv2D):
            oc, ic, kh, kw = layer.kernel.shape
            idxs, (oh, ow) = _im2col_index(shape, kh, kw, layer.stride,
                                           layer.padding)
            cols = _pad_flat(cur, shape, layer.padding)[idxs]
            k_raw = ring.encode_array(layer.kernel.reshape(oc, -1).T, p,
                                      cfg=cfg)
            out = matmul_mod(cols, k_raw)
            if layer.bias is not None:
                out = out + ring.encode_array(layer.bias, 2 * p, cfg=cfg)
            cur = _trunc_value(out.T.reshape(-1), p)
        elif isinstance(layer, AvgPool2D):
            c, h, w = shape
            wn = layer.window
            pooled = cur.reshape(c, h // wn, wn, w // wn, wn) \
                .sum(axis=(2, 4), dtype=_U64)
            recip = ring.encode(1.0 / (wn * wn), cfg=cfg).raw & _MASK
            cur = _trunc_value(mul_mod(
                pooled.reshape(-1), np.full(pooled.size, _U64(recip))), p)
        elif isinstance(layer, BatchNormAffine):
            sc = ring.encode_array(layer.scale, p, cfg=cfg)
            sh = ring.encode_array(layer.shift, 2 * p, cfg=cfg)
            c = shape[0]
            per = cur.reshape(c, -1)
            out = mul_mod(np.repeat(sc, per.shape[1]), per.reshape(-1)) \
                + np.repeat(sh, per.shape[1])
            cur = _trunc_value(out, p)
        elif isinstance(layer, PolyActivation):
            cur = _poly_terms_fixed(cur, layer.spec, p)
        shape = _shape_after(layer, shape, idx)
    return ring.decode_array(cur, p, cfg=cfg)


def oor_ratio(graph: ModelGraph, inputs: np.ndarray) -> float:
    """Fraction of activation inputs outside each activation's fitted
    range, over a batch of inputs, on the float reference walk."""
    total = 0
    outside = 0
    for x in np.asarray(inputs, dtype=np.float64).reshape(
            -1, *graph.input_shape):
        cur = x
        shape = graph.input_shape
        for idx, layer in enumerate(graph.layers):
            if isinstance(layer, PolyActivation):
                lam = layer.spec.input_range
                total += cur.size
                outside += int(np.count_nonzero(np.abs(cur) > lam))
            cur = _real_layer_step(layer, cur, shape)
            shape = _shape_after(layer, shape, idx)
            cur = cur.reshape(shape)
    if total == 0:
        return 0.0
    return outside / total


def _real_layer_step(layer: Layer, cur: np.ndarray,
                     shape: tuple[int, ...]) -> np.ndarray:
    if isinstance(layer, FullyConnected):
        out = layer.weights @ cur.reshape(-1)
        return out + layer.bias if layer.bias is not None else out
    if isinstance(layer, Conv2D):
        oc, ic, kh, kw = layer.kernel.shape
        idxs, (oh, ow) = _im2col_index(shape, kh, kw, layer.stride,
                                       layer.padding)
        cols = _pad_flat(cur, shape, layer.padding)[idxs]
        out = cols @ layer.kernel.reshape(oc, -1).T
        if layer.bias is not None:
            out = out + layer.bias
        return out.T.reshape(oc, oh, ow)
    if isinstance(layer, AvgPool2D):
        c, h, w = shape
        wn = layer.window
        return cur.reshape(c, h // wn, wn, w // wn, wn).sum(axis=(2, 4)) \
            * (1.0 / (wn * wn))
    if isinstance(layer, BatchNormAffine):
        return cur * layer.scale[:, None, None] + layer.shift[:, None, None]
    if isinstance(layer, PolyActivation):
        return layer.spec.evaluate(cur)
    raise ModelFormatError(f"unsupported layer {type(layer)}")


# --- secure path ----------------------------------------------------------

@dataclass
class SharedModel:
    """Per-layer weight shares produced by the setup exchange."""
    weights: dict[int, Share] = field(default_factory=dict)
    biases: dict[int, Share] = field(default_factory=dict)


def setup_inference(session: Session, graph: ModelGraph,
                    input_values: np.ndarray | None,
                    rng: np.random.Generator,
                    cfg: RingConfig = DEFAULT_CONFIG
                    ) -> tuple[SharedModel, Share]:
    """One asymmetric masking exchange that shares the client's input and
    the server's weights; returns this party's shares of both.

    Party A is the client (must supply input_values), party B the server
    (weights come from the graph; input_values must be None).  Bias terms
    travel pre-scaled to 2p so linear layers can add them before their
    truncation.
    """
    p = cfg.working_precision
    if session.role is Role.A:
        if input_values is None:
            raise ProtocolError("the client side must supply input values")
        enc = ring.encode_array(np.asarray(input_values, dtype=np.float64)
                                .reshape(-1), p, cfg=cfg)
        if enc.size != int(np.prod(graph.input_shape)):
            raise ProtocolError(
                f"input has {enc.size} values, graph wants "
                f"{int(np.prod(graph.input_shape))}")
        keep = rng.integers(0, 1 << 64, size=enc.size, dtype=_U64)
        received = session.exchange(enc - keep)
        model = SharedModel()
        cursor = 0
        for idx, layer in enumerate(graph.layers):
            if isinstance(layer, FullyConnected):
                n = layer.weights.size
                model.weights[idx] = Share(
                    received[cursor:cursor + n].reshape(
                        layer.weights.shape[1], layer.weights.shape[0]),
                    Role.A, p)
                cursor += n
                if layer.bias is not None:
                    model.biases[idx] = Share(
                        received[cursor:cursor + layer.bias.size],
                        Role.A, 2 * p)
                    cursor += layer.bias.size
            elif isinstance(layer, Conv2D):
                n = layer.kernel.size
                oc = layer.kernel.shape[0]
                model.weights[idx] = Share(
                    received[cursor:cursor + n].reshape(n // oc, oc),
                    Role.A, p)
                cursor += n
                if layer.bias is not None:
                    model.biases[idx] = Share(
                        received[cursor:cursor + oc], Role.A, 2 * p)
                    cursor += oc
        return model, Share(keep, Role.A, p)
    # server side
    if input_values is not None:
        raise ProtocolError("the server side holds no input values")
    payload_parts = []
    model = SharedModel()
    keeps = []
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, FullyConnected):
            w_raw = ring.encode_array(layer.weights.T, p, cfg=cfg)
            keep = rng.integers(0, 1 << 64, size=w_raw.shape, dtype=_U64)
            payload_parts.append((w_raw - keep).reshape(-1))
            model.weights[idx] = Share(keep, Role.B, p)
            if layer.bias is not None:
                b_raw = ring.encode_array(layer.bias, 2 * p, cfg=cfg)
                bkeep = rng.integers(0, 1 << 64, size=b_raw.shape,
                                     dtype=_U64)
                payload_parts.append(b_raw - bkeep)
                model.biases[idx] = Share(bkeep, Role.B, 2 * p)
        elif isinstance(layer, Conv2D):
            oc = layer.kernel.shape[0]
            w_raw = ring.encode_array(layer.kernel.reshape(oc, -1).T, p,
                                      cfg=cfg)
            keep = rng.integers(0, 1 << 64, size=w_raw.shape, dtype=_U64)
            payload_parts.append((w_raw - keep).reshape(-1))
            model.weights[idx] = Share(keep, Role.B, p)
            if layer.bias is not None:
                b_raw = ring.encode_array(layer.bias, 2 * p, cfg=cfg)
                bkeep = rng.integers(0, 1 << 64, size=b_raw.shape,
                                     dtype=_U64)
                payload_parts.append(b_raw - bkeep)
                model.biases[idx] = Share(bkeep, Role.B, 2 * p)
    payload = (np.concatenate(payload_parts) if payload_parts
               else np.zeros(0, dtype=_U64))
    received = session.exchange(payload)
    return model, Share(received, Role.B, p)


_POLY_PROTOCOLS = {"espn": espn_poly, "honeybadger": hb_poly,
                   "hb": hb_poly, "sqmul": sqmul_poly}


def secure_infer(session: Session, graph: ModelGraph, x: Share,
                 protocol: str = "espn",
                 model: SharedModel | None = None,
                 cfg: RingConfig = DEFAULT_CONFIG) -> Share:
    """Walk the graph over shares; returns logit shares (argmax is the
    client's local step after reconstruction).

    protocol selects the activation evaluator; "binary-relu" on a
    polynomial graph applies exact ReLU instead of the fitted polynomial
    and warns, since the two compute different functions.
    """
    if model is None:
        raise ProtocolError("secure_infer needs the shared model from "
                            "setup_inference")
    name = protocol.lower().replace("_", "-")
    if name not in _POLY_PROTOCOLS and name not in ("binary-relu", "binary"):
        raise ProtocolError(f"unknown protocol {protocol!r}")
    p = cfg.working_precision
    cur = x.values.reshape(-1)
    shape = graph.input_shape
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, (FullyConnected, Conv2D)):
            if isinstance(layer, FullyConnected):
                cols = cur.reshape(1, -1)
            else:
                oc, ic, kh, kw = layer.kernel.shape
                idxs, (oh, ow) = _im2col_index(shape, kh, kw, layer.stride,
                                               layer.padding)
                cols = _pad_flat(cur, shape, layer.padding)[idxs]
            out = session.matmul_raw(cols, model.weights[idx].values)
            if idx in model.biases:
                out = out + model.biases[idx].values[None, :]
            if isinstance(layer, FullyConnected):
                cur = _share_trunc(session, out.reshape(-1), p)
            else:
                cur = _share_trunc(session, out.T.reshape(-1), p)
        elif isinstance(layer, AvgPool2D):
            c, h, w = shape
            wn = layer.window
            pooled = cur.reshape(c, h // wn, wn, w // wn, wn) \
                .sum(axis=(2, 4), dtype=_U64)
            recip = ring.encode(1.0 / (wn * wn), cfg=cfg).raw & _MASK
            prod = mul_mod(pooled.reshape(-1),
                           np.full(pooled.size, _U64(recip)))
            cur = _share_trunc(session, prod, p)
        elif isinstance(layer, BatchNormAffine):
            sc = ring.encode_array(layer.scale, p, cfg=cfg)
            sh = ring.encode_array(layer.shift, 2 * p, cfg=cfg)
            c = shape[0]
            per = cur.reshape(c, -1)
            out = mul_mod(np.repeat(sc, per.shape[1]), per.reshape(-1))
            if session.role is Role.A:
                out = out + np.repeat(sh, per.shape[1])
            cur = _share_trunc(session, out, p)
        elif isinstance(layer, PolyActivation):
            sh_in = Share(cur, session.role, p)
            if name in ("binary-relu", "binary"):
                warnings.warn(
                    "binary-relu on a polynomial-activation graph applies "
                    "exact ReLU instead of the fitted polynomial",
                    stacklevel=2)
                cur = relu_binary(session, sh_in).values
            else:
                fn = _POLY_PROTOCOLS[name]
                cur = fn(session, sh_in, layer.spec.coefficients,
                         layer.spec.precision).values
        shape = _shape_after(layer, shape, idx)
    return Share(cur, session.role, p)


def _share_trunc(session: Session, raw: np.ndarray, bits: int) -> np.ndarray:
    return ring.truncate_raw(raw, bits, mirror=(session.role is Role.B))


def predict_model_cost(graph: ModelGraph, protocol: str,
                       cfg: RingConfig = DEFAULT_CONFIG) -> CostEstimate:
    """Exact per-party rounds and bytes for one secure_infer call.

    Linear layers cost one exchange of their matrix-triple openings;
    pooling and batch-norm are free; activations follow the protocol's
    own per-element prediction.  Matches the transcript exactly.
    """
    rounds = 0
    total = 0
    shape = graph.input_shape
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, FullyConnected):
            m, k = 1, int(np.prod(shape))
            n = layer.weights.shape[0]
            rounds += 1
            total += 8 + 8 * (m * k + k * n)
        elif isinstance(layer, Conv2D):
            oc, ic, kh, kw = layer.kernel.shape
            idxs, _ = _im2col_index(shape, kh, kw, layer.stride,
                                    layer.padding)
            m, k = idxs.shape
            rounds += 1
            total += 8 + 8 * (m * k + k * oc)
        elif isinstance(layer, PolyActivation):
            count = int(np.prod(shape))
            est = predict_cost(protocol, count, layer.spec.degree,
                               cfg.working_precision)
            rounds += est.rounds
            total += est.bytes_sent
        shape = _shape_after(layer, shape, idx)
    return CostEstimate(rounds, total)
