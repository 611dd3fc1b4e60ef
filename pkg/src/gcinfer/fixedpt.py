"""Q3.12 fixed-point arithmetic and the plaintext reference network evaluator.

Every value on a circuit wire bundle is a 16-bit two's-complement word
interpreted as ``raw * 2**-12`` (1 sign bit, 3 integer bits, 12 fraction
bits).  The functions here are the bit-level ground truth that the circuit
library and the garbled execution are tested against: addition wraps,
multiplication truncates toward minus infinity, and ``encode`` saturates.

Raw words are carried as plain ints (or int64 numpy arrays) holding the
unsigned 16-bit pattern.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

FRAC_BITS = 12
WORD_BITS = 16
SCALE = 1 << FRAC_BITS
WORD_MASK = (1 << WORD_BITS) - 1
RAW_MIN = -(1 << (WORD_BITS - 1))
RAW_MAX = (1 << (WORD_BITS - 1)) - 1

ONE = SCALE  # raw pattern of +1.0


class ShapeMismatch(ValueError):
    """Tensor shape disagrees with the layer specification."""


def to_signed(raw):
    """Reinterpret an unsigned 16-bit pattern (int or array) as signed."""
    if isinstance(raw, np.ndarray):
        r = raw.astype(np.int64) & WORD_MASK
        return np.where(r & 0x8000, r - 0x10000, r)
    r = raw & WORD_MASK
    return r - 0x10000 if r & 0x8000 else r


def to_raw(signed):
    """Unsigned 16-bit pattern of a signed value (int or array)."""
    if isinstance(signed, np.ndarray):
        return signed.astype(np.int64) & WORD_MASK
    return signed & WORD_MASK


def encode(value: float) -> int:
    """Quantize a real number, round-half-even, saturating at the range ends."""
    scaled = value * SCALE
    if scaled >= RAW_MAX:
        return RAW_MAX & WORD_MASK
    if scaled <= RAW_MIN:
        return RAW_MIN & WORD_MASK
    # float() guards against numpy scalars whose round() returns numpy types
    return int(round(float(scaled))) & WORD_MASK


def encode_array(values) -> np.ndarray:
    scaled = np.asarray(values, dtype=np.float64) * SCALE
    rounded = np.rint(scaled)  # ties to even, matching encode()
    clipped = np.clip(rounded, RAW_MIN, RAW_MAX).astype(np.int64)
    return clipped & WORD_MASK


def decode(raw) -> float:
    return to_signed(raw) / SCALE


def decode_array(raw: np.ndarray) -> np.ndarray:
    return to_signed(raw) / SCALE


def fx_add(a, b):
    """16-bit wrapping add (two's complement), scalar or elementwise."""
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)) & WORD_MASK
    return (a + b) & WORD_MASK


def fx_sub(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return (np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)) & WORD_MASK
    return (a - b) & WORD_MASK


def fx_neg(a):
    if isinstance(a, np.ndarray):
        return (-np.asarray(a, dtype=np.int64)) & WORD_MASK
    return (-a) & WORD_MASK


def fx_mul(a, b):
    """Full product arithmetically shifted right by 12; low 16 bits kept.

    The shift truncates toward minus infinity, and any overflow of the
    shifted product wraps, exactly like the truncated hardware multiplier.
    """
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        p = to_signed(np.asarray(a)) * to_signed(np.asarray(b))
        return (p >> FRAC_BITS) & WORD_MASK
    p = to_signed(a) * to_signed(b)
    return (p >> FRAC_BITS) & WORD_MASK


def fx_div(a, b):
    """Reference division: (a << 12) / b truncated toward zero on magnitudes.

    Matches the non-restoring divider circuit bit for bit, including the
    wraparound convention for division by zero: the unsigned magnitude
    quotient comes out all-ones, is negated when the dividend is negative,
    and the result wraps to 16 bits.
    """
    sa, sb = to_signed(a), to_signed(b)
    neg = (sa < 0) != (sb < 0)
    ua, ub = abs(sa) << FRAC_BITS, abs(sb)
    if ub == 0:
        q = (1 << (WORD_BITS + FRAC_BITS)) - 1
    else:
        q = ua // ub
    if neg:
        q = -q
    return q & WORD_MASK


# ---------------------------------------------------------------------------
# Model description


LAYER_KINDS = ("FullyConnected", "Conv2D", "MaxPool", "MeanPool", "NonLinearity")


@dataclass
class LayerSpec:
    """One layer of a model: kind, dimensions, parameters, optional sparsity mask.

    ``weights`` (and ``bias``) hold raw Q3.12 patterns.  A mask entry of
    False means the weight is pruned and treated as exactly zero; the
    compiler emits no gates for it.

    dims per kind:
      FullyConnected: {"in": m, "out": n}
      Conv2D:         {"in_shape": [c,h,w], "out_channels": c2, "kernel": k, "stride": s}
      MaxPool/MeanPool: {"in_shape": [c,h,w], "kernel": k, "stride": s}
      NonLinearity:   {"size": n}  (or {"in_shape": [...]})
    """

    kind: str
    dims: dict
    activation: str | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.int64) & WORD_MASK
            expect = self._weight_shape()
            if expect is not None and tuple(self.weights.shape) != expect:
                raise ShapeMismatch(
                    f"{self.kind} weights shape {self.weights.shape}, expected {expect}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.int64) & WORD_MASK
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.weights is None or self.mask.shape != self.weights.shape:
                raise ShapeMismatch("mask shape must equal weights shape")

    def _weight_shape(self):
        if self.kind == "FullyConnected":
            return (self.dims["out"], self.dims["in"])
        if self.kind == "Conv2D":
            c = self.dims["in_shape"][0]
            k = self.dims["kernel"]
            return (self.dims["out_channels"], c, k, k)
        return None

    def out_shape(self) -> tuple:
        if self.kind == "FullyConnected":
            return (self.dims["out"],)
        if self.kind == "Conv2D":
            _, h, w = self.dims["in_shape"]
            k, s = self.dims["kernel"], self.dims["stride"]
            oh, ow = (h - k) // s + 1, (w - k) // s + 1
            return (self.dims["out_channels"], oh, ow)
        if self.kind in ("MaxPool", "MeanPool"):
            c, h, w = self.dims["in_shape"]
            k, s = self.dims["kernel"], self.dims["stride"]
            oh, ow = (h - k) // s + 1, (w - k) // s + 1
            return (c, oh, ow)
        if "size" in self.dims:
            return (self.dims["size"],)
        return tuple(self.dims["in_shape"])

    def in_shape(self) -> tuple:
        if self.kind == "FullyConnected":
            return (self.dims["in"],)
        if self.kind == "NonLinearity":
            return self.out_shape()
        return tuple(self.dims["in_shape"])

    def effective_weights(self) -> np.ndarray:
        """Weights with masked entries forced to zero."""
        w = self.weights
        if self.mask is not None:
            w = np.where(self.mask, w, 0)
        return w


@dataclass
class ModelDescriptor:
    name: str
    layers: list[LayerSpec]
    input_shape: tuple

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)

    def validate(self):
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            expect = layer.in_shape()
            if int(np.prod(shape)) != int(np.prod(expect)):
                raise ShapeMismatch(
                    f"layer {i} ({layer.kind}) expects input of {expect}, got {shape}")
            shape = layer.out_shape()
        return shape

    def output_size(self) -> int:
        return int(np.prod(self.validate()))

    def architecture_digest(self) -> str:
        """Hash of topology, activation variants and sparsity masks; never weights."""
        parts = []
        for layer in self.layers:
            entry = {"kind": layer.kind, "dims": layer.dims,
                     "activation": layer.activation,
                     "has_bias": layer.bias is not None}
            if layer.mask is not None:
                entry["mask"] = hashlib.sha256(np.packbits(layer.mask).tobytes()).hexdigest()
            parts.append(entry)
        blob = json.dumps({"input_shape": list(self.input_shape), "layers": parts},
                          sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Reference evaluation


def _im2col(plane: np.ndarray, k: int, s: int, oh: int, ow: int) -> np.ndarray:
    """Unfold k*k windows of a 2-D (or CHW) tensor into columns."""
    if plane.ndim == 2:
        plane = plane[np.newaxis]
    c = plane.shape[0]
    cols = np.empty((c * k * k, oh * ow), dtype=np.int64)
    idx = 0
    for ci in range(c):
        for ky in range(k):
            for kx in range(k):
                patch = plane[ci, ky:ky + s * oh:s, kx:kx + s * ow:s]
                cols[idx] = patch.reshape(-1)
                idx += 1
    return cols


def ref_layer_eval(layer: LayerSpec, z_in: np.ndarray) -> np.ndarray:
    """Evaluate one layer on raw Q3.12 patterns, bit-identical to the circuit.

    Sums wrap at 16 bits and every product goes through fx_mul, so this is
    the exact function the compiled netlist computes.
    """
    from . import activations  # deferred: activations needs fx_* from here

    z = np.asarray(z_in, dtype=np.int64) & WORD_MASK
    if int(np.prod(z.shape)) != int(np.prod(layer.in_shape())):
        raise ShapeMismatch(f"{layer.kind}: input shape {z.shape} vs {layer.in_shape()}")
    z = z.reshape(layer.in_shape())

    if layer.kind == "FullyConnected":
        # Wrapping accumulation is mod 2**16 and associative, so the dot
        # products vectorize: sum the unsigned product patterns in int64
        # (no overflow below ~2**47 terms) and mask once.
        w = layer.effective_weights()
        prods = fx_mul(w, z[np.newaxis, :])
        out = prods.sum(axis=1) & WORD_MASK
        if layer.bias is not None:
            out = fx_add(out, fx_mul(layer.bias, ONE))
        return out

    if layer.kind == "Conv2D":
        w = layer.effective_weights()
        c_in, _, _ = layer.dims["in_shape"]
        k, s = layer.dims["kernel"], layer.dims["stride"]
        c_out, oh, ow = layer.out_shape()
        cols = _im2col(z, k, s, oh, ow)              # (c_in*k*k, oh*ow)
        wf = w.reshape(c_out, -1)                    # (c_out, c_in*k*k)
        prods = fx_mul(wf[:, :, np.newaxis], cols[np.newaxis, :, :])
        out = (prods.sum(axis=1) & WORD_MASK).reshape(c_out, oh, ow)
        if layer.bias is not None:
            out = fx_add(out, fx_mul(layer.bias[:, np.newaxis, np.newaxis], ONE))
        return out

    if layer.kind in ("MaxPool", "MeanPool"):
        c, _, _ = layer.dims["in_shape"]
        k, s = layer.dims["kernel"], layer.dims["stride"]
        _, oh, ow = layer.out_shape()
        windows = np.stack([_im2col(z[ci], k, s, oh, ow) for ci in range(c)])
        if layer.kind == "MaxPool":
            return to_raw(to_signed(windows).max(axis=1)).reshape(c, oh, ow)
        sums = windows.sum(axis=1) & WORD_MASK
        n = k * k
        if n & (n - 1) == 0:
            out = (to_signed(sums) >> (n.bit_length() - 1)) & WORD_MASK
        else:
            div = encode(float(n))
            out = np.array([[fx_div(int(v), div) for v in row] for row in sums],
                           dtype=np.int64)
        return out.reshape(c, oh, ow)

    if layer.kind == "NonLinearity":
        fn = activations.reference(layer.activation)
        flat = z.ravel()
        return np.array([fn(int(v)) for v in flat], dtype=np.int64).reshape(z.shape)

    raise ValueError(f"unhandled layer kind {layer.kind}")


def argmax_label(scores: np.ndarray) -> int:
    """Index of the signed maximum; ties break to the lowest index."""
    signed = to_signed(np.asarray(scores, dtype=np.int64).ravel())
    best, best_i = int(signed[0]), 0
    for i in range(1, signed.size):
        if int(signed[i]) > best:
            best, best_i = int(signed[i]), i
    return best_i


def ref_network_eval(model: ModelDescriptor, x: np.ndarray) -> int:
    """Run every layer then return the argmax class index."""
    model.validate()
    z = np.asarray(x, dtype=np.int64) & WORD_MASK
    for layer in model.layers:
        z = ref_layer_eval(layer, z)
    return argmax_label(z)


def ref_network_scores(model: ModelDescriptor, x: np.ndarray) -> np.ndarray:
    model.validate()
    z = np.asarray(x, dtype=np.int64) & WORD_MASK
    for layer in model.layers:
        z = ref_layer_eval(layer, z)
    return z.ravel()


# ---------------------------------------------------------------------------
# Model file format (JSON)


def model_to_json(model: ModelDescriptor, include_weights: bool = True) -> dict:
    """Serialize a model; without weights the structural facts (which layers
    carry parameters and biases, and the public sparsity mask) still travel,
    so the data owner can compile the identical circuit."""
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind, "dims": layer.dims, "activation": layer.activation}
        if include_weights and layer.weights is not None:
            entry["weights"] = [int(v) for v in layer.weights.ravel()]
        elif layer.weights is not None:
            entry["has_weights"] = True
        if include_weights and layer.bias is not None:
            entry["bias"] = [int(v) for v in layer.bias.ravel()]
        elif layer.bias is not None:
            entry["has_bias"] = True
        if layer.mask is not None:
            entry["mask"] = [int(v) for v in layer.mask.ravel().astype(int)]
        layers.append(entry)
    return {"name": model.name, "layers": layers, "input_shape": list(model.input_shape)}


def model_from_json(doc: dict) -> ModelDescriptor:
    layers = []
    for entry in doc["layers"]:
        kind, dims = entry["kind"], entry["dims"]
        weights = bias = mask = None
        spec = LayerSpec(kind=kind, dims=dims, activation=entry.get("activation"))
        shape = spec._weight_shape()
        if entry.get("weights") is not None:
            weights = np.asarray(entry["weights"], dtype=np.int64)
            if shape is not None:
                weights = weights.reshape(shape)
        elif entry.get("has_weights") and shape is not None:
            weights = np.zeros(shape, dtype=np.int64)   # structure only
        if entry.get("bias") is not None:
            bias = np.asarray(entry["bias"], dtype=np.int64)
        elif entry.get("has_bias") and shape is not None:
            bias = np.zeros(shape[0], dtype=np.int64)
        if entry.get("mask") is not None:
            mask = np.asarray(entry["mask"], dtype=np.int64).astype(bool)
            if weights is not None:
                mask = mask.reshape(weights.shape)
        layers.append(LayerSpec(kind=kind, dims=dims, activation=entry.get("activation"),
                                weights=weights, bias=bias, mask=mask))
    return ModelDescriptor(name=doc.get("name", "model"),
                           layers=layers,
                           input_shape=tuple(doc["input_shape"]))


def load_model(path) -> ModelDescriptor:
    with open(path) as fh:
        return model_from_json(json.load(fh))


def save_model(model: ModelDescriptor, path, include_weights: bool = True):
    with open(path, "w") as fh:
        json.dump(model_to_json(model, include_weights), fh)
