"""Lowering a model description into a netlist plus input/output schedules.

Two modes:

* ``unrolled`` - one combinational netlist; every multiply-accumulate,
  pooling window and activation instance gets its own gates.  Data bits are
  garbler inputs, weight bits are evaluator inputs, and a masked weight
  produces no gates at all.

* ``folded`` - a compact sequential netlist for chains of fully-connected
  layers: per layer one multiplier, one adder and a ring of accumulator
  registers that rotates every cycle, so a single datapath serves every
  output neuron without any steering logic.  Weights stream in on a fixed
  set of evaluator wires, one weight per cycle; idle layers see constant-
  zero weights, which keeps their rings unchanged.  Successive ring sizes
  are chosen coprime so that walking cycles enumerates every (input slot,
  output slot) pair exactly once.

The compiled object also records which input-schedule line carries which
semantic bit, so the protocol layer can stage labels without re-deriving
the layout.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import gclib
from .circuit import (Builder, Netlist, PARTY_CONST0, PARTY_CONST1,
                      PARTY_EVALUATOR, PARTY_GARBLER)
from .fixedpt import (LayerSpec, ModelDescriptor, ShapeMismatch, WORD_BITS,
                      ONE)


class UnsupportedLayer(ValueError):
    pass


@dataclass
class CompiledCircuit:
    """Netlist plus the semantic meaning of every scheduled input line."""

    netlist: Netlist
    model_digest: str
    mode: str
    outsourced: bool
    emit_argmax: bool
    input_size: int
    n_outputs: int
    # line index -> data-bit index (elem*16 + bit), -1 for non-data lines
    garbler_line_bit: np.ndarray
    # evaluator lines in canonical order (sorted by cycle, then position),
    # each mapped to a global weight-bit index or, when negative, to
    # -(data_bit+1) for an outsourced input share
    evaluator_line_source: np.ndarray

    @property
    def n_data_bits(self) -> int:
        return self.input_size * WORD_BITS

    def garbler_input_map(self) -> dict[int, list[int]]:
        """data bit -> input-schedule line indices (a bit may repeat)."""
        out: dict[int, list[int]] = {}
        for line, bit in enumerate(self.garbler_line_bit):
            if bit >= 0:
                out.setdefault(int(bit), []).append(line)
        return out

    def evaluator_input_map(self) -> dict[int, int]:
        """weight bit -> canonical evaluator-line rank (exactly one each)."""
        out = {}
        for rank, src in enumerate(self.evaluator_line_source):
            if src >= 0:
                out[int(src)] = rank
        return out

    def evaluator_choice_bits(self, model: ModelDescriptor,
                              shared_input_bits: np.ndarray | None = None) -> np.ndarray:
        """Selection bits for the upfront transfer, in canonical line order."""
        wbits = weight_bit_values(model)
        out = np.zeros(len(self.evaluator_line_source), dtype=np.uint8)
        for rank, src in enumerate(self.evaluator_line_source):
            if src >= 0:
                out[rank] = wbits[src]
            else:
                if shared_input_bits is None:
                    raise ValueError("outsourced circuit needs input share bits")
                out[rank] = shared_input_bits[-int(src) - 1]
        return out

    def data_bit_values(self, x_raw: np.ndarray) -> np.ndarray:
        x = np.asarray(x_raw, dtype=np.int64).ravel()
        if len(x) != self.input_size:
            raise ShapeMismatch(f"expected {self.input_size} inputs, got {len(x)}")
        bits = (x[:, None] >> np.arange(WORD_BITS)) & 1
        return bits.reshape(-1).astype(np.uint8)


def model_digest(model: ModelDescriptor, mode: str, outsourced: bool,
                 emit_argmax: bool) -> str:
    blob = f"{model.architecture_digest()}|{mode}|{int(outsourced)}|{int(emit_argmax)}"
    return hashlib.sha256(blob.encode()).hexdigest()


def weight_bit_values(model: ModelDescriptor) -> np.ndarray:
    """All private parameter bits in the canonical order: layers in model
    order, kept weights row-major, then biases; 16 bits each, LSB first."""
    chunks = []
    for layer in model.layers:
        if layer.weights is None:
            continue
        w = layer.weights.reshape(-1)
        keep = (layer.mask.reshape(-1) if layer.mask is not None
                else np.ones(len(w), dtype=bool))
        vals = w[keep]
        if layer.bias is not None:
            vals = np.concatenate([vals, layer.bias.reshape(-1)])
        bits = (vals[:, None] >> np.arange(WORD_BITS)) & 1
        chunks.append(bits.reshape(-1))
    if not chunks:
        return np.zeros(0, dtype=np.uint8)
    return np.concatenate(chunks).astype(np.uint8)


def _weight_bit_index_maps(model: ModelDescriptor):
    """Per layer: flat-kept-weight-index -> global bit base, plus bias bases."""
    bases, bias_bases, cursor = [], [], 0
    for layer in model.layers:
        if layer.weights is None:
            bases.append(None)
            bias_bases.append(None)
            continue
        w = layer.weights.reshape(-1)
        keep = (layer.mask.reshape(-1) if layer.mask is not None
                else np.ones(len(w), dtype=bool))
        base = np.full(len(w), -1, dtype=np.int64)
        base[keep] = cursor + np.arange(int(keep.sum())) * WORD_BITS
        cursor += int(keep.sum()) * WORD_BITS
        bases.append(base)
        if layer.bias is not None:
            bias_bases.append(cursor + np.arange(len(layer.bias)) * WORD_BITS)
            cursor += len(layer.bias) * WORD_BITS
        else:
            bias_bases.append(None)
    return bases, bias_bases


def apply_sparsity(model: ModelDescriptor, masks: dict[int, np.ndarray]) -> ModelDescriptor:
    """Attach sparsity masks (layer index -> boolean keep-mask); masked
    weights are zeroed, excluded from compilation, and folded into the
    architecture digest since the sparsity map is public."""
    layers = []
    for idx, layer in enumerate(model.layers):
        if idx in masks:
            mask = np.asarray(masks[idx], dtype=bool)
            if layer.weights is None or mask.shape != layer.weights.shape:
                raise ShapeMismatch(f"mask shape mismatch on layer {idx}")
            layers.append(LayerSpec(layer.kind, layer.dims, layer.activation,
                                    np.where(mask, layer.weights, 0), layer.bias,
                                    mask))
        else:
            layers.append(layer)
    return ModelDescriptor(model.name, layers, model.input_shape)


# ---------------------------------------------------------------------------
# Unrolled mode


def _compile_unrolled(model: ModelDescriptor, emit_argmax: bool,
                      outsourced: bool) -> CompiledCircuit:
    b = Builder()
    n_in = int(np.prod(model.input_shape))
    garbler_bits: list[tuple[int, int]] = []   # (line index, data bit)
    e_lines: list[tuple[int, int, int]] = []   # (line index, cycle, source)

    def new_e_word(global_base: int, source_offset: int = 0) -> list[int]:
        wires = []
        for k in range(WORD_BITS):
            line = len(b.inputs)
            wires.append(b.add_input(PARTY_EVALUATOR, 0))
            e_lines.append((line, 0, global_base + k + source_offset))
        return wires

    data_words = []
    for elem in range(n_in):
        if outsourced:
            s_wires, xw = [], []
            for k in range(WORD_BITS):
                line = len(b.inputs)
                s_wires.append(b.add_input(PARTY_GARBLER, 0))
                garbler_bits.append((line, elem * WORD_BITS + k))
            for k in range(WORD_BITS):
                line = len(b.inputs)
                w = b.add_input(PARTY_EVALUATOR, 0)
                e_lines.append((line, 0, -(elem * WORD_BITS + k) - 1))
                xw.append(w)
            data_words.append([b.xor(s, x) for s, x in zip(s_wires, xw)])
        else:
            wires = []
            for k in range(WORD_BITS):
                line = len(b.inputs)
                wires.append(b.add_input(PARTY_GARBLER, 0))
                garbler_bits.append((line, elem * WORD_BITS + k))
            data_words.append(wires)

    wbases, bbases = _weight_bit_index_maps(model)
    mult = gclib.build_mult_truncated(WORD_BITS, 12)
    mac = gclib.build_mac(WORD_BITS, 12)

    def mac_chain(acc, x_word, w_word):
        if acc is None:
            return b.stamp(mult, {"x": x_word, "y": w_word})["prod"]
        return b.stamp(mac, {"x": x_word, "y": w_word, "acc": acc})["out"]

    z = data_words
    shape = model.input_shape
    for li, layer in enumerate(model.layers):
        if int(np.prod(shape)) != int(np.prod(layer.in_shape())):
            raise ShapeMismatch(f"layer {li}: input {shape} vs {layer.in_shape()}")
        shape = layer.out_shape()

        if layer.kind == "FullyConnected":
            m, n = layer.dims["in"], layer.dims["out"]
            keep = (layer.mask if layer.mask is not None
                    else np.ones((n, m), dtype=bool))
            base = wbases[li]
            w_words = {}
            for j in range(n):
                for i in range(m):
                    if keep[j, i]:
                        w_words[(j, i)] = new_e_word(int(base[j * m + i]))
            bias_words = ([new_e_word(int(bbases[li][j])) for j in range(n)]
                          if layer.bias is not None else None)
            one_word = b.const_vec(ONE, WORD_BITS)
            out = []
            for j in range(n):
                acc = None
                for i in range(m):
                    if keep[j, i]:
                        acc = mac_chain(acc, z[i], w_words[(j, i)])
                if bias_words is not None:
                    acc = mac_chain(acc, one_word, bias_words[j])
                out.append(acc if acc is not None else b.const_vec(0, WORD_BITS))
            z = out

        elif layer.kind == "Conv2D":
            c_in, h, w_dim = layer.dims["in_shape"]
            k, s = layer.dims["kernel"], layer.dims["stride"]
            c_out, oh, ow = layer.out_shape()
            keep = (layer.mask if layer.mask is not None
                    else np.ones((c_out, c_in, k, k), dtype=bool))
            base = wbases[li].reshape(c_out, c_in, k, k)
            plane = np.arange(c_in * h * w_dim).reshape(c_in, h, w_dim)
            w_words = {}
            for idx in np.ndindex(c_out, c_in, k, k):
                if keep[idx]:
                    w_words[idx] = new_e_word(int(base[idx]))
            bias_words = ([new_e_word(int(bbases[li][co])) for co in range(c_out)]
                          if layer.bias is not None else None)
            one_word = b.const_vec(ONE, WORD_BITS)
            out = []
            for co in range(c_out):
                for oy in range(oh):
                    for ox in range(ow):
                        acc = None
                        for ci in range(c_in):
                            for ky in range(k):
                                for kx in range(k):
                                    if keep[co, ci, ky, kx]:
                                        src = int(plane[ci, oy * s + ky, ox * s + kx])
                                        acc = mac_chain(acc, z[src],
                                                        w_words[(co, ci, ky, kx)])
                        if bias_words is not None:
                            acc = mac_chain(acc, one_word, bias_words[co])
                        out.append(acc if acc is not None
                                   else b.const_vec(0, WORD_BITS))
            z = out

        elif layer.kind in ("MaxPool", "MeanPool"):
            c, h, w_dim = layer.dims["in_shape"]
            k, s = layer.dims["kernel"], layer.dims["stride"]
            _, oh, ow = layer.out_shape()
            plane = np.arange(c * h * w_dim).reshape(c, h, w_dim)
            out = []
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        window = [z[int(plane[ci, oy * s + ky, ox * s + kx])]
                                  for ky in range(k) for kx in range(k)]
                        if layer.kind == "MaxPool":
                            acc = window[0]
                            for cand in window[1:]:
                                gt = gclib.emit_lt_signed(b, acc, cand)
                                acc = gclib.emit_mux(b, gt, cand, acc)
                        else:
                            acc = window[0]
                            for cand in window[1:]:
                                acc = gclib.emit_add(b, acc, cand)
                            nsq = k * k
                            if nsq & (nsq - 1) == 0:
                                acc = gclib.asr(b, acc, nsq.bit_length() - 1)
                            else:
                                div = gclib.build_div(WORD_BITS, 12)
                                from .fixedpt import encode
                                acc = b.stamp(div, {
                                    "x": acc,
                                    "y": b.const_vec(encode(float(nsq)), WORD_BITS),
                                })["quot"]
                        out.append(acc)
            z = out

        elif layer.kind == "NonLinearity":
            tmpl = gclib.build_activation(layer.activation)
            z = [b.stamp(tmpl, {"x": word})["y"] for word in z]

        else:
            raise UnsupportedLayer(layer.kind)

    if emit_argmax:
        idx = gclib.emit_argmax(b, z)
        for w in idx:
            b.add_output(w, 0)
        n_out = len(idx)
    else:
        for word in z:
            for w in word:
                b.add_output(w, 0)
        n_out = len(z) * WORD_BITS

    net = b.finish(1)
    return _assemble(model, net, "unrolled", outsourced, emit_argmax, n_in,
                     n_out, garbler_bits, e_lines)


# ---------------------------------------------------------------------------
# Folded mode


def _fc_chain(model: ModelDescriptor):
    """Group layers into (model index, fully-connected, following activation)
    triples; a trailing strictly monotone activation may be skipped under
    argmax."""
    pairs = []
    i = 0
    layers = model.layers
    while i < len(layers):
        layer = layers[i]
        if layer.kind != "FullyConnected":
            raise UnsupportedLayer(
                f"folded mode supports fully-connected chains, got {layer.kind}")
        idx = i
        tag = None
        if i + 1 < len(layers) and layers[i + 1].kind == "NonLinearity":
            tag = layers[i + 1].activation
            i += 1
        pairs.append((idx, layer, tag))
        i += 1
    return pairs


def _coprime_at_least(n: int, other: int) -> int:
    k = n
    while math.gcd(k, other) != 1:
        k += 1
    return k


def _compile_folded(model: ModelDescriptor, emit_argmax: bool,
                    outsourced: bool) -> CompiledCircuit:
    pairs = _fc_chain(model)
    if pairs[-1][2] is not None:
        tag = pairs[-1][2]
        if emit_argmax and (tag.startswith("tanh") or tag.startswith("sigmoid")):
            # strictly monotone output activation cannot change the winner
            pairs[-1] = (pairs[-1][0], pairs[-1][1], None)
        else:
            raise UnsupportedLayer(
                "folded mode cannot fold a trailing activation without argmax")

    b = Builder()
    n_in = int(np.prod(model.input_shape))
    wbases, bbases = _weight_bit_index_maps(model)

    # ring geometry and cycle bands
    ring_n, band_start, band_len = [], [], []
    cursor = 0
    prev = None
    for l, (_mi, fc, _tag) in enumerate(pairs):
        n = fc.dims["out"]
        ring = n if prev is None else _coprime_at_least(n, prev)
        ring_n.append(ring)
        m_steps = fc.dims["in"] + (1 if fc.bias is not None and l == 0 else 0)
        if l == 0:
            length = m_steps * ring
        else:
            length = prev * ring + (ring if fc.bias is not None else 0)
        band_start.append(cursor)
        band_len.append(length)
        cursor += length
        prev = ring
    # without the label head, one settle cycle lets the last accumulation
    # land in its ring register before the outputs are read
    argmax_len = ring_n[-1] if emit_argmax else 1
    total_cycles = cursor + argmax_len

    # rings: registers rotating one slot per cycle
    rings = []
    for ring in ring_n:
        regs = [[b.add_register(0) for _ in range(WORD_BITS)] for _ in range(ring)]
        for k in range(ring - 1):
            for bit in range(WORD_BITS):
                b.bind_register(regs[k][bit], regs[k + 1][bit])
        rings.append(regs)

    # per-layer datapaths
    garbler_bits: list[tuple[int, int]] = []
    e_lines: list[tuple[int, int, int]] = []

    def deferred_word(n_bits=WORD_BITS):
        return [b.new_wire() for _ in range(n_bits)]

    xw = deferred_word()                      # layer-0 data word
    xs_w = deferred_word() if outsourced else None
    layer_w = [deferred_word() for _ in pairs]
    flags = [deferred_word(1)[0] if (l > 0 and fc.bias is not None) else None
             for l, (_mi, fc, _t) in enumerate(pairs)]

    mult = gclib.build_mult_truncated(WORD_BITS, 12)
    x_first = ([b.xor(s, x) for s, x in zip(xw, xs_w)] if outsourced else xw)
    for l, (_mi, fc, _tag) in enumerate(pairs):
        if l == 0:
            x_in = x_first
        else:
            head = [rings[l - 1][0][bit] for bit in range(WORD_BITS)]
            prev_tag = pairs[l - 1][2]
            x_in = (b.stamp(gclib.build_activation(prev_tag), {"x": head})["y"]
                    if prev_tag else head)
            if flags[l] is not None:
                x_in = gclib.emit_mux(b, flags[l], b.const_vec(ONE, WORD_BITS), x_in)
        prod = b.stamp(mult, {"x": x_in, "y": layer_w[l]})["prod"]
        head_l = [rings[l][0][bit] for bit in range(WORD_BITS)]
        total, _ = gclib.emit_add(b, head_l, prod, carry_out=True)
        for bit in range(WORD_BITS):
            b.bind_register(rings[l][-1][bit], total[bit])

    # the label head: running maximum with its index, gated by a per-cycle
    # in-band flag so junk slots never win
    if emit_argmax:
        n_classes = pairs[-1][1].dims["out"]
        idx_bits = max(1, (n_classes - 1).bit_length())
        neg_inf = 1 << (WORD_BITS - 1)
        best_q = [b.add_register((neg_inf >> k) & 1) for k in range(WORD_BITS)]
        idx_q = [b.add_register(0) for _ in range(idx_bits)]
        ib = deferred_word(1)[0]
        idxc = deferred_word(idx_bits)
        ch = [rings[-1][0][bit] for bit in range(WORD_BITS)]
        gt = b.and_(gclib.emit_lt_signed(b, best_q, ch), ib)
        for w_new, w_q in zip(gclib.emit_mux(b, gt, ch, best_q), best_q):
            b.bind_register(w_q, w_new)
        idx_d = gclib.emit_mux(b, gt, idxc, idx_q)
        for w_new, w_q in zip(idx_d, idx_q):
            b.bind_register(w_q, w_new)

    # ------------------------------------------------------------------
    # cycle-by-cycle input schedule

    def sched(wire: int, party: int, cycle: int) -> int:
        line = len(b.inputs)
        b.inputs.append((wire, party, cycle))
        return line

    def sched_const_word(wires, value: int, cycle: int):
        for k, w in enumerate(wires):
            sched(w, PARTY_CONST1 if (value >> k) & 1 else PARTY_CONST0, cycle)

    def sched_e_word(wires, global_base: int, cycle: int, share_bit: int = -1):
        for k, w in enumerate(wires):
            line = sched(w, PARTY_EVALUATOR, cycle)
            src = global_base + k if global_base >= 0 else -(share_bit + k) - 1
            e_lines.append((line, cycle, src))

    for t in range(total_cycles):
        # layer-0 data word
        l0_fc = pairs[0][1]
        in_band0 = t < band_len[0]
        if in_band0:
            i = t // ring_n[0]
            if i < l0_fc.dims["in"]:
                for k, w in enumerate(xw):
                    line = sched(w, PARTY_GARBLER, t)
                    garbler_bits.append((line, i * WORD_BITS + k))
                if outsourced:
                    sched_e_word(xs_w, -1, t, share_bit=i * WORD_BITS)
            else:  # bias step: the constant-one element
                sched_const_word(xw, ONE, t)
                if outsourced:
                    sched_const_word(xs_w, 0, t)
        else:
            sched_const_word(xw, 0, t)
            if outsourced:
                sched_const_word(xs_w, 0, t)

        # per-layer weight words (constant zero whenever the layer is idle)
        for l, (mi, fc, _tag) in enumerate(pairs):
            m, n = fc.dims["in"], fc.dims["out"]
            keep = (fc.mask if fc.mask is not None else np.ones((n, m), dtype=bool))
            wires = layer_w[l]
            s_local = t - band_start[l]
            scheduled = False
            if 0 <= s_local < band_len[l]:
                j = t % ring_n[l]
                if l == 0:
                    i = s_local // ring_n[0]
                else:
                    main = prev_len = band_len[l] - (ring_n[l] if fc.bias is not None else 0)
                    if s_local < main:
                        i = t % ring_n[l - 1]
                    else:
                        i = m  # bias sub-band
                if j < n and i < m and keep[j, i]:
                    sched_e_word(wires, int(wbases[mi][j * m + i]), t)
                    scheduled = True
                elif j < n and i == m and fc.bias is not None:
                    sched_e_word(wires, int(bbases[mi][j]), t)
                    scheduled = True
            if not scheduled:
                sched_const_word(wires, 0, t)
            if flags[l] is not None:
                in_bias = (band_start[l] <= t < band_start[l] + band_len[l]
                           and t - band_start[l] >= band_len[l] - ring_n[l])
                sched(flags[l], PARTY_CONST1 if in_bias else PARTY_CONST0, t)

        if emit_argmax:
            j = t % ring_n[-1]
            active = t >= cursor and j < pairs[-1][1].dims["out"]
            sched(ib, PARTY_CONST1 if active else PARTY_CONST0, t)
            sched_const_word(idxc, j if active else 0, t)

    # outputs
    if emit_argmax:
        for w in idx_d:
            b.add_output(w, total_cycles - 1)
        n_out = idx_bits
    else:
        n_last = pairs[-1][1].dims["out"]
        ring = ring_n[-1]
        final = total_cycles - 1
        for j in range(n_last):
            pos = (j - final) % ring
            for bit in range(WORD_BITS):
                b.add_output(rings[-1][pos][bit], final)
        n_out = n_last * WORD_BITS

    net = b.finish(total_cycles)
    return _assemble(model, net, "folded", outsourced, emit_argmax, n_in,
                     n_out, garbler_bits, e_lines)


# ---------------------------------------------------------------------------


def _assemble(model, net: Netlist, mode, outsourced, emit_argmax, n_in, n_out,
              garbler_bits, e_lines) -> CompiledCircuit:
    net.validate()
    line_bit = np.full(len(net.inputs), -1, dtype=np.int64)
    for line, bit in garbler_bits:
        line_bit[line] = bit
    # canonical evaluator order: by (cycle, line position), matching the
    # garbling layer's upfront label-pair stream
    e_lines_sorted = sorted(e_lines, key=lambda rec: (rec[1], rec[0]))
    e_source = np.array([src for _line, _cyc, src in e_lines_sorted], dtype=np.int64)
    n_weight_lines = int((e_source >= 0).sum())
    expect = len(weight_bit_values(model))
    if n_weight_lines != expect:
        raise AssertionError(
            f"evaluator lines carry {n_weight_lines} weight bits, model has {expect}")
    return CompiledCircuit(
        netlist=net,
        model_digest=model_digest(model, mode, outsourced, emit_argmax),
        mode=mode,
        outsourced=outsourced,
        emit_argmax=emit_argmax,
        input_size=n_in,
        n_outputs=n_out,
        garbler_line_bit=line_bit,
        evaluator_line_source=e_source,
    )


def compile_model(model: ModelDescriptor, mode: str = "unrolled",
                  emit_argmax: bool = True, outsourced: bool = False) -> CompiledCircuit:
    model.validate()
    for layer in model.layers:
        if layer.kind == "NonLinearity":
            from .activations import TAGS
            if layer.activation not in TAGS:
                raise UnsupportedLayer(f"activation {layer.activation!r}")
    if mode == "unrolled":
        return _compile_unrolled(model, emit_argmax, outsourced)
    if mode == "folded":
        return _compile_folded(model, emit_argmax, outsourced)
    raise ValueError(f"unknown mode {mode!r}")


def simulate_compiled(compiled: CompiledCircuit, model: ModelDescriptor,
                      x_raw: np.ndarray, share_bits: np.ndarray | None = None):
    """Plaintext bridge oracle: run the netlist on concrete bits and return
    either the label or the raw output words, mirroring what the garbled
    execution computes."""
    net = compiled.netlist
    lines = np.zeros(len(net.inputs), dtype=np.uint8)
    data_bits = compiled.data_bit_values(x_raw)
    if compiled.outsourced:
        if share_bits is None:
            share_bits = np.zeros_like(data_bits)
        masked = data_bits ^ share_bits
        for line, bit in enumerate(compiled.garbler_line_bit):
            if bit >= 0:
                lines[line] = share_bits[bit]
    else:
        for line, bit in enumerate(compiled.garbler_line_bit):
            if bit >= 0:
                lines[line] = data_bits[bit]
    choice = compiled.evaluator_choice_bits(
        model, masked if compiled.outsourced else None)
    ins = net.inputs
    ev = np.nonzero(ins[:, 1] == PARTY_EVALUATOR)[0]
    ev = ev[np.argsort(ins[ev, 2], kind="stable")]
    lines[ev] = choice
    out_bits = net.simulate(lines)
    if compiled.emit_argmax:
        return int(sum(int(v) << k for k, v in enumerate(out_bits)))
    words = out_bits.reshape(-1, WORD_BITS)
    return (words * (1 << np.arange(WORD_BITS))).sum(axis=1).astype(np.int64)
