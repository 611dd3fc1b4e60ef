"""Garbling scheme: free-XOR labels, half-gates AND, fixed-key hashing.

Labels are 128-bit strings; the label pair of every wire differs by the
session's global offset R, whose low bit is forced to 1 so a label's low
bit doubles as its table-row colour.

XOR/XNOR/NOT/BUF move labels without any ciphertext.  AND costs exactly two
ciphertexts via the half-gates construction with the first garbler-half row
reduced to zero; OR garbles as an AND over complement-shifted labels, so it
also costs two ciphertexts.  Gate hashing is H(L, t) = pi(2L ^ t) ^ 2L with
pi a block cipher under a fixed public key and tweak t = gate id (64 bits)
|| cycle (32) || half index (32).

Sequential circuits garble cycle by cycle: a register's d-wire labels at
cycle t become its q-wire labels at cycle t+1, and fresh init labels for
the register's constant start value travel with cycle 0.

Two interchangeable execution paths produce identical bytes: a scalar
big-int walk, fastest for the deep narrow cores of folded circuits, and a
vectorized walk over topological levels for wide combinational netlists
and batched evaluation.
"""

from __future__ import annotations

import hashlib

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .circuit import (AND, BUF, NOT, OR, PARTY_CONST0, PARTY_CONST1,
                      PARTY_EVALUATOR, PARTY_GARBLER, XNOR, XOR, Netlist)

CIPHER_ID = "aes128-fixed-key-2l-tweak-v1"

_FIXED_KEY = hashlib.sha256(b"gcinfer fixed garbling key v1").digest()[:16]
_ONE = np.uint64(1)
_S63 = np.uint64(63)
_M128 = (1 << 128) - 1

TABLE_BYTES = 32  # two 128-bit ciphertexts per AND/OR gate

# wide, shallow netlists amortize numpy per-level overhead; deep narrow
# ones are faster as a scalar walk
_VECTOR_MIN_GATES_PER_LEVEL = 24


class InvalidLabel(ValueError):
    """Received label matches neither element of the output pair."""


class MalformedTables(ValueError):
    """Table stream length does not match the netlist."""


def _aes(key: bytes):
    return Cipher(algorithms.AES(key), modes.ECB()).encryptor()


def _double_vec(labels: np.ndarray) -> np.ndarray:
    hi, lo = labels[..., 0], labels[..., 1]
    return np.stack([(hi << _ONE) | (lo >> _S63), lo << _ONE], axis=-1)


def _to_blocks(labels: np.ndarray) -> bytes:
    return np.ascontiguousarray(labels, dtype=np.uint64).astype(">u8").tobytes()


def _from_blocks(buf: bytes) -> np.ndarray:
    return np.frombuffer(buf, dtype=">u8").astype(np.uint64).reshape(-1, 2)


def _ints_from_pairs(pairs: np.ndarray) -> list[int]:
    flat = pairs.reshape(-1, 2)
    return [(int(hi) << 64) | int(lo) for hi, lo in flat]


def _pairs_from_ints(vals) -> np.ndarray:
    arr = np.empty((len(vals), 2), dtype=np.uint64)
    for i, v in enumerate(vals):
        arr[i, 0] = (v >> 64) & 0xFFFFFFFFFFFFFFFF
        arr[i, 1] = v & 0xFFFFFFFFFFFFFFFF
    return arr


class _Hasher:
    """Vectorized H(L, t) = pi(2L ^ t) ^ 2L under the fixed public key."""

    def __init__(self):
        self._enc = _aes(_FIXED_KEY)

    def __call__(self, labels: np.ndarray, tweaks: np.ndarray) -> np.ndarray:
        flat = labels.reshape(-1, 2)
        twk = np.broadcast_to(tweaks.reshape(-1, 2), flat.shape)
        dl = _double_vec(flat)
        ct = _from_blocks(self._enc.update(_to_blocks(dl ^ twk)))
        return (ct ^ dl).reshape(labels.shape)


class _Schedule:
    """Per-netlist precomputation shared by garbler and evaluator."""

    def __init__(self, net: Netlist):
        self.net = net
        kinds = net.kinds
        table_rank = np.cumsum(np.isin(kinds, (AND, OR))) - 1
        self.n_tables = int(table_rank[-1] + 1) if len(kinds) else 0

        # vector path: gates grouped by level and split by family
        self.levels = []
        for idx in net.levels():
            idx = idx[np.argsort(idx)]
            k = kinds[idx]
            groups = {}
            for kind in (XOR, XNOR, NOT, BUF):
                sel = idx[k == kind]
                groups[kind] = (net.in0[sel], net.in1[sel], net.outs[sel])
            tab = idx[np.isin(k, (AND, OR))]
            tweak_hi = tab.astype(np.uint64)
            self.levels.append((groups,
                                (tab, (kinds[tab] == OR), net.in0[tab],
                                 net.in1[tab], net.outs[tab], table_rank[tab],
                                 tweak_hi)))
        self.mean_width = (net.n_gates / max(1, len(self.levels)))

        ins = net.inputs
        self.lines_by_cycle = [np.nonzero(ins[:, 2] == t)[0] for t in range(net.cycles)]
        self.outs_by_cycle = [np.nonzero(net.outputs[:, 1] == t)[0]
                              for t in range(net.cycles)]
        self.garbler_side = np.isin(ins[:, 1], (PARTY_GARBLER, PARTY_CONST0,
                                                PARTY_CONST1))
        ev = np.nonzero(ins[:, 1] == PARTY_EVALUATOR)[0]
        self.evaluator_lines = ev[np.argsort(ins[ev, 2], kind="stable")]
        self._scalar = None

    def scalar_ops(self):
        """(kind, in0, in1, out, rank, tweak_hi) python lists in gate order."""
        if self._scalar is None:
            net = self.net
            rank = (np.cumsum(np.isin(net.kinds, (AND, OR))) - 1).tolist()
            self._scalar = (net.kinds.tolist(), net.in0.tolist(),
                            net.in1.tolist(), net.outs.tolist(), rank)
        return self._scalar


def _schedule(net: Netlist) -> _Schedule:
    sched = getattr(net, "_garble_schedule", None)
    if sched is None:
        sched = _Schedule(net)
        net._garble_schedule = sched
    return sched


class Garbler:
    """Produces tables and labels cycle by cycle, deterministically from a
    session seed."""

    def __init__(self, net: Netlist, seed: bytes):
        self.sched = _schedule(net)
        self.net = net
        self._prf = _aes(hashlib.sha256(b"lbl" + seed).digest()[:16])
        self._hash = _Hasher()
        self._enc = _aes(_FIXED_KEY)
        r = self._prf_many("r", np.array([0]))
        self.offset = r[0]
        self.offset[1] |= _ONE
        self._r_int = (int(self.offset[0]) << 64) | int(self.offset[1])
        self._vector = self.sched.mean_width >= _VECTOR_MIN_GATES_PER_LEVEL
        if self._vector:
            self.labels0 = np.zeros((net.n_wires, 2), dtype=np.uint64)
        else:
            self.labels0 = [0] * net.n_wires
        self._carried = None
        self.output_pairs = np.zeros((len(net.outputs), 2, 2), dtype=np.uint64)
        self._next_cycle = 0

    def _prf_many(self, tag: str, ids: np.ndarray) -> np.ndarray:
        if not len(ids):
            return np.zeros((0, 2), dtype=np.uint64)
        t = tag.encode()
        buf = b"".join(t + int(i).to_bytes(15, "big") for i in ids)
        return _from_blocks(self._prf.update(buf))

    def _line_label0(self, line_indices: np.ndarray) -> np.ndarray:
        ins = self.net.inputs
        key = ins[line_indices, 0] * self.net.cycles + ins[line_indices, 2]
        return self._prf_many("i", key)

    def input_label_pairs(self, line_indices: np.ndarray) -> np.ndarray:
        """label0/label1 pairs for input schedule lines (the transfer's
        sender messages); independent of gate processing, so available
        before cycle 0."""
        l0 = self._line_label0(np.asarray(line_indices))
        return np.stack([l0, l0 ^ self.offset], axis=1)

    def evaluator_label_pairs(self) -> np.ndarray:
        """All weight-side label pairs in canonical line order, for the
        upfront transfer."""
        return self.input_label_pairs(self.sched.evaluator_lines)

    def register_init_labels(self) -> np.ndarray:
        """Active labels for the registers' start values, sent with cycle 0."""
        n = len(self.net.registers)
        l0 = self._prf_many("q", np.arange(n))
        init = self.net.registers[:, 2].astype(bool)
        l0[init] ^= self.offset
        return l0

    def garbler_active_labels(self, cycle: int, bit_of_line) -> tuple[np.ndarray, np.ndarray]:
        """Active labels for this cycle's garbler-side lines (data bits and
        constants); constants resolve themselves."""
        net, sched = self.net, self.sched
        lines = sched.lines_by_cycle[cycle]
        lines = lines[sched.garbler_side[lines]]
        l0 = self._line_label0(lines)
        ins = net.inputs
        bits = np.empty(len(lines), dtype=bool)
        for k, li in enumerate(lines):
            party = ins[li, 1]
            if party == PARTY_CONST0:
                bits[k] = False
            elif party == PARTY_CONST1:
                bits[k] = True
            else:
                bits[k] = bool(bit_of_line(int(li)))
        l0[bits] ^= self.offset
        return lines, l0

    # -- cycle processing ------------------------------------------------

    def garble_cycle(self, cycle: int) -> bytes:
        if cycle != self._next_cycle:
            raise ValueError(f"cycles must be garbled in order (expected "
                             f"{self._next_cycle}, got {cycle})")
        self._next_cycle += 1
        return (self._cycle_vector(cycle) if self._vector
                else self._cycle_scalar(cycle))

    def _stage_inputs(self, cycle):
        net, sched = self.net, self.sched
        lines = sched.lines_by_cycle[cycle]
        fresh = self._line_label0(lines)
        wires = net.inputs[lines, 0]
        if len(net.registers):
            if cycle == 0:
                qs = net.registers[:, 1]
                qlab = self._prf_many("q", np.arange(len(qs)))
            else:
                qs = net.registers[:, 1]
                qlab = self._carried
        else:
            qs = qlab = None
        return wires, fresh, qs, qlab

    def _finish_cycle(self, cycle, get_label0):
        net = self.net
        sel = self.sched.outs_by_cycle[cycle]
        for s in sel:
            l0 = get_label0(int(net.outputs[s, 0]))
            self.output_pairs[s, 0] = l0
            self.output_pairs[s, 1] = l0 ^ self.offset

    def _cycle_vector(self, cycle: int) -> bytes:
        net, sched = self.net, self.sched
        labels0, R = self.labels0, self.offset
        wires, fresh, qs, qlab = self._stage_inputs(cycle)
        labels0[wires] = fresh
        if qs is not None:
            labels0[qs] = qlab

        tables = np.zeros((sched.n_tables, 2, 2), dtype=np.uint64)
        for groups, tabbed in sched.levels:
            a, _b, o = groups[BUF]
            if len(o):
                labels0[o] = labels0[a]
            a, _b, o = groups[NOT]
            if len(o):
                labels0[o] = labels0[a] ^ R
            a, bb, o = groups[XOR]
            if len(o):
                labels0[o] = labels0[a] ^ labels0[bb]
            a, bb, o = groups[XNOR]
            if len(o):
                labels0[o] = labels0[a] ^ labels0[bb] ^ R
            gidx, or_mask, ga, gb, go, grank, thi = tabbed
            if len(gidx):
                flip = np.where(or_mask[:, None], R[None, :], 0).astype(np.uint64)
                a0 = labels0[ga] ^ flip
                b0 = labels0[gb] ^ flip
                pa = (a0[:, 1] & _ONE).astype(bool)
                pb = (b0[:, 1] & _ONE).astype(bool)
                lo0 = np.uint64(cycle << 32)
                t0 = np.stack([thi, np.full(len(thi), lo0, np.uint64)], axis=-1)
                t1 = t0.copy()
                t1[:, 1] |= _ONE
                ha0 = self._hash(a0, t0)
                ha1 = self._hash(a0 ^ R, t0)
                hb0 = self._hash(b0, t1)
                hb1 = self._hash(b0 ^ R, t1)
                tg = ha0 ^ ha1
                tg[pb] ^= R
                wg = ha0
                wg[pa] ^= tg[pa]
                te = hb0 ^ hb1 ^ a0
                we = hb0.copy()
                we[pb] ^= te[pb] ^ a0[pb]
                labels0[go] = (wg ^ we) ^ flip
                tables[grank, 0] = tg
                tables[grank, 1] = te

        if len(net.registers):
            self._carried = labels0[net.registers[:, 0]].copy()
        self._finish_cycle(cycle, lambda w: labels0[w])
        return _to_blocks(tables)

    def _cycle_scalar(self, cycle: int) -> bytes:
        net, sched = self.net, self.sched
        labels0 = self.labels0
        R = self._r_int
        wires, fresh, qs, qlab = self._stage_inputs(cycle)
        for w, lab in zip(wires.tolist(), _ints_from_pairs(fresh)):
            labels0[w] = lab
        if qs is not None:
            if not isinstance(qlab, list):
                qlab = _ints_from_pairs(qlab)
            for w, lab in zip(qs.tolist(), qlab):
                labels0[w] = lab

        kinds, in0, in1, outs, rank = sched.scalar_ops()
        tables = bytearray(sched.n_tables * TABLE_BYTES)
        enc = self._enc.update
        cyc_lo = cycle << 32
        for g in range(len(kinds)):
            k = kinds[g]
            if k == XOR:
                labels0[outs[g]] = labels0[in0[g]] ^ labels0[in1[g]]
            elif k == AND or k == OR:
                flip = R if k == OR else 0
                a0 = labels0[in0[g]] ^ flip
                b0 = labels0[in1[g]] ^ flip
                da0 = (a0 << 1) & _M128
                da1 = ((a0 ^ R) << 1) & _M128
                db0 = (b0 << 1) & _M128
                db1 = ((b0 ^ R) << 1) & _M128
                t0 = (g << 64) | cyc_lo
                t1 = t0 | 1
                ct = enc((da0 ^ t0).to_bytes(16, "big")
                         + (da1 ^ t0).to_bytes(16, "big")
                         + (db0 ^ t1).to_bytes(16, "big")
                         + (db1 ^ t1).to_bytes(16, "big"))
                ha0 = int.from_bytes(ct[0:16], "big") ^ da0
                ha1 = int.from_bytes(ct[16:32], "big") ^ da1
                hb0 = int.from_bytes(ct[32:48], "big") ^ db0
                hb1 = int.from_bytes(ct[48:64], "big") ^ db1
                tg = ha0 ^ ha1
                if b0 & 1:
                    tg ^= R
                wg = ha0 ^ tg if a0 & 1 else ha0
                te = hb0 ^ hb1 ^ a0
                we = hb0 ^ (te ^ a0) if b0 & 1 else hb0
                labels0[outs[g]] = wg ^ we ^ flip
                pos = rank[g] * TABLE_BYTES
                tables[pos:pos + 16] = tg.to_bytes(16, "big")
                tables[pos + 16:pos + 32] = te.to_bytes(16, "big")
            elif k == XNOR:
                labels0[outs[g]] = labels0[in0[g]] ^ labels0[in1[g]] ^ R
            elif k == NOT:
                labels0[outs[g]] = labels0[in0[g]] ^ R
            else:
                labels0[outs[g]] = labels0[in0[g]]

        if len(net.registers):
            self._carried = [labels0[int(d)] for d in net.registers[:, 0]]
        self._finish_cycle(cycle, lambda w: np.array(
            [(labels0[w] >> 64) & 0xFFFFFFFFFFFFFFFF, labels0[w] & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64))
        return bytes(tables)


class Evaluator:
    """Holds one active label per wire and walks the netlist cycle by cycle."""

    def __init__(self, net: Netlist, batch: int = 1):
        self.sched = _schedule(net)
        self.net = net
        self.batch = batch
        self._hash = _Hasher()
        self._enc = _aes(_FIXED_KEY)
        self._vector = batch > 1 or self.sched.mean_width >= _VECTOR_MIN_GATES_PER_LEVEL
        if self._vector:
            self.active = np.zeros((net.n_wires, batch, 2), dtype=np.uint64)
        else:
            self.active = [0] * net.n_wires
        self._line_labels = {}
        self._init_labels = None
        self.output_active = np.zeros((len(net.outputs), batch, 2), dtype=np.uint64)
        self._carried = None
        self._next_cycle = 0

    def set_line_labels(self, line_indices, labels: np.ndarray):
        """Stage active labels for input-schedule lines (any cycle)."""
        labels = np.asarray(labels, dtype=np.uint64).reshape(len(line_indices), -1, 2)
        for k, li in enumerate(line_indices):
            self._line_labels[int(li)] = labels[k]

    def set_register_init_labels(self, labels: np.ndarray):
        self._init_labels = np.asarray(labels, dtype=np.uint64).reshape(
            len(self.net.registers), -1, 2)

    def eval_cycle(self, cycle: int, tables: bytes):
        if cycle != self._next_cycle:
            raise ValueError("cycles must be evaluated in order")
        self._next_cycle += 1
        if len(tables) != self.sched.n_tables * TABLE_BYTES:
            raise MalformedTables(
                f"expected {self.sched.n_tables * TABLE_BYTES} table bytes, "
                f"got {len(tables)}")
        if self._vector:
            self._cycle_vector(cycle, tables)
        else:
            self._cycle_scalar(cycle, tables)

    def _staged(self, li: int) -> np.ndarray:
        try:
            return self._line_labels.pop(li)
        except KeyError:
            raise InvalidLabel(f"no label staged for input line {li}") from None

    def _cycle_vector(self, cycle: int, tables: bytes):
        net, sched = self.net, self.sched
        tab = _from_blocks(tables).reshape(-1, 2, 2)
        active = self.active
        for li in sched.lines_by_cycle[cycle].tolist():
            active[net.inputs[li, 0]] = self._staged(li)
        if len(net.registers):
            if cycle == 0:
                if self._init_labels is None:
                    raise InvalidLabel("register init labels missing")
                active[net.registers[:, 1]] = self._init_labels
            else:
                active[net.registers[:, 1]] = self._carried

        for groups, tabbed in sched.levels:
            a, _b, o = groups[BUF]
            if len(o):
                active[o] = active[a]
            a, _b, o = groups[NOT]
            if len(o):
                active[o] = active[a]
            for kind in (XOR, XNOR):
                a, bb, o = groups[kind]
                if len(o):
                    active[o] = active[a] ^ active[bb]
            gidx, _or_mask, ga, gb, go, grank, thi = tabbed
            if len(gidx):
                a = active[ga]
                bl = active[gb]
                sa = (a[..., 1] & _ONE).astype(bool)
                sb = (bl[..., 1] & _ONE).astype(bool)
                lo0 = np.uint64(cycle << 32)
                t0 = np.stack([thi, np.full(len(thi), lo0, np.uint64)], axis=-1)[:, None, :]
                t1 = t0.copy()
                t1[..., 1] |= _ONE
                w = self._hash(a, np.broadcast_to(t0, a.shape).reshape(-1, 2)) \
                    ^ self._hash(bl, np.broadcast_to(t1, bl.shape).reshape(-1, 2))
                tg = tab[grank, 0][:, None, :]
                te = tab[grank, 1][:, None, :]
                w[sa] ^= np.broadcast_to(tg, a.shape)[sa]
                w[sb] ^= (np.broadcast_to(te, a.shape) ^ a)[sb]
                active[go] = w

        if len(net.registers):
            self._carried = active[net.registers[:, 0]].copy()
        sel = sched.outs_by_cycle[cycle]
        if len(sel):
            self.output_active[sel] = active[net.outputs[sel, 0]]

    def _cycle_scalar(self, cycle: int, tables: bytes):
        net, sched = self.net, self.sched
        active = self.active
        for li in sched.lines_by_cycle[cycle].tolist():
            lab = self._staged(li)
            active[int(net.inputs[li, 0])] = (int(lab[0, 0]) << 64) | int(lab[0, 1])
        if len(net.registers):
            if cycle == 0:
                if self._init_labels is None:
                    raise InvalidLabel("register init labels missing")
                vals = _ints_from_pairs(self._init_labels)
            else:
                vals = self._carried
            for w, v in zip(net.registers[:, 1].tolist(), vals):
                active[w] = v

        kinds, in0, in1, outs, rank = sched.scalar_ops()
        enc = self._enc.update
        cyc_lo = cycle << 32
        for g in range(len(kinds)):
            k = kinds[g]
            if k == XOR or k == XNOR:
                active[outs[g]] = active[in0[g]] ^ active[in1[g]]
            elif k == AND or k == OR:
                a = active[in0[g]]
                bl = active[in1[g]]
                da = (a << 1) & _M128
                db = (bl << 1) & _M128
                t0 = (g << 64) | cyc_lo
                t1 = t0 | 1
                ct = enc((da ^ t0).to_bytes(16, "big") + (db ^ t1).to_bytes(16, "big"))
                w = int.from_bytes(ct[0:16], "big") ^ da \
                    ^ int.from_bytes(ct[16:32], "big") ^ db
                pos = rank[g] * TABLE_BYTES
                if a & 1:
                    w ^= int.from_bytes(tables[pos:pos + 16], "big")
                if bl & 1:
                    w ^= int.from_bytes(tables[pos + 16:pos + 32], "big") ^ a
                active[outs[g]] = w
            else:  # NOT/BUF move the active label unchanged
                active[outs[g]] = active[in0[g]]

        if len(net.registers):
            self._carried = [active[int(d)] for d in net.registers[:, 0]]
        for s in sched.outs_by_cycle[cycle]:
            v = active[int(net.outputs[s, 0])]
            self.output_active[s, 0, 0] = (v >> 64) & 0xFFFFFFFFFFFFFFFF
            self.output_active[s, 0, 1] = v & 0xFFFFFFFFFFFFFFFF

    def output_labels(self) -> np.ndarray:
        if self._next_cycle != self.net.cycles:
            raise ValueError("not all cycles evaluated")
        return self.output_active


def decode_outputs(output_pairs: np.ndarray, received: np.ndarray) -> np.ndarray:
    """Map received output labels to bits; a label matching neither pair
    element is a protocol violation."""
    received = np.asarray(received, dtype=np.uint64).reshape(len(output_pairs), -1, 2)
    bits = np.zeros(received.shape[:2], dtype=np.uint8)
    for i in range(len(output_pairs)):
        is0 = (received[i] == output_pairs[i, 0]).all(axis=-1)
        is1 = (received[i] == output_pairs[i, 1]).all(axis=-1)
        if not (is0 | is1).all():
            raise InvalidLabel(f"output {i}: label matches neither pair element")
        bits[i] = is1
    return bits if bits.shape[1] > 1 else bits[:, 0]


# ---------------------------------------------------------------------------
# One-shot helpers (the session module drives the classes directly)


def garble_all(net: Netlist, seed: bytes) -> tuple[Garbler, list[bytes]]:
    g = Garbler(net, seed)
    return g, [g.garble_cycle(t) for t in range(net.cycles)]


def run_plain_garbled(net: Netlist, line_bits: np.ndarray, seed: bytes = b"test") -> np.ndarray:
    """Garble, evaluate and decode in one process: the correctness harness.

    ``line_bits``: bits aligned with net.inputs, shape (L,) or (L, B);
    constant lines are filled in automatically.
    """
    bits = np.asarray(line_bits, dtype=np.uint8)
    squeeze = bits.ndim == 1
    if squeeze:
        bits = bits[:, None]
    batch = bits.shape[1]
    g, tables = garble_all(net, seed)
    ev = Evaluator(net, batch)
    parties = net.inputs[:, 1]
    pairs = g.input_label_pairs(np.arange(len(net.inputs)))
    vals = bits.astype(np.uint64)
    vals[parties == PARTY_CONST0] = 0
    vals[parties == PARTY_CONST1] = 1
    chosen = np.where(vals[:, :, None].astype(bool), pairs[:, 1, None, :],
                      pairs[:, 0, None, :])
    ev.set_line_labels(np.arange(len(net.inputs)), chosen)
    if len(net.registers):
        init = g.register_init_labels()
        ev.set_register_init_labels(np.repeat(init[:, None, :], batch, axis=1))
    for t in range(net.cycles):
        ev.eval_cycle(t, tables[t])
    out = decode_outputs(g.output_pairs, ev.output_labels())
    return out[:, 0] if (squeeze and out.ndim > 1) else out
