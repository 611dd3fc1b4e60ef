"""Boolean netlist intermediate representation.

A netlist is a topologically ordered gate list over a flat wire space, plus
an input schedule (which party drives which wire at which clock cycle),
register pairs for sequential circuits, and an output schedule.  Gate kinds
are restricted to 2-input XOR/XNOR/AND/OR and unary NOT/BUF; XOR-family
gates (including NOT and BUF) are free under the garbling scheme, AND and
OR each cost one two-ciphertext table.

Wire discipline: every wire has exactly one driver.  Input wires are driven
by their scheduled party once per cycle, register q-wires by the previous
cycle's d-wire (or the init constant at cycle 0), every other wire by a
single gate whose inputs were all driven earlier in the list.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field

import numpy as np

XOR, XNOR, AND, OR, NOT, BUF = range(6)
KIND_NAMES = ("XOR", "XNOR", "AND", "OR", "NOT", "BUF")
KIND_BY_NAME = {n: i for i, n in enumerate(KIND_NAMES)}
FREE_KINDS = (XOR, XNOR, NOT, BUF)
UNARY_KINDS = (NOT, BUF)

PARTY_GARBLER, PARTY_EVALUATOR, PARTY_CONST0, PARTY_CONST1 = range(4)
PARTY_NAMES = ("G", "E", "C0", "C1")
PARTY_BY_NAME = {n: i for i, n in enumerate(PARTY_NAMES)}


class NetlistError(ValueError):
    pass


class CyclicCombinationalPath(NetlistError):
    pass


class MultipleDrivers(NetlistError):
    pass


class DanglingWire(NetlistError):
    pass


class ParseError(NetlistError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class GateStats:
    """Free (XOR-family) versus table-consuming gate counts."""

    xor: int
    nonxor: int
    cycles: int = 1

    @property
    def total_xor(self) -> int:
        return self.xor * self.cycles

    @property
    def total_nonxor(self) -> int:
        return self.nonxor * self.cycles

    @property
    def total(self) -> int:
        return (self.xor + self.nonxor) * self.cycles

    def __add__(self, other: "GateStats") -> "GateStats":
        if self.cycles != other.cycles:
            raise ValueError("cannot add stats with differing cycle counts")
        return GateStats(self.xor + other.xor, self.nonxor + other.nonxor, self.cycles)


class Netlist:
    """Immutable gate-level circuit; build one with :class:`Builder`."""

    def __init__(self, n_wires, kinds, in0, in1, outs, inputs, registers, outputs, cycles):
        self.n_wires = int(n_wires)
        self.kinds = np.asarray(kinds, dtype=np.uint8)
        self.in0 = np.asarray(in0, dtype=np.int32)
        self.in1 = np.asarray(in1, dtype=np.int32)   # -1 for unary gates
        self.outs = np.asarray(outs, dtype=np.int32)
        self.inputs = np.asarray(inputs, dtype=np.int64).reshape(-1, 3)   # wire, party, cycle
        self.registers = np.asarray(registers, dtype=np.int64).reshape(-1, 3)  # d, q, init
        self.outputs = np.asarray(outputs, dtype=np.int64).reshape(-1, 2)  # wire, cycle
        self.cycles = int(cycles)
        self._levels = None

    @property
    def n_gates(self) -> int:
        return len(self.kinds)

    def stats(self) -> GateStats:
        free = np.isin(self.kinds, FREE_KINDS).sum()
        return GateStats(int(free), int(self.n_gates - free), self.cycles)

    # -- validation ----------------------------------------------------

    def validate(self):
        """Check the wire discipline; raises a NetlistError naming the first
        violation, returns self when clean."""
        n = self.n_wires
        for arr, what in ((self.in0, "gate input"), (self.outs, "gate output")):
            if len(arr) and (arr.min() < 0 or arr.max() >= n):
                raise NetlistError(f"{what} wire out of range")
        if len(self.in1):
            bin_mask = ~np.isin(self.kinds, UNARY_KINDS)
            if bin_mask.any():
                b = self.in1[bin_mask]
                if b.min() < 0 or b.max() >= n:
                    raise NetlistError("gate input wire out of range")

        # one driver per wire
        driver_kind = np.zeros(n, dtype=np.uint8)  # 0 none, 1 input, 2 register q, 3 gate
        in_wires = np.unique(self.inputs[:, 0]) if len(self.inputs) else np.empty(0, np.int64)
        driver_kind[in_wires] = 1
        for d, q, _ in self.registers:
            if driver_kind[q]:
                raise MultipleDrivers(f"wire {q} is both register q and input")
            driver_kind[q] = 2

        # input schedule: each input wire driven exactly once per cycle
        if len(self.inputs):
            key = self.inputs[:, 0] * self.cycles + self.inputs[:, 2]
            if len(np.unique(key)) != len(key):
                raise MultipleDrivers("input wire scheduled twice in one cycle")
            counts = np.bincount(self.inputs[:, 0], minlength=n)
            bad = np.nonzero((counts > 0) & (counts != self.cycles))[0]
            if len(bad):
                raise DanglingWire(
                    f"input wire {bad[0]} is not scheduled in every cycle")
            if self.inputs[:, 2].min() < 0 or self.inputs[:, 2].max() >= self.cycles:
                raise NetlistError("input cycle out of range")

        # gate outputs: unique, and not colliding with inputs/registers
        order = np.full(n, -2, dtype=np.int64)       # position of the driver
        order[driver_kind > 0] = -1
        gout = self.outs
        if len(gout):
            seen = driver_kind[gout]
            if seen.any():
                w = int(gout[np.nonzero(seen)[0][0]])
                raise MultipleDrivers(f"wire {w} has multiple drivers")
            uniq, cnt = np.unique(gout, return_counts=True)
            if (cnt > 1).any():
                raise MultipleDrivers(f"wire {int(uniq[cnt > 1][0])} has multiple drivers")
            order[gout] = np.arange(len(gout))
            driver_kind[gout] = 3

        if (driver_kind == 0).any():
            raise DanglingWire(f"wire {int(np.nonzero(driver_kind == 0)[0][0])} has no driver")

        # topological order within a cycle
        idx = np.arange(len(gout))
        for src in (self.in0, np.where(np.isin(self.kinds, UNARY_KINDS), self.in0, self.in1)):
            pos = order[src]
            late = pos >= idx
            if late.any():
                g = int(np.nonzero(late)[0][0])
                w = int(src[g])
                raise CyclicCombinationalPath(
                    f"gate {g} reads wire {w} driven at or after it")

        for d, q, init in self.registers:
            if order[d] == -2:
                raise DanglingWire(f"register d-wire {d} has no driver")
            if init not in (0, 1):
                raise NetlistError("register init must be 0 or 1")
        if len(self.outputs):
            if order[self.outputs[:, 0]].min() == -2:
                raise DanglingWire("output wire has no driver")
            if self.outputs[:, 1].min() < 0 or self.outputs[:, 1].max() >= self.cycles:
                raise NetlistError("output cycle out of range")
        if self.cycles < 1:
            raise NetlistError("cycle count must be >= 1")
        if self.cycles == 1 and len(self.registers):
            raise NetlistError("combinational netlist cannot have registers")
        return self

    # -- evaluation ----------------------------------------------------

    def simulate(self, line_values) -> np.ndarray:
        """Plaintext evaluation; the bridge oracle for the garbled execution.

        ``line_values``: bit array aligned with ``self.inputs`` (constant
        lines may hold anything; they are overridden).  A trailing batch
        axis is allowed: shape (L,) or (L, B).  Returns bits aligned with
        ``self.outputs``, same batch shape.
        """
        vals = np.asarray(line_values, dtype=np.uint8)
        squeeze = vals.ndim == 1
        if squeeze:
            vals = vals[:, np.newaxis]
        if vals.shape[0] != len(self.inputs):
            raise ValueError(f"expected {len(self.inputs)} input lines, got {vals.shape[0]}")
        batch = vals.shape[1]
        words = (batch + 63) // 64
        packed = np.zeros((len(self.inputs), words), dtype=np.uint64)
        bits = np.packbits(vals, axis=1, bitorder="little")
        pad = np.zeros((len(self.inputs), words * 8 - bits.shape[1]), dtype=np.uint8)
        packed = np.concatenate([bits, pad], axis=1).view(np.uint64)

        parties = self.inputs[:, 1]
        packed[parties == PARTY_CONST0] = 0
        packed[parties == PARTY_CONST1] = ~np.uint64(0)

        wires = np.zeros((self.n_wires, words), dtype=np.uint64)
        out_collect = np.zeros((len(self.outputs), words), dtype=np.uint64)
        full = ~np.uint64(0)

        by_cycle = [np.nonzero(self.inputs[:, 2] == t)[0] for t in range(self.cycles)]
        out_by_cycle = [np.nonzero(self.outputs[:, 1] == t)[0] for t in range(self.cycles)]
        kinds, a_, b_, o_ = self.kinds, self.in0, self.in1, self.outs

        for t in range(self.cycles):
            if t == 0:
                for d, q, init in self.registers:
                    wires[q] = full if init else 0
            else:
                dvals = wires[self.registers[:, 0]].copy()
                wires[self.registers[:, 1]] = dvals
            lines = by_cycle[t]
            wires[self.inputs[lines, 0]] = packed[lines]
            for g in range(len(kinds)):
                k = kinds[g]
                if k == XOR:
                    wires[o_[g]] = wires[a_[g]] ^ wires[b_[g]]
                elif k == AND:
                    wires[o_[g]] = wires[a_[g]] & wires[b_[g]]
                elif k == XNOR:
                    wires[o_[g]] = ~(wires[a_[g]] ^ wires[b_[g]])
                elif k == OR:
                    wires[o_[g]] = wires[a_[g]] | wires[b_[g]]
                elif k == NOT:
                    wires[o_[g]] = ~wires[a_[g]]
                else:
                    wires[o_[g]] = wires[a_[g]]
            sel = out_by_cycle[t]
            out_collect[sel] = wires[self.outputs[sel, 0]]

        unpacked = np.unpackbits(out_collect.view(np.uint8), axis=1,
                                 bitorder="little")[:, :batch]
        return unpacked[:, 0] if squeeze else unpacked

    # -- garbling support ------------------------------------------------

    def levels(self):
        """Gate indices grouped by topological depth (cached)."""
        if self._levels is None:
            depth = [0] * self.n_wires
            gdepth = np.empty(self.n_gates, dtype=np.int32)
            kinds = self.kinds.tolist()
            a_, b_, o_ = self.in0.tolist(), self.in1.tolist(), self.outs.tolist()
            unary = (NOT, BUF)
            for g in range(self.n_gates):
                da = depth[a_[g]]
                if kinds[g] not in unary:
                    db = depth[b_[g]]
                    if db > da:
                        da = db
                gdepth[g] = da + 1
                depth[o_[g]] = da + 1
            order = np.argsort(gdepth, kind="stable")
            sorted_d = gdepth[order]
            cuts = np.nonzero(np.diff(sorted_d))[0] + 1
            self._levels = [np.array(x) for x in np.split(order, cuts)]
        return self._levels


def stats(netlist: Netlist) -> GateStats:
    return netlist.stats()


# ---------------------------------------------------------------------------
# Builder


class Builder:
    """Incremental netlist constructor with constant folding and optional
    hash-consing of structurally identical gates."""

    def __init__(self, cache: bool = False):
        self._kinds = array("b")
        self._in0 = array("i")
        self._in1 = array("i")
        self._outs = array("i")
        self._segments = []          # closed (kinds, in0, in1, outs) numpy chunks
        self.n_wires = 0
        self.inputs = []             # (wire, party, cycle)
        self.registers = []          # [d, q, init]
        self.outputs = []            # (wire, cycle)
        self._const = {}             # wire -> 0/1 for known-constant wires
        self._const_wire = [None, None]
        self._cache = {} if cache else None

    # wires ------------------------------------------------------------

    def new_wire(self) -> int:
        w = self.n_wires
        self.n_wires += 1
        return w

    def add_input(self, party: int, cycle: int = 0) -> int:
        w = self.new_wire()
        self.inputs.append((w, party, cycle))
        if party == PARTY_CONST0:
            self._const[w] = 0
        elif party == PARTY_CONST1:
            self._const[w] = 1
        return w

    def add_input_vec(self, n: int, party: int, cycle: int = 0) -> list[int]:
        return [self.add_input(party, cycle) for _ in range(n)]

    def const(self, value: int) -> int:
        """Canonical constant wire (registered as a C0/C1 input at cycle 0;
        finish() extends the schedule to every cycle)."""
        value = int(bool(value))
        if self._const_wire[value] is None:
            self._const_wire[value] = self.add_input(
                PARTY_CONST0 if value == 0 else PARTY_CONST1, 0)
        return self._const_wire[value]

    def const_vec(self, raw: int, n: int) -> list[int]:
        return [self.const((raw >> i) & 1) for i in range(n)]

    def add_register(self, init: int = 0) -> int:
        """Allocate a register's q-wire now; bind its d-wire later."""
        q = self.new_wire()
        self.registers.append([None, q, int(init)])
        return q

    def bind_register(self, q: int, d: int):
        for reg in self.registers:
            if reg[1] == q:
                reg[0] = d
                return
        raise ValueError(f"no register with q-wire {q}")

    def add_output(self, wire: int, cycle: int = 0):
        self.outputs.append((int(wire), int(cycle)))

    # gates --------------------------------------------------------------

    def _raw_gate(self, kind: int, a: int, b: int) -> int:
        out = self.new_wire()
        self._kinds.append(kind)
        self._in0.append(a)
        self._in1.append(b)
        self._outs.append(out)
        return out

    def emit(self, kind: int, a: int, b: int | None = None) -> int:
        """Add a gate, folding constants and trivial identities."""
        ca = self._const.get(a)
        if kind in UNARY_KINDS:
            if kind == BUF:
                return a
            if ca is not None:
                return self.const(1 - ca)
            b = -1
        else:
            cb = self._const.get(b)
            if ca is not None and cb is not None:
                table = {XOR: ca ^ cb, XNOR: 1 - (ca ^ cb), AND: ca & cb, OR: ca | cb}
                return self.const(table[kind])
            if ca is not None or cb is not None:
                cv, other = (ca, b) if ca is not None else (cb, a)
                if kind == XOR:
                    return other if cv == 0 else self.emit(NOT, other)
                if kind == XNOR:
                    return other if cv == 1 else self.emit(NOT, other)
                if kind == AND:
                    return other if cv == 1 else self.const(0)
                if kind == OR:
                    return other if cv == 0 else self.const(1)
            if a == b:
                if kind == XOR:
                    return self.const(0)
                if kind == XNOR:
                    return self.const(1)
                return a  # AND/OR idempotent
            if a > b:  # canonical operand order, all binary kinds commute
                a, b = b, a

        if self._cache is not None:
            key = (kind, a, b)
            hit = self._cache.get(key)
            if hit is not None:
                return hit
            out = self._raw_gate(kind, a, b)
            self._cache[key] = out
            return out
        return self._raw_gate(kind, a, b)

    # convenience wrappers used heavily by the component library
    def xor(self, a, b):
        return self.emit(XOR, a, b)

    def xnor(self, a, b):
        return self.emit(XNOR, a, b)

    def and_(self, a, b):
        return self.emit(AND, a, b)

    def or_(self, a, b):
        return self.emit(OR, a, b)

    def not_(self, a):
        return self.emit(NOT, a)

    def mux(self, sel, a1, a0):
        """a1 when sel else a0, as sel AND (a1 xor a0), xor a0."""
        return self.xor(self.and_(sel, self.xor(a1, a0)), a0)

    # bulk stamping ------------------------------------------------------

    def _flush_segment(self):
        if len(self._kinds):
            self._segments.append((
                np.frombuffer(self._kinds, dtype=np.int8).astype(np.uint8).copy(),
                np.asarray(self._in0, dtype=np.int32).copy(),
                np.asarray(self._in1, dtype=np.int32).copy(),
                np.asarray(self._outs, dtype=np.int32).copy(),
            ))
            self._kinds = array("b")
            self._in0 = array("i")
            self._in1 = array("i")
            self._outs = array("i")

    def stamp(self, component, bindings: dict[str, list[int]]) -> dict[str, list[int]]:
        """Inline a combinational component, binding its input ports to
        existing wires; returns the mapped output ports.  The component's
        constant wires map onto this builder's constants."""
        net = component.netlist
        if net.cycles != 1 or len(net.registers):
            raise ValueError("only combinational components can be stamped")
        wire_map = np.full(net.n_wires, -1, dtype=np.int64)
        for name, wires in component.in_ports.items():
            bound = bindings[name]
            if len(bound) != len(wires):
                raise ValueError(f"port {name}: width {len(wires)} vs {len(bound)}")
            wire_map[wires] = bound
        for w, party, _cycle in net.inputs:
            if party == PARTY_CONST0:
                wire_map[w] = self.const(0)
            elif party == PARTY_CONST1:
                wire_map[w] = self.const(1)
            elif wire_map[w] < 0:
                raise ValueError(f"component input wire {w} not bound via ports")
        gouts = net.outs
        fresh = np.arange(len(gouts), dtype=np.int64) + self.n_wires
        self.n_wires += len(gouts)
        wire_map[gouts] = fresh
        self._flush_segment()
        in1 = net.in1.astype(np.int64)
        unary = np.isin(net.kinds, UNARY_KINDS)
        mapped_in1 = np.where(unary, -1, wire_map[np.where(unary, 0, in1)])
        self._segments.append((
            net.kinds.copy(),
            wire_map[net.in0].astype(np.int32),
            mapped_in1.astype(np.int32),
            fresh.astype(np.int32),
        ))
        return {name: [int(wire_map[w]) for w in wires]
                for name, wires in component.out_ports.items()}

    # finish -------------------------------------------------------------

    def finish(self, cycles: int = 1) -> Netlist:
        self._flush_segment()
        if self._segments:
            kinds = np.concatenate([s[0] for s in self._segments])
            in0 = np.concatenate([s[1] for s in self._segments])
            in1 = np.concatenate([s[2] for s in self._segments])
            outs = np.concatenate([s[3] for s in self._segments])
        else:
            kinds = np.empty(0, np.uint8)
            in0 = in1 = outs = np.empty(0, np.int32)

        inputs = list(self.inputs)
        if cycles > 1:
            # constant and per-cycle input wires must be driven every cycle;
            # replicate any line scheduled only once across all cycles
            counts = {}
            for w, _p, _t in inputs:
                counts[w] = counts.get(w, 0) + 1
            extra = []
            for w, p, t in self.inputs:
                if counts[w] == 1:
                    extra.extend((w, p, tt) for tt in range(cycles) if tt != t)
            inputs.extend(extra)

        regs = []
        for d, q, init in self.registers:
            if d is None:
                raise NetlistError(f"register q={q} never bound to a d-wire")
            regs.append((d, q, init))
        net = Netlist(self.n_wires, kinds, in0, in1, outs,
                      np.asarray(inputs, dtype=np.int64).reshape(-1, 3),
                      np.asarray(regs, dtype=np.int64).reshape(-1, 3),
                      np.asarray(self.outputs, dtype=np.int64).reshape(-1, 2),
                      cycles)
        return net


# ---------------------------------------------------------------------------
# Composition and unrolling


def compose(a: Netlist, b: Netlist) -> Netlist:
    """Disjoint union of two netlists over a shared clock."""
    if a.cycles != b.cycles:
        raise NetlistError("cycle counts differ")
    off = a.n_wires
    b_in1 = np.where(np.isin(b.kinds, UNARY_KINDS), -1, b.in1 + off)
    inputs = np.concatenate([a.inputs, b.inputs + np.array([off, 0, 0])])
    regs = np.concatenate([a.registers, b.registers + np.array([off, off, 0])])
    outs = np.concatenate([a.outputs, b.outputs + np.array([off, 0])])
    return Netlist(a.n_wires + b.n_wires,
                   np.concatenate([a.kinds, b.kinds]),
                   np.concatenate([a.in0, b.in0 + off]),
                   np.concatenate([a.in1.astype(np.int64),
                                   b_in1.astype(np.int64)]).astype(np.int32),
                   np.concatenate([a.outs, b.outs + off]),
                   inputs, regs, outs, a.cycles)


def unroll(net: Netlist) -> Netlist:
    """Expand a sequential netlist into an equivalent combinational one.

    Gate count multiplies by exactly the cycle count; registers become
    wires between the per-cycle copies, with init values as constants.
    """
    c = net.cycles
    b = Builder()
    prev_d = {}
    all_inputs = []
    out_map = {}
    for t in range(c):
        wire_map = np.full(net.n_wires, -1, dtype=np.int64)
        for w, party, cycle in net.inputs:
            if cycle != t:
                continue
            nw = b.add_input(int(party), 0)
            wire_map[w] = nw
        for d, q, init in net.registers:
            wire_map[q] = b.const(int(init)) if t == 0 else prev_d[d]
        for g in range(net.n_gates):
            k = int(net.kinds[g])
            a_w = int(wire_map[net.in0[g]])
            b_w = None if k in UNARY_KINDS else int(wire_map[net.in1[g]])
            out = b._raw_gate(k, a_w, -1 if b_w is None else b_w)
            wire_map[net.outs[g]] = out
        prev_d = {int(d): int(wire_map[d]) for d, q, _ in net.registers}
        for w, cycle in net.outputs:
            if cycle == t:
                out_map[(int(w), t)] = int(wire_map[w])
    for w, t in net.outputs:
        b.add_output(out_map[(int(w), int(t))], 0)
    return b.finish(1)


# ---------------------------------------------------------------------------
# Text serialization


def serialize(net: Netlist) -> str:
    lines = [f"NETLIST {net.n_wires} {net.cycles}"]
    for w, p, t in net.inputs:
        lines.append(f"I {w} {PARTY_NAMES[p]} {t}")
    for d, q, init in net.registers:
        lines.append(f"R {d} {q} {init}")
    for g in range(net.n_gates):
        k = int(net.kinds[g])
        if k in UNARY_KINDS:
            lines.append(f"G {g} {KIND_NAMES[k]} {net.in0[g]} {net.outs[g]}")
        else:
            lines.append(f"G {g} {KIND_NAMES[k]} {net.in0[g]} {net.in1[g]} {net.outs[g]}")
    for w, t in net.outputs:
        lines.append(f"O {w} {t}")
    return "\n".join(lines) + "\n"


def parse(text: str) -> Netlist:
    n_wires = cycles = None
    kinds, in0, in1, outs = array("b"), array("i"), array("i"), array("i")
    inputs, registers, outputs = [], [], []
    next_gate = 0
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "NETLIST":
                n_wires, cycles = int(tok[1]), int(tok[2])
            elif tok[0] == "I":
                inputs.append((int(tok[1]), PARTY_BY_NAME[tok[2]], int(tok[3])))
            elif tok[0] == "R":
                registers.append((int(tok[1]), int(tok[2]), int(tok[3])))
            elif tok[0] == "G":
                gid, kind_name = int(tok[1]), tok[2]
                if kind_name not in KIND_BY_NAME:
                    raise ParseError(line_no, f"unknown gate kind {kind_name!r}")
                kind = KIND_BY_NAME[kind_name]
                if gid != next_gate:
                    raise ParseError(line_no, f"gate id {gid} out of order")
                next_gate += 1
                if kind in UNARY_KINDS:
                    if len(tok) != 5:
                        raise ParseError(line_no, "unary gate takes one input")
                    kinds.append(kind); in0.append(int(tok[3]))
                    in1.append(-1); outs.append(int(tok[4]))
                else:
                    if len(tok) != 6:
                        raise ParseError(line_no, "binary gate takes two inputs")
                    kinds.append(kind); in0.append(int(tok[3]))
                    in1.append(int(tok[4])); outs.append(int(tok[5]))
            elif tok[0] == "O":
                outputs.append((int(tok[1]), int(tok[2])))
            else:
                raise ParseError(line_no, f"unknown record {tok[0]!r}")
        except ParseError:
            raise
        except (ValueError, KeyError, IndexError) as exc:
            raise ParseError(line_no, str(exc)) from None
    if n_wires is None:
        raise ParseError(0, "missing NETLIST header")
    return Netlist(n_wires,
                   np.frombuffer(kinds, dtype=np.int8).astype(np.uint8),
                   np.asarray(in0, np.int32), np.asarray(in1, np.int32),
                   np.asarray(outs, np.int32),
                   np.asarray(inputs, np.int64).reshape(-1, 3),
                   np.asarray(registers, np.int64).reshape(-1, 3),
                   np.asarray(outputs, np.int64).reshape(-1, 2),
                   cycles)
