import numpy as np
import pytest

from gcinfer import circuit as cir
from gcinfer.circuit import (AND, BUF, Builder, CyclicCombinationalPath,
                             DanglingWire, MultipleDrivers, NOT, OR,
                             PARTY_CONST1, PARTY_GARBLER, ParseError, XNOR,
                             XOR, compose, parse, serialize, unroll)


def xor_pair():
    b = Builder()
    x = b.add_input(PARTY_GARBLER)
    y = b.add_input(PARTY_GARBLER)
    b.add_output(b._raw_gate(XOR, x, y))
    return b.finish(1)


class TestValidate:
    def test_single_xor_ok(self):
        xor_pair().validate()

    def test_self_loop_is_cyclic(self):
        net = xor_pair()
        bad = cir.Netlist(net.n_wires, [XOR], [2], [2], [2], net.inputs,
                          net.registers, net.outputs, 1)
        with pytest.raises(CyclicCombinationalPath):
            bad.validate()

    def test_two_drivers(self):
        net = xor_pair()
        bad = cir.Netlist(3, [XOR, XOR], [0, 0], [1, 1], [2, 2],
                          net.inputs, net.registers, [[2, 0]], 1)
        with pytest.raises(MultipleDrivers):
            bad.validate()

    def test_dangling(self):
        net = xor_pair()
        bad = cir.Netlist(4, net.kinds, net.in0, net.in1, net.outs,
                          net.inputs, net.registers, net.outputs, 1)
        with pytest.raises(DanglingWire):
            bad.validate()

    def test_registers_forbidden_combinational(self):
        b = Builder()
        x = b.add_input(PARTY_GARBLER)
        q = b.add_register(0)
        b.bind_register(q, x)
        b.add_output(q)
        with pytest.raises(cir.NetlistError):
            b.finish(1).validate()


class TestStats:
    def test_empty(self):
        b = Builder()
        net = b.finish(1)
        assert (net.stats().xor, net.stats().nonxor) == (0, 0)

    def test_mux_counts(self):
        from gcinfer import gclib
        s = gclib.build_mux(1).stats
        assert (s.xor, s.nonxor) == (2, 1)

    def test_ripple_adder_nonxor(self):
        from gcinfer import gclib
        s = gclib.build_add(16).stats
        assert s.nonxor == 16   # one AND per full adder, sixteen bits

    def test_compose_additive(self):
        from gcinfer import gclib
        a = gclib.build_add(8).netlist
        b = gclib.build_cmp(8).netlist
        both = compose(a, b).validate()
        assert both.stats().xor == a.stats().xor + b.stats().xor
        assert both.stats().nonxor == a.stats().nonxor + b.stats().nonxor

    def test_sequential_totals_scale_by_cycles(self):
        net = _counter_netlist(5)
        s = net.stats()
        assert s.total_nonxor == s.nonxor * 5


class TestSerialize:
    def test_roundtrip_add(self):
        from gcinfer import gclib
        net = gclib.build_add(16).netlist
        back = parse(serialize(net)).validate()
        assert back.n_gates == net.n_gates
        assert np.array_equal(back.kinds, net.kinds)
        assert np.array_equal(back.outs, net.outs)
        assert serialize(back) == serialize(net)

    def test_unknown_gate_kind(self):
        with pytest.raises(ParseError):
            parse("NETLIST 3 1\nI 0 G 0\nI 1 G 0\nG 0 NAND 0 1 2\nO 2 0\n")

    def test_error_carries_line_number(self):
        with pytest.raises(ParseError) as err:
            parse("NETLIST 2 1\nI 0 G 0\nbogus line\n")
        assert err.value.line_no == 3

    def test_comments_ignored(self):
        net = parse("# header\nNETLIST 2 1\nI 0 G 0  # in\nI 1 E 0\n")
        assert len(net.inputs) == 2

    def test_sequential_roundtrip(self):
        net = _counter_netlist(4)
        back = parse(serialize(net)).validate()
        assert back.cycles == 4
        assert np.array_equal(back.registers, net.registers)


def _counter_netlist(cycles):
    """2-bit counter: increments once per cycle, output at the last one."""
    b = Builder()
    q0 = b.add_register(0)
    q1 = b.add_register(0)
    d0 = b._raw_gate(NOT, q0, -1)
    carry = q0
    d1 = b._raw_gate(XOR, q1, carry)
    b.bind_register(q0, d0)
    b.bind_register(q1, d1)
    b.add_output(q0, cycles - 1)
    b.add_output(q1, cycles - 1)
    return b.finish(cycles).validate()


class TestSimulate:
    def test_counter_counts(self):
        for c in (2, 3, 4, 5):
            net = _counter_netlist(c)
            bits = net.simulate(np.zeros((0,), dtype=np.uint8).reshape(0))
            got = int(bits[0]) | (int(bits[1]) << 1)
            assert got == (c - 1) % 4

    def test_batch_matches_scalar(self):
        from gcinfer import gclib
        net = gclib.build_cmp(8).netlist
        rng = np.random.default_rng(0)
        batch = rng.integers(0, 2, (len(net.inputs), 300)).astype(np.uint8)
        full = net.simulate(batch)
        for col in (0, 17, 299):
            assert np.array_equal(net.simulate(batch[:, col]), full[:, col])


class TestUnroll:
    @pytest.mark.parametrize("cycles", [2, 3, 5])
    def test_counter_unrolls(self, cycles):
        net = _counter_netlist(cycles)
        flat = unroll(net).validate()
        assert flat.cycles == 1
        assert flat.n_gates == net.n_gates * cycles
        seq = net.simulate(np.zeros(0, dtype=np.uint8))
        comb = flat.simulate(np.zeros(len(flat.inputs), dtype=np.uint8))
        assert np.array_equal(seq, comb)

    def test_accumulator_unrolls(self):
        # per-cycle input wire summed into a register
        from gcinfer import gclib
        b = Builder()
        n = 4
        xs = [b.new_wire() for _ in range(n)]
        for t in range(3):
            for w in xs:
                b.inputs.append((w, PARTY_GARBLER, t))
        qs = [b.add_register(0) for _ in range(n)]
        total = gclib.emit_add(b, qs, xs)
        for q, d in zip(qs, total):
            b.bind_register(q, d)
        for d in total:
            b.add_output(d, 2)
        net = b.finish(3).validate()

        rng = np.random.default_rng(1)
        vals = rng.integers(0, 15, 3)
        line_bits = np.zeros(len(net.inputs), dtype=np.uint8)
        for i, (w, p, t) in enumerate(net.inputs):
            if p != PARTY_GARBLER:      # constant carry-in lines
                continue
            k = xs.index(w)
            line_bits[i] = (vals[t] >> k) & 1
        seq_out = net.simulate(line_bits)

        flat = unroll(net).validate()
        assert flat.n_gates == net.n_gates * 3
        # unrolled inputs appear cycle-major in the original line order
        perm = np.lexsort((np.arange(len(net.inputs)), net.inputs[:, 2]))
        orig_lines = [i for i in perm if net.inputs[i][1] == PARTY_GARBLER]
        flat_bits = np.zeros(len(flat.inputs), dtype=np.uint8)
        pos = 0
        for i, (w, p, _t) in enumerate(flat.inputs):
            if p == PARTY_GARBLER:
                flat_bits[i] = line_bits[orig_lines[pos]]
                pos += 1
        comb_out = flat.simulate(flat_bits)
        assert np.array_equal(seq_out, comb_out)
        assert int(sum(int(v) << k for k, v in enumerate(seq_out))) \
            == int(vals.sum()) % 16


class TestBuilderFolding:
    def test_const_folding(self):
        b = Builder()
        x = b.add_input(PARTY_GARBLER)
        one = b.const(1)
        assert b.emit(AND, x, one) == x
        assert b.emit(OR, x, one) == one
        assert b.emit(XOR, x, x) == b.const(0)
        assert b.emit(BUF, x) == x

    def test_consing_dedups(self):
        b = Builder(cache=True)
        x = b.add_input(PARTY_GARBLER)
        y = b.add_input(PARTY_GARBLER)
        g1 = b.emit(AND, x, y)
        g2 = b.emit(AND, y, x)   # commuted operands share the gate
        assert g1 == g2
