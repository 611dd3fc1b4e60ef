"""Hand-constructed circuit components for every network building block.

All builders keep the non-XOR count low under the free-XOR cost model: the
full adder spends a single AND per bit, comparisons ride a borrow chain,
multiplexers are one AND per bit, and constants enter as free C0/C1 wires.
Word operands are little-endian wire lists (bit 0 first), 16-bit Q3.12
unless stated otherwise.

Two layers of API:

* ``emit_*`` helpers append gates to any :class:`~gcinfer.circuit.Builder`
  and return output wires; the model compiler stamps or calls these.
* ``build_*`` functions wrap an emitter into a standalone
  :class:`ComponentHandle` with named ports, ready to garble or stamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import activations as act
from .circuit import (AND, BUF, NOT, OR, XNOR, XOR, Builder, GateStats,
                      Netlist, PARTY_GARBLER)
from .fixedpt import SCALE, WORD_BITS


class ComponentBuilder(Builder):
    """Builder that tracks named input ports for component construction."""

    def __init__(self):
        super().__init__(cache=True)
        self.in_ports: dict[str, list[int]] = {}

    def port(self, name: str, n_bits: int) -> list[int]:
        wires = self.add_input_vec(n_bits, PARTY_GARBLER, 0)
        self.in_ports[name] = wires
        return wires


@dataclass
class ComponentHandle:
    """A combinational netlist fragment plus its port maps and gate counts."""

    name: str
    netlist: Netlist
    in_ports: dict[str, list[int]]
    out_ports: dict[str, list[int]]
    stats: GateStats

    def eval_plain(self, port_values: dict[str, int | np.ndarray]) -> dict[str, np.ndarray]:
        """Simulate the fragment on integer port values (scalars or arrays);
        returns integers assembled from the output ports."""
        batch = 1
        for v in port_values.values():
            arr = np.asarray(v)
            if arr.ndim:
                batch = max(batch, arr.shape[0])
        lines = np.zeros((len(self.netlist.inputs), batch), dtype=np.uint8)
        pos = {int(w): i for i, (w, _p, _t) in enumerate(self.netlist.inputs)}
        for name, wires in self.in_ports.items():
            value = port_values[name]
            if isinstance(value, int):  # arbitrary width, e.g. flat word ports
                for k, w in enumerate(wires):
                    lines[pos[w]] = (value >> k) & 1
                continue
            vals = np.asarray(value, dtype=np.int64).reshape(-1)
            for k, w in enumerate(wires):
                lines[pos[w]] = (vals >> k) & 1
        out_bits = self.netlist.simulate(lines)
        res = {}
        wire_row = {int(w): out_bits[i] for i, (w, _t) in enumerate(self.netlist.outputs)}
        for name, wires in self.out_ports.items():
            if batch == 1:   # python ints carry ports of any width
                v = 0
                for k, w in enumerate(wires):
                    v |= int(wire_row[int(w)][0]) << k
                res[name] = v
            else:
                v = np.zeros(batch, dtype=np.int64)
                for k, w in enumerate(wires):
                    v |= wire_row[int(w)].astype(np.int64) << k
                res[name] = v
        return res


def _finish(cb: ComponentBuilder, name: str, out_ports: dict[str, list[int]]) -> ComponentHandle:
    for wires in out_ports.values():
        for w in wires:
            cb.add_output(w, 0)
    net = cb.finish(1).validate()
    return ComponentHandle(name, net, cb.in_ports, out_ports, net.stats())


# ---------------------------------------------------------------------------
# Word helpers


def zero_extend(b: Builder, xs: list[int], n: int) -> list[int]:
    return xs + [b.const(0)] * (n - len(xs)) if len(xs) < n else xs[:n]


def sign_extend(xs: list[int], n: int) -> list[int]:
    return xs + [xs[-1]] * (n - len(xs)) if len(xs) < n else xs[:n]


def asr(b: Builder, xs: list[int], k: int) -> list[int]:
    """Arithmetic right shift by a constant: pure rewiring."""
    return xs[k:] + [xs[-1]] * min(k, len(xs)) if k else xs


def lsr(b: Builder, xs: list[int], k: int) -> list[int]:
    return xs[k:] + [b.const(0)] * min(k, len(xs)) if k else xs


def emit_full_adder(b: Builder, x: int, y: int, z: int) -> tuple[int, int]:
    """Sum and carry with one AND: c' = z ^ ((x^z)&(y^z))."""
    t1 = b.xor(x, z)
    t2 = b.xor(y, z)
    s = b.xor(t1, y)
    c = b.xor(z, b.and_(t1, t2))
    return s, c


def emit_add(b: Builder, xs, ys, cin=None, carry_out=False):
    """Ripple-carry addition, wrapping at the common width."""
    n = len(xs)
    assert len(ys) == n
    c = b.const(0) if cin is None else cin
    out = []
    for k in range(n):
        if k == n - 1 and not carry_out:
            out.append(b.xor(b.xor(xs[k], ys[k]), c))
        else:
            s, c = emit_full_adder(b, xs[k], ys[k], c)
            out.append(s)
    return (out, c) if carry_out else out


def emit_sub(b: Builder, xs, ys, borrow_out=False):
    """x - y as x + ~y + 1; borrow is the complement of the carry out."""
    ny = [b.not_(w) for w in ys]
    if borrow_out:
        diff, cout = emit_add(b, xs, ny, cin=b.const(1), carry_out=True)
        return diff, b.not_(cout)
    return emit_add(b, xs, ny, cin=b.const(1))


def emit_mux(b: Builder, sel: int, ones, zeros) -> list[int]:
    return [b.mux(sel, a1, a0) for a1, a0 in zip(ones, zeros)]


def emit_lt_signed(b: Builder, xs, ys) -> int:
    """Signed x < y via the subtraction sign with overflow correction."""
    n = len(xs)
    diff = emit_sub(b, xs, ys)
    ov = b.and_(b.xor(xs[n - 1], ys[n - 1]), b.xor(xs[n - 1], diff[n - 1]))
    return b.xor(diff[n - 1], ov)


def emit_lt_unsigned_const(b: Builder, xs, value: int) -> int:
    """x < constant for an unsigned word: borrow of x - value."""
    ys = b.const_vec(value, len(xs))
    _, bout = emit_sub(b, xs, ys, borrow_out=True)
    return bout


def emit_cond_neg(b: Builder, sel: int, xs) -> list[int]:
    """Two's-complement negation when sel is 1: (x ^ sel) + sel."""
    t = [b.xor(x, sel) for x in xs]
    out, c = [], sel
    for k, w in enumerate(t):
        if k == len(t) - 1:
            out.append(b.xor(w, c))
        else:
            out.append(b.xor(w, c))
            c = b.and_(w, c)
    return out


def emit_abs_clamped(b: Builder, xs) -> tuple[int, list[int]]:
    """(sign, |x|) with |x| clamped to 0x7FFF so -8.0 maps onto all-ones."""
    n = len(xs)
    sign = xs[n - 1]
    mag = emit_cond_neg(b, sign, xs)
    top = mag[n - 1]  # set only for the most negative input
    low = [b.or_(m, top) for m in mag[:n - 1]]
    return sign, low  # n-1 magnitude bits


# ---------------------------------------------------------------------------
# Adder / subtractor / comparator / mux / relu components


@lru_cache(maxsize=None)
def build_add(n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    a = cb.port("a", n_bits)
    bb = cb.port("b", n_bits)
    s, cout = emit_add(cb, a, bb, carry_out=True)
    return _finish(cb, f"add{n_bits}", {"sum": s, "cout": [cout]})


@lru_cache(maxsize=None)
def build_sub(n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    a = cb.port("a", n_bits)
    bb = cb.port("b", n_bits)
    d, bout = emit_sub(cb, a, bb, borrow_out=True)
    return _finish(cb, f"sub{n_bits}", {"diff": d, "bout": [bout]})


@lru_cache(maxsize=None)
def build_cmp(n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    a = cb.port("a", n_bits)
    bb = cb.port("b", n_bits)
    return _finish(cb, f"cmp{n_bits}", {"lt": [emit_lt_signed(cb, a, bb)]})


@lru_cache(maxsize=None)
def build_mux(n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    s = cb.port("sel", 1)[0]
    a = cb.port("a", n_bits)   # taken when sel = 1
    bb = cb.port("b", n_bits)
    return _finish(cb, f"mux{n_bits}", {"out": emit_mux(cb, s, a, bb)})


def emit_relu(b: Builder, xs) -> list[int]:
    nsign = b.not_(xs[-1])
    return [b.and_(x, nsign) for x in xs[:-1]] + [b.const(0)]


@lru_cache(maxsize=None)
def build_relu(n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    x = cb.port("x", n_bits)
    return _finish(cb, "relu", {"y": emit_relu(cb, x)})


# ---------------------------------------------------------------------------
# Multiplier


def emit_mult_trunc(b: Builder, xs, ys, frac: int) -> list[int]:
    """Signed n x n multiply keeping output bits frac .. frac+n-1 exactly.

    Partial products are accumulated over n+frac columns with the standard
    sign-extension compression (replicated sign bits fold into one inverted
    bit plus a constant), the multiplicand sign row folds the same way, and
    a carry-save tree plus one carry-propagate pass produces the sum.  The
    low columns are computed in full so the truncated result carries the
    exact carries, matching fx_mul bit for bit.
    """
    n = len(xs)
    assert len(ys) == n and 1 <= frac <= n
    C = n + frac
    cols: list[list[int]] = [[] for _ in range(C)]
    const_acc = 0

    for i in range(n):
        for j in range(n):
            if i + j < C:
                cols[i + j].append(b.and_(xs[j], ys[i]))
        if i + n < C:
            s = b.and_(xs[n - 1], ys[i])   # consed copy of the j = n-1 product
            cols[i + n].append(b.not_(s))
            const_acc += 1 << (i + n)      # compensating +2^(i+n), netted below
    # x-extension compensation nets to +2^n mod 2^C
    const_acc = (1 << n) % (1 << C)

    # multiplicand sign row: subtract (x mod 2^frac)*y_sign*2^n
    for j in range(frac):
        u = b.and_(xs[j], ys[n - 1])
        cols[n + j].append(b.not_(u))
    const_acc = (const_acc + (1 << n)) % (1 << C)

    for c in range(C):
        if (const_acc >> c) & 1:
            cols[c].append(b.const(1))

    # carry-save reduction to two rows per column
    for c in range(C):
        col = cols[c]
        while len(col) > 2:
            s, cy = emit_full_adder(b, col.pop(), col.pop(), col.pop())
            col.append(s)
            if c + 1 < C:
                cols[c + 1].append(cy)

    # final carry-propagate pass
    out = []
    carry = None
    for c in range(C):
        bits = list(cols[c])
        if carry is not None:
            bits.append(carry)
        last = c == C - 1
        if len(bits) == 3:
            if last:
                s = b.xor(b.xor(bits[0], bits[1]), bits[2])
                carry = None
            else:
                s, carry = emit_full_adder(b, *bits)
        elif len(bits) == 2:
            s = b.xor(bits[0], bits[1])
            carry = None if last else b.and_(bits[0], bits[1])
        elif len(bits) == 1:
            s, carry = bits[0], None
        else:
            s, carry = b.const(0), None
        out.append(s)
    return out[frac:frac + n]


@lru_cache(maxsize=None)
def build_mult_truncated(n_bits: int = WORD_BITS, frac: int = 12) -> ComponentHandle:
    cb = ComponentBuilder()
    x = cb.port("x", n_bits)
    y = cb.port("y", n_bits)
    return _finish(cb, f"mult{n_bits}q{frac}",
                   {"prod": emit_mult_trunc(cb, x, y, frac)})


@lru_cache(maxsize=None)
def build_mac(n_bits: int = WORD_BITS, frac: int = 12) -> ComponentHandle:
    """Multiply-accumulate: acc + x*y, the unit the compiler stamps."""
    cb = ComponentBuilder()
    x = cb.port("x", n_bits)
    y = cb.port("y", n_bits)
    acc = cb.port("acc", n_bits)
    p = emit_mult_trunc(cb, x, y, frac)
    s, _ = emit_add(cb, acc, p, carry_out=True)
    return _finish(cb, f"mac{n_bits}q{frac}", {"out": s})


# ---------------------------------------------------------------------------
# Divider


def emit_long_division(b: Builder, seed, stream, den, width: int) -> list[int]:
    """Conditional-subtract long division.

    ``seed`` (value < den) primes the remainder; ``stream`` supplies the
    remaining numerator bits high-to-low; ``den`` is zero-extended to
    ``width`` wires.  Returns one quotient bit per streamed bit,
    little-endian.
    """
    den = zero_extend(b, list(den), width)
    r = zero_extend(b, list(seed), width)
    q_rev = []
    for bit in stream:
        r_sh = [bit] + r                       # width+1 wires, value < 2*den
        t, bout = emit_sub(b, r_sh, den + [b.const(0)], borrow_out=True)
        q = b.not_(bout)
        r = emit_mux(b, q, t[:width], r_sh[:width])
        q_rev.append(q)
    return q_rev[::-1]


def emit_div(b: Builder, xs, ys, frac: int) -> list[int]:
    """Fixed-point (x<<frac)/y on magnitudes, truncated, sign-corrected;
    division by zero yields the all-ones magnitude quotient (wrapped)."""
    n = len(xs)
    sa, ua = xs[n - 1], emit_cond_neg(b, xs[n - 1], xs)   # |x| incl. 0x8000
    sb, ub = ys[n - 1], emit_cond_neg(b, ys[n - 1], ys)
    stream = [b.const(0)] * frac + ua                     # |x| << frac, high first
    q = emit_long_division(b, [], stream[::-1], ub, n)
    sign = b.xor(sa, sb)
    return emit_cond_neg(b, sign, q[:n])


@lru_cache(maxsize=None)
def build_div(n_bits: int = WORD_BITS, frac: int = 12) -> ComponentHandle:
    cb = ComponentBuilder()
    x = cb.port("x", n_bits)
    y = cb.port("y", n_bits)
    return _finish(cb, f"div{n_bits}q{frac}", {"quot": emit_div(cb, x, y, frac)})


# ---------------------------------------------------------------------------
# Argmax (the label head: a monotone map never changes the winner, so the
# output stage is a compare/select scan instead of an exponential form)


def emit_argmax(b: Builder, values: list[list[int]]) -> list[int]:
    n = len(values)
    idx_bits = max(1, (n - 1).bit_length())
    best = list(values[0])
    idx = b.const_vec(0, idx_bits)
    for k in range(1, n):
        gt = emit_lt_signed(b, best, values[k])   # strict: ties keep the left
        best = emit_mux(b, gt, values[k], best)
        idx = emit_mux(b, gt, b.const_vec(k, idx_bits), idx)
    return idx


@lru_cache(maxsize=None)
def build_argmax(n_classes: int, n_bits: int = WORD_BITS) -> ComponentHandle:
    cb = ComponentBuilder()
    vals = [cb.port(f"x{k}", n_bits) for k in range(n_classes)]
    return _finish(cb, f"argmax{n_classes}", {"idx": emit_argmax(cb, vals)})


# ---------------------------------------------------------------------------
# Matrix-vector product


def build_matvec(m: int, n: int, sparsity_mask=None,
                 n_bits: int = WORD_BITS, frac: int = 12) -> ComponentHandle:
    """n dot products of length m; masked weights contribute no gates.

    Ports: ``x`` (m words), ``w`` (one word per kept weight, ordered output-
    major), ``y`` (n words).
    """
    if sparsity_mask is not None:
        mask = np.asarray(sparsity_mask, dtype=bool).reshape(n, m)
    else:
        mask = np.ones((n, m), dtype=bool)
    cb = ComponentBuilder()
    xs = [cb.add_input_vec(n_bits, PARTY_GARBLER, 0) for _ in range(m)]
    cb.in_ports["x"] = [w for word in xs for w in word]
    w_flat: list[int] = []
    wlists: dict[tuple[int, int], list[int]] = {}
    for j in range(n):
        for i in range(m):
            if mask[j, i]:
                wires = cb.add_input_vec(n_bits, PARTY_GARBLER, 0)
                wlists[(j, i)] = wires
                w_flat.extend(wires)
    cb.in_ports["w"] = w_flat

    mult = build_mult_truncated(n_bits, frac)
    mac = build_mac(n_bits, frac)
    ys = []
    for j in range(n):
        acc = None
        for i in range(m):
            if not mask[j, i]:
                continue
            if acc is None:
                acc = cb.stamp(mult, {"x": xs[i], "y": wlists[(j, i)]})["prod"]
            else:
                acc = cb.stamp(mac, {"x": xs[i], "y": wlists[(j, i)], "acc": acc})["out"]
        if acc is None:
            acc = cb.const_vec(0, n_bits)
        ys.append(acc)
    return _finish(cb, f"matvec{m}x{n}", {"y": [w for word in ys for w in word]})


# ---------------------------------------------------------------------------
# Hyperbolic shift-add core (CORDIC) and the activation circuits


def _cordic_width() -> int:
    return act.IFRAC + 4          # sign + 3 integer bits over the Q.IFRAC grid


def emit_cordic_core(b: Builder, z0) -> tuple[list[int], list[int]]:
    """Rotate (1/gain, 0) through the hyperbolic angle z0 (signed Q.IFRAC);
    returns cosh and sinh wire words."""
    W = _cordic_width()
    x = b.const_vec(act.INV_GAIN_I, W)
    y = b.const_vec(0, W)
    z = sign_extend(list(z0), W)
    for i in act.CORDIC_ITERATIONS:
        d = z[-1]                  # 1 when z < 0
        ys_i = asr(b, y, i)
        xs_i = asr(b, x, i)
        tbl = b.const_vec(act.ATANH_I[i], W)
        # z >= 0: x += y>>i, y += x>>i, z -= atanh; signs flip when z < 0
        x_new = emit_add(b, x, [b.xor(w, d) for w in ys_i], cin=d)
        y_new = emit_add(b, y, [b.xor(w, d) for w in xs_i], cin=d)
        nd = b.not_(d)
        z_new = emit_add(b, z, [b.xor(w, nd) for w in tbl], cin=nd)
        x, y, z = x_new, y_new, z_new
    return x, y


@lru_cache(maxsize=None)
def build_cordic_hyperbolic(precision_bits: int = 12) -> ComponentHandle:
    """Cosh/Sinh of a pre-reduced angle; the gain is divided out of the
    starting vector, and the unrolled iteration count is fixed (the 3i+1
    indices repeat)."""
    del precision_bits  # the datapath is sized by the shared internal format
    cb = ComponentBuilder()
    z = cb.port("z", _cordic_width())
    cosh, sinh = emit_cordic_core(cb, z)
    return _finish(cb, "cordic_hyp", {"cosh": cosh, "sinh": sinh})


def _emit_exp_neg(b: Builder, a_bits, stages: int) -> list[int]:
    """exp(-a) in Q.IFRAC for an unsigned Q.IFRAC input, mirroring
    activations._cordic_exp_neg: reduce by ln2 multiples, run the core,
    shift by the reduced exponent."""
    W = _cordic_width()
    a = list(a_bits)
    m_bits = []
    for k in range(stages - 1, -1, -1):
        step = b.const_vec(act.LN2_I << k, len(a))
        t, bout = emit_sub(b, a, step, borrow_out=True)
        mk = b.not_(bout)
        a = emit_mux(b, mk, t, a)
        m_bits.append(mk)
    m_bits = m_bits[::-1]          # little-endian exponent
    r = zero_extend(b, a[:act.IFRAC], W)   # r < ln2 after reduction
    cosh, sinh = emit_cordic_core(b, r)
    e = emit_sub(b, cosh, sinh)[:act.IFRAC + 1]   # exp(-r) in (0.5, 1]
    for k, mk in enumerate(m_bits):
        e = emit_mux(b, mk, lsr(b, e, 1 << k), e)
    return e                        # IFRAC+1 wires


def _emit_round_div_q12(b: Builder, num, den) -> list[int]:
    """floor(num*2^13/den) rounded into Q3.12, the divider the activations
    share; num <= 2^IFRAC <= den < 2^(IFRAC+2)."""
    W = act.IFRAC + 2
    seed = lsr(b, list(num), 1)                    # num >> 1 primes the remainder
    stream = [num[0]] + [b.const(0)] * 13          # high-to-low tail of num << 13
    q13 = emit_long_division(b, seed, stream, den, W)   # 14 bits
    q14 = emit_add(b, q13, b.const_vec(1, 14))
    return q14[1:]                                  # (q13 + 1) >> 1, 13 bits


def _clamp_to_one(b: Builder, e) -> list[int]:
    """min(t, 1.0) in Q.IFRAC: with the top bit set the low bits must read 0."""
    top = e[act.IFRAC]
    ntop = b.not_(top)
    return [b.and_(w, ntop) for w in e[:act.IFRAC]] + [top]


def emit_tanh_cordic(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)            # 15 magnitude bits
    # 2*|x| on the internal grid: shift by one plus the extra fraction bits
    a = zero_extend(b, [b.const(0)] * (act.IFRAC - 12 + 1) + mag, 23)
    t = _clamp_to_one(b, _emit_exp_neg(b, a, act.RED_STAGES_TANH))
    one = b.const_vec(act.IONE, act.IFRAC + 1)
    num = emit_sub(b, one, t)
    den = emit_add(b, one + [b.const(0)], t + [b.const(0)])
    y = _emit_round_div_q12(b, num, den)
    return emit_cond_neg(b, sign, zero_extend(b, y, WORD_BITS))


def emit_sigmoid_cordic(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    a = zero_extend(b, [b.const(0)] * (act.IFRAC - 12) + mag, 22)
    t = _clamp_to_one(b, _emit_exp_neg(b, a, act.RED_STAGES_SIGMOID))
    one = b.const_vec(act.IONE, act.IFRAC + 1)
    den = emit_add(b, one + [b.const(0)], t + [b.const(0)])
    y = _emit_round_div_q12(b, one, den)
    half = b.const_vec(SCALE, 13)
    refl = emit_sub(b, half, y)                    # 1 - y for the negative side
    out = emit_mux(b, sign, refl, y)
    return zero_extend(b, out, WORD_BITS)


def _emit_lut(b: Builder, sel, table: np.ndarray, out_bits: int) -> list[int]:
    """Multiplexer tree over the selector bits; hash-consing in the builder
    collapses shared and constant subtrees into a DAG."""
    assert len(table) == 1 << len(sel)
    outs = []
    for bit in range(out_bits):
        leaves = [(int(v) >> bit) & 1 for v in table]

        def node(lo: int, level: int) -> int:
            if level == 0:
                return b.const(leaves[lo])
            half = 1 << (level - 1)
            a0 = node(lo, level - 1)
            a1 = node(lo + half, level - 1)
            return b.mux(sel[level - 1], a1, a0)

        outs.append(node(0, len(sel)))
    return outs


def emit_tanh_lut(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    y = _emit_lut(b, mag, act.tanh_full_table(), 13)
    return emit_cond_neg(b, sign, zero_extend(b, y, WORD_BITS))


def emit_sigmoid_lut(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    y = _emit_lut(b, mag, act.sigmoid_full_table(), 13)
    half = b.const_vec(SCALE, 13)
    out = emit_mux(b, sign, emit_sub(b, half, y), y)
    return zero_extend(b, out, WORD_BITS)


def emit_tanh_reduced(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    tab = _emit_lut(b, mag[2:14], act.tanh_reduced_table(), 13)
    sat = mag[14]                                   # |x| >= 4
    y = emit_mux(b, sat, b.const_vec(SCALE, 13), tab)
    return emit_cond_neg(b, sign, zero_extend(b, y, WORD_BITS))


def emit_sigmoid_reduced(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    y = _emit_lut(b, mag[2:15], act.sigmoid_reduced_table(), 13)
    half = b.const_vec(SCALE, 13)
    out = emit_mux(b, sign, emit_sub(b, half, y), y)
    return zero_extend(b, out, WORD_BITS)


def emit_tanh_pl(b: Builder, xs) -> list[int]:
    """Segmented lines: select the slope/intercept constants, then one
    truncating multiply; the tail segment is the constant 1.0 (slope 0)."""
    sign, mag = emit_abs_clamped(b, xs)
    a_sel = b.const_vec(0, 12)
    b_sel = b.const_vec(SCALE, 13)
    for bound, slope, inter in zip(act.TANH_PL_BOUNDS[::-1],
                                   act.TANH_PL_SLOPES[::-1],
                                   act.TANH_PL_INTERCEPTS[::-1]):
        lt = emit_lt_unsigned_const(b, mag, bound)
        a_sel = emit_mux(b, lt, b.const_vec(slope, 12), a_sel)
        b_sel = emit_mux(b, lt, b.const_vec(inter, 13), b_sel)
    # (a * mag) >> 12 exactly, both operands unsigned here
    prod = emit_mult_unsigned_trunc(b, mag, a_sel, 12, out_bits=13)
    y = emit_add(b, prod, b_sel)
    return emit_cond_neg(b, sign, zero_extend(b, y, WORD_BITS))


def emit_sigmoid_plan(b: Builder, xs) -> list[int]:
    sign, mag = emit_abs_clamped(b, xs)
    y = b.const_vec(SCALE, 13)
    for bound, sh, inter in zip(act.PLAN_BOUNDS[::-1], act.PLAN_SHIFTS[::-1],
                                act.PLAN_INTERCEPTS[::-1]):
        lt = emit_lt_unsigned_const(b, mag, bound)
        line = emit_add(b, zero_extend(b, lsr(b, mag, sh), 13),
                        b.const_vec(inter, 13))
        y = emit_mux(b, lt, line, y)
    half = b.const_vec(SCALE, 13)
    out = emit_mux(b, sign, emit_sub(b, half, y), y)
    return zero_extend(b, out, WORD_BITS)


def emit_mult_unsigned_trunc(b: Builder, xs, ys, frac: int, out_bits: int) -> list[int]:
    """floor(x*y / 2^frac) for unsigned words, exact low-column carries."""
    C = frac + out_bits
    cols: list[list[int]] = [[] for _ in range(C)]
    for i in range(len(ys)):
        for j in range(len(xs)):
            if i + j < C:
                cols[i + j].append(b.and_(xs[j], ys[i]))
    for c in range(C):
        col = cols[c]
        while len(col) > 2:
            s, cy = emit_full_adder(b, col.pop(), col.pop(), col.pop())
            col.append(s)
            if c + 1 < C:
                cols[c + 1].append(cy)
    out, carry = [], None
    for c in range(C):
        bits = list(cols[c])
        if carry is not None:
            bits.append(carry)
        last = c == C - 1
        if len(bits) == 3:
            if last:
                out.append(b.xor(b.xor(bits[0], bits[1]), bits[2]))
                carry = None
            else:
                s, carry = emit_full_adder(b, *bits)
                out.append(s)
        elif len(bits) == 2:
            out.append(b.xor(bits[0], bits[1]))
            carry = None if last else b.and_(bits[0], bits[1])
        elif len(bits) == 1:
            out.append(bits[0])
            carry = None
        else:
            out.append(b.const(0))
            carry = None
    return out[frac:frac + out_bits]


_ACT_EMITTERS = {
    "relu": emit_relu,
    "tanh_lut": emit_tanh_lut,
    "tanh_reduced": emit_tanh_reduced,
    "tanh_pl": emit_tanh_pl,
    "tanh_cordic": emit_tanh_cordic,
    "sigmoid_lut": emit_sigmoid_lut,
    "sigmoid_reduced": emit_sigmoid_reduced,
    "sigmoid_plan": emit_sigmoid_plan,
    "sigmoid_cordic": emit_sigmoid_cordic,
}


def emit_activation(b: Builder, tag: str, xs) -> list[int]:
    try:
        emitter = _ACT_EMITTERS[tag]
    except KeyError:
        raise ValueError(f"unknown activation variant {tag!r}") from None
    return emitter(b, xs)


@lru_cache(maxsize=None)
def build_activation(tag: str) -> ComponentHandle:
    cb = ComponentBuilder()
    x = cb.port("x", WORD_BITS)
    return _finish(cb, tag, {"y": emit_activation(cb, tag, x)})


def build_tanh(variant: str) -> ComponentHandle:
    """variant: LUT | Reduced | PiecewiseLinear | CORDIC."""
    return build_activation(_variant_tag("tanh", variant))


def build_sigmoid(variant: str) -> ComponentHandle:
    return build_activation(_variant_tag("sigmoid", variant))


def _variant_tag(fn: str, variant: str) -> str:
    mapping = {"lut": "lut", "reduced": "reduced",
               "piecewiselinear": "pl" if fn == "tanh" else "plan",
               "pl": "pl", "plan": "plan", "cordic": "cordic"}
    key = variant.lower()
    if key not in mapping:
        raise ValueError(f"unknown variant {variant!r}")
    return f"{fn}_{mapping[key]}"
