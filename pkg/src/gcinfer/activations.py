"""Quantized activation references shared by the evaluator and circuit builders.

Each variant has one integer-level definition here; the corresponding
circuit in :mod:`gclib` implements the same steps gate by gate, so circuit
and reference agree on every one of the 65536 inputs (checked exhaustively
by the tests).  Tags:

    relu
    tanh_lut / sigmoid_lut          full table over the magnitude bits
    tanh_reduced / sigmoid_reduced  table addressed by the input with the
                                    2 low fraction bits dropped (and, for
                                    tanh, the top integer bit: x>4 -> 1)
    tanh_pl / sigmoid_plan          piecewise-linear forms
    tanh_cordic / sigmoid_cordic    hyperbolic shift-add core + division

Tanh is odd and sigmoid reflects around (0, 0.5), so every variant computes
the x >= 0 half and maps x < 0 through the symmetry, which also makes the
symmetry identities exact in the circuit.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .fixedpt import SCALE, WORD_MASK, to_signed

# ---------------------------------------------------------------------------
# Internal fixed-point parameters of the hyperbolic shift-add (CORDIC) core.
#
# 14 iterations, with index 4 (the first index of the 3i+1 repeat rule)
# applied twice; the scale gain of the sequence is divided out of the
# initial vector.  The datapath carries IFRAC fraction bits, wide enough
# that the argument-reduction and iteration rounding stay far below the
# output quantization step.

CORDIC_ITERATIONS = (1, 2, 3, 4, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13)
IFRAC = 18
IONE = 1 << IFRAC
LN2_I = round(math.log(2) * IONE)                       # 181704
ATANH_I = {i: round(math.atanh(2.0 ** -i) * IONE) for i in set(CORDIC_ITERATIONS)}
_gain = 1.0
for _i in CORDIC_ITERATIONS:
    _gain *= math.sqrt(1.0 - 2.0 ** (-2 * _i))
INV_GAIN_I = round(IONE / _gain)

# reduction handles 2*|x| < 16, i.e. m in 0..23 (tanh); sigmoid needs m <= 11
RED_STAGES_TANH = 5   # subtract ln2 * 2^k for k = 4..0
RED_STAGES_SIGMOID = 4


def _abs16(raw: int) -> int:
    """Magnitude of a raw word, clamped to 32767 (|-8| is out of range)."""
    s = to_signed(raw)
    return min(abs(s), 32767)


def _cordic_exp_neg(a_i: int, stages: int) -> int:
    """exp(-a) in Q.IFRAC for a >= 0 given in Q.IFRAC, via range reduction
    a = m*ln2 + r and cosh(r) - sinh(r) from the hyperbolic core."""
    m = 0
    for k in range(stages - 1, -1, -1):
        step = LN2_I << k
        if a_i >= step:
            a_i -= step
            m |= 1 << k
    x, y, z = INV_GAIN_I, 0, a_i
    for i in CORDIC_ITERATIONS:
        if z >= 0:
            x, y, z = x + (y >> i), y + (x >> i), z - ATANH_I[i]
        else:
            x, y, z = x - (y >> i), y - (x >> i), z + ATANH_I[i]
    e_r = x - y                       # cosh(r) - sinh(r) = exp(-r)
    return e_r >> m if m < 64 else 0


def _round_div_q12(num: int, den: int) -> int:
    """floor(num/den * 2^13) rounded to 2^12 steps, as the divider circuit does."""
    q13 = (num << 13) // den
    return (q13 + 1) >> 1


def tanh_cordic(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    a = mag << (IFRAC - 12 + 1)       # 2*|x| in Q.IFRAC
    t = _cordic_exp_neg(a, RED_STAGES_TANH)
    t = min(t, IONE)                  # core may overshoot exp(0) by rounding
    y = _round_div_q12(IONE - t, IONE + t)
    return (-y if s < 0 else y) & WORD_MASK


def sigmoid_cordic(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    a = mag << (IFRAC - 12)           # |x| in Q.IFRAC
    t = _cordic_exp_neg(a, RED_STAGES_SIGMOID)
    t = min(t, IONE)
    y = _round_div_q12(IONE, IONE + t)
    return (SCALE - y if s < 0 else y) & WORD_MASK


# ---------------------------------------------------------------------------
# Table variants.
#
# The full tables index all 15 magnitude bits; the long constant tail where
# tanh rounds to exactly 1.0 collapses to shared constant subtrees in the
# multiplexer-tree circuit.  The reduced variants drop the two low fraction
# bits of the index and evaluate the cell centre.


@lru_cache(maxsize=None)
def tanh_full_table() -> np.ndarray:
    k = np.arange(1 << 15)
    return np.rint(np.tanh(k / SCALE) * SCALE).astype(np.int64)


@lru_cache(maxsize=None)
def sigmoid_full_table() -> np.ndarray:
    k = np.arange(1 << 15)
    x = k / SCALE
    return np.rint(SCALE / (1.0 + np.exp(-x))).astype(np.int64)


@lru_cache(maxsize=None)
def tanh_reduced_table() -> np.ndarray:
    # 12-bit index over [0, 4): two int bits, ten fraction bits; the entry
    # is the function at the truncated input, so tanh(0) stays exactly 0
    k = np.arange(1 << 12)
    return np.rint(np.tanh(4 * k / SCALE) * SCALE).astype(np.int64)


@lru_cache(maxsize=None)
def sigmoid_reduced_table() -> np.ndarray:
    # 13-bit index over [0, 8): three int bits kept
    k = np.arange(1 << 13)
    return np.rint(SCALE / (1.0 + np.exp(-4 * k / SCALE))).astype(np.int64)


def tanh_lut(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = int(tanh_full_table()[mag])
    return (-y if s < 0 else y) & WORD_MASK


def sigmoid_lut(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = int(sigmoid_full_table()[mag])
    return (SCALE - y if s < 0 else y) & WORD_MASK


def tanh_reduced(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = SCALE if mag >= 4 * SCALE else int(tanh_reduced_table()[mag >> 2])
    return (-y if s < 0 else y) & WORD_MASK


def sigmoid_reduced(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = int(sigmoid_reduced_table()[mag >> 2])
    return (SCALE - y if s < 0 else y) & WORD_MASK


# ---------------------------------------------------------------------------
# Piecewise-linear variants.
#
# The tanh coefficients come from an offline minimax fit
# (tools/fit_pl_tanh.py); ten lines cover x in [0, ~3.5) and the tail is
# the constant 1.0.  The first line is pinned through the origin so the
# quantized form is exactly zero at zero.  Values are Q3.12 and the
# evaluation below (truncating multiply, wrapping add) is exactly what the
# circuit does.

TANH_PL_BOUNDS = (614, 1626, 2461, 3273, 4125, 5074, 6200, 7650, 9795, 14273)
TANH_PL_SLOPES = (4073, 3789, 3220, 2601, 1989, 1424, 931, 530, 235, 55)
TANH_PL_INTERCEPTS = (0, 50, 276, 648, 1137, 1706, 2316, 2924, 3474, 3905)

# Classic shift-and-add sigmoid approximation: slopes 1/4, 1/8, 1/32 and a
# constant tail, breakpoints at 1, 2.375 and 5.
PLAN_BOUNDS = (4096, 9728, 20480)
PLAN_SHIFTS = (2, 3, 5)
PLAN_INTERCEPTS = (2048, 2560, 3456)


def tanh_pl(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = SCALE
    for bound, a, b in zip(TANH_PL_BOUNDS, TANH_PL_SLOPES, TANH_PL_INTERCEPTS):
        if mag < bound:
            y = ((a * mag) >> 12) + b
            break
    return (-y if s < 0 else y) & WORD_MASK


def sigmoid_plan(raw: int) -> int:
    s = to_signed(raw)
    mag = min(abs(s), 32767)
    y = SCALE
    for bound, sh, b in zip(PLAN_BOUNDS, PLAN_SHIFTS, PLAN_INTERCEPTS):
        if mag < bound:
            y = (mag >> sh) + b
            break
    return (SCALE - y if s < 0 else y) & WORD_MASK


def relu(raw: int) -> int:
    return 0 if to_signed(raw) < 0 else raw & WORD_MASK


_REFERENCES = {
    "relu": relu,
    "tanh_lut": tanh_lut,
    "tanh_reduced": tanh_reduced,
    "tanh_pl": tanh_pl,
    "tanh_cordic": tanh_cordic,
    "sigmoid_lut": sigmoid_lut,
    "sigmoid_reduced": sigmoid_reduced,
    "sigmoid_plan": sigmoid_plan,
    "sigmoid_cordic": sigmoid_cordic,
}

TAGS = tuple(_REFERENCES)


def reference(tag: str):
    """Integer reference function for an activation variant tag."""
    try:
        return _REFERENCES[tag]
    except KeyError:
        raise ValueError(f"unknown activation variant {tag!r}") from None


def float_reference(tag: str):
    """Double-precision ideal the quantized variant approximates."""
    if tag.startswith("tanh"):
        return math.tanh
    if tag.startswith("sigmoid"):
        return lambda x: 1.0 / (1.0 + math.exp(-x))
    if tag == "relu":
        return lambda x: max(0.0, x)
    raise ValueError(f"unknown activation variant {tag!r}")
