"""Minimax fit of a 7-segment piecewise-linear tanh for x >= 0.

Produces Q3.12 slope/intercept/breakpoint constants for the activation
library.  The last segment is the constant 1.0 tail; the first seven lines
cover [0, t7].  Segment errors are equalized with a Remez-style breakpoint
exchange (tanh is concave on x>=0, so the per-segment Chebyshev line has a
closed form).  Run and paste the printed block into activations.py.
"""

import numpy as np


def cheb_line(f, fp, a, b):
    """Best L-inf line for concave f on [a, b]: slope, intercept, error."""
    slope = (f(b) - f(a)) / (b - a)
    # stationary point of f(x) - slope*x
    lo, hi = a, b
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if fp(mid) > slope:
            lo = mid
        else:
            hi = mid
    m = 0.5 * (lo + hi)
    dev = f(m) - (f(a) + slope * (m - a))
    intercept = f(a) - slope * a + 0.5 * dev
    return slope, intercept, 0.5 * dev


ORIGIN_SEG_END = 0.15   # first segment passes through the origin exactly


def _origin_line(x1):
    xs = np.linspace(0, x1, 4000)
    best = None
    for a in np.linspace(0.97, 1.0, 6001):
        dev = np.abs(np.tanh(xs) - a * xs).max()
        if best is None or dev < best[0]:
            best = (dev, a)
    return best[1], 0.0, best[0]


def fit(n_seg=10):
    """First segment is pinned through the origin (so the quantized form is
    exactly zero at zero); the rest cover greedily at a bisected error."""
    f, fp = np.tanh, lambda x: 1.0 / np.cosh(x) ** 2
    a0, b0, e0 = _origin_line(ORIGIN_SEG_END)
    rest = n_seg - 1

    def cover(err):
        t_end = np.arctanh(1.0 - err)  # constant-1 tail must also meet err
        knots = [ORIGIN_SEG_END]
        for _ in range(rest):
            a = knots[-1]
            lo, hi = a + 1e-6, t_end
            if cheb_line(f, fp, a, hi)[2] <= err:
                knots.append(t_end)
                return knots
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if cheb_line(f, fp, a, mid)[2] <= err:
                    lo = mid
                else:
                    hi = mid
            knots.append(lo)
        return knots if knots[-1] >= t_end else None

    lo, hi = 1e-5, 1e-2
    for _ in range(50):
        err = np.sqrt(lo * hi)
        if cover(err) is None:
            lo = err
        else:
            hi = err
    knots = cover(hi)
    knots[-1] = np.arctanh(1.0 - hi)
    lines = [(a0, b0, e0)] + [cheb_line(f, fp, knots[i], knots[i + 1])
                              for i in range(rest)]
    knots = [0.0] + knots
    e_seg = max(l[2] for l in lines)
    return knots, lines, e_seg, 1.0 - np.tanh(knots[-1])


def quantize_and_check(knots, lines):
    S = 4096
    bp = [int(round(k * S)) for k in knots[1:]]  # upper bound of each segment
    slopes = [int(round(l[0] * S)) for l in lines]
    inters = [int(round(l[1] * S)) for l in lines]

    def eval_q(mag):  # mirror of the fixed-point evaluator
        for i, b in enumerate(bp):
            if mag < b:
                a_k, b_k = slopes[i], inters[i]
                break
        else:
            return 4096
        p = (a_k * mag) >> 12  # fx_mul truncation
        return p + b_k

    xs = np.arange(0, 32768)
    best = None
    # nudge intercepts to re-balance after quantization + truncation bias;
    # the first intercept stays pinned to zero
    for trial in range(3):
        ys = np.array([eval_q(m) for m in xs])
        err = ys / S - np.tanh(xs / S)
        worst = np.max(np.abs(err))
        if best is None or worst < best[0]:
            best = (worst, list(inters))
        for i in range(1, len(bp)):
            lo = bp[i - 1]
            seg = err[lo:bp[i]]
            if len(seg):
                inters[i] -= int(round((seg.max() + seg.min()) / 2 * S))
    worst, inters = best
    return bp, slopes, inters, worst


if __name__ == "__main__":
    knots, lines, e_seg, e_tail = fit()
    print(f"float fit: seg err {e_seg:.3e}, tail err {e_tail:.3e}")
    bp, slopes, inters, worst = quantize_and_check(knots, lines)
    print(f"quantized max abs err over sweep: {worst:.4e}")
    print("TANH_PL_BOUNDS =", bp)
    print("TANH_PL_SLOPES =", slopes)
    print("TANH_PL_INTERCEPTS =", inters)
