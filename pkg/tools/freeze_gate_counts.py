"""Regenerate the committed gate-count regression file.

Arithmetic components are deterministic and asserted exactly; the
table-driven activations depend on libm rounding when their tables are
built, so the regression test allows them a hair of slack (see
tests/test_gclib.py).
"""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gcinfer import gclib

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "gate_counts.json"


def main():
    entries = {}

    def rec(name, handle):
        entries[name] = {"xor": handle.stats.xor, "nonxor": handle.stats.nonxor}

    rec("add16", gclib.build_add(16))
    rec("sub16", gclib.build_sub(16))
    rec("cmp16", gclib.build_cmp(16))
    rec("mux16", gclib.build_mux(16))
    rec("mux1", gclib.build_mux(1))
    rec("relu", gclib.build_relu())
    rec("mult16q12", gclib.build_mult_truncated(16, 12))
    rec("div16q12", gclib.build_div(16, 12))
    rec("argmax8", gclib.build_argmax(8))
    rec("argmax26", gclib.build_argmax(26))
    rec("cordic_hyp", gclib.build_cordic_hyperbolic())
    rec("matvec4x3", gclib.build_matvec(4, 3))
    for tag in ("relu", "tanh_lut", "tanh_reduced", "tanh_pl", "tanh_cordic",
                "sigmoid_lut", "sigmoid_reduced", "sigmoid_plan",
                "sigmoid_cordic"):
        rec(f"act_{tag}", gclib.build_activation(tag))

    OUT.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")
    for name, c in sorted(entries.items()):
        print(f"  {name:20s} xor {c['xor']:7d}  nonxor {c['nonxor']:7d}")


if __name__ == "__main__":
    main()
