"""Compile a network both ways and read the cost model.

The unrolled form materializes every multiply; the folded form re-runs one
multiplier-adder datapath per layer over many clock cycles with rotating
accumulator rings, trading a long cycle count for constant memory.  Either
way the communication volume is exactly two ciphertexts per AND gate.
"""

import pathlib

from gcinfer import costmodel
from gcinfer.compiler import compile_model
from gcinfer.fixedpt import load_model

fixtures = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
model = load_model(fixtures / "desk64.json")

for mode in ("unrolled", "folded"):
    compiled = compile_model(model, mode)
    net = compiled.netlist
    s = net.stats()
    rep = costmodel.estimate(s, costmodel.CostParams(bw_net=1e9))
    print(f"{mode:9s} cycles={net.cycles:5d}  gates/cycle={net.n_gates:8,}  "
          f"total non-XOR={s.total_nonxor:9,}  "
          f"comm={rep.comm_mb:7.1f} MB  t_comp~{rep.t_comp:6.3f}s "
          f"t_comm~{rep.t_comm:6.3f}s @1Gbit")

# the analytic path prices a network without compiling it; with the
# published per-component table it reproduces the well-known whole-network
# figures for these benchmark topologies
bench3 = load_model(fixtures / "bench3_arch.json")
rep = costmodel.estimate_model(bench3, "analytic",
                               costs=costmodel.ComponentCosts.published())
print(f"\n617-50-26 with published component counts: "
      f"{rep.xor_count:.3e} XOR, {rep.nonxor_count:.3e} non-XOR, "
      f"{rep.comm_mb:.0f} MB, {rep.t_comp:.2f}s")
rep = costmodel.estimate_model(bench3, "analytic")
print(f"same topology with this library's measured counts: "
      f"{rep.xor_count:.3e} XOR, {rep.nonxor_count:.3e} non-XOR "
      f"(an exact 2-input-gate multiplier is larger than the synthesized one)")
