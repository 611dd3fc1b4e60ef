"""Computation-time and communication-volume prediction from gate counts.

The two governing relations: garbling/evaluating time is a weighted gate
count over the CPU frequency,

    t_comp = (xor_count * clk_xor + nonxor_count * clk_nonxor) / f_cpu,

and the wire volume is two ciphertexts of ``n_bits`` per non-XOR gate,

    comm_bytes = nonxor_count * 2 * n_bits / 8,

which the protocol layer's instrumented channels must reproduce exactly.
Defaults model a desktop-class CPU at 3.4 GHz spending 62 and 164 clocks
per free and table-backed gate.  "MB" throughout means 1e6 bytes.

``estimate_model`` offers an analytic path: per-layer structural sums in
the style of (multiplies + adds + activations) x per-component counts,
either this library's measured counts or a caller-supplied table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gclib
from .circuit import GateStats
from .fixedpt import ModelDescriptor

MB = 1_000_000


@dataclass
class CostParams:
    f_cpu: float = 3.4e9
    clk_xor: float = 62.0
    clk_nonxor: float = 164.0
    n_bits: int = 128
    bw_net: float | None = None    # bits/second; required for t_comm

    def __post_init__(self):
        for name in ("f_cpu", "clk_xor", "clk_nonxor", "n_bits"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bw_net is not None and self.bw_net <= 0:
            raise ValueError("bw_net must be positive")


@dataclass
class CostReport:
    xor_count: int
    nonxor_count: int
    t_comp: float
    comm_bytes: int
    t_comm: float | None = None
    breakdown: dict = field(default_factory=dict)

    @property
    def comm_mb(self) -> float:
        return self.comm_bytes / MB

    def to_json(self) -> dict:
        doc = {"xor_count": int(self.xor_count),
               "nonxor_count": int(self.nonxor_count),
               "t_comp_seconds": self.t_comp,
               "comm_bytes": int(self.comm_bytes),
               "comm_mb": self.comm_mb}
        if self.t_comm is not None:
            doc["t_comm_seconds"] = self.t_comm
        if self.breakdown:
            doc["breakdown"] = self.breakdown
        return doc


def estimate(stats: GateStats | tuple, params: CostParams = CostParams(),
             breakdown: dict | None = None) -> CostReport:
    """Cost of a gate population (sequential totals: cycles folded in)."""
    if isinstance(stats, GateStats):
        xor, nonxor = stats.total_xor, stats.total_nonxor
    else:
        xor, nonxor = stats
    t_comp = (xor * params.clk_xor + nonxor * params.clk_nonxor) / params.f_cpu
    comm_bytes = nonxor * 2 * params.n_bits // 8
    t_comm = None
    if params.bw_net is not None:
        t_comm = nonxor * 2 * params.n_bits / params.bw_net
    return CostReport(int(xor), int(nonxor), t_comp, comm_bytes, t_comm,
                      breakdown or {})


# ---------------------------------------------------------------------------
# Analytic per-model estimation


@dataclass(frozen=True)
class ComponentCosts:
    """Per-component (xor, nonxor) pairs feeding the structural sums."""

    mult: tuple[int, int]
    add: tuple[int, int]
    activations: dict[str, tuple[int, int]]
    argmax_stage: tuple[int, int]

    @classmethod
    def measured(cls) -> "ComponentCosts":
        def s(h):
            return (h.stats.xor, h.stats.nonxor)
        acts = {tag: s(gclib.build_activation(tag))
                for tag in ("relu", "tanh_lut", "tanh_reduced", "tanh_pl",
                            "tanh_cordic", "sigmoid_lut", "sigmoid_reduced",
                            "sigmoid_plan", "sigmoid_cordic")}
        am = gclib.build_argmax(2)
        return cls(mult=s(gclib.build_mult_truncated()),
                   add=s(gclib.build_add()),
                   activations=acts,
                   argmax_stage=(am.stats.xor, am.stats.nonxor))

    @classmethod
    def published(cls) -> "ComponentCosts":
        """The widely-quoted synthesis-tool counts for the same components;
        useful for reproducing published whole-network figures."""
        return cls(mult=(381, 212), add=(16, 16),
                   activations={"relu": (30, 15),
                                "tanh_lut": (692, 149745),
                                "tanh_reduced": (3040, 1746),
                                "tanh_pl": (5, 206),
                                "tanh_cordic": (8415, 3900),
                                "sigmoid_lut": (553, 142523),
                                "sigmoid_reduced": (3629, 2107),
                                "sigmoid_plan": (1, 73),
                                "sigmoid_cordic": (8447, 3932)},
                   argmax_stage=(48, 32))


def analytic_counts(model: ModelDescriptor, costs: ComponentCosts,
                    include_argmax: bool = True) -> tuple[GateStats, dict]:
    """Structural gate counts for a fully-connected network: each layer is
    (kept weights) multiplies plus (kept-1 per output) adds, activations one
    instance per unit, and the label head one compare/select per class
    after the first."""
    xor = nonxor = 0
    breakdown = {}
    n_out_last = None
    for li, layer in enumerate(model.layers):
        if layer.kind == "FullyConnected":
            m, n = layer.dims["in"], layer.dims["out"]
            kept_per_out = (layer.mask.sum(axis=1) if layer.mask is not None
                            else np.full(n, m))
            if layer.bias is not None:
                kept_per_out = kept_per_out + 1
            mults = int(kept_per_out.sum())
            adds = int(np.maximum(kept_per_out - 1, 0).sum())
            lx = mults * costs.mult[0] + adds * costs.add[0]
            ln = mults * costs.mult[1] + adds * costs.add[1]
            n_out_last = n
        elif layer.kind == "NonLinearity":
            n = int(np.prod(layer.out_shape()))
            ax, an = costs.activations[layer.activation]
            lx, ln = n * ax, n * an
        else:
            raise ValueError(f"analytic path covers FC networks, got {layer.kind}")
        xor += lx
        nonxor += ln
        breakdown[f"layer{li}_{layer.kind}"] = {"xor": lx, "nonxor": ln}
    if include_argmax and n_out_last and n_out_last > 1:
        sx, sn = costs.argmax_stage
        lx, ln = (n_out_last - 1) * sx, (n_out_last - 1) * sn
        xor += lx
        nonxor += ln
        breakdown["argmax"] = {"xor": lx, "nonxor": ln}
    return GateStats(xor, nonxor, 1), breakdown


def estimate_model(model: ModelDescriptor, mode: str = "analytic",
                   params: CostParams = CostParams(),
                   costs: ComponentCosts | None = None,
                   include_argmax: bool = True) -> CostReport:
    """Whole-model cost: 'analytic' sums per-layer structural formulas with
    the given component table (measured counts by default); 'compiled'
    lowers the model and counts the real netlist."""
    if mode == "analytic":
        stats, breakdown = analytic_counts(
            model, costs or ComponentCosts.measured(), include_argmax)
        return estimate(stats, params, breakdown)
    if mode == "compiled":
        from .compiler import compile_model
        compiled = compile_model(model, "unrolled", emit_argmax=include_argmax)
        return estimate(compiled.netlist.stats(), params)
    raise ValueError(f"unknown estimate mode {mode!r}")
