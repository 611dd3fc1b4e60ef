import numpy as np
import pytest

from conftest import fc_model

from gcinfer import costmodel as cm
from gcinfer.circuit import GateStats
from gcinfer.compiler import compile_model
from gcinfer.fixedpt import LayerSpec, ModelDescriptor

# published whole-network rows: (xor, nonxor, comp seconds, comm MB)
PUBLISHED_ROWS = [
    (4.31e7, 2.47e7, 1.98, 791.0),
    (1.09e8, 6.23e7, 4.99, 1990.0),
    (1.32e7, 7.54e6, 0.60, 241.0),
    (4.89e9, 2.81e9, 224.50, 89800.0),
]


def bare_fc(sizes, act):
    layers = []
    for li, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(LayerSpec("FullyConnected", {"in": a, "out": b}))
        if li < len(sizes) - 2:
            layers.append(LayerSpec("NonLinearity", {"size": b}, activation=act))
    return ModelDescriptor("net", layers, (sizes[0],))


class TestEstimate:
    @pytest.mark.parametrize("xor,nonxor,comp,comm", PUBLISHED_ROWS)
    def test_published_rows(self, xor, nonxor, comp, comm):
        rep = cm.estimate((xor, nonxor))
        assert abs(rep.t_comp - comp) / comp <= 0.01
        assert abs(rep.comm_mb - comm) / comm <= 0.005

    def test_comm_bytes_exact_formula(self):
        rep = cm.estimate((10, 12345))
        assert rep.comm_bytes == 12345 * 2 * 128 // 8 == 12345 * 32

    def test_linearity(self):
        a = cm.estimate((1000, 500))
        b = cm.estimate((2000, 700))
        both = cm.estimate((3000, 1200))
        assert abs(both.t_comp - (a.t_comp + b.t_comp)) < 1e-12
        assert both.comm_bytes == a.comm_bytes + b.comm_bytes

    def test_t_comm_needs_bandwidth(self):
        rep = cm.estimate((0, 1000), cm.CostParams(bw_net=1e9))
        assert rep.t_comm == 1000 * 256 / 1e9
        assert cm.estimate((0, 1000)).t_comm is None

    def test_param_validation(self):
        with pytest.raises(ValueError):
            cm.CostParams(f_cpu=0)


class TestAnalytic:
    def test_one_neuron_base_case(self):
        model = bare_fc([1, 1], "relu")
        costs = cm.ComponentCosts.measured()
        stats, _ = cm.analytic_counts(model, costs, include_argmax=False)
        assert stats.nonxor == costs.mult[1]        # one product, no adds
        model2 = bare_fc([2, 1], "relu")
        stats2, _ = cm.analytic_counts(model2, costs, include_argmax=False)
        assert stats2.nonxor == 2 * costs.mult[1] + costs.add[1]

    def test_published_benchmark2(self):
        model = bare_fc([784, 300, 100, 10], "sigmoid_cordic")
        rep = cm.estimate_model(model, "analytic",
                                costs=cm.ComponentCosts.published())
        assert abs(rep.nonxor_count - 6.23e7) / 6.23e7 <= 0.03

    def test_analytic_matches_compiled(self):
        """With this library's measured component counts the analytic sum
        and the real compilation agree within 3% for a plain FC chain."""
        model = fc_model("x", [24, 12, 6], act="tanh_cordic", seed=0)
        ana = cm.estimate_model(model, "analytic")
        comp = cm.estimate_model(model, "compiled")
        assert abs(ana.nonxor_count - comp.nonxor_count) / comp.nonxor_count <= 0.03
        assert abs(ana.xor_count - comp.xor_count) / comp.xor_count <= 0.03

    def test_wire_bytes_equal_estimate(self, small_net, small_net_compiled):
        """The cost formula and the instrumented channel agree exactly."""
        import numpy as np

        from conftest import run_direct_session
        from gcinfer import session as sess
        from gcinfer.fixedpt import encode_array

        x = encode_array(np.random.default_rng(0).normal(0, 1, 6))
        _, chan = run_direct_session(small_net, small_net_compiled, x)
        rep = cm.estimate(small_net_compiled.netlist.stats())
        assert sess.garbled_table_bytes(chan, "sent") == rep.comm_bytes
