import numpy as np
import pytest

from conftest import fc_model

from gcinfer import compiler, fixedpt as fx, gclib
from gcinfer.circuit import serialize
from gcinfer.compiler import (UnsupportedLayer, apply_sparsity, compile_model,
                              simulate_compiled)
from gcinfer.fixedpt import (LayerSpec, ModelDescriptor, ShapeMismatch,
                             encode_array)

rng = np.random.default_rng(7)


def rand_x(n, seed=None):
    r = np.random.default_rng(seed) if seed is not None else rng
    return encode_array(r.normal(0, 1.0, n))


class TestUnrolled:
    def test_single_relu_equals_component(self):
        model = ModelDescriptor("r", [LayerSpec(
            "NonLinearity", {"size": 1}, activation="relu")], (1,))
        compiled = compile_model(model, "unrolled", emit_argmax=False)
        comp = gclib.build_activation("relu")
        assert compiled.netlist.stats().nonxor == comp.stats.nonxor
        assert compiled.netlist.stats().xor == comp.stats.xor

    def test_bridge_oracle_label(self, small_net, small_net_compiled):
        for _ in range(5):
            x = rand_x(6)
            assert simulate_compiled(small_net_compiled, small_net, x) \
                == fx.ref_network_eval(small_net, x)

    @pytest.mark.parametrize("act", ["tanh_cordic", "sigmoid_plan", "tanh_lut"])
    def test_bridge_oracle_scores(self, act):
        model = fc_model("m", [5, 4, 3], act=act, seed=11, bias=True)
        compiled = compile_model(model, "unrolled", emit_argmax=False)
        x = rand_x(5)
        assert np.array_equal(simulate_compiled(compiled, model, x),
                              fx.ref_network_scores(model, x))

    def test_conv_pool_network(self):
        r = np.random.default_rng(3)
        layers = [
            LayerSpec("Conv2D", {"in_shape": [1, 5, 5], "out_channels": 2,
                                 "kernel": 3, "stride": 1},
                      weights=encode_array(r.normal(0, 0.3, (2, 1, 3, 3)))),
            LayerSpec("NonLinearity", {"in_shape": [2, 3, 3]},
                      activation="relu"),
            LayerSpec("MaxPool", {"in_shape": [2, 3, 3], "kernel": 3,
                                  "stride": 1}),
            LayerSpec("FullyConnected", {"in": 2, "out": 3},
                      weights=encode_array(r.normal(0, 0.3, (3, 2)))),
        ]
        model = ModelDescriptor("cnn", layers, (1, 5, 5))
        compiled = compile_model(model, "unrolled")
        for _ in range(3):
            x = rand_x(25).reshape(1, 5, 5)
            assert simulate_compiled(compiled, model, x) \
                == fx.ref_network_eval(model, x)

    def test_meanpool_network(self):
        layers = [LayerSpec("MeanPool", {"in_shape": [1, 4, 4], "kernel": 2,
                                         "stride": 2})]
        model = ModelDescriptor("mp", layers, (1, 4, 4))
        compiled = compile_model(model, "unrolled", emit_argmax=False)
        x = encode_array(np.random.default_rng(0).uniform(-1, 1, (1, 4, 4)))
        assert np.array_equal(
            simulate_compiled(compiled, model, x),
            fx.ref_layer_eval(model.layers[0], x).reshape(-1))

    def test_deterministic_serialization(self, small_net):
        a = serialize(compile_model(small_net, "unrolled").netlist)
        b = serialize(compile_model(small_net, "unrolled").netlist)
        assert a == b

    def test_evaluator_line_count(self, small_net, small_net_compiled):
        n_weights = sum(l.weights.size for l in small_net.layers
                        if l.weights is not None)
        src = small_net_compiled.evaluator_line_source
        assert (src >= 0).sum() == n_weights * 16
        # every weight bit appears exactly once
        assert len(np.unique(src[src >= 0])) == n_weights * 16


class TestFolded:
    def test_label_equivalence(self):
        model = fc_model("f", [6, 5, 4], act="tanh_cordic", seed=5, bias=True)
        cu = compile_model(model, "unrolled")
        cf = compile_model(model, "folded")
        for _ in range(5):
            x = rand_x(6)
            ref = fx.ref_network_eval(model, x)
            assert simulate_compiled(cu, model, x) == ref
            assert simulate_compiled(cf, model, x) == ref

    def test_score_equivalence_4x4(self):
        model = fc_model("f44", [4, 4], seed=9)
        cu = compile_model(model, "unrolled", emit_argmax=False)
        cf = compile_model(model, "folded", emit_argmax=False)
        for _ in range(100):
            x = rand_x(4)
            assert np.array_equal(simulate_compiled(cu, model, x),
                                  simulate_compiled(cf, model, x))

    def test_fold_overhead_under_5_percent(self):
        """Per-layer folding: cycle count times per-cycle gates stays within
        5% of the unrolled gates for a layer with >= 256 multiplies."""
        model = fc_model("big", [32, 16], seed=1)   # 512 multiply-accumulates
        cu = compile_model(model, "unrolled", emit_argmax=False)
        cf = compile_model(model, "folded", emit_argmax=False)
        unrolled = cu.netlist.stats()
        folded = cf.netlist.stats()
        assert folded.total_nonxor <= unrolled.total_nonxor * 1.05
        assert folded.total <= unrolled.total * 1.05

    def test_masked_slots_skipped(self):
        model = fc_model("fm", [6, 4], seed=2)
        mask = np.random.default_rng(0).random((4, 6)) < 0.5
        sparse = apply_sparsity(model, {0: mask})
        cf = compile_model(sparse, "folded")
        src = cf.evaluator_line_source
        assert (src >= 0).sum() == int(mask.sum()) * 16
        x = rand_x(6)
        assert simulate_compiled(cf, sparse, x) == fx.ref_network_eval(sparse, x)

    def test_rejects_conv(self):
        layers = [LayerSpec("Conv2D", {"in_shape": [1, 4, 4],
                                       "out_channels": 1, "kernel": 2,
                                       "stride": 2},
                            weights=np.zeros((1, 1, 2, 2), dtype=np.int64))]
        model = ModelDescriptor("c", layers, (1, 4, 4))
        with pytest.raises(UnsupportedLayer):
            compile_model(model, "folded")

    def test_trailing_monotone_activation_folds_under_argmax(self):
        layers = [
            LayerSpec("FullyConnected", {"in": 4, "out": 3},
                      weights=encode_array(rng.normal(0, 0.4, (3, 4)))),
            LayerSpec("NonLinearity", {"size": 3}, activation="tanh_cordic"),
        ]
        model = ModelDescriptor("t", layers, (4,))
        cf = compile_model(model, "folded")          # argmax head: allowed
        for _ in range(5):
            x = rand_x(4)
            assert simulate_compiled(cf, model, x) == fx.ref_network_eval(model, x)
        with pytest.raises(UnsupportedLayer):
            compile_model(model, "folded", emit_argmax=False)


class TestSparsity:
    def test_empty_mask_identity(self, small_net):
        same = apply_sparsity(small_net, {})
        a = serialize(compile_model(small_net, "unrolled").netlist)
        b = serialize(compile_model(same, "unrolled").netlist)
        assert a == b

    def test_whole_neuron_drops_column_gates(self):
        model = fc_model("n", [6, 4], seed=3)
        mask = np.ones((4, 6), dtype=bool)
        mask[2, :] = False                      # remove output neuron 2
        sparse = apply_sparsity(model, {0: mask})
        dense_nx = compile_model(model, "unrolled", emit_argmax=False).netlist.stats().nonxor
        sparse_nx = compile_model(sparse, "unrolled", emit_argmax=False).netlist.stats().nonxor
        mult_nx = gclib.build_mult_truncated().stats.nonxor
        assert dense_nx - sparse_nx == 6 * mult_nx + 5 * 16

    def test_random_half_mask_cuts_45_percent(self):
        model = fc_model("h", [40, 40], seed=4)
        mask = np.random.default_rng(1).random((40, 40)) < 0.5
        sparse = apply_sparsity(model, {0: mask})
        dense = compile_model(model, "unrolled", emit_argmax=False).netlist.stats().nonxor
        cut = compile_model(sparse, "unrolled", emit_argmax=False).netlist.stats().nonxor
        assert cut <= dense * 0.55

    def test_mask_shape_check(self, small_net):
        with pytest.raises(ShapeMismatch):
            apply_sparsity(small_net, {0: np.ones((2, 2), dtype=bool)})


class TestOutsourcedCompile:
    def test_share_layer_adds_zero_tables(self, small_net):
        direct = compile_model(small_net, "unrolled")
        shared = compile_model(small_net, "unrolled", outsourced=True)
        assert shared.netlist.stats().nonxor == direct.netlist.stats().nonxor
        assert shared.netlist.stats().xor \
            == direct.netlist.stats().xor + small_net.input_shape[0] * 16

    def test_share_reconstruction(self, small_net):
        shared = compile_model(small_net, "unrolled", outsourced=True)
        x = rand_x(6)
        sbits = rng.integers(0, 2, shared.n_data_bits).astype(np.uint8)
        ref = fx.ref_network_eval(small_net, x)
        assert simulate_compiled(shared, small_net, x, share_bits=sbits) == ref
        zero = np.zeros_like(sbits)
        assert simulate_compiled(shared, small_net, x, share_bits=zero) == ref
