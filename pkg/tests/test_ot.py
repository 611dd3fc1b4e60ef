import random

import numpy as np
import pytest
from scipy import stats as sstats

from gcinfer import ot


def pairs_of(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 1 << 63, (n, 2, 2)).astype(np.uint64)


class TestCorrectness:
    def test_choice_one(self):
        pairs = pairs_of(1)
        out = ot.ot_run(pairs, [1], "test-dealer")
        assert np.array_equal(out[0], pairs[0, 1])

    def test_choice_zero(self):
        pairs = pairs_of(1)
        out = ot.ot_run(pairs, [0], "secure", rng=random.Random(1))
        assert np.array_equal(out[0], pairs[0, 0])

    @pytest.mark.parametrize("mode", ["secure", "test-dealer"])
    def test_batch_elementwise(self, mode):
        n = 16 * 16   # a 16-word batch of 16-bit choices
        pairs = pairs_of(n, seed=3)
        choices = np.random.default_rng(4).integers(0, 2, n).astype(np.uint8)
        out = ot.ot_run(pairs, choices, mode, rng=random.Random(2))
        assert np.array_equal(out, pairs[np.arange(n), choices])

    def test_modes_agree(self):
        n = 64
        pairs = pairs_of(n, seed=5)
        choices = np.random.default_rng(6).integers(0, 2, n).astype(np.uint8)
        a = ot.ot_run(pairs, choices, "secure", rng=random.Random(3))
        b = ot.ot_run(pairs, choices, "test-dealer")
        assert np.array_equal(a, b)

    def test_batch_size_mismatch(self):
        with pytest.raises(ot.BatchSizeMismatch):
            ot.ot_run(pairs_of(4), [0, 1], "test-dealer")

    def test_bad_group_element(self):
        recv = ot.SecureReceiver(np.array([0], dtype=np.uint8))
        bad = (4).to_bytes(4, "big")[:4]
        payload = (1).to_bytes(4, "big") + (ot.P - 1).to_bytes(256, "big")
        with pytest.raises(ot.GroupElementInvalid):
            recv.respond(payload)


class TestTranscriptIndependence:
    def test_receiver_messages_choice_blind(self):
        """The receiver->sender key blocks for all-zero versus all-one
        choice batches should be statistically indistinguishable: compare
        byte histograms with a chi-squared sanity check."""
        n = 1000
        pairs = pairs_of(n, seed=7)
        sender = ot.SecureSender(ot.OtBatch(pairs), rng=random.Random(10))
        setup = sender.setup_message(n.to_bytes(4, "big"))

        def keys_for(choice):
            recv = ot.SecureReceiver(np.full(n, choice, dtype=np.uint8),
                                     rng=random.Random(20 + choice))
            return np.frombuffer(recv.respond(setup), dtype=np.uint8)

        h0 = np.bincount(keys_for(0), minlength=256).astype(float)
        h1 = np.bincount(keys_for(1), minlength=256).astype(float)
        # two noisy samples: homogeneity test on the 2 x 256 table
        _chi2, p, _dof, _exp = sstats.chi2_contingency(np.stack([h0, h1]))
        assert p > 1e-4, f"choice bit leaks into transcript? p={p}"
