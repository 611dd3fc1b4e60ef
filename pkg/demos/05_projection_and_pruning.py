"""The two offline passes that shrink circuits before any protocol runs.

Projection: stream training columns into a growing dictionary, release the
projector W = QQ^T (it reveals the subspace and nothing else - it is
symmetric, idempotent, and fixes exactly the dictionary span), and let
clients multiply their inputs by W before garbling.

Pruning: zero the smallest half of the weights, re-train the survivors,
and compile - the masked connections produce no gates at all.
"""

import numpy as np

from gcinfer import preprocess as pp
from gcinfer.compiler import compile_model

rng = np.random.default_rng(0)

# --- projection on synthetic rank-5 data --------------------------------
A = rng.normal(0, 1, (20, 5)) @ rng.normal(0, 1, (5, 200)) \
    + rng.normal(0, 1e-3, (20, 200))
labels = (A[0] > 0).astype(int)


class NullTrainer:
    def update(self, X, y):
        return self

    def validation_error(self):
        return 1.0


pm, _ = pp.build_projection(A, labels, pp.ProjectionConfig(gamma=0.3),
                            NullTrainer())
checks = pp.verify_projector(pm.W, pm.D)
print(f"dictionary: {pm.l} columns for 20-dim data "
      f"(relative reconstruction error {pm.epsilon_report:.3f})")
print(f"projector checks: symmetry {checks['symmetry']:.1e}, "
      f"idempotency {checks['idempotency']:.1e}, "
      f"rank {checks['rank_w']} == {checks['rank_d']}")

x = rng.normal(0, 1, 20)
px = pp.project(x, pm.W)
print(f"projection is idempotent: "
      f"|W(Wx) - Wx| = {np.linalg.norm(pp.project(px, pm.W) - px):.2e}")

# --- pruning a small trained model ---------------------------------------
X = np.column_stack([rng.normal(-0.6, 0.8, (16, 200)),
                     rng.normal(0.6, 0.8, (16, 200))])
y = np.array([0] * 200 + [1] * 200)
trainer = pp.MinimalTrainer([16, 8, 2], lr=0.15, seed=1, val_data=X,
                            val_labels=y)
for _ in range(100):
    sel = rng.integers(0, 400, 32)
    trainer.update(X[:, sel], y[sel])
dense = trainer.export_model(activation_tag="relu")

pruned, masks = pp.magnitude_prune(dense, fraction=0.5)
pp.retrain_pruned(trainer, masks, dense, X, y, epochs=10)
pruned = trainer.export_model(activation_tag="relu")

d = compile_model(dense, "unrolled").netlist.stats().nonxor
p = compile_model(pruned, "unrolled").netlist.stats().nonxor
print(f"\npruning half the weights: {d:,} -> {p:,} non-XOR gates "
      f"({100 * (1 - p / d):.0f}% less traffic)")
print(f"accuracy after re-training: {trainer.accuracy(X, y):.3f}")
