"""Server-side offline passes: data projection and network pruning.

The projection pass streams training columns through a growing dictionary:
a sample whose residual against the current dictionary span exceeds the
threshold gamma joins the dictionary (scaled by the square root of its
norm, so column times coefficient reproduces the sample exactly); anything
else is represented by its projection coefficients.  Every ``n_batch``
samples the attached trainer takes a descent step on the projected data,
and a patience counter on the validation error stops further dictionary
growth once progress stalls.  The pass returns the projector
W = D (D^T D)^{-1} D^T, computed through a QR factorization that is updated
incrementally as columns arrive - never through an explicit inverse, whose
normal-equations form is numerically fragile.

W is symmetric and idempotent and fixes exactly the dictionary's column
space, which is what makes releasing it to clients safe: it exposes the
subspace and nothing else.

Magnitude pruning zeroes the smallest weights per layer and re-trains the
surviving ones; the resulting mask is public and lets the compiler skip
the pruned connections entirely.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fixedpt import LayerSpec, ModelDescriptor, encode_array

log = logging.getLogger(__name__)

REL_TOL = 1e-9


class DimMismatch(ValueError):
    pass


@dataclass
class ProjectionConfig:
    gamma: float = 0.3
    patience: int = 50
    n_batch: int = 32

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.patience < 1 or self.n_batch < 1:
            raise ValueError("patience and n_batch must be >= 1")


@dataclass
class ProjectionModel:
    D: np.ndarray                     # m x l dictionary
    C: np.ndarray                     # l x N coefficients
    W: np.ndarray                     # m x m projector
    epsilon_report: float             # achieved ||A - DC||_F / ||A||_F

    @property
    def l(self) -> int:
        return self.D.shape[1]


class _IncrementalQR:
    """Thin QR of the dictionary, grown one column at a time with
    re-orthogonalization (twice is enough) for stability."""

    def __init__(self, m: int):
        self.q = np.zeros((m, 0))
        self.r_diag: list[np.ndarray] = []   # columns of R, upper triangular

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    def try_append(self, col: np.ndarray) -> bool:
        """Returns False when the column is numerically inside the span."""
        c1 = self.q.T @ col
        resid = col - self.q @ c1
        c2 = self.q.T @ resid
        resid = resid - self.q @ c2
        norm = np.linalg.norm(resid)
        if norm <= 1e-12 * max(1.0, np.linalg.norm(col)):
            return False
        self.q = np.column_stack([self.q, resid / norm])
        self.r_diag.append(np.concatenate([c1 + c2, [norm]]))
        return True

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        """Least-squares coefficients against the dictionary columns."""
        l = self.rank
        r = np.zeros((l, l))
        for j, colr in enumerate(self.r_diag):
            r[:j + 1, j] = colr
        from scipy.linalg import solve_triangular
        return solve_triangular(r, self.q.T @ x)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.q @ (self.q.T @ x)


def build_projection(A: np.ndarray, labels: np.ndarray, cfg: ProjectionConfig,
                     trainer) -> tuple[ProjectionModel, object]:
    """Streaming dictionary construction with interleaved re-training.

    ``A`` holds one training sample per column.  ``trainer`` must provide
    ``update(batch_columns, batch_labels)`` and ``validation_error()``;
    batches arrive as reconstructed (projected) samples in the original
    space, which is exactly what the deployed network will see after the
    client-side projection.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n_tr = A.shape
    qr = _IncrementalQR(m)
    d_cols: list[np.ndarray] = []
    # per sample: ("append", slot, scale) | ("proj", coefs) | ("skip",)
    records: list[tuple] = []
    delta_best = 1.0
    delta = 1.0
    itr = 0
    batch_idx: list[int] = []

    for i in range(n_tr):
        a_i = A[:, i]
        norm = float(np.linalg.norm(a_i))
        if norm == 0.0:
            log.warning("sample %d has zero norm; skipped", i)
            records.append(("skip",))
            continue
        if qr.rank == 0:
            v_p = 1.0
        else:
            v_p = float(np.linalg.norm(qr.project(a_i) - a_i)) / norm

        if delta <= delta_best:
            delta_best = delta
            itr = 0
        else:
            itr += 1

        scale = math.sqrt(norm)
        if v_p > cfg.gamma and itr < cfg.patience and qr.try_append(a_i / scale):
            d_cols.append(a_i / scale)
            records.append(("append", qr.rank - 1, scale))
        else:
            # represented in the current span (or numerically rank-deficient)
            records.append(("proj", qr.coefficients(a_i) if qr.rank
                            else np.zeros(0)))

        batch_idx.append(i)
        if len(batch_idx) == cfg.n_batch:
            _train_step(trainer, A, batch_idx, qr, labels)
            delta = trainer.validation_error()
            batch_idx = []

    if batch_idx:
        _train_step(trainer, A, batch_idx, qr, labels)
        delta = trainer.validation_error()

    l = qr.rank
    D = (np.column_stack(d_cols) if d_cols else np.zeros((m, 0)))
    C = np.zeros((l, n_tr))
    for i, rec in enumerate(records):
        if rec[0] == "append":
            C[rec[1], i] = rec[2]
        elif rec[0] == "proj":
            C[:len(rec[1]), i] = rec[1]
    W = qr.q @ qr.q.T
    recon = D @ C if l else np.zeros_like(A)
    eps = float(np.linalg.norm(A - recon) / max(np.linalg.norm(A), 1e-300))
    return ProjectionModel(D=D, C=C, W=W, epsilon_report=eps), trainer


def _train_step(trainer, A, batch_idx, qr, labels):
    cols = [qr.project(A[:, i]) if qr.rank else np.zeros(A.shape[0])
            for i in batch_idx]
    trainer.update(np.column_stack(cols), np.asarray(labels)[batch_idx])


def project(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != W.shape[0]:
        raise DimMismatch(f"vector of {x.shape[0]} against projector of {W.shape[0]}")
    return W @ x


def project_quantized(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Projection followed by the fixed-point encoding the circuit consumes."""
    return encode_array(project(x, W))


def verify_projector(W: np.ndarray, D: np.ndarray) -> dict:
    """Algebraic checks that W is the orthogonal projector onto span(D):
    symmetry, idempotency, fixing D, and matching ranks."""
    W = np.asarray(W, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    w_norm = max(np.linalg.norm(W), 1e-300)
    sym = np.linalg.norm(W.T - W) / w_norm
    idem = np.linalg.norm(W @ W - W) / w_norm
    if D.size:
        fix = np.linalg.norm(W @ D - D) / max(np.linalg.norm(D), 1e-300)
        rank_d = int(np.linalg.matrix_rank(D, tol=None))
    else:
        fix = 0.0
        rank_d = 0
    svals = np.linalg.svd(W, compute_uv=False)
    rank_w = int((svals > 1e-9 * max(svals[0], 1e-300)).sum()) if svals.size else 0
    report = {
        "symmetry": sym, "idempotency": idem, "fixes_dictionary": fix,
        "rank_w": rank_w, "rank_d": rank_d,
        "passed": bool(sym <= REL_TOL and idem <= REL_TOL and fix <= REL_TOL
                       and rank_w == rank_d),
    }
    return report


# ---------------------------------------------------------------------------
# Magnitude pruning


def magnitude_prune(model, fraction: float | None = None,
                    threshold: float | None = None):
    """Per-layer keep-masks zeroing the smallest-magnitude weights.

    With ``fraction`` f, exactly ceil(f * n) weights go per layer; with
    ``threshold`` t, weights with |w| < t go.  Returns (masked model, masks).
    Weights here are float parameters (a trainer state) or a quantized
    descriptor; both expose .layers with .weights.
    """
    if (fraction is None) == (threshold is None):
        raise ValueError("give exactly one of fraction or threshold")
    if fraction is not None and not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    if threshold is not None and threshold < 0:
        raise ValueError("threshold must be >= 0")

    from .fixedpt import decode_array
    masks = {}
    for idx, layer in enumerate(model.layers):
        if layer.kind != "FullyConnected" or layer.weights is None:
            continue
        mag = np.abs(decode_array(layer.weights))
        flat = mag.reshape(-1)
        if fraction is not None:
            k = math.ceil(fraction * flat.size)
            keep = np.ones(flat.size, dtype=bool)
            if k:
                order = np.argsort(flat, kind="stable")
                keep[order[:k]] = False
        else:
            keep = flat >= threshold
        if keep.all():
            continue
        masks[idx] = keep.reshape(layer.weights.shape)
    from .compiler import apply_sparsity
    return apply_sparsity(model, masks), masks


# ---------------------------------------------------------------------------
# Minimal fully-connected trainer (fills the re-training hooks at desk scale)


@dataclass
class TrainerState:
    delta: float = 1.0
    delta_best: float = 1.0
    itr: int = 0


class MinimalTrainer:
    """Plain mini-batch gradient descent on softmax cross-entropy for a
    small fully-connected network, double precision throughout; quantization
    happens only when the parameters are exported to a model descriptor."""

    def __init__(self, sizes, lr=0.05, seed=0, activation="tanh",
                 val_data=None, val_labels=None):
        rng = np.random.default_rng(seed)
        self.sizes = list(sizes)
        self.lr = lr
        self.activation = activation
        self.weights = [rng.normal(0, 1.0 / np.sqrt(a), (b, a))
                        for a, b in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(b) for b in sizes[1:]]
        self.val_data = val_data
        self.val_labels = val_labels
        self.state = TrainerState()
        self.masks = None   # optional per-layer keep masks for pruned re-training

    # -- forward / backward ------------------------------------------------

    def _act(self, x):
        if self.activation == "tanh":
            return np.tanh(x)
        return np.maximum(0.0, x)

    def _act_grad(self, x):
        if self.activation == "tanh":
            return 1.0 - np.tanh(x) ** 2
        return (x > 0).astype(np.float64)

    def forward(self, X):
        """X: (m, batch) columns; returns class scores (k, batch)."""
        a = np.asarray(X, dtype=np.float64)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = self._act(w @ a + b[:, None])
        return self.weights[-1] @ a + self.biases[-1][:, None]

    def loss_and_grads(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        acts = [X]
        pre = []
        a = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = w @ a + b[:, None]
            pre.append(z)
            a = self._act(z)
            acts.append(a)
        scores = self.weights[-1] @ a + self.biases[-1][:, None]
        scores = scores - scores.max(axis=0, keepdims=True)
        expv = np.exp(scores)
        probs = expv / expv.sum(axis=0, keepdims=True)
        n = X.shape[1]
        loss = -np.log(probs[y, np.arange(n)] + 1e-300).mean()

        grad = probs.copy()
        grad[y, np.arange(n)] -= 1.0
        grad /= n
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        gw[-1] = grad @ acts[-1].T
        gb[-1] = grad.sum(axis=1)
        delta = self.weights[-1].T @ grad
        for li in range(len(self.weights) - 2, -1, -1):
            delta = delta * self._act_grad(pre[li])
            gw[li] = delta @ acts[li].T
            gb[li] = delta.sum(axis=1)
            if li:
                delta = self.weights[li].T @ delta
        return loss, gw, gb

    def update(self, X, y):
        """One descent step on a batch (the re-training hook)."""
        _loss, gw, gb = self.loss_and_grads(X, y)
        for li in range(len(self.weights)):
            step = self.lr * gw[li]
            if self.masks is not None and li in self.masks:
                step = step * self.masks[li]
            self.weights[li] -= step
            self.biases[li] -= self.lr * gb[li]
        return self

    def validation_error(self) -> float:
        if self.val_data is None:
            return self.state.delta
        pred = self.forward(self.val_data).argmax(axis=0)
        err = float((pred != np.asarray(self.val_labels)).mean())
        self.state.delta = err
        if err <= self.state.delta_best:
            self.state.delta_best = err
            self.state.itr = 0
        else:
            self.state.itr += 1
        return err

    def accuracy(self, X, y) -> float:
        pred = self.forward(X).argmax(axis=0)
        return float((pred == np.asarray(y)).mean())

    # -- export -------------------------------------------------------------

    def export_model(self, name="trained", activation_tag="tanh_pl") -> ModelDescriptor:
        """Quantize parameters to the circuit's number format."""
        layers = []
        n_layers = len(self.weights)
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            mask = None
            if self.masks is not None and li in self.masks:
                mask = self.masks[li].astype(bool)
            qw = encode_array(w)
            if mask is not None:
                qw = np.where(mask, qw, 0)
            layers.append(LayerSpec("FullyConnected",
                                    {"in": w.shape[1], "out": w.shape[0]},
                                    weights=qw, bias=encode_array(b), mask=mask))
            if li < n_layers - 1:
                layers.append(LayerSpec("NonLinearity", {"size": w.shape[0]},
                                        activation=activation_tag))
        return ModelDescriptor(name, layers, (self.sizes[0],))


def retrain_pruned(trainer: MinimalTrainer, masks: dict[int, np.ndarray],
                   model: ModelDescriptor, X, y, epochs: int, batch: int = 32,
                   seed: int = 0) -> MinimalTrainer:
    """Re-train surviving weights after pruning; pruned entries stay zero.

    ``masks`` is keyed by model-descriptor layer index; the corresponding
    trainer layer is that layer's rank among the fully-connected layers.
    """
    fc_rank = {}
    rank = 0
    for idx, layer in enumerate(model.layers):
        if layer.kind == "FullyConnected":
            fc_rank[idx] = rank
            rank += 1
    trainer.masks = {fc_rank[idx]: np.asarray(m, dtype=np.float64)
                     for idx, m in masks.items()}
    for li, m in trainer.masks.items():
        trainer.weights[li] *= m
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[1]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch):
            sel = order[lo:lo + batch]
            trainer.update(X[:, sel], y[sel])
    return trainer
