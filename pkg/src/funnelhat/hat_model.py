"""Transducer with a blank-factored joint network.

At each lattice point (t, u) the joint emits a Bernoulli blank
probability b and a separate label distribution; the probability of a
non-blank symbol y is (1 - b) * softmax(labels)[y], so blank and label
mass always sum to one.  The sequence loss marginalizes over all
monotone alignments with the usual forward recursion, finishing with a
mandatory blank on the last frame.

Two prediction networks are provided: a truncated-history network that
embeds the last N emitted labels (N = 2 by default, so it behaves like
a learned bigram table), and a recurrent one (stacked LSTM) that sees
the full history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncodedSequence, Encoder, EncoderConfig
from .errors import ConfigError, ShapeError
from .numerics import (
    ParamSet,
    Tensor,
    accum,
    concat,
    from_op,
    log_softmax,
    matmul,
    no_grad,
    reshape,
    sigmoid,
    softmax,
    softplus,
    stack_scalars,
    take_last_axis,
    take_rows,
    tanh,
)
from .numerics.tensor import _sigmoid_np


@dataclass(frozen=True)
class PredNetConfig:
    """Prediction-network choice: "embedding_n" or "recurrent"."""

    kind: str = "embedding_n"
    context: int = 2
    embed_dim: int = 64
    hidden: int = 64
    layers: int = 2

    def __post_init__(self):
        if self.kind not in ("embedding_n", "recurrent"):
            raise ConfigError(f"unknown prediction network kind {self.kind!r}")
        if self.context < 1:
            raise ConfigError("context must be >= 1")
        if self.embed_dim < 1 or self.hidden < 1 or self.layers < 1:
            raise ConfigError("embed_dim, hidden and layers must be >= 1")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    prednet: PredNetConfig
    vocab: int
    feature_dim: int
    joint_dim: int = 128

    def __post_init__(self):
        if self.vocab < 1:
            raise ConfigError("vocab must be >= 1")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.joint_dim < 1:
            raise ConfigError("joint_dim must be >= 1")


@dataclass
class HatOutput:
    """Joint output at one lattice point, in the probability domain."""

    blank_prob: float
    label_probs: np.ndarray


class EmbeddingPredNet:
    """Feed-forward prediction network over the last ``context`` labels.

    History slots before the first label hold a dedicated start symbol
    (id = vocab).  The output is a linear map of the concatenated
    embeddings, so two histories agreeing on their last ``context``
    labels are indistinguishable by construction.
    """

    def __init__(self, params: ParamSet, name: str, config: PredNetConfig, vocab: int):
        self.context = config.context
        self.vocab = vocab
        self.out_dim = config.embed_dim
        self.embed = params.create(f"{name}.embed", (vocab + 1, config.embed_dim), "weight")
        self.w = params.create(
            f"{name}.proj.w", (config.context * config.embed_dim, config.embed_dim), "weight"
        )
        self.b = params.create(f"{name}.proj.b", (config.embed_dim,), "bias")

    def _history_ids(self, labels: tuple[int, ...]) -> np.ndarray:
        """(U+1, context) int matrix; row u is the history after u labels."""
        start = self.vocab
        padded = [start] * self.context + list(labels)
        return np.array(
            [padded[u : u + self.context] for u in range(len(labels) + 1)], dtype=np.int64
        )

    def unroll(self, labels: tuple[int, ...]) -> Tensor:
        ids = self._history_ids(labels)
        u1 = ids.shape[0]
        rows = take_rows(self.embed, ids.reshape(-1))
        flat = reshape(rows, (u1, self.context * self.embed.shape[1]))
        return matmul(flat, self.w) + self.b

    # numpy fast path used by the decoder; state is the history tuple

    def initial_np(self) -> tuple[int, ...]:
        return (self.vocab,) * self.context

    def advance_np(self, state: tuple[int, ...], label: int) -> tuple[int, ...]:
        return state[1:] + (label,)

    def output_np(self, state: tuple[int, ...]) -> np.ndarray:
        flat = self.embed.data[list(state)].reshape(-1)
        return flat @ self.w.data + self.b.data


class RecurrentPredNet:
    """Stacked LSTM prediction network; the output is the top hidden state."""

    def __init__(self, params: ParamSet, name: str, config: PredNetConfig, vocab: int):
        self.vocab = vocab
        self.hidden = config.hidden
        self.layers = config.layers
        self.out_dim = config.hidden
        self.embed = params.create(f"{name}.embed", (vocab + 1, config.embed_dim), "weight")
        self.cells = []
        d_in = config.embed_dim
        for i in range(config.layers):
            wx = params.create(f"{name}.l{i}.wx", (d_in, 4 * config.hidden), "weight")
            wh = params.create(f"{name}.l{i}.wh", (config.hidden, 4 * config.hidden), "weight")
            b = params.create(f"{name}.l{i}.b", (4 * config.hidden,), "bias")
            if b is not None:
                b.data[config.hidden : 2 * config.hidden] = 1.0  # open forget gates
            self.cells.append((wx, wh, b))
            d_in = config.hidden

    def _step(self, x: Tensor, state: list[tuple[Tensor, Tensor]]):
        new_state = []
        h_in = x
        n = self.hidden
        for (wx, wh, b), (h, c) in zip(self.cells, state):
            z = matmul(h_in, wx) + matmul(h, wh) + b
            i = sigmoid(z[:, :n])
            f = sigmoid(z[:, n : 2 * n])
            g = tanh(z[:, 2 * n : 3 * n])
            o = sigmoid(z[:, 3 * n :])
            c2 = f * c + i * g
            h2 = o * tanh(c2)
            new_state.append((h2, c2))
            h_in = h2
        return h_in, new_state

    def unroll(self, labels: tuple[int, ...]) -> Tensor:
        state = [
            (Tensor(np.zeros((1, self.hidden))), Tensor(np.zeros((1, self.hidden))))
            for _ in range(self.layers)
        ]
        rows = [Tensor(np.zeros((1, self.hidden)))]
        for y in labels:
            x = take_rows(self.embed, np.array([y], dtype=np.int64))
            h, state = self._step(x, state)
            rows.append(h)
        return concat(rows, axis=0)

    # numpy fast path; state is a list of (h, c) vectors per layer

    def initial_np(self) -> list[tuple[np.ndarray, np.ndarray]]:
        z = np.zeros(self.hidden)
        return [(z, z) for _ in range(self.layers)]

    def advance_np(self, state, label: int):
        x = self.embed.data[label]
        n = self.hidden
        new_state = []
        for (wx, wh, b), (h, c) in zip(self.cells, state):
            z = x @ wx.data + h @ wh.data + b.data
            i = _sigmoid_np(z[:n])
            f = _sigmoid_np(z[n : 2 * n])
            g = np.tanh(z[2 * n : 3 * n])
            o = _sigmoid_np(z[3 * n :])
            c = f * c + i * g
            x = o * np.tanh(c)
            new_state.append((x, c))
        return new_state

    def output_np(self, state) -> np.ndarray:
        return state[-1][0]


def build_prednet(params: ParamSet, name: str, config: PredNetConfig, vocab: int):
    if config.kind == "embedding_n":
        return EmbeddingPredNet(params, name, config, vocab)
    return RecurrentPredNet(params, name, config, vocab)


class JointNetwork:
    """Additive tanh combination of one encoder frame and one prediction vector.

    The blank head is a single logit squashed to a Bernoulli
    probability; label logits are normalized separately and scaled by
    the remaining (1 - blank) mass.
    """

    def __init__(self, params: ParamSet, name: str, enc_dim: int, pred_dim: int, joint_dim: int, vocab: int):
        self.vocab = vocab
        self.joint_dim = joint_dim
        self.we = params.create(f"{name}.enc.w", (enc_dim, joint_dim), "weight")
        self.wp = params.create(f"{name}.pred.w", (pred_dim, joint_dim), "weight")
        self.bj = params.create(f"{name}.bias", (joint_dim,), "bias")
        self.wb = params.create(f"{name}.blank.w", (joint_dim, 1), "weight")
        self.bb = params.create(f"{name}.blank.b", (1,), "bias")
        self.wl = params.create(f"{name}.label.w", (joint_dim, vocab), "weight")
        self.bl = params.create(f"{name}.label.b", (vocab,), "bias")

    def logits(self, enc: Tensor, pred: Tensor) -> tuple[Tensor, Tensor]:
        """Row-wise joint: enc (n, m) with pred (n, p) -> blank (n, 1), labels (n, V)."""
        j = tanh(matmul(enc, self.we) + matmul(pred, self.wp) + self.bj)
        return matmul(j, self.wb) + self.bb, matmul(j, self.wl) + self.bl

    def lattice_logits(self, enc: Tensor, preds: Tensor) -> tuple[Tensor, Tensor]:
        """Full (T, U+1) lattice: blank logits (T, U+1) and label logits (T, U+1, V)."""
        t = enc.shape[0]
        u1 = preds.shape[0]
        j = tanh(
            reshape(matmul(enc, self.we), (t, 1, self.joint_dim))
            + reshape(matmul(preds, self.wp), (1, u1, self.joint_dim))
            + self.bj
        )
        flat = reshape(j, (t * u1, self.joint_dim))
        zb = reshape(matmul(flat, self.wb) + self.bb, (t, u1))
        zl = reshape(matmul(flat, self.wl) + self.bl, (t, u1, self.vocab))
        return zb, zl

    def output(self, enc_frame: np.ndarray, pred_vec: np.ndarray) -> HatOutput:
        """Probability-domain view of one lattice point."""
        with no_grad():
            zb, zl = self.logits(
                Tensor(enc_frame.reshape(1, -1)), Tensor(pred_vec.reshape(1, -1))
            )
        b = float(_sigmoid_np(zb.data.reshape(())[None])[0])
        exp_l = np.exp(zl.data.reshape(-1) - zl.data.max())
        return HatOutput(b, (1.0 - b) * exp_l / exp_l.sum())


def transducer_nll(log_blank: Tensor, log_label: Tensor) -> Tensor:
    """Negative log of the total alignment probability.

    ``log_blank`` is (T, U+1): log P(blank at t with u labels emitted).
    ``log_label`` is (T, U): log P(reference label u+1 given u emitted).
    Every alignment emits all U labels and T blanks, the last blank on
    the final frame; the forward recursion sums them in log space and
    the gradient is the (negated) lattice occupancy from the matching
    backward recursion.
    """
    lb, ll = log_blank.data, log_label.data
    if lb.ndim != 2 or ll.ndim != 2:
        raise ShapeError("lattice inputs must be 2-D")
    t_len, u1 = lb.shape
    u_len = u1 - 1
    if ll.shape != (t_len, u_len):
        raise ShapeError(f"label lattice {ll.shape} does not match blank lattice {lb.shape}")

    alpha = np.empty((t_len, u1))
    alpha[0, 0] = 0.0
    for u in range(1, u1):
        alpha[0, u] = alpha[0, u - 1] + ll[0, u - 1]
    for t in range(1, t_len):
        alpha[t, 0] = alpha[t - 1, 0] + lb[t - 1, 0]
        for u in range(1, u1):
            alpha[t, u] = np.logaddexp(
                alpha[t - 1, u] + lb[t - 1, u], alpha[t, u - 1] + ll[t, u - 1]
            )
    log_total = alpha[t_len - 1, u_len] + lb[t_len - 1, u_len]

    def bw(g: np.ndarray) -> None:
        scale = float(g.reshape(()))
        beta = np.empty((t_len, u1))
        beta[t_len - 1, u_len] = lb[t_len - 1, u_len]
        for u in range(u_len - 1, -1, -1):
            beta[t_len - 1, u] = ll[t_len - 1, u] + beta[t_len - 1, u + 1]
        for t in range(t_len - 2, -1, -1):
            beta[t, u_len] = lb[t, u_len] + beta[t + 1, u_len]
            for u in range(u_len - 1, -1, -1):
                beta[t, u] = np.logaddexp(lb[t, u] + beta[t + 1, u], ll[t, u] + beta[t, u + 1])
        occ_b = np.zeros((t_len, u1))
        if t_len > 1:
            occ_b[: t_len - 1] = np.exp(alpha[: t_len - 1] + lb[: t_len - 1] + beta[1:] - log_total)
        occ_b[t_len - 1, u_len] = np.exp(alpha[t_len - 1, u_len] + lb[t_len - 1, u_len] - log_total)
        accum(log_blank, -scale * occ_b)
        if u_len > 0:
            occ_l = np.exp(alpha[:, :u_len] + ll + beta[:, 1:] - log_total)
            accum(log_label, -scale * occ_l)

    return from_op(np.array(-log_total), (log_blank, log_label), bw, "transducer_nll")


def edit_distance(a, b) -> int:
    """Token-level Levenshtein distance."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


class HatModel:
    """Encoder, prediction network and joint bundled with their parameters."""

    def __init__(self, config: ModelConfig, params: ParamSet):
        self.config = config
        self.params = params
        self.encoder = Encoder(params, "enc", config.encoder, config.feature_dim)
        self.prednet = build_prednet(params, "pred", config.prednet, config.vocab)
        self.joint = JointNetwork(
            params,
            "joint",
            config.encoder.model_dim,
            self.prednet.out_dim,
            config.joint_dim,
            config.vocab,
        )

    @classmethod
    def build(cls, config: ModelConfig, seed: int) -> "HatModel":
        return cls(config, ParamSet(seed=seed))

    @classmethod
    def count_params(cls, config: ModelConfig) -> int:
        """Parameter count as pure arithmetic; nothing is allocated."""
        shapes = ParamSet(count_only=True)
        cls(config, shapes)
        return shapes.total_count()

    def encode(self, features) -> EncodedSequence:
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim != 2 or x.shape[1] != self.config.feature_dim:
            raise ShapeError(f"features must be (T, {self.config.feature_dim})")
        return self.encoder(x)

    def _check_labels(self, labels) -> tuple[int, ...]:
        labels = tuple(int(y) for y in labels)
        for y in labels:
            if not (0 <= y < self.config.vocab):
                raise ConfigError(f"label {y} outside vocab of {self.config.vocab}")
        return labels

    def lattice_log_probs(self, enc_frames: Tensor, labels: tuple[int, ...]) -> tuple[Tensor, Tensor]:
        """Log blank (T, U+1) and log reference-label (T, U) probabilities."""
        labels = self._check_labels(labels)
        t_len = enc_frames.shape[0]
        u_len = len(labels)
        preds = self.prednet.unroll(labels)
        zb, zl = self.joint.lattice_logits(enc_frames, preds)
        log_b = -softplus(-zb)
        if u_len == 0:
            return log_b, Tensor(np.zeros((t_len, 0)))
        log_not_b = -softplus(zb)
        logsm = log_softmax(zl, axis=-1)
        idx = np.broadcast_to(np.array(labels, dtype=np.int64), (t_len, u_len))[..., None]
        picked = reshape(take_last_axis(logsm[:, :u_len, :], idx), (t_len, u_len))
        return log_b, log_not_b[:, :u_len] + picked

    def hat_loss(self, encoded, labels) -> Tensor:
        """Negative log-likelihood of ``labels`` under the alignment sum."""
        enc = encoded.frames if isinstance(encoded, EncodedSequence) else encoded
        log_b, log_l = self.lattice_log_probs(enc, tuple(labels))
        return transducer_nll(log_b, log_l)

    def mwer_loss(self, encoded, hypotheses, reference, lam: float = 0.03) -> Tensor:
        """Expected extra word errors over an n-best list, centered on the mean.

        Hypothesis posteriors are the softmax of the (negated) sequence
        losses, recomputed differentiably.  The error baseline is the
        posterior-weighted mean, treated as a constant, so the loss
        value is zero by construction while its gradient matches that
        of the expected edit distance.  ``lam`` adds the reference
        sequence loss as a regularizer.
        """
        if not hypotheses:
            raise ConfigError("mwer_loss needs at least one hypothesis")
        reference = tuple(int(y) for y in reference)
        log_probs = [-self.hat_loss(encoded, hyp) for hyp in hypotheses]
        posterior = softmax(stack_scalars(log_probs), axis=0)
        errors = np.array(
            [float(edit_distance(hyp, reference)) for hyp in hypotheses]
        )
        baseline = float(posterior.data @ errors)
        risk = (posterior * Tensor(errors - baseline)).sum()
        if lam == 0.0:
            return risk
        return risk + lam * self.hat_loss(encoded, reference)
