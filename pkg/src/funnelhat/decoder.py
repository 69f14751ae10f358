"""Beam search over the transducer lattice, one symbol per step.

Every search step extends each live hypothesis by exactly one symbol,
blank or label, so all live hypotheses always share the same alignment
length t + u.  A hypothesis finishes when it consumes a blank on the
last encoder frame; finished hypotheses keep their frozen score and
keep competing for beam slots.  The search stops as soon as the best
hypothesis is finished, which bounds the step count by T + U_max.

A frame-synchronous variant and a brute-force enumerator over tiny
instances are included as cross-checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .encoder import EncodedSequence
from .errors import ConfigError
from .hat_model import HatModel
from .numerics.tensor import _sigmoid_np


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """One partial transcript: t frames consumed, labels emitted so far.

    ``state`` carries the prediction-network payload plus its cached
    joint-space projection; it is shared, never mutated.
    """

    t: int
    labels: tuple[int, ...]
    score: float
    state: Any
    finished: bool = False


@dataclass
class Beam:
    hyps: list[Hypothesis]
    steps: int = 0

    def best(self) -> Hypothesis:
        return self.hyps[0]


@dataclass(frozen=True, eq=False)
class _State:
    payload: Any
    proj: np.ndarray  # prediction vector already mapped into joint space


class Scorer:
    """Per-utterance numpy fast path for joint scores during search."""

    def __init__(self, model: HatModel, encoded: EncodedSequence):
        joint = model.joint
        self.prednet = model.prednet
        self.vocab = model.config.vocab
        frames = encoded.frames.data
        self.t_len = frames.shape[0]
        self.enc_proj = frames @ joint.we.data  # (T, joint_dim)
        self.pred_proj = joint.wp.data
        self.bj = joint.bj.data
        self.wb = joint.wb.data.reshape(-1)
        self.bb = float(joint.bb.data[0])
        self.wl = joint.wl.data
        self.bl = joint.bl.data

    def initial_state(self) -> _State:
        payload = self.prednet.initial_np()
        return _State(payload, self._project(payload))

    def advance(self, state: _State, label: int) -> _State:
        payload = self.prednet.advance_np(state.payload, label)
        return _State(payload, self._project(payload))

    def _project(self, payload) -> np.ndarray:
        return self.prednet.output_np(payload) @ self.pred_proj

    def log_probs(self, t: int, state: _State) -> tuple[float, np.ndarray]:
        """Log blank probability and per-label log probabilities at frame t."""
        j = np.tanh(self.enc_proj[t] + state.proj + self.bj)
        zb = float(j @ self.wb + self.bb)
        log_blank = -np.logaddexp(0.0, -zb)
        log_not_blank = -np.logaddexp(0.0, zb)
        zl = j @ self.wl + self.bl
        shifted = zl - zl.max()
        log_sm = shifted - np.log(np.exp(shifted).sum())
        return log_blank, log_not_blank + log_sm


def step(beam: Beam, scorer: Scorer, beam_width: int, u_max: int) -> Beam:
    """Advance every live hypothesis by one symbol and prune to the beam width.

    Each unfinished hypothesis proposes one blank extension and, unless
    it already holds ``u_max`` labels, one extension per label.
    Finished hypotheses are carried unchanged.  Candidates that land on
    the same (frames consumed, labels) state are recombined keeping the
    best score; the future of a hypothesis depends only on that state,
    so recombination is lossless.  Survivors are the top ``beam_width``
    states by score, ties broken by label sequence.
    """
    if beam_width < 1:
        raise ConfigError("beam width must be >= 1")
    candidates: list[tuple[float, tuple[int, ...], int, int, int | None]] = []
    for i, hyp in enumerate(beam.hyps):
        if hyp.finished:
            candidates.append((hyp.score, hyp.labels, hyp.t, i, None))
            continue
        log_blank, log_labels = scorer.log_probs(hyp.t, hyp.state)
        candidates.append((hyp.score + log_blank, hyp.labels, hyp.t + 1, i, -1))
        if len(hyp.labels) < u_max:
            for y in range(scorer.vocab):
                candidates.append(
                    (hyp.score + log_labels[y], hyp.labels + (y,), hyp.t, i, y)
                )

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    survivors: list[Hypothesis] = []
    seen: set[tuple[int, tuple[int, ...]]] = set()
    for score, labels, t_next, i, symbol in candidates:
        if len(survivors) == beam_width:
            break
        if (t_next, labels) in seen:
            continue
        seen.add((t_next, labels))
        parent = beam.hyps[i]
        if symbol is None:
            survivors.append(parent)
        elif symbol == -1:
            survivors.append(
                Hypothesis(
                    parent.t + 1,
                    parent.labels,
                    score,
                    parent.state,
                    finished=parent.t + 1 == scorer.t_len,
                )
            )
        else:
            survivors.append(
                Hypothesis(parent.t, labels, score, scorer.advance(parent.state, symbol), False)
            )

    out = Beam(survivors, beam.steps + 1)
    for hyp in out.hyps:
        assert hyp.finished or hyp.t + len(hyp.labels) == out.steps, "alignment length drifted"
    return out


@dataclass
class DecodeResult:
    """Deduplicated n-best label sequences, best first, plus the step count."""

    nbest: list[tuple[tuple[int, ...], float]]
    steps: int

    @property
    def best(self) -> tuple[int, ...]:
        return self.nbest[0][0]


def _collect_nbest(hyps: list[Hypothesis], limit: int) -> list[tuple[tuple[int, ...], float]]:
    ranked = sorted(hyps, key=lambda h: (-h.score, h.labels))
    seen: set[tuple[int, ...]] = set()
    out = []
    for h in ranked:
        if h.labels in seen:
            continue
        seen.add(h.labels)
        out.append((h.labels, h.score))
        if len(out) == limit:
            break
    return out


def decode_alsync(
    model: HatModel,
    encoded: EncodedSequence,
    beam_width: int,
    u_max: int,
    nbest: int | None = None,
) -> DecodeResult:
    """Alignment-synchronous beam search over one encoded utterance."""
    if u_max < 0:
        raise ConfigError("u_max must be >= 0")
    scorer = Scorer(model, encoded)
    beam = Beam([Hypothesis(0, (), 0.0, scorer.initial_state())])
    bound = scorer.t_len + u_max
    while not beam.best().finished:
        assert beam.steps < bound, "search exceeded its alignment-length bound"
        beam = step(beam, scorer, beam_width, u_max)
    finished = [h for h in beam.hyps if h.finished]
    return DecodeResult(_collect_nbest(finished, nbest or beam_width), beam.steps)


def decode_framesync(
    model: HatModel,
    encoded: EncodedSequence,
    beam_width: int,
    u_max: int,
    expansion_cap: int = 8,
    nbest: int | None = None,
) -> DecodeResult:
    """Frame-synchronous beam search: all hypotheses advance one frame together.

    Within a frame, up to ``expansion_cap`` label emissions per
    hypothesis are explored before the frame's blank is taken.  Kept as
    a cross-check; the step count of the alignment-synchronous search
    is what the cost model describes.
    """
    if expansion_cap < 1:
        raise ConfigError("expansion_cap must be >= 1")
    scorer = Scorer(model, encoded)
    pool = [Hypothesis(0, (), 0.0, scorer.initial_state())]
    for t in range(scorer.t_len):
        active = pool
        blanked: list[Hypothesis] = []
        for round_no in range(expansion_cap + 1):
            scored = [(h,) + scorer.log_probs(t, h.state) for h in active]
            for h, log_blank, _ in scored:
                blanked.append(
                    Hypothesis(
                        t + 1, h.labels, h.score + log_blank, h.state, finished=t + 1 == scorer.t_len
                    )
                )
            if round_no == expansion_cap:
                break
            extensions: list[tuple[float, tuple[int, ...], Hypothesis, int]] = []
            for h, _, log_labels in scored:
                if len(h.labels) >= u_max:
                    continue
                for y in range(scorer.vocab):
                    extensions.append((h.score + log_labels[y], h.labels + (y,), h, y))
            extensions.sort(key=lambda c: (-c[0], c[1]))
            active = [
                Hypothesis(t, labels, score, scorer.advance(h.state, y), False)
                for score, labels, h, y in extensions[:beam_width]
            ]
            if not active:
                break
        blanked.sort(key=lambda h: (-h.score, h.labels))
        pool = blanked[:beam_width]
    return DecodeResult(_collect_nbest(pool, nbest or beam_width), scorer.t_len)


@dataclass
class ExhaustiveResult:
    """Viterbi and alignment-sum optima over every label sequence."""

    best_viterbi: tuple[tuple[int, ...], float]
    best_sum: tuple[tuple[int, ...], float]
    scores: dict[tuple[int, ...], tuple[float, float]] = field(repr=False, default_factory=dict)


_EXHAUSTIVE_LIMITS = (6, 4, 4)  # max frames, max labels, max vocab


def decode_exhaustive(model: HatModel, encoded: EncodedSequence, u_max: int) -> ExhaustiveResult:
    """Score every label sequence up to length ``u_max`` by full enumeration.

    Intractable except on tiny instances, so the admissible sizes are
    hard-capped.  For each sequence both the single best alignment
    (Viterbi) and the sum over all alignments are computed with the
    exact same per-point scores the beam search sees.
    """
    scorer = Scorer(model, encoded)
    t_len, vocab = scorer.t_len, scorer.vocab
    max_t, max_u, max_v = _EXHAUSTIVE_LIMITS
    if t_len > max_t or u_max > max_u or vocab > max_v:
        raise ConfigError(
            f"exhaustive decode capped at T<={max_t}, u_max<={max_u}, vocab<={max_v}; "
            f"got T={t_len}, u_max={u_max}, vocab={vocab}"
        )

    scores: dict[tuple[int, ...], tuple[float, float]] = {}
    for u_len in range(u_max + 1):
        for seq in itertools.product(range(vocab), repeat=u_len):
            states = [scorer.initial_state()]
            for y in seq:
                states.append(scorer.advance(states[-1], y))
            lb = np.empty((t_len, u_len + 1))
            ll = np.empty((t_len, u_len))
            for t in range(t_len):
                for u in range(u_len + 1):
                    log_blank, log_labels = scorer.log_probs(t, states[u])
                    lb[t, u] = log_blank
                    if u < u_len:
                        ll[t, u] = log_labels[seq[u]]
            vit = np.empty((t_len, u_len + 1))
            tot = np.empty((t_len, u_len + 1))
            vit[0, 0] = tot[0, 0] = 0.0
            for u in range(1, u_len + 1):
                vit[0, u] = vit[0, u - 1] + ll[0, u - 1]
                tot[0, u] = tot[0, u - 1] + ll[0, u - 1]
            for t in range(1, t_len):
                vit[t, 0] = vit[t - 1, 0] + lb[t - 1, 0]
                tot[t, 0] = tot[t - 1, 0] + lb[t - 1, 0]
                for u in range(1, u_len + 1):
                    via_blank = vit[t - 1, u] + lb[t - 1, u]
                    via_label = vit[t, u - 1] + ll[t, u - 1]
                    vit[t, u] = max(via_blank, via_label)
                    tot[t, u] = np.logaddexp(
                        tot[t - 1, u] + lb[t - 1, u], tot[t, u - 1] + ll[t, u - 1]
                    )
            final = lb[t_len - 1, u_len]
            scores[seq] = (vit[t_len - 1, u_len] + final, tot[t_len - 1, u_len] + final)

    by_viterbi = min(scores.items(), key=lambda kv: (-kv[1][0], kv[0]))
    by_sum = min(scores.items(), key=lambda kv: (-kv[1][1], kv[0]))
    return ExhaustiveResult(
        (by_viterbi[0], by_viterbi[1][0]), (by_sum[0], by_sum[1][1]), scores
    )


def format_nbest(result: DecodeResult) -> str:
    """One line per hypothesis: rank, score, space-separated label ids."""
    lines = []
    for rank, (labels, score) in enumerate(result.nbest, start=1):
        ids = " ".join(str(y) for y in labels)
        lines.append(f"{rank}\t{score:.6f}\t{ids}")
    return "\n".join(lines)
