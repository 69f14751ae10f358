"""Training loop: run configuration, optimizer, schedule, checkpoints."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..decoder import decode_alsync
from ..encoder import EncoderConfig, parse_shorthand
from ..errors import ConfigError, NumericError, TrainingDivergedError
from ..hat_model import HatModel, ModelConfig, PredNetConfig
from ..numerics import ParamSet
from .data import Dataset


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a training run, JSON round-trippable."""

    seed: int
    encoder_shorthand: str = ""
    num_blocks: int = 6
    model_dim: int = 64
    num_heads: int = 4
    conv_kernel: int = 7
    ffn_multiplier: int = 4
    subsample_factor: int = 4
    pred_kind: str = "embedding_n"
    pred_context: int = 2
    pred_layers: int = 2
    pred_hidden: int = 64
    embed_dim: int = 64
    joint_dim: int = 128
    vocab: int = 20
    feature_dim: int = 16
    beam_width: int = 4
    u_max: int = 30
    steps: int = 2000
    batch_size: int = 8
    lr_peak: float = 0.002
    warmup: int = 100
    clip_norm: float = 5.0
    mwer_steps: int = 0
    mwer_nbest: int = 4
    lam_mwer: float = 0.03

    def __post_init__(self):
        if self.steps < 0 or self.mwer_steps < 0:
            raise ConfigError("step counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_peak <= 0 or self.warmup < 1:
            raise ConfigError("lr_peak must be > 0 and warmup >= 1")
        self.model_config()  # validates all architecture fields

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_blocks=self.num_blocks,
            model_dim=self.model_dim,
            num_heads=self.num_heads,
            conv_kernel=self.conv_kernel,
            funnel_placements=parse_shorthand(self.encoder_shorthand, self.num_blocks),
            subsample_factor=self.subsample_factor,
            ffn_multiplier=self.ffn_multiplier,
        )

    def model_config(self) -> ModelConfig:
        prednet = PredNetConfig(
            kind=self.pred_kind,
            context=self.pred_context,
            embed_dim=self.embed_dim,
            hidden=self.pred_hidden,
            layers=self.pred_layers,
        )
        return ModelConfig(
            encoder=self.encoder_config(),
            prednet=prednet,
            vocab=self.vocab,
            feature_dim=self.feature_dim,
            joint_dim=self.joint_dim,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        payload = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown run-config fields: {sorted(unknown)}")
        return cls(**payload)


def build_model(config: RunConfig) -> HatModel:
    return HatModel.build(config.model_config(), seed=config.seed)


def lr_schedule(step: int, peak: float, warmup: int) -> float:
    """Linear warmup to ``peak`` then inverse square-root decay."""
    if step < 1:
        raise ConfigError("schedule steps start at 1")
    return peak * min(step / warmup, math.sqrt(warmup / step))


class AdaptiveOptimizer:
    """Momentum-free update scaled by a running RMS of the gradient."""

    def __init__(self, beta: float = 0.999, eps: float = 1e-8):
        self.beta = beta
        self.eps = eps
        self.t = 0
        self._acc: dict[str, np.ndarray] = {}

    def step(self, params: ParamSet, lr: float, clip_norm: float = 0.0) -> None:
        self.t += 1
        grads = [(name, t) for name, t in params.tensors() if t.grad is not None]
        if clip_norm > 0.0:
            total = math.sqrt(sum(float((t.grad * t.grad).sum()) for _, t in grads))
            if total > clip_norm:
                scale = clip_norm / total
                for _, t in grads:
                    t.grad = t.grad * scale
        correction = 1.0 - self.beta**self.t
        for name, t in grads:
            acc = self._acc.get(name)
            if acc is None:
                acc = np.zeros_like(t.data)
            acc = self.beta * acc + (1.0 - self.beta) * t.grad * t.grad
            self._acc[name] = acc
            t.data = t.data - lr * t.grad / (np.sqrt(acc / correction) + self.eps)


@dataclass
class TrainResult:
    losses: list[tuple[int, float]] = field(default_factory=list)
    checkpoint: Path | None = None
    seconds: float = 0.0


def train(
    config: RunConfig,
    dataset: Dataset,
    out_path=None,
    log_every: int = 50,
    progress=None,
) -> tuple[HatModel, TrainResult]:
    """Minimize the transducer loss over the dataset; optional risk fine-tuning.

    Batches are drawn by cycling a seeded permutation of the dataset.
    A non-finite loss aborts with ``TrainingDivergedError`` carrying
    the step at which it happened.
    """
    model = build_model(config)
    opt = AdaptiveOptimizer()
    order_rng = np.random.default_rng((config.seed, 777))
    order = order_rng.permutation(len(dataset))
    cursor = 0
    result = TrainResult()
    start = time.monotonic()

    def next_batch():
        nonlocal cursor, order
        batch = []
        for _ in range(config.batch_size):
            if cursor == len(order):
                order = order_rng.permutation(len(dataset))
                cursor = 0
            batch.append(dataset[int(order[cursor])])
            cursor += 1
        return batch

    for step_no in range(1, config.steps + 1):
        batch = next_batch()
        try:
            total = None
            for frames, labels in batch:
                loss = model.hat_loss(model.encode(frames), labels)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            value = total.item()
            if not math.isfinite(value):
                raise NumericError("loss is not finite")
            total.backward()
        except NumericError as err:
            raise TrainingDivergedError(
                f"diverged at step {step_no}/{config.steps}: {err}"
            ) from err
        opt.step(model.params, lr_schedule(step_no, config.lr_peak, config.warmup), config.clip_norm)
        model.params.zero_grads()
        if step_no % log_every == 0 or step_no == config.steps:
            result.losses.append((step_no, value))
            if progress:
                progress(f"step {step_no}/{config.steps} loss {value:.4f}")

    for step_no in range(1, config.mwer_steps + 1):
        batch = next_batch()
        try:
            total = None
            for frames, labels in batch:
                encoded = model.encode(frames)
                hyps = [h for h, _ in decode_alsync(
                    model, encoded, config.beam_width, config.u_max, nbest=config.mwer_nbest
                ).nbest]
                loss = model.mwer_loss(encoded, hyps, labels, lam=config.lam_mwer)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            value = total.item()
            if not math.isfinite(value):
                raise NumericError("loss is not finite")
            total.backward()
        except NumericError as err:
            raise TrainingDivergedError(
                f"diverged during risk tuning at step {step_no}: {err}"
            ) from err
        opt.step(model.params, lr_schedule(config.steps + step_no, config.lr_peak, config.warmup),
                 config.clip_norm)
        model.params.zero_grads()
        if progress and (step_no % log_every == 0 or step_no == config.mwer_steps):
            progress(f"risk step {step_no}/{config.mwer_steps} loss {value:.4f}")

    result.seconds = time.monotonic() - start
    if out_path is not None:
        result.checkpoint = save_checkpoint(out_path, model, config)
    return model, result


def save_checkpoint(path, model: HatModel, config: RunConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = model.params.state_dict()
    np.savez(path, __config__=np.array(config.to_json()), **arrays)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_checkpoint(path) -> tuple[HatModel, RunConfig]:
    with np.load(path, allow_pickle=False) as archive:
        config = RunConfig.from_json(str(archive["__config__"]))
        state = {k: archive[k] for k in archive.files if k != "__config__"}
    model = build_model(config)
    model.params.load_state(state)
    return model, config
