"""Analytic cost model for funnel-reduced encoders and their decoders.

Decoding cost is counted in search steps: the alignment-synchronous
beam needs at most ceil(T_max / f_enc) + U_max steps per utterance, and
measured decoder latency is affine in that count.  Encoder cost is
counted in multiply-accumulates per utterance, split per block into
terms tied to the block's input length (first feed-forward, conv,
key/value projections), terms tied to its output length (query and
output projections, second feed-forward), and the quadratic attention
term.  Units are abstract; calibration against published milliseconds
happens through a least-squares fit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

from . import benchdata
from .encoder import EncoderConfig, parse_shorthand
from .errors import ConfigError, FitError


def decoder_steps(t_max_ms: float, f_enc_ms: float, u_max: int) -> int:
    """Worst-case search steps: one per output frame plus one per allowed label."""
    if t_max_ms <= 0 or f_enc_ms <= 0:
        raise ConfigError("durations must be positive")
    if u_max < 0:
        raise ConfigError("u_max must be >= 0")
    return math.ceil(t_max_ms / f_enc_ms) + u_max


@dataclass(frozen=True)
class EncoderCostModel:
    """Per-block MAC coefficients for a given block architecture."""

    model_dim: int
    conv_kernel: int
    ffn_multiplier: int = 4

    @property
    def per_input_frame(self) -> int:
        d = self.model_dim
        # ffn1 (2 linears at the expansion width), conv module
        # (two pointwise at 2d+d widths plus depthwise taps), k/v projections
        return (2 * self.ffn_multiplier + 3 + 2) * d * d + self.conv_kernel * d

    @property
    def per_output_frame(self) -> int:
        d = self.model_dim
        # q and output projections, ffn2
        return (2 + 2 * self.ffn_multiplier) * d * d

    def block_cost(self, len_in: int, len_out: int) -> int:
        d = self.model_dim
        attention = 2 * len_out * len_in * d  # scores plus context, per head summed
        return len_in * self.per_input_frame + len_out * self.per_output_frame + attention

    def subsample_cost(self, input_frames: int, feature_dim: int, factor: int) -> int:
        d = self.model_dim
        n, d_cur, total = input_frames, feature_dim, 0
        for _ in range(int(math.log2(factor))):
            total += n * 3 * d_cur  # depthwise, 3 taps
            n = -(-n // 2)
            total += n * d_cur * d  # pointwise projection
            d_cur = d
        total += n * d_cur * d  # final projection
        return total


@dataclass
class EncoderCost:
    total: int
    subsample: int
    per_block: list[tuple[int, int, int, int]]  # (layer, len_in, len_out, macs)


def encoder_cost(
    config: EncoderConfig,
    input_frames: int,
    feature_dim: int = benchdata.BENCH_FEATURE_DIM,
) -> EncoderCost:
    """Total encoder MACs for one utterance of ``input_frames`` 10 ms frames."""
    model = EncoderCostModel(config.model_dim, config.conv_kernel, config.ffn_multiplier)
    lengths = config.block_lengths(input_frames)
    sub = model.subsample_cost(input_frames, feature_dim, config.subsample_factor)
    blocks = []
    total = sub
    for layer in range(config.num_blocks):
        macs = model.block_cost(lengths[layer], lengths[layer + 1])
        blocks.append((layer, lengths[layer], lengths[layer + 1], macs))
        total += macs
    return EncoderCost(total, sub, blocks)


@dataclass(frozen=True)
class LatencyFit:
    slope: float
    intercept: float
    r_squared: float

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def fit_latency(xs, ys) -> LatencyFit:
    """Ordinary least squares of measured latency against a cost predictor."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    n = len(xs)
    if n != len(ys):
        raise FitError("x and y lengths differ")
    if n < 2:
        raise FitError("need at least two points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise FitError("constant predictor, slope undefined")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LatencyFit(slope, intercept, r2)


def bench_config(shorthand: str) -> EncoderConfig:
    """Reference-scale encoder with the given stride schedule."""
    return EncoderConfig(
        num_blocks=benchdata.BENCH_NUM_BLOCKS,
        model_dim=benchdata.BENCH_MODEL_DIM,
        num_heads=benchdata.BENCH_NUM_HEADS,
        conv_kernel=benchdata.BENCH_CONV_KERNEL,
        funnel_placements=parse_shorthand(shorthand, benchdata.BENCH_NUM_BLOCKS),
        subsample_factor=benchdata.BENCH_SUBSAMPLE,
        input_frame_ms=benchdata.BENCH_FRAME_MS,
    )


@dataclass
class CostReport:
    """Analytic costs of one configuration at the reference operating point."""

    config_id: str
    shorthand: str
    funnel_reduction: int
    total_reduction: int
    f_enc_ms: float
    output_frames: int
    decoder_steps: int
    encoder_macs: int

    def row(self) -> dict:
        return asdict(self)


def cost_report(
    config_id: str,
    shorthand: str,
    t_max_ms: float = benchdata.BENCH_TMAX_MS,
    u_max: int = benchdata.BENCH_UMAX,
    input_frames: int = benchdata.BENCH_INPUT_FRAMES,
) -> CostReport:
    config = bench_config(shorthand)
    return CostReport(
        config_id=config_id,
        shorthand=shorthand,
        funnel_reduction=config.funnel_reduction_ratio,
        total_reduction=config.total_reduction_ratio,
        f_enc_ms=config.f_enc_ms,
        output_frames=config.output_length(input_frames),
        decoder_steps=decoder_steps(t_max_ms, config.f_enc_ms, u_max),
        encoder_macs=encoder_cost(config, input_frames).total,
    )


@dataclass
class ReductionReport:
    """Relative savings of a candidate schedule over a baseline, in percent."""

    baseline_steps: int
    candidate_steps: int
    decoder_reduction_pct: float
    baseline_macs: int
    candidate_macs: int
    encoder_reduction_pct: float


def reduction_report(
    baseline: EncoderConfig,
    candidate: EncoderConfig,
    t_max_ms: float = benchdata.BENCH_TMAX_MS,
    u_max: int = benchdata.BENCH_UMAX,
    input_frames: int = benchdata.BENCH_INPUT_FRAMES,
) -> ReductionReport:
    b_steps = decoder_steps(t_max_ms, baseline.f_enc_ms, u_max)
    c_steps = decoder_steps(t_max_ms, candidate.f_enc_ms, u_max)
    b_macs = encoder_cost(baseline, input_frames).total
    c_macs = encoder_cost(candidate, input_frames).total
    return ReductionReport(
        baseline_steps=b_steps,
        candidate_steps=c_steps,
        decoder_reduction_pct=100.0 * (1.0 - c_steps / b_steps),
        baseline_macs=b_macs,
        candidate_macs=c_macs,
        encoder_reduction_pct=100.0 * (1.0 - c_macs / b_macs),
    )


def write_csv(path, reports: list[CostReport]) -> None:
    rows = [r.row() for r in reports]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_json(path, reports: list[CostReport], extra: dict | None = None) -> None:
    payload: dict = {"configs": [r.row() for r in reports]}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
