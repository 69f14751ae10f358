"""Published latency measurements used to calibrate the cost model.

The reference system is a 16-block, 1536-dim, 8-head conformer
transducer benchmarked on a production ML accelerator: batches of 8
utterances padded to 15.36 s of audio, at most 30 non-blank emissions,
10 ms input features subsampled 4x before the block stack.  All times
are milliseconds per batch.

This package never measures milliseconds of its own; these numbers are
the targets that the analytic step counts and MAC totals are regressed
against and compared to.
"""

from __future__ import annotations

from dataclasses import dataclass

BENCH_NUM_BLOCKS = 16
BENCH_MODEL_DIM = 1536
BENCH_NUM_HEADS = 8
BENCH_CONV_KERNEL = 15
BENCH_FEATURE_DIM = 128
BENCH_SUBSAMPLE = 4
BENCH_FRAME_MS = 10.0
BENCH_INPUT_FRAMES = 1536  # 15.36 s of 10 ms frames
BENCH_TMAX_MS = 15360
BENCH_UMAX = 30


@dataclass(frozen=True)
class LatencyRow:
    config_id: str
    shorthand: str
    f_enc_ms: int
    encoder_ms: int
    decoder_ms: int
    total_ms: int


# Frame-rate sweep: stride-2 funnels added from the top of the stack down.
LATENCY_SWEEP: tuple[LatencyRow, ...] = (
    LatencyRow("B0", "", 40, 144, 526, 670),
    LatencyRow("E1", "s15^2", 80, 142, 280, 423),
    LatencyRow("E2", "s13^2,s15^2", 160, 134, 155, 290),
    LatencyRow("E3", "s11^2,s13^2,s15^2", 320, 121, 96, 217),
    LatencyRow("E4", "s9^2,s11^2,s13^2,s15^2", 640, 106, 66, 172),
    LatencyRow("E5", "s7^2,s9^2,s11^2,s13^2,s15^2", 1280, 90, 51, 141),
    LatencyRow("E6", "s5^2,s7^2,s9^2,s11^2,s13^2,s15^2", 2560, 74, 44, 118),
    LatencyRow("E7", "s3^2,s5^2,s7^2,s9^2,s11^2,s13^2,s15^2", 5120, 58, 34, 92),
)


@dataclass(frozen=True)
class PlacementRow:
    config_id: str
    shorthand: str
    f_enc_ms: int
    encoder_ms: int


# Placement ablations: same total reduction within a group, different
# layers and strides.  Encoder latency is the quantity of interest.
PLACEMENT_GROUP_1280: tuple[PlacementRow, ...] = (
    PlacementRow("E5", "s7^2,s9^2,s11^2,s13^2,s15^2", 1280, 90),
    PlacementRow("E51", "s11^2,s12^2,s13^2,s14^2,s15^2", 1280, 116),
    PlacementRow("E52", "s4^2,s5^2,s6^2,s7^2,s8^2", 1280, 60),
    PlacementRow("E53", "s14^8,s15^4", 1280, 133),
    PlacementRow("E54", "s13^4,s15^8", 1280, 128),
)

PLACEMENT_GROUP_2560: tuple[PlacementRow, ...] = (
    PlacementRow("E6", "s5^2,s7^2,s9^2,s11^2,s13^2,s15^2", 2560, 74),
    PlacementRow("E61", "s10^2,s11^2,s12^2,s13^2,s14^2,s15^2", 2560, 108),
    PlacementRow("E62", "s4^2,s5^2,s6^2,s7^2,s8^2,s9^2", 2560, 59),
    PlacementRow("E63", "s14^8,s15^8", 2560, 133),
    PlacementRow("E64", "s13^8,s15^8", 2560, 126),
)


def all_reference_rows() -> list[tuple[str, str, int]]:
    """(config_id, shorthand, published f_enc_ms) for every bundled config."""
    rows = [(r.config_id, r.shorthand, r.f_enc_ms) for r in LATENCY_SWEEP]
    seen = {r[0] for r in rows}
    for group in (PLACEMENT_GROUP_1280, PLACEMENT_GROUP_2560):
        for r in group:
            if r.config_id not in seen:
                rows.append((r.config_id, r.shorthand, r.f_enc_ms))
                seen.add(r.config_id)
    return rows
