"""Decoding metrics over a dataset."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..decoder import decode_alsync
from ..hat_model import HatModel, edit_distance
from ..numerics import no_grad
from .data import Dataset


@dataclass
class EvalReport:
    count: int
    exact_match: float
    token_error_rate: float
    mean_steps: float
    max_steps: int

    def row(self) -> dict:
        return asdict(self)


def evaluate(
    model: HatModel,
    dataset: Dataset,
    beam_width: int,
    u_max: int,
    limit: int | None = None,
    progress=None,
) -> EvalReport:
    """Decode every example and report exact match, token errors and step counts."""
    n = len(dataset) if limit is None else min(limit, len(dataset))
    exact = 0
    edits = 0
    ref_tokens = 0
    steps_total = 0
    steps_max = 0
    for i in range(n):
        frames, labels = dataset[i]
        with no_grad():
            encoded = model.encode(frames)
        result = decode_alsync(model, encoded, beam_width, u_max)
        best = result.best
        exact += best == labels
        edits += edit_distance(best, labels)
        ref_tokens += len(labels)
        steps_total += result.steps
        steps_max = max(steps_max, result.steps)
        if progress and (i + 1) % 500 == 0:
            progress(f"decoded {i + 1}/{n}")
    return EvalReport(
        count=n,
        exact_match=exact / n,
        token_error_rate=edits / max(ref_tokens, 1),
        mean_steps=steps_total / n,
        max_steps=steps_max,
    )
