"""Reproduction report: analytic costs against the published measurements."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import benchdata, costmodel
from ..encoder import EncoderConfig

# Worst-case search steps for the frame-rate sweep at the reference
# operating point (15.36 s audio, 30 label cap), frozen as regression
# targets for --check.
EXPECTED_SWEEP_STEPS = (414, 222, 126, 78, 54, 42, 36, 33)

# Tolerances for the published-number comparisons.
FIT_R2_MIN = 0.99
DECODER_REDUCTION_TOL_PCT = 2.0
ENCODER_REDUCTION_TOL_PCT = 7.0


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks)

    def payload(self) -> dict:
        return {
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks
            ],
            "tables": self.tables,
            "ok": self.ok,
        }


def _sweep_reports() -> list[costmodel.CostReport]:
    return [costmodel.cost_report(r.config_id, r.shorthand) for r in benchdata.LATENCY_SWEEP]


def _group_order(rows) -> tuple[list[str], list[str]]:
    """(predicted, measured) config orderings by encoder cost within a group."""
    costs = {
        r.config_id: costmodel.encoder_cost(
            costmodel.bench_config(r.shorthand), benchdata.BENCH_INPUT_FRAMES
        ).total
        for r in rows
    }
    predicted = sorted(costs, key=costs.get)
    measured = sorted((r.config_id for r in rows), key={r.config_id: r.encoder_ms for r in rows}.get)
    return predicted, measured


def build_report() -> Report:
    report = Report()
    sweep = _sweep_reports()
    report.tables["sweep"] = [r.row() for r in sweep]

    steps = tuple(r.decoder_steps for r in sweep)
    report.checks.append(
        Check(
            "decoder step counts",
            steps == EXPECTED_SWEEP_STEPS,
            f"computed {steps}, expected {EXPECTED_SWEEP_STEPS}",
        )
    )

    fit = costmodel.fit_latency(steps, [r.decoder_ms for r in benchdata.LATENCY_SWEEP])
    report.tables["decoder_fit"] = {
        "slope_ms_per_step": fit.slope,
        "intercept_ms": fit.intercept,
        "r_squared": fit.r_squared,
    }
    report.checks.append(
        Check(
            "decoder latency fit",
            fit.r_squared >= FIT_R2_MIN,
            f"R^2 = {fit.r_squared:.5f} (need >= {FIT_R2_MIN})",
        )
    )

    by_id = {r.config_id: r for r in benchdata.LATENCY_SWEEP}
    base = costmodel.bench_config(by_id["B0"].shorthand)
    for cand_id in ("E6", "E7"):
        cand = costmodel.bench_config(by_id[cand_id].shorthand)
        red = costmodel.reduction_report(base, cand)
        measured = 100.0 * (1.0 - by_id[cand_id].decoder_ms / by_id["B0"].decoder_ms)
        diff = abs(red.decoder_reduction_pct - measured)
        report.tables[f"decoder_reduction_B0_{cand_id}"] = {
            "predicted_pct": red.decoder_reduction_pct,
            "measured_pct": measured,
        }
        report.checks.append(
            Check(
                f"decoder reduction B0->{cand_id}",
                diff <= DECODER_REDUCTION_TOL_PCT,
                f"predicted {red.decoder_reduction_pct:.1f}% vs measured {measured:.1f}% "
                f"(tolerance {DECODER_REDUCTION_TOL_PCT} points)",
            )
        )
        if cand_id == "E6":
            enc_measured = 100.0 * (1.0 - by_id["E6"].encoder_ms / by_id["B0"].encoder_ms)
            enc_diff = abs(red.encoder_reduction_pct - enc_measured)
            report.tables["encoder_reduction_B0_E6"] = {
                "predicted_pct": red.encoder_reduction_pct,
                "measured_pct": enc_measured,
            }
            report.checks.append(
                Check(
                    "encoder reduction B0->E6",
                    enc_diff <= ENCODER_REDUCTION_TOL_PCT,
                    f"predicted {red.encoder_reduction_pct:.1f}% vs measured {enc_measured:.1f}% "
                    f"(tolerance {ENCODER_REDUCTION_TOL_PCT} points)",
                )
            )

    for label, rows in (
        ("1280", benchdata.PLACEMENT_GROUP_1280),
        ("2560", benchdata.PLACEMENT_GROUP_2560),
    ):
        predicted, measured = _group_order(rows)
        report.tables[f"placement_order_{label}"] = {
            "predicted": predicted,
            "measured": measured,
        }
        report.checks.append(
            Check(
                f"encoder cost ordering at {label} ms",
                predicted == measured,
                f"predicted {predicted}, measured {measured}",
            )
        )

    law_ok = True
    bad = []
    for config_id, shorthand, f_enc in benchdata.all_reference_rows():
        computed = costmodel.bench_config(shorthand).f_enc_ms
        if computed != f_enc:
            law_ok = False
            bad.append(f"{config_id}: computed {computed} vs published {f_enc}")
    report.checks.append(
        Check(
            "output frame duration law",
            law_ok,
            "all bundled configurations match" if law_ok else "; ".join(bad),
        )
    )
    return report


def write_report(report: Report, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report.payload(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    costmodel.write_csv(out / "sweep.csv", _sweep_reports())
    (out / "report.txt").write_text(report.text() + "\n")
