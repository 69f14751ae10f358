"""Cost model tests: step arithmetic, MAC accounting, least-squares fit."""

import json

import pytest

from funnelhat import benchdata
from funnelhat.costmodel import (
    EncoderCostModel,
    bench_config,
    cost_report,
    decoder_steps,
    encoder_cost,
    fit_latency,
    reduction_report,
    write_csv,
    write_json,
)
from funnelhat.encoder import EncoderConfig, parse_shorthand
from funnelhat.errors import ConfigError, FitError


class TestDecoderSteps:
    def test_baseline_value(self):
        assert decoder_steps(15360, 40, 30) == 414

    def test_ceil_rounds_up(self):
        assert decoder_steps(100, 40, 0) == 3
        assert decoder_steps(80, 40, 0) == 2

    def test_u_max_added_linearly(self):
        assert decoder_steps(15360, 2560, 30) - decoder_steps(15360, 2560, 0) == 30

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(t_max_ms=0, f_enc_ms=40, u_max=30),
            dict(t_max_ms=100, f_enc_ms=0, u_max=30),
            dict(t_max_ms=100, f_enc_ms=40, u_max=-1),
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            decoder_steps(**kwargs)


class TestEncoderCostModel:
    def test_coefficients_small_case(self):
        m = EncoderCostModel(model_dim=2, conv_kernel=3, ffn_multiplier=1)
        assert m.per_input_frame == (2 * 1 + 3 + 2) * 4 + 3 * 2
        assert m.per_output_frame == (2 + 2 * 1) * 4

    def test_block_cost_sums_terms(self):
        m = EncoderCostModel(model_dim=2, conv_kernel=3, ffn_multiplier=1)
        got = m.block_cost(5, 3)
        assert got == 5 * m.per_input_frame + 3 * m.per_output_frame + 2 * 3 * 5 * 2

    def test_unstrided_block_cost_exceeds_strided(self):
        m = EncoderCostModel(model_dim=64, conv_kernel=15)
        assert m.block_cost(100, 100) > m.block_cost(100, 50)

    def test_subsample_cost_manual(self):
        m = EncoderCostModel(model_dim=4, conv_kernel=15)
        # 8 frames, feature dim 2, factor 2: depthwise 8*3*2, pointwise 4*2*4,
        # then final projection 4*4*4
        assert m.subsample_cost(8, 2, 2) == 8 * 6 + 4 * 8 + 4 * 16

    def test_subsample_factor_one_is_projection_only(self):
        m = EncoderCostModel(model_dim=4, conv_kernel=15)
        assert m.subsample_cost(10, 3, 1) == 10 * 3 * 4


class TestEncoderCost:
    def test_total_is_subsample_plus_blocks(self):
        cfg = bench_config("s13^2,s15^2")
        cost = encoder_cost(cfg, 1536)
        assert cost.total == cost.subsample + sum(m for _, _, _, m in cost.per_block)
        assert len(cost.per_block) == 16

    def test_block_lengths_follow_config(self):
        cfg = bench_config("s13^2,s15^2")
        cost = encoder_cost(cfg, 1536)
        lengths = cfg.block_lengths(1536)
        for layer, len_in, len_out, _ in cost.per_block:
            assert len_in == lengths[layer]
            assert len_out == lengths[layer + 1]

    def test_adding_a_funnel_never_raises_cost(self):
        base = bench_config("s15^2")
        more = bench_config("s13^2,s15^2")
        assert encoder_cost(more, 1536).total < encoder_cost(base, 1536).total

    def test_earlier_placement_is_cheaper(self):
        early = bench_config("s4^2,s5^2,s6^2,s7^2,s8^2")
        mid = bench_config("s7^2,s9^2,s11^2,s13^2,s15^2")
        late = bench_config("s11^2,s12^2,s13^2,s14^2,s15^2")
        c = {k: encoder_cost(v, 1536).total for k, v in
             dict(early=early, mid=mid, late=late).items()}
        assert c["early"] < c["mid"] < c["late"]


class TestFitLatency:
    def test_exact_line(self):
        fit = fit_latency([1, 2, 3, 4], [3, 5, 7, 9])
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.predict(10) == pytest.approx(21.0)

    def test_two_points_fit_exactly(self):
        fit = fit_latency([0, 4], [1, 9])
        assert fit.slope == pytest.approx(2.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_constant_y_gives_r2_one_zero_slope(self):
        fit = fit_latency([1, 2, 3], [5, 5, 5])
        assert fit.slope == pytest.approx(0.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_degenerate_inputs(self):
        with pytest.raises(FitError):
            fit_latency([2, 2, 2], [1, 2, 3])
        with pytest.raises(FitError):
            fit_latency([1], [2])
        with pytest.raises(FitError):
            fit_latency([1, 2], [1, 2, 3])

    def test_sweep_steps_track_published_decoder_times(self):
        steps = [decoder_steps(benchdata.BENCH_TMAX_MS, r.f_enc_ms, benchdata.BENCH_UMAX)
                 for r in benchdata.LATENCY_SWEEP]
        times = [r.decoder_ms for r in benchdata.LATENCY_SWEEP]
        assert fit_latency(steps, times).r_squared >= 0.99


class TestBenchConfig:
    def test_reference_dims(self):
        cfg = bench_config("")
        assert cfg.num_blocks == 16
        assert cfg.model_dim == 1536
        assert cfg.f_enc_ms == pytest.approx(40.0)

    def test_published_frame_durations_all_match(self):
        for config_id, shorthand, f_enc in benchdata.all_reference_rows():
            assert bench_config(shorthand).f_enc_ms == pytest.approx(f_enc), config_id

    def test_bad_shorthand_surfaces(self):
        with pytest.raises(ConfigError):
            bench_config("s99^2")


class TestReductionReport:
    def test_identity_is_zero(self):
        cfg = bench_config("")
        rep = reduction_report(cfg, cfg)
        assert rep.decoder_reduction_pct == pytest.approx(0.0)
        assert rep.encoder_reduction_pct == pytest.approx(0.0)

    def test_baseline_to_deepest_sweep_entry(self):
        rep = reduction_report(bench_config(""), bench_config("s5^2,s7^2,s9^2,s11^2,s13^2,s15^2"))
        assert rep.baseline_steps == 414
        assert rep.candidate_steps == 36
        assert rep.decoder_reduction_pct == pytest.approx(100 * (1 - 36 / 414))


class TestReports:
    def test_cost_report_fields(self):
        rep = cost_report("E2", "s13^2,s15^2")
        assert rep.funnel_reduction == 4
        assert rep.total_reduction == 16
        assert rep.f_enc_ms == pytest.approx(160.0)
        assert rep.decoder_steps == 126
        assert rep.output_frames == 96
        assert rep.encoder_macs > 0

    def test_csv_json_roundtrip(self, tmp_path):
        reports = [cost_report("B0", ""), cost_report("E1", "s15^2")]
        csv_path = tmp_path / "costs.csv"
        json_path = tmp_path / "costs.json"
        write_csv(csv_path, reports)
        write_json(json_path, reports, extra={"note": "x"})
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("config_id,")
        payload = json.loads(json_path.read_text())
        assert payload["note"] == "x"
        assert payload["configs"][1]["decoder_steps"] == 222
