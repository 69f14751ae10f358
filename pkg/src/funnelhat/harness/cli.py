"""Command-line entry points: gen-data, train, decode, eval, bench, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .. import benchdata, costmodel
from ..decoder import decode_alsync, format_nbest
from ..numerics import no_grad
from .data import Dataset, SyntheticTask, gen_data
from .evaluation import evaluate
from .report import build_report, write_report
from .training import RunConfig, load_checkpoint, train


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--frames-per-token", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--min-tokens", type=int, default=2)
    p.add_argument("--max-tokens", type=int, default=10)


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="JSON file with a full run configuration")
    p.add_argument("--encoder", help="stride shorthand, e.g. 's4^2,s5^2'")
    p.add_argument("--pred-kind", choices=("embedding_n", "recurrent"))
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-peak", type=float)
    p.add_argument("--warmup", type=int)
    p.add_argument("--num-blocks", type=int)
    p.add_argument("--model-dim", type=int)
    p.add_argument("--joint-dim", type=int)
    p.add_argument("--mwer-steps", type=int)
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--quiet", action="store_true")


def _add_decode(sub):
    p = sub.add_parser("decode", help="write n-best lists for a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output file, defaults to stdout")
    p.add_argument("--limit", type=int)
    p.add_argument("--beam-width", type=int)
    p.add_argument("--u-max", type=int)


def _add_eval(sub):
    p = sub.add_parser("eval", help="decode a dataset and report metrics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--beam-width", type=int)
    p.add_argument("--u-max", type=int)
    p.add_argument("--json", dest="json_out", help="also write metrics as JSON")
    p.add_argument("--quiet", action="store_true")


def _add_bench(sub):
    p = sub.add_parser("bench", help="analytic costs for stride schedules")
    p.add_argument(
        "configs",
        nargs="*",
        help="entries like E5=s7^2,s9^2,... (default: the bundled reference set)",
    )
    p.add_argument("--csv", help="write rows as CSV")
    p.add_argument("--json", dest="json_out", help="write rows as JSON")


def _add_report(sub):
    p = sub.add_parser("report", help="compare the cost model to published numbers")
    p.add_argument("--out-dir", help="also write report.json, report.txt, sweep.csv")
    p.add_argument("--check", action="store_true", help="exit non-zero if any check fails")


def _run_gen_data(args) -> int:
    task = SyntheticTask(
        vocab=args.vocab,
        feature_dim=args.feature_dim,
        frames_per_token=args.frames_per_token,
        noise=args.noise,
        min_tokens=args.min_tokens,
        max_tokens=args.max_tokens,
        seed=args.seed,
    )
    manifest = gen_data(task, args.count, args.out)
    print(f"wrote {args.count} examples under {manifest.parent}")
    return 0


def _run_train(args) -> int:
    if args.config:
        config = RunConfig.from_json(Path(args.config).read_text())
        config = dataclasses.replace(config, seed=args.seed)
    else:
        config = RunConfig(seed=args.seed)
    overrides = {
        "encoder_shorthand": args.encoder,
        "pred_kind": args.pred_kind,
        "steps": args.steps,
        "batch_size": args.batch_size,
        "lr_peak": args.lr_peak,
        "warmup": args.warmup,
        "num_blocks": args.num_blocks,
        "model_dim": args.model_dim,
        "joint_dim": args.joint_dim,
        "mwer_steps": args.mwer_steps,
    }
    config = dataclasses.replace(
        config, **{k: v for k, v in overrides.items() if v is not None}
    )
    dataset = Dataset(args.data)
    progress = None if args.quiet else lambda msg: print(msg, flush=True)
    _, result = train(config, dataset, out_path=args.out, log_every=args.log_every,
                      progress=progress)
    print(f"checkpoint {result.checkpoint} ({result.seconds:.1f}s)")
    return 0


def _decode_defaults(args, config: RunConfig) -> tuple[int, int]:
    beam = args.beam_width if args.beam_width is not None else config.beam_width
    u_max = args.u_max if args.u_max is not None else config.u_max
    return beam, u_max


def _run_decode(args) -> int:
    model, config = load_checkpoint(args.ckpt)
    dataset = Dataset(args.data)
    beam, u_max = _decode_defaults(args, config)
    n = len(dataset) if args.limit is None else min(args.limit, len(dataset))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for i in range(n):
            frames, _ = dataset[i]
            with no_grad():
                encoded = model.encode(frames)
            result = decode_alsync(model, encoded, beam, u_max)
            out.write(f"# utterance {i} steps {result.steps}\n")
            out.write(format_nbest(result) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def _run_eval(args) -> int:
    model, config = load_checkpoint(args.ckpt)
    dataset = Dataset(args.data)
    beam, u_max = _decode_defaults(args, config)
    progress = None if args.quiet else lambda msg: print(msg, flush=True)
    report = evaluate(model, dataset, beam, u_max, limit=args.limit, progress=progress)
    print(
        f"examples {report.count}  exact-match {report.exact_match:.4f}  "
        f"token-error-rate {report.token_error_rate:.4f}  "
        f"mean-steps {report.mean_steps:.1f}  max-steps {report.max_steps}"
    )
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(report.row(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _run_bench(args) -> int:
    if args.configs:
        entries = []
        for item in args.configs:
            config_id, _, shorthand = item.partition("=")
            entries.append((config_id, shorthand))
    else:
        entries = [(r.config_id, r.shorthand) for r in benchdata.LATENCY_SWEEP]
    reports = [costmodel.cost_report(cid, sh) for cid, sh in entries]
    header = f"{'id':<6}{'f_enc_ms':>9}{'frames':>8}{'steps':>7}{'enc_gmacs':>11}  shorthand"
    print(header)
    for r in reports:
        print(
            f"{r.config_id:<6}{r.f_enc_ms:>9.0f}{r.output_frames:>8}{r.decoder_steps:>7}"
            f"{r.encoder_macs / 1e9:>11.2f}  {r.shorthand or '-'}"
        )
    if args.csv:
        costmodel.write_csv(args.csv, reports)
    if args.json_out:
        costmodel.write_json(args.json_out, reports)
    return 0


def _run_report(args) -> int:
    report = build_report()
    print(report.text())
    if args.out_dir:
        write_report(report, args.out_dir)
    if args.check and not report.ok:
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="funnelhat",
        description="Funnel-reduced conformer transducer: data, training, decoding, costs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_data(sub)
    _add_train(sub)
    _add_decode(sub)
    _add_eval(sub)
    _add_bench(sub)
    _add_report(sub)
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": _run_gen_data,
        "train": _run_train,
        "decode": _run_decode,
        "eval": _run_eval,
        "bench": _run_bench,
        "report": _run_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
