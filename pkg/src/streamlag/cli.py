"""Command line entry point: ``streamlag <subcommand>``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .cif import MLPPredictor, OraclePredictor, PredictorParams
from .harness import OUTPUT_ENV, ExperimentConfig, default_config, parse_k, run_experiment
from .masks import ChunkSpec, SpanSpec, mfla_mask, mocha_mask
from .metrics import dal, dal_closed_form_local_agreement, dal_closed_form_wait_k
from .model import ModelConfig, OracleModel, ToyModel
from .numeric import ContractError
from .policies import DecodeTimeline, PolicyConfig, local_agreement_decode, wait_k_decode
from .trace import Trace, TraceSpec, generate_trace


def _out_path(path: str | None, default_name: str) -> str | None:
    if path:
        return path
    base = os.environ.get(OUTPUT_ENV)
    return os.path.join(base, default_name) if base else None


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _silence(s: str) -> tuple[int, int]:
    pos, n = s.split(":")
    return int(pos), int(n)


def cmd_trace_gen(args) -> int:
    fpt = tuple(args.fpt_range) if args.fpt_range else args.frames_per_token
    spec = TraceSpec(
        num_tokens=args.tokens,
        frames_per_token=fpt,
        frame_duration_s=args.frame_duration,
        silences=[_silence(s) for s in args.silence],
        seed=args.seed,
        width=args.width,
        vocab_size=args.vocab,
    )
    trace = generate_trace(spec)
    _write(json.dumps(trace.to_json(include_frames=not args.no_frames)) + "\n", _out_path(args.out, "trace.json"))
    return 0


def _load_trace(path: str) -> Trace:
    with open(path) as fh:
        return Trace.from_json(json.load(fh))


def cmd_simulate(args) -> int:
    trace = _load_trace(args.trace)
    mcfg = ModelConfig(frame_width=trace.spec.width, vocab_size=trace.spec.vocab_size,
                       seed=args.seed if args.seed is not None else 0,
                       frame_duration_s=trace.spec.frame_duration_s)
    model = ToyModel(mcfg) if args.decoder == "toy" else OracleModel(trace.tokens, trace.plan.rights(), mcfg)
    pc = PolicyConfig(
        k=parse_k(args.k) if args.policy == "wait-k" else 1.0,
        chunk_length_s=args.chunk,
        mode=args.mode,
        horizon=args.horizon,
        flops_per_second=args.flops_per_second,
    )
    if args.policy == "wait-k":
        if args.predictor == "toy":
            pred = MLPPredictor(PredictorParams.init(mcfg.frame_width, 16, mcfg.seed))
        else:
            pred = OraclePredictor(trace.plan.weights)
        tl = wait_k_decode(trace.frames, pc, model, pred, trace.trace_id)
        closed = None if pc.k == math.inf else dal_closed_form_wait_k(pc.chunk_length_s, trace.d, pc.k)
    else:
        tl = local_agreement_decode(trace.frames, pc, model, trace.trace_id, expected_tokens=len(trace.tokens))
        closed = dal_closed_form_local_agreement(pc.chunk_length_s, trace.d)
    out = _out_path(args.out, "timeline.jsonl")
    if out:
        _write(tl.to_jsonl(), out)
    summary = {
        "policy": tl.policy, "k": args.k if args.policy == "wait-k" else None, "mode": tl.mode,
        "N_t": len(tl.output_tokens), "d": None, "DAL": None, "DAL_aware": None,
        "DAL_closed_form": closed, "mean_lag": None, "FLOPs_total": tl.flops_total,
        "diagnostics": tl.diagnostics, "violations": tl.check(),
    }
    if tl.output_tokens:
        rep = dal(tl)
        summary.update(d=rep.d, DAL=rep.dal_s, DAL_aware=dal(tl, clock="aware").dal_s, mean_lag=rep.mean_lag_s)
    else:
        summary["diagnostics"].append("no tokens emitted; DAL undefined")
    print(json.dumps(summary, indent=2))
    return 1 if summary["violations"] else 0


def cmd_sweep(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_json(json.load(fh))
    else:
        cfg = default_config()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers:
        cfg.workers = args.workers
    out = args.out_dir or cfg.output_dir or os.environ.get(OUTPUT_ENV) or "streamlag-out"
    res = run_experiment(cfg, out)
    sys.stdout.write(res.csv_text())
    for v in res.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1 if res.violations else 0


def cmd_dal(args) -> int:
    with open(args.timeline) as fh:
        tl = DecodeTimeline.from_jsonl(fh.read())
    rep = dal(tl, args.speech_length, clock=args.clock)
    print(json.dumps({"DAL": rep.dal_s, "d": rep.d, "N_s": rep.N_s, "N_t": rep.N_t, "mean_lag": rep.mean_lag_s}))
    return 0


def cmd_masks(args) -> int:
    if args.kind == "mocha":
        m = mocha_mask(args.frames, ChunkSpec(parse_k(args.chunk)))
    else:
        bounds = []
        for part in args.boundaries.split(","):
            a, b = part.split("-")
            bounds.append((int(a), int(b)))
        m = mfla_mask(bounds, SpanSpec(parse_k(args.span)), args.frames)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(m.dumps())
    print(m.render())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamlag", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("trace-gen", help="emit a synthetic trace as JSON")
    t.add_argument("--tokens", type=int, required=True)
    t.add_argument("--frames-per-token", type=int, default=16)
    t.add_argument("--fpt-range", type=int, nargs=2, metavar=("MIN", "MAX"))
    t.add_argument("--frame-duration", type=float, default=1 / 64)
    t.add_argument("--silence", action="append", default=[], metavar="POS:FRAMES")
    t.add_argument("--width", type=int, default=32)
    t.add_argument("--vocab", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-frames", action="store_true", help="store generator parameters only; frames are regenerated on load")
    t.add_argument("--out")
    t.set_defaults(func=cmd_trace_gen)

    s = sub.add_parser("simulate", help="run one policy over a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--policy", choices=["wait-k", "local-agreement"], default="wait-k")
    s.add_argument("--k", default="3")
    s.add_argument("--chunk", type=float, default=1.0, help="input chunk length in seconds")
    s.add_argument("--mode", choices=["forced_commit", "buffered_state"], default="forced_commit")
    s.add_argument("--horizon", choices=["literal", "clipped"], default="literal")
    s.add_argument("--decoder", choices=["oracle", "toy"], default="oracle")
    s.add_argument("--predictor", choices=["oracle", "toy"], default="oracle")
    s.add_argument("--flops-per-second", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="timeline JSON lines file")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run an experiment grid")
    w.add_argument("--config", help="ExperimentConfig JSON; defaults to the built-in grid")
    w.add_argument("--out-dir")
    w.add_argument("--seed", type=int)
    w.add_argument("--workers", type=int)
    w.set_defaults(func=cmd_sweep)

    d = sub.add_parser("dal", help="compute DAL from a timeline file")
    d.add_argument("timeline")
    d.add_argument("--speech-length", type=float)
    d.add_argument("--clock", choices=["unaware", "aware"], default="unaware")
    d.set_defaults(func=cmd_dal)

    m = sub.add_parser("masks", help="print a MoChA or MFLA mask as text art")
    m.add_argument("--kind", choices=["mocha", "mfla"], required=True)
    m.add_argument("--frames", type=int, required=True)
    m.add_argument("--chunk", default="1")
    m.add_argument("--boundaries", default="1-2,3-4,5-6", help="comma separated LEFT-RIGHT token segments")
    m.add_argument("--span", default="1")
    m.add_argument("--out", help="write the bitmap file")
    m.set_defaults(func=cmd_masks)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
