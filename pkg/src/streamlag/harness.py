"""Experiment grids: traces x policies -> latency and FLOPs reports."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .cif import MLPPredictor, OraclePredictor, PredictorParams
from .metrics import (
    FlopsReport,
    dal,
    dal_closed_form_local_agreement,
    dal_closed_form_wait_k,
)
from .model import ModelConfig, OracleModel, ToyModel
from .numeric import ContractError
from .policies import PolicyConfig, local_agreement_decode, wait_k_decode
from .trace import Trace, TraceSpec, generate_trace

CSV_VERSION = "streamlag-report v1"
CSV_COLUMNS = [
    "policy", "k", "N_c", "d", "DAL_empirical", "DAL_closed_form", "FLOPs_total", "mode",
    "trace", "N_t", "DAL_aware", "mean_lag", "relative_delta", "replay_FLOPs", "redundant_fraction",
]
OUTPUT_ENV = "STREAMLAG_OUTPUT_DIR"


def parse_k(v) -> float:
    if v is None or v in ("inf", "∞", "Infinity"):
        return math.inf
    return float(v)


@dataclass
class GridEntry:
    policy: str  # "wait-k" | "local-agreement"
    config: PolicyConfig

    @classmethod
    def from_json(cls, obj: dict) -> "GridEntry":
        obj = dict(obj)
        policy = obj.pop("policy", "wait-k")
        if policy not in ("wait-k", "local-agreement"):
            raise ContractError(f"unknown policy {policy!r}")
        if "k" in obj:
            obj["k"] = parse_k(obj["k"])
        elif policy == "local-agreement":
            obj["k"] = 1.0
        if obj.get("encoder_chunk") is not None:
            obj["encoder_chunk"] = parse_k(obj["encoder_chunk"])
        return cls(policy, PolicyConfig(**obj))

    def to_json(self) -> dict:
        d = self.config.to_json()
        d["policy"] = self.policy
        if self.policy == "local-agreement":
            d.pop("k")
        return d

    @property
    def label(self) -> str:
        if self.policy == "local-agreement":
            return "local-agreement"
        k = self.config.k
        return "wait-inf" if k == math.inf else f"wait-{k:g}"


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: list[GridEntry] = field(default_factory=list)
    traces: list[TraceSpec] = field(default_factory=list)
    decoder: str = "oracle"  # oracle | toy
    predictor: str = "oracle"  # oracle | toy
    predictor_hidden: int = 16
    clocks: list[str] = field(default_factory=lambda: ["unaware", "aware"])
    flops_per_second: float | None = None
    output_dir: str | None = None
    seed: int | None = None
    workers: int = 1

    def validate(self) -> None:
        if not self.grid:
            raise ContractError("experiment grid is empty")
        if not self.traces:
            raise ContractError("experiment has no traces")
        if self.decoder not in ("oracle", "toy") or self.predictor not in ("oracle", "toy"):
            raise ContractError("decoder and predictor must be 'oracle' or 'toy'")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        cfg = cls(
            model=ModelConfig(**obj.get("model", {})),
            grid=[GridEntry.from_json(g) for g in obj.get("grid", [])],
            traces=[TraceSpec.from_json(t) for t in obj.get("traces", [])],
            decoder=obj.get("decoder", "oracle"),
            predictor=obj.get("predictor", "oracle"),
            predictor_hidden=obj.get("predictor_hidden", 16),
            clocks=list(obj.get("clocks", ["unaware", "aware"])),
            flops_per_second=obj.get("flops_per_second"),
            output_dir=obj.get("output_dir"),
            seed=obj.get("seed"),
            workers=obj.get("workers", 1),
        )
        cfg.validate()
        return cfg

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "grid": [g.to_json() for g in self.grid],
            "traces": [t.to_json() for t in self.traces],
            "decoder": self.decoder,
            "predictor": self.predictor,
            "predictor_hidden": self.predictor_hidden,
            "clocks": self.clocks,
            "flops_per_second": self.flops_per_second,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "workers": self.workers,
        }


def default_config() -> ExperimentConfig:
    """One long uniform trace against wait-k for several k plus local agreement."""
    grid = [GridEntry("wait-k", PolicyConfig(k=k, mode=m)) for m in ("forced_commit", "buffered_state")
            for k in (1, 2, 3, 5, math.inf)]
    grid.append(GridEntry("local-agreement", PolicyConfig(k=1.0)))
    return ExperimentConfig(grid=grid, traces=[TraceSpec(num_tokens=200)])


def _traces(cfg: ExperimentConfig) -> list[TraceSpec]:
    specs = []
    for i, t in enumerate(cfg.traces):
        t = TraceSpec.from_json(t.to_json())
        if cfg.seed is not None:
            t.seed = cfg.seed + i
        t.width = cfg.model.frame_width
        t.vocab_size = cfg.model.vocab_size
        specs.append(t)
    return specs


def _model_config(cfg: ExperimentConfig) -> ModelConfig:
    if cfg.seed is None:
        return cfg.model
    d = cfg.model.to_json()
    d["seed"] = cfg.seed
    return ModelConfig(**d)


def run_cell(model_cfg: ModelConfig, cfg: ExperimentConfig, trace: Trace, entry: GridEntry):
    """Run one (trace, policy) pair; returns the decode timeline."""
    if cfg.decoder == "oracle":
        model = OracleModel(trace.tokens, trace.plan.rights(), model_cfg)
    else:
        model = ToyModel(model_cfg)
    pc = PolicyConfig(**{**entry.config.__dict__})
    if cfg.flops_per_second is not None and pc.flops_per_second is None:
        pc.flops_per_second = cfg.flops_per_second
    frames = trace.frames
    if entry.policy == "local-agreement":
        return local_agreement_decode(frames, pc, model, trace.trace_id, expected_tokens=len(trace.tokens))
    if cfg.predictor == "oracle":
        predictor = OraclePredictor(trace.plan.weights)
    else:
        predictor = MLPPredictor(PredictorParams.init(model_cfg.frame_width, cfg.predictor_hidden, model_cfg.seed))
    return wait_k_decode(frames, pc, model, predictor, trace.trace_id)


def _cell_job(args):
    model_cfg, cfg, spec, entry = args
    return run_cell(model_cfg, cfg, generate_trace(spec), entry)


@dataclass
class ExperimentResult:
    rows: list[dict]
    violations: list[str]
    timelines: list

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {CSV_VERSION}\n")
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({c: _fmt(r.get(c)) for c in CSV_COLUMNS})
        return buf.getvalue()

    def json_obj(self) -> dict:
        rows = [{k: ("inf" if v == math.inf else v) for k, v in r.items()} for r in self.rows]
        return {"version": CSV_VERSION, "rows": rows, "violations": self.violations}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return v


def run_experiment(cfg: ExperimentConfig, output_dir: str | None = None) -> ExperimentResult:
    """Run the grid over every trace; optionally write report.csv and report.json."""
    cfg.validate()
    model_cfg = _model_config(cfg)
    specs = _traces(cfg)
    jobs = [(model_cfg, cfg, spec, entry) for spec in specs for entry in cfg.grid]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            timelines = list(pool.map(_cell_job, jobs))
    else:
        cache: dict[str, Trace] = {}
        timelines = []
        for job in jobs:
            spec = job[2]
            trace = cache.setdefault(spec.trace_id, generate_trace(spec))
            timelines.append(run_cell(model_cfg, cfg, trace, job[3]))

    rows = []
    violations = []
    buffered_totals = {}
    for (_, _, spec, entry), tl in zip(jobs, timelines):
        if entry.config.mode == "buffered_state":
            buffered_totals[(spec.trace_id, entry.policy, entry.config.k, entry.config.chunk_length_s)] = tl.flops_total
    for (_, _, spec, entry), tl in zip(jobs, timelines):
        for v in tl.check():
            violations.append(f"{spec.trace_id}/{entry.label}/{entry.config.mode}: {v}")
        for dgn in tl.diagnostics:
            violations.append(f"{spec.trace_id}/{entry.label}/{entry.config.mode}: {dgn}")
        k = entry.config.k if entry.policy == "wait-k" else None
        if tl.output_tokens:
            rep = dal(tl)
            if k is None:
                pred = dal_closed_form_local_agreement(entry.config.chunk_length_s, rep.d)
            else:
                pred = None if k == math.inf else dal_closed_form_wait_k(entry.config.chunk_length_s, rep.d, k)
            rep.with_prediction(pred)
            aware = dal(tl, clock="aware").dal_s if "aware" in cfg.clocks else None
        else:
            violations.append(f"{spec.trace_id}/{entry.label}/{entry.config.mode}: no tokens emitted")
            rep = pred = aware = None
        key = (spec.trace_id, entry.policy, entry.config.k, entry.config.chunk_length_s)
        fr = FlopsReport.from_timeline(tl, buffered_totals.get(key))
        rows.append({
            "policy": entry.policy,
            "k": k,
            "N_c": entry.config.chunk_length_s,
            "d": rep and rep.d,
            "DAL_empirical": rep and rep.dal_s,
            "DAL_closed_form": pred,
            "FLOPs_total": fr.total,
            "mode": entry.config.mode,
            "trace": spec.trace_id,
            "N_t": len(tl.output_tokens),
            "DAL_aware": aware,
            "mean_lag": rep and rep.mean_lag_s,
            "relative_delta": rep and rep.relative_delta,
            "replay_FLOPs": tl.replay_flops,
            "redundant_fraction": fr.redundant_fraction if key in buffered_totals else None,
        })
    violations.extend(_monotonicity_violations(rows))
    result = ExperimentResult(rows, violations, timelines)

    out = output_dir or cfg.output_dir or os.environ.get(OUTPUT_ENV)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.csv"), "w", newline="") as fh:
            fh.write(result.csv_text())
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump(result.json_obj(), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    return result


def _json_default(v):
    raise TypeError(f"not serializable: {v!r}")


def _monotonicity_violations(rows: list[dict]) -> list[str]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["policy"] == "wait-k":
            groups.setdefault((r["trace"], r["mode"], r["N_c"]), []).append(r)
    bad = []
    for key, rs in groups.items():
        rs = sorted(rs, key=lambda r: r["k"])
        for a, b in zip(rs, rs[1:]):
            if a["DAL_empirical"] is None or b["DAL_empirical"] is None:
                continue
            if b["DAL_empirical"] < a["DAL_empirical"] - 1e-12:
                bad.append(f"{key[0]}/{key[1]}: DAL decreases from k={a['k']} to k={b['k']}")
    return bad
