"""End-to-end orchestration: configuration, per-stage artifacts and the run manifest.

Every stage reads and writes plain files in the output directory, so a run
can be inspected or resumed stage by stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .clustering.fcm import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
    FuzzyModel,
    compute_fuzzifier,
    derive_seed,
    fcm_fit,
    select_cluster_count,
)
from .federated import paillier
from .federated.federation import FederationConfig, federated_select_k, run_federation
from .log_ingest import (
    RawLogRecord,
    encode,
    load_schema,
    parse_log,
    read_records_csv,
    write_records_csv,
    write_rejects_csv,
)
from .pattern_mining import (
    DEFAULT_TXN_FEATURES,
    TXN_FEATURES,
    build_chronological_db,
    cluster_transactions,
    extract_patterns,
    read_chron_csv,
    read_patterns,
    read_transactions,
    write_chron_csv,
    write_patterns,
    write_transactions,
)
from .ranking import REPORT_FORMATS, FeatureMap, emit_report, rank_patterns, render_pattern

log = logging.getLogger(__name__)

OUT_ENV = "FEDPAT_OUT"
REPORT_SUFFIX = {"csv": ".csv", "markdown": ".md", "html": ".html"}


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str, *, bad_input: bool = False):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
        self.bad_input = bad_input


# --------------------------------------------------------------------------
# configuration

@dataclass
class LogSpec:
    path: str
    log_type: str
    schema: str
    prefix: str
    phase2_included: bool = True


@dataclass
class ClusteringSettings:
    seed: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER
    restarts: int = 1
    k: Optional[int] = None
    m: Optional[float] = None


@dataclass
class FederationSettings:
    enabled: bool = False
    clients: int = 3
    rounds: int = 3
    key_bits: int = paillier.DEFAULT_KEY_BITS
    host: str = "127.0.0.1"
    port: int = 0


@dataclass
class Phase2Settings:
    txn_features: tuple = DEFAULT_TXN_FEATURES
    min_pts: int = 2
    eps: Optional[float] = None


@dataclass
class PipelineConfig:
    logs: list
    clustering: ClusteringSettings = field(default_factory=ClusteringSettings)
    federation: FederationSettings = field(default_factory=FederationSettings)
    phase2: Phase2Settings = field(default_factory=Phase2Settings)
    output_dir: str = "fedpat-out"
    feature_map: Optional[str] = None
    report_format: str = "markdown"
    syslog_year: int = 1970

    def __post_init__(self):
        self.logs = [s if isinstance(s, LogSpec) else LogSpec(**s) for s in self.logs]
        if not self.logs:
            raise ValueError("config lists no logs")
        prefixes = [s.prefix for s in self.logs]
        if len(set(prefixes)) != len(prefixes):
            raise ValueError(f"log prefixes must be unique, got {prefixes}")
        if any(not p for p in prefixes):
            raise ValueError("every log needs a non-empty prefix")
        if self.federation.enabled and self.federation.clients < 1:
            raise ValueError("federation needs at least one client")
        if self.clustering.restarts < 1:
            raise ValueError("restarts must be >= 1")
        self.phase2.txn_features = tuple(self.phase2.txn_features)
        bad = [f for f in self.phase2.txn_features if f not in TXN_FEATURES]
        if bad or not self.phase2.txn_features:
            raise ValueError(f"txn features must be a non-empty subset of {TXN_FEATURES}, got {bad}")
        if self.report_format not in REPORT_FORMATS:
            raise ValueError(f"report format must be one of {REPORT_FORMATS}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "PipelineConfig":
        d = dict(d)
        cfg = cls(
            logs=[LogSpec(**s) for s in d.pop("logs", [])],
            clustering=ClusteringSettings(**d.pop("clustering", {})),
            federation=FederationSettings(**d.pop("federation", {})),
            phase2=Phase2Settings(**d.pop("phase2", {})),
            **d,
        )
        if base_dir is not None:
            cfg.resolve_paths(Path(base_dir))
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=path.parent)

    def resolve_paths(self, base: Path) -> None:
        """Make relative log, schema and feature-map paths relative to ``base``."""
        def fix(p):
            return p if p is None or Path(p).is_absolute() else str(base / p)
        for s in self.logs:
            s.path, s.schema = fix(s.path), fix(s.schema)
        self.feature_map = fix(self.feature_map)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase2"]["txn_features"] = list(self.phase2.txn_features)
        return d

    def config_hash(self) -> str:
        # paths are excluded so that the same corpus hashes equally wherever it lives
        d = self.to_dict()
        for s in d["logs"]:
            s["path"] = Path(s["path"]).name
            s["schema"] = Path(s["schema"]).name
        d.pop("output_dir")
        if d["feature_map"]:
            d["feature_map"] = Path(d["feature_map"]).name
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def out_dir(self) -> Path:
        return Path(os.environ.get(OUT_ENV) or self.output_dir)


@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    seeds: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, stage: str, path) -> Path:
        self.artifacts.setdefault(stage, []).append(Path(path).name)
        return Path(path)

    def write(self, path) -> Path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return Path(path)


class _Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest, self.stage = manifest, stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.stage] = self.manifest.timings.get(self.stage, 0.0) + time.perf_counter() - self.t0


# --------------------------------------------------------------------------
# stages

def ingest_log(spec: LogSpec, out: Path, year: int, manifest: Optional[RunManifest] = None):
    """Parse and encode one log; writes records, rejects and features."""
    try:
        schema = load_schema(spec.schema)
        records = parse_log(spec.path, spec.log_type, schema, year=year)
    except OSError as exc:
        raise StageError("ingest", f"{spec.prefix}: {exc}", bad_input=True) from exc
    except ValueError as exc:
        raise StageError("ingest", f"{spec.prefix}: {exc}", bad_input=True) from exc
    if not records:
        raise StageError("ingest", f"{spec.prefix}: no parseable lines in {spec.path}", bad_input=True)
    try:
        features = encode(records, schema)
    except ValueError as exc:
        raise StageError("ingest", f"{spec.prefix}: {exc}", bad_input=True) from exc
    paths = [out / f"{spec.prefix}_records.csv", out / f"{spec.prefix}_rejects.csv", out / f"{spec.prefix}_features.csv"]
    write_records_csv(paths[0], records)
    write_rejects_csv(paths[1], records.rejects)
    features.save_csv(paths[2])
    if manifest is not None:
        for p in paths:
            manifest.add("ingest", p)
    return list(records), features


def client_shards(x: np.ndarray, num_clients: int) -> list[np.ndarray]:
    """Deal rows to clients round-robin so every shard spans the whole log."""
    return [x[c::num_clients] for c in range(num_clients)]


def tune(x: np.ndarray, cfg: PipelineConfig, keypair=None) -> dict:
    """Fuzzifier and cluster count for one feature matrix."""
    cl = cfg.clustering
    n, d = x.shape
    m = cl.m if cl.m is not None else compute_fuzzifier(n, d)
    if cl.k is not None:
        return {"m": m, "k": cl.k, "curve": None, "rows": n, "dims": d}
    if cfg.federation.enabled:
        fed = FederationConfig(cfg.federation.clients, 2, m, cfg.federation.rounds, cfg.federation.key_bits,
                               cl.seed, cl.tolerance, cl.max_iter)
        k, curve = federated_select_k(fed, client_shards(x, fed.num_clients), keypair)
    else:
        k, curve = select_cluster_count(x, m, seed=cl.seed, tolerance=cl.tolerance, max_iter=cl.max_iter)
    return {"m": m, "k": k, "curve": curve, "rows": n, "dims": d}


def cluster(x: np.ndarray, k: int, m: float, cfg: PipelineConfig, keypair=None) -> tuple[FuzzyModel, np.ndarray]:
    """Final model and hard labels. Pure mode keeps the lowest-objective restart."""
    cl = cfg.clustering
    if cfg.federation.enabled:
        fed = FederationConfig(cfg.federation.clients, k, m, cfg.federation.rounds, cfg.federation.key_bits,
                               cl.seed, cl.tolerance, cl.max_iter)
        model = run_federation(fed, client_shards(x, fed.num_clients), keypair)
        return model, model.predict(x)
    best = None
    for r in range(cl.restarts):
        seed = cl.seed if r == 0 else derive_seed(cl.seed, -r)
        model, u = fcm_fit(x, k, m, seed=seed, tolerance=cl.tolerance, max_iter=cl.max_iter)
        if best is None or model.objective < best[0].objective:
            best = (model, u)
    model, u = best
    return model, np.argmax(u, axis=1)


def write_labels(path, records: Sequence[RawLogRecord], labels: Sequence[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source_file", "original_index", "label"])
        for r, lab in zip(records, labels):
            w.writerow([r.source_file, r.original_index, int(lab)])


def read_labels(path) -> tuple[list[int], list[int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [int(r["original_index"]) for r in rows], [int(r["label"]) for r in rows]


def _dump_json(path, obj) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def cluster_logs(cfg: PipelineConfig, out: Path, manifest: RunManifest) -> dict:
    """Ingest, tune and label every configured log. Returns per-prefix records and labels."""
    keypair = None
    if cfg.federation.enabled:
        with _Timer(manifest, "keygen"):
            keypair = paillier.keygen(cfg.federation.key_bits, seed=cfg.clustering.seed)
    labelled = {}
    for spec in cfg.logs:
        with _Timer(manifest, "ingest"):
            records, features = ingest_log(spec, out, cfg.syslog_year, manifest)
        try:
            with _Timer(manifest, "tune"):
                tuned = tune(features.values, cfg, keypair)
            with _Timer(manifest, "cluster"):
                model, labels = cluster(features.values, tuned["k"], tuned["m"], cfg, keypair)
        except ValueError as exc:
            raise StageError("cluster", f"{spec.prefix}: {exc}", bad_input=True) from exc
        manifest.add("tune", _dump_json(out / f"{spec.prefix}_tune.json", tuned))
        model.meta["column_meta_hash"] = features.meta_hash()
        manifest.add("cluster", _dump_json(out / f"{spec.prefix}_model.json", model.to_dict()))
        lab_path = out / f"{spec.prefix}_labels.csv"
        write_labels(lab_path, records, labels)
        manifest.add("cluster", lab_path)
        labelled[spec.prefix] = (records, labels, spec)
    return labelled


def extract_stage(labelled: dict, cfg: PipelineConfig, out: Path, manifest: RunManifest):
    included = [(recs, labs, prefix) for prefix, (recs, labs, spec) in labelled.items() if spec.phase2_included]
    if not included:
        raise StageError("extract", "no log is marked for phase 2", bad_input=True)
    chron = build_chronological_db(included)
    transactions = cluster_transactions(chron, cfg.phase2.min_pts, cfg.phase2.txn_features, cfg.phase2.eps)
    patterns = extract_patterns(transactions)
    write_chron_csv(manifest.add("extract", out / "chronological.csv"), chron)
    write_transactions(manifest.add("extract", out / "transactions.jsonl"), transactions)
    write_patterns(manifest.add("extract", out / "patterns.jsonl"), patterns)
    return chron, transactions, patterns


def write_ranking(path, ranked) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rp in ranked:
            fh.write(json.dumps({"rank": rp.rank, "labels": list(rp.pattern.labels),
                                 "supports": list(rp.supports), "score": rp.score}) + "\n")


def read_ranking(path):
    from .pattern_mining import Pattern
    from .ranking import RankedPattern
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    return [RankedPattern(r["rank"], Pattern(tuple(r["labels"]), tuple(r["supports"])), r["score"]) for r in rows]


def load_feature_map(cfg: PipelineConfig) -> FeatureMap:
    if cfg.feature_map:
        return FeatureMap.load(cfg.feature_map)
    return FeatureMap.from_schemas({s.log_type: load_schema(s.schema) for s in cfg.logs})


def report_stage(ranked, transactions, chron, records: dict, cfg: PipelineConfig, out: Path,
                 manifest: RunManifest, top: Optional[int] = None) -> Path:
    fmap = load_feature_map(cfg)
    raw = {(r.source_file, r.original_index): r for recs in records.values() for r in recs}
    shown = ranked if top is None else ranked[:top]
    try:
        rendered = {rp.rank: render_pattern(rp, transactions, chron, raw, fmap) for rp in shown}
    except KeyError as exc:
        raise StageError("report", str(exc), bad_input=True) from exc
    path = out / f"report{REPORT_SUFFIX[cfg.report_format]}"
    emit_report(ranked, rendered, path, cfg.report_format)
    return manifest.add("report", path)


def run_pipeline(cfg: PipelineConfig, top: Optional[int] = None) -> RunManifest:
    """Ingest, cluster, extract, rank and report; every artifact is listed in the manifest."""
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=cfg.config_hash(),
                           seeds={"clustering": cfg.clustering.seed, "federated": cfg.federation.enabled})
    labelled = cluster_logs(cfg, out, manifest)
    try:
        with _Timer(manifest, "extract"):
            chron, transactions, patterns = extract_stage(labelled, cfg, out, manifest)
    except ValueError as exc:
        raise StageError("extract", str(exc)) from exc
    with _Timer(manifest, "rank"):
        ranked = rank_patterns(patterns, len(transactions))
        write_ranking(manifest.add("rank", out / "ranking.jsonl"), ranked)
    with _Timer(manifest, "report"):
        report_stage(ranked, transactions, chron, {p: v[0] for p, v in labelled.items()}, cfg, out, manifest, top)
    manifest.summary = {"events": len(chron), "transactions": len(transactions), "patterns": len(patterns)}
    manifest.add("manifest", out / "manifest.json")
    manifest.write(out / "manifest.json")
    return manifest


def load_stage_records(cfg: PipelineConfig, out: Path) -> dict:
    """Records of every log as written by the ingest stage."""
    return {s.prefix: read_records_csv(out / f"{s.prefix}_records.csv") for s in cfg.logs}


def load_labelled(cfg: PipelineConfig, out: Path) -> dict:
    labelled = {}
    for s in cfg.logs:
        records = read_records_csv(out / f"{s.prefix}_records.csv")
        idx, labels = read_labels(out / f"{s.prefix}_labels.csv")
        if idx != [r.original_index for r in records]:
            raise StageError("extract", f"{s.prefix}: labels do not line up with the ingested records",
                             bad_input=True)
        labelled[s.prefix] = (records, labels, s)
    return labelled


def load_stage_outputs(out: Path):
    return read_chron_csv(out / "chronological.csv"), read_transactions(out / "transactions.jsonl"), \
        read_patterns(out / "patterns.jsonl")
