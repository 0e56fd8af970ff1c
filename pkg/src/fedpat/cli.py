"""Command-line entry point: ``fedpat <subcommand> ...``.

Exit codes: 0 success, 1 internal error, 2 bad input, 3 federation
protocol error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .clustering.fcm import FuzzyModel, compute_fuzzifier
from .clustering.metrics import metrics
from .federated import paillier
from .federated.federation import FederatedClient, FederationConfig, federated_select_k, run_federation
from .federated.net import run_client, serve
from .federated.paillier import PaillierKeypair, PublicKey
from .federated.protocol import ProtocolError
from .log_ingest import FeatureMatrix, read_records_csv
from .pattern_mining import TXN_FEATURES
from .pipeline import (
    REPORT_SUFFIX,
    PipelineConfig,
    RunManifest,
    StageError,
    _dump_json,
    client_shards,
    cluster,
    extract_stage,
    ingest_log,
    load_labelled,
    load_stage_outputs,
    load_stage_records,
    read_ranking,
    report_stage,
    run_pipeline,
    tune,
    write_labels,
    write_ranking,
)
from .ranking import REPORT_FORMATS, rank_patterns

log = logging.getLogger("fedpat")

EXIT_OK, EXIT_INTERNAL, EXIT_BAD_INPUT, EXIT_PROTOCOL = 0, 1, 2, 3
METRIC_HEADER = ("Homog", "Comp", "V_M", "ARI", "AMI")
BENCH_MODES = (("pure", None), ("fed-128", 128), ("fed-256", 256))


class BadInput(Exception):
    """Raised for user errors; ``stage`` is named in the message."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


# --------------------------------------------------------------------------
# config handling

def load_config(args) -> PipelineConfig:
    try:
        cfg = PipelineConfig.load(args.config)
    except FileNotFoundError as exc:
        raise BadInput("config", f"cannot read {args.config}: {exc.strerror}") from exc
    except (ValueError, TypeError) as exc:
        raise BadInput("config", f"invalid config {args.config}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        cfg.clustering.seed = args.seed
    if getattr(args, "key_bits", None) is not None:
        cfg.federation.key_bits = args.key_bits
    if getattr(args, "txn_features", None):
        feats = tuple(f.strip() for f in args.txn_features.split(",") if f.strip())
        bad = [f for f in feats if f not in TXN_FEATURES]
        if bad or not feats:
            raise BadInput("config", f"--txn-features must name some of {TXN_FEATURES}")
        cfg.phase2.txn_features = feats
    if getattr(args, "report_format", None):
        cfg.report_format = args.report_format
    if getattr(args, "federated", False):
        cfg.federation.enabled = True
    if getattr(args, "clients", None) is not None:
        cfg.federation.clients = args.clients
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _out(cfg: PipelineConfig) -> Path:
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(path: Path, stage: str, producer: str) -> Path:
    if not path.exists():
        raise BadInput(stage, f"{path} not found; run '{producer}' first")
    return path


# --------------------------------------------------------------------------
# stage subcommands

def cmd_ingest(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    for spec in cfg.logs:
        records, features = ingest_log(spec, out, cfg.syslog_year)
        print(f"{spec.prefix}\t{spec.log_type}\t{len(records)} records\t{features.dims} features")
    return EXIT_OK


def _features(out: Path, prefix: str, stage: str) -> FeatureMatrix:
    return FeatureMatrix.load_csv(_need(out / f"{prefix}_features.csv", stage, "ingest"))


def _keypair(cfg: PipelineConfig) -> Optional[PaillierKeypair]:
    return paillier.keygen(cfg.federation.key_bits, seed=cfg.clustering.seed) if cfg.federation.enabled else None


def cmd_tune(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    keypair = _keypair(cfg)
    for spec in cfg.logs:
        tuned = tune(_features(out, spec.prefix, "tune").values, cfg, keypair)
        _dump_json(out / f"{spec.prefix}_tune.json", tuned)
        print(f"{spec.prefix}\tm={tuned['m']:.6f}\tk={tuned['k']}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    keypair = _keypair(cfg)
    for spec in cfg.logs:
        features = _features(out, spec.prefix, "cluster")
        with open(_need(out / f"{spec.prefix}_tune.json", "cluster", "tune"), encoding="utf-8") as fh:
            tuned = json.load(fh)
        model, labels = cluster(features.values, tuned["k"], tuned["m"], cfg, keypair)
        model.meta["column_meta_hash"] = features.meta_hash()
        _dump_json(out / f"{spec.prefix}_model.json", model.to_dict())
        records = read_records_csv(_need(out / f"{spec.prefix}_records.csv", "cluster", "ingest"))
        write_labels(out / f"{spec.prefix}_labels.csv", records, labels)
        sizes = np.bincount(labels, minlength=model.k)
        print(f"{spec.prefix}\tk={model.k}\tsizes={sizes.tolist()}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    for spec in cfg.logs:
        _need(out / f"{spec.prefix}_labels.csv", "extract", "cluster")
    chron, transactions, patterns = extract_stage(load_labelled(cfg, out), cfg, out, RunManifest(cfg.config_hash()))
    print(f"{len(chron)} events\t{len(transactions)} transactions\t{len(patterns)} patterns")
    return EXIT_OK


def cmd_rank(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    _need(out / "patterns.jsonl", "rank", "extract")
    _, transactions, patterns = load_stage_outputs(out)
    ranked = rank_patterns(patterns, len(transactions))
    write_ranking(out / "ranking.jsonl", ranked)
    for rp in ranked[: args.top]:
        print(f"{rp.rank}\t{rp.score:.6g}\t{list(rp.pattern.labels)}\t{list(rp.supports)}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    ranked = read_ranking(_need(out / "ranking.jsonl", "report", "rank"))
    chron, transactions, _ = load_stage_outputs(out)
    path = report_stage(ranked, transactions, chron, load_stage_records(cfg, out), cfg, out,
                        RunManifest(cfg.config_hash()), args.top)
    print(path)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args)
    manifest = run_pipeline(cfg, top=args.top)
    s = manifest.summary
    print(f"{s['events']} events\t{s['transactions']} transactions\t{s['patterns']} patterns")
    print(cfg.out_dir() / f"report{REPORT_SUFFIX[cfg.report_format]}")
    return EXIT_OK


# --------------------------------------------------------------------------
# federation

def cmd_keygen(args) -> int:
    kp = paillier.keygen(args.key_bits, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "public.json", kp.public.to_dict())
    _dump_json(out / "keypair.json", kp.to_dict())
    print(out / "public.json")
    print(out / "keypair.json")
    return EXIT_OK


def _load_json(path, stage: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise BadInput(stage, f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise BadInput(stage, f"{path} is not valid JSON: {exc}") from exc


def _load_matrix(path, stage: str) -> np.ndarray:
    try:
        return FeatureMatrix.load_csv(path).values
    except OSError as exc:
        raise BadInput(stage, f"cannot read {path}: {exc.strerror}") from exc


def _fuzzifier(args, x: np.ndarray) -> float:
    return args.m if args.m is not None else compute_fuzzifier(*x.shape)


def cmd_fed_server(args) -> int:
    public = PublicKey.from_dict(_load_json(args.public_key, "fed-server")) if args.public_key else None

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    server = serve(args.host, args.port, public, args.clients, args.seed, args.k, args.m, args.rounds,
                   timeout=args.timeout, ready=ready)
    print(f"federation finished after {server.state.round} rounds")
    return EXIT_OK


def cmd_fed_client(args) -> int:
    x = _load_matrix(args.features, "fed-client")
    keypair = PaillierKeypair.from_dict(_load_json(args.keypair, "fed-client")) if args.keypair else None
    cfg = FederationConfig(args.clients, args.k, args.m, args.rounds, keypair.public.bits if keypair else 0,
                           args.seed, encrypted=keypair is not None)
    client = FederatedClient(args.client_id, x, keypair, cfg)
    centers = run_client(args.host, args.port, client, timeout=args.timeout)
    model = FuzzyModel(centers, args.m, args.k, seed=args.seed, n_iter=args.rounds,
                       meta={"federated": True, "num_clients": args.clients})
    if args.model_out:
        _dump_json(args.model_out, model.to_dict())
    labels = model.predict(x)
    print(f"client {args.client_id}: sizes={np.bincount(labels, minlength=args.k).tolist()}")
    return EXIT_OK


def cmd_fed_sim(args) -> int:
    x = _load_matrix(args.features, "fed-sim")
    m = _fuzzifier(args, x)
    shards = client_shards(x, args.clients)
    if min(len(s) for s in shards) < 2:
        raise BadInput("fed-sim", "too few rows for that many clients")
    encrypted = args.key_bits > 0
    keypair = paillier.keygen(args.key_bits, seed=args.seed) if encrypted else None
    k = args.k
    base = FederationConfig(args.clients, k or 2, m, args.rounds, max(args.key_bits, 0), args.seed,
                            encrypted=encrypted, parallel=True)
    if k is None:
        try:
            k, curve = federated_select_k(base, shards, keypair)
        except ValueError as exc:
            raise BadInput("fed-sim", str(exc)) from exc
        print("mcd curve: " + " ".join(f"{v:.6g}" for v in curve))
    model = run_federation(replace(base, k=k), shards, keypair)
    labels = model.predict(x)
    print(f"m={m:.6f}\tk={k}\tsizes={np.bincount(labels, minlength=k).tolist()}")
    if args.model_out:
        _dump_json(args.model_out, model.to_dict())
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluation and benchmarking

def _read_label_file(path: Path) -> list[str]:
    """Labels from the ``label`` column of a CSV, or one label per line."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if rows and [c.strip() for c in rows[0]] == ["label"]:
        return [row[0].strip() for row in rows[1:]]
    if rows and len(rows[0]) > 1:
        if "label" not in rows[0]:
            raise BadInput("eval", f"{path} has no 'label' column")
        col = rows[0].index("label")
        return [row[col] for row in rows[1:]]
    return [row[0].strip() for row in rows]


def _label_files(path: Path) -> dict[str, Path]:
    if path.is_file():
        return {path.stem: path}
    return {p.stem: p for p in sorted(path.glob("*.csv")) + sorted(path.glob("*.txt"))}


def evaluation_pairs(pred: Path, true: Path) -> dict[str, list[tuple[Path, Path]]]:
    """Pair prediction files with reference files, grouped by log name.

    ``pred`` may be one file, a directory of label files (matched to
    ``true`` by name), or a directory of run directories each holding such
    files. When ``true`` is a single file every prediction file is
    compared with it.
    """
    if not pred.exists():
        raise BadInput("eval", f"{pred} not found")
    if not true.exists():
        raise BadInput("eval", f"{true} not found")
    runs = [pred] if pred.is_file() else sorted(p for p in pred.iterdir() if p.is_dir()) or [pred]
    truth = _label_files(true)
    pairs: dict[str, list] = {}
    for run in runs:
        for name, p in _label_files(run).items():
            if true.is_file():
                key, t = (true.stem if pred.is_file() or len(runs) > 1 else name), true
            elif name in truth:
                key, t = name, truth[name]
            else:
                continue
            pairs.setdefault(key, []).append((p, t))
    if not pairs:
        raise BadInput("eval", f"no prediction files in {pred} match the references in {true}")
    return pairs


def cmd_eval(args) -> int:
    pairs = evaluation_pairs(Path(args.pred), Path(args.true))
    rows = []
    for name, items in sorted(pairs.items()):
        scores = []
        for p, t in items:
            lp, lt = _read_label_file(p), _read_label_file(t)
            if len(lp) != len(lt):
                raise BadInput("eval", f"{p} has {len(lp)} labels but {t} has {len(lt)}")
            if not lp:
                raise BadInput("eval", f"{p} holds no labels")
            scores.append(metrics(lt, lp))
        mean = np.mean(np.array(scores, dtype=float), axis=0)
        rows.append((name, len(items), mean))
    print("Log\tRuns\t" + "\t".join(METRIC_HEADER))
    for name, n, mean in rows:
        print(f"{name}\t{n}\t" + "\t".join(f"{100 * v:.2f}%" for v in mean))
    if len(rows) > 1:
        avg = np.mean([r[2] for r in rows], axis=0)
        print("Average\t-\t" + "\t".join(f"{100 * v:.2f}%" for v in avg))
    return EXIT_OK


def bench_modes(cfg: PipelineConfig, matrices: dict[str, np.ndarray], repeats: int = 1,
                modes=BENCH_MODES) -> dict[str, tuple[float, float]]:
    """Median wall-clock of cluster validation (tune) and final clustering per mode."""
    results = {}
    for name, bits in modes:
        fed = replace(cfg.federation, enabled=bits is not None, key_bits=bits or cfg.federation.key_bits)
        mode_cfg = replace(cfg, federation=fed)
        keypair = paillier.keygen(bits, seed=cfg.clustering.seed) if bits else None
        tv, tc = [], []
        for _ in range(repeats):
            t_val = t_clu = 0.0
            for x in matrices.values():
                t0 = time.perf_counter()
                tuned = tune(x, mode_cfg, keypair)
                t1 = time.perf_counter()
                cluster(x, tuned["k"], tuned["m"], mode_cfg, keypair)
                t_val += t1 - t0
                t_clu += time.perf_counter() - t1
            tv.append(t_val)
            tc.append(t_clu)
        results[name] = (statistics.median(tv), statistics.median(tc))
    return results


def cmd_bench(args) -> int:
    cfg = load_config(args)
    out = _out(cfg)
    matrices = {}
    for spec in cfg.logs:
        _, features = ingest_log(spec, out, cfg.syslog_year)
        if features.rows == 0:
            raise BadInput("bench", f"{spec.prefix}: empty dataset")
        matrices[spec.prefix] = features.values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        results = bench_modes(cfg, matrices, args.repeats)
    print(f"{'Mode':<10}{'Cluster Validation':>20}{'Clustering':>14}")
    for name, (tv, tc) in results.items():
        print(f"{name:<10}{tv:>20.3f}{tc:>14.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="pipeline configuration (JSON)")
    p.add_argument("--out", help="output directory (the FEDPAT_OUT variable takes precedence)")
    p.add_argument("--seed", type=int, help="clustering seed")
    p.add_argument("--key-bits", type=int, help="Paillier modulus size")
    p.add_argument("--federated", action="store_true", help="cluster with the encrypted federation")
    p.add_argument("--clients", type=int, help="number of federated clients")
    p.add_argument("--txn-features", help=f"comma-separated subset of {','.join(TXN_FEATURES)}")
    p.add_argument("--report-format", choices=REPORT_FORMATS)


def _add_fed(p: argparse.ArgumentParser, k_required: bool = True) -> None:
    p.add_argument("--clients", type=int, required=True, help="number of clients P")
    p.add_argument("--k", type=int, required=k_required)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_ in [
        ("ingest", cmd_ingest, "parse and encode every configured log"),
        ("tune", cmd_tune, "choose the fuzzifier and cluster count per log"),
        ("cluster", cmd_cluster, "label every log with fuzzy C-means"),
        ("extract", cmd_extract, "build transactions and patterns"),
        ("rank", cmd_rank, "rank patterns by suspicion"),
        ("report", cmd_report, "write the analyst report"),
        ("pipeline", cmd_pipeline, "run all stages"),
        ("bench", cmd_bench, "time cluster validation and clustering per mode"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_config(p)
        if name in ("rank", "report", "pipeline"):
            p.add_argument("--top", type=int, default=None if name != "rank" else 10,
                           help="number of patterns to show in detail")
        if name == "bench":
            p.add_argument("--repeats", type=int, default=3)
        p.set_defaults(func=fn)

    p = sub.add_parser("keygen", help="write a Paillier key pair and its public half")
    p.add_argument("--key-bits", type=int, default=paillier.DEFAULT_KEY_BITS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("fed-server", help="run the aggregation server over TCP")
    _add_fed(p)
    p.add_argument("--m", type=float, required=True, help="fuzzifier shared by all clients")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7070)
    p.add_argument("--public-key", help="public key file; omit for a plaintext federation")
    p.add_argument("--timeout", type=float, default=300.0)
    p.set_defaults(func=cmd_fed_server)

    p = sub.add_parser("fed-client", help="join a federation with a local feature matrix")
    _add_fed(p)
    p.add_argument("--client-id", type=int, required=True)
    p.add_argument("--features", required=True, help="feature CSV written by 'ingest'")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--keypair", help="key pair file; omit for a plaintext federation")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7070)
    p.add_argument("--timeout", type=float, default=300.0)
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_fed_client)

    p = sub.add_parser("fed-sim", help="simulate P clients in-process on one feature matrix")
    _add_fed(p, k_required=False)
    p.add_argument("--features", required=True)
    p.add_argument("--m", type=float, default=None)
    p.add_argument("--key-bits", type=int, default=paillier.DEFAULT_KEY_BITS,
                   help="0 runs the same protocol with plaintext sums")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_fed_sim)

    p = sub.add_parser("eval", help="score predicted labels against reference labels")
    p.add_argument("pred", help="label file, directory of label files, or directory of runs")
    p.add_argument("true", help="reference label file or directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verbose == 0:
        logging.getLogger("fedpat.log_ingest").setLevel(logging.ERROR)
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT if exc.bad_input else EXIT_INTERNAL
    except ProtocolError as exc:
        print(f"error: federation: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ValueError, OSError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"error: {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
