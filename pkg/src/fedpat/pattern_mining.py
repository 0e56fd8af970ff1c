"""Turn labelled logs into a transaction database and extract item-set patterns."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional, Sequence

import numpy as np

from .clustering.density import DbscanParams, dbscan, knee_eps
from .log_ingest import RawLogRecord

DEFAULT_TXN_FEATURES = ("DateTime", "PID")
TXN_FEATURES = ("DateTime", "PID", "LogType")
CHRON_FIELDS = ["DateTime", "Label", "LogType", "PID", "LogFile", "OriginalIndex"]


@dataclass(frozen=True)
class ChronRecord:
    datetime: datetime
    phase1_label: str
    log_type: str
    pid: int
    source_file: str
    original_index: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.source_file, self.original_index)


@dataclass(frozen=True)
class Transaction:
    transaction_id: int
    item_set: tuple[str, ...]
    member_records: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Pattern:
    labels: tuple[str, ...]
    instances: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.labels)

    @property
    def support(self) -> int:
        return len(self.instances)


def build_chronological_db(labelled_logs: Iterable[tuple[Sequence[RawLogRecord], Sequence, str]]) -> list[ChronRecord]:
    """Merge labelled logs into one list ordered by time.

    Each item is ``(records, labels, prefix)``; a record's label becomes
    ``prefix + str(cluster id)``. The sort is stable, so simultaneous events
    keep their input order. Records without a PID get PID 1.
    """
    merged: list[ChronRecord] = []
    prefixes = set()
    for records, labels, prefix in labelled_logs:
        if len(records) != len(labels):
            raise ValueError(f"log {prefix!r}: {len(records)} records but {len(labels)} labels")
        if prefix in prefixes:
            raise ValueError(f"log prefix {prefix!r} used twice")
        prefixes.add(prefix)
        for rec, lab in zip(records, labels):
            merged.append(ChronRecord(
                datetime=rec.timestamp,
                phase1_label=f"{prefix}{lab}",
                log_type=rec.log_type,
                pid=rec.pid if rec.pid is not None else 1,
                source_file=rec.source_file,
                original_index=rec.original_index,
            ))
    merged.sort(key=lambda r: r.datetime)
    return merged


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    return np.zeros_like(col) if hi == lo else (col - lo) / (hi - lo)


def transaction_features(chron: Sequence[ChronRecord], features: Sequence[str] = DEFAULT_TXN_FEATURES) -> np.ndarray:
    """Min-max scaled clustering features: epoch seconds, PID and/or a log-type code."""
    cols = []
    log_types = sorted({r.log_type for r in chron})
    for f in features:
        if f == "DateTime":
            col = [r.datetime.timestamp() if r.datetime.tzinfo else _epoch(r.datetime) for r in chron]
        elif f == "PID":
            col = [r.pid for r in chron]
        elif f == "LogType":
            col = [log_types.index(r.log_type) for r in chron]
        else:
            raise ValueError(f"unknown transaction feature {f!r}; choose from {TXN_FEATURES}")
        cols.append(_minmax(np.asarray(col, dtype=float)))
    return np.column_stack(cols)


def _epoch(ts: datetime) -> float:
    # naive timestamps are wall-clock; treat them as UTC so the result is machine independent
    return (ts - datetime(1970, 1, 1)).total_seconds()


def cluster_transactions(chron: Sequence[ChronRecord], min_pts: int = 2,
                         features: Sequence[str] = DEFAULT_TXN_FEATURES,
                         eps: Optional[float] = None) -> list[Transaction]:
    """Group the chronological log into transactions with DBSCAN.

    ``eps`` defaults to :func:`knee_eps` with ``k = min_pts``. Every DBSCAN
    cluster becomes one transaction; every noise point becomes a singleton
    transaction. Ids follow the chronological position of each
    transaction's first event.
    """
    if not chron:
        raise ValueError("no records to cluster")
    x = transaction_features(chron, features)
    if len(np.unique(x, axis=0)) < 2:
        labels = np.zeros(len(chron), dtype=int)
    else:
        if eps is None:
            eps = knee_eps(x, k=min_pts)
        labels = dbscan(x, DbscanParams(eps=eps, min_pts=min_pts))

    groups: dict = {}
    order = []
    for i, lab in enumerate(labels):
        key = ("noise", i) if lab == -1 else ("cluster", int(lab))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(i)

    transactions = []
    for tid, key in enumerate(order):
        members = groups[key]
        transactions.append(Transaction(
            transaction_id=tid,
            item_set=tuple(sorted({chron[i].phase1_label for i in members})),
            member_records=tuple(chron[i].key for i in members),
        ))
    return transactions


def extract_patterns(transactions: Sequence[Transaction]) -> list[Pattern]:
    """One pattern per distinct item set, listing the ids of its instances.

    Patterns are ordered by their first instance.
    """
    if not transactions:
        raise ValueError("no transactions")
    instances: dict[tuple, list[int]] = {}
    for t in sorted(transactions, key=lambda t: t.transaction_id):
        instances.setdefault(t.item_set, []).append(t.transaction_id)
    return [Pattern(labels, tuple(ids)) for labels, ids in instances.items()]


# --------------------------------------------------------------------------
# files

def write_chron_csv(path, chron: Sequence[ChronRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CHRON_FIELDS)
        for r in chron:
            w.writerow([r.datetime.isoformat(sep=" "), r.phase1_label, r.log_type, r.pid,
                        r.source_file, r.original_index])


def read_chron_csv(path) -> list[ChronRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            ChronRecord(datetime.fromisoformat(row["DateTime"]), row["Label"], row["LogType"],
                        int(row["PID"]), row["LogFile"], int(row["OriginalIndex"]))
            for row in csv.DictReader(fh)
        ]


def write_transactions(path, transactions: Sequence[Transaction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transactions:
            fh.write(json.dumps({"id": t.transaction_id, "items": list(t.item_set),
                                 "members": [list(m) for m in t.member_records]}) + "\n")


def read_transactions(path) -> list[Transaction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(Transaction(int(d["id"]), tuple(d["items"]),
                                       tuple((m[0], int(m[1])) for m in d["members"])))
    return out


def write_patterns(path, patterns: Sequence[Pattern]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in patterns:
            fh.write(json.dumps({"labels": list(p.labels), "instances": list(p.instances)}) + "\n")


def read_patterns(path) -> list[Pattern]:
    with open(path, encoding="utf-8") as fh:
        return [Pattern(tuple(d["labels"]), tuple(d["instances"]))
                for d in (json.loads(line) for line in fh if line.strip())]
