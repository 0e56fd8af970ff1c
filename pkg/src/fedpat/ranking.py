"""Suspicion scoring, ranking and the analyst-facing presentation of patterns."""

from __future__ import annotations

import csv
import html
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .log_ingest import PRESENTATION_FIELDS, AttributeSchema, RawLogRecord
from .pattern_mining import ChronRecord, Pattern, Transaction

MAPPABLE_FIELDS = tuple(f for f in PRESENTATION_FIELDS if f not in ("Date", "Time", "Label"))
REPORT_FORMATS = ("csv", "markdown", "html")
PLACEHOLDER = "-"


def suspicion_score(p_len: int, p_supp: int, i_total: int) -> float:
    """``p_len * (i_total / p_supp) ** 2``: long, rare patterns score high."""
    if p_supp <= 0 or i_total <= 0:
        raise ValueError("support and total must be positive")
    if p_len < 1:
        raise ValueError("pattern length must be >= 1")
    if i_total < p_supp:
        raise ValueError(f"support {p_supp} exceeds the transaction count {i_total}")
    ratio = i_total / p_supp
    return p_len * ratio * ratio


def _exact_score(p_len: int, p_supp: int, i_total: int) -> Fraction:
    return Fraction(p_len * i_total * i_total, p_supp * p_supp)


@dataclass(frozen=True)
class RankedPattern:
    rank: int
    pattern: Pattern
    score: float

    @property
    def supports(self) -> tuple[int, ...]:
        return self.pattern.instances

    @property
    def log10_score(self) -> float:
        return math.log10(self.score)


def rank_patterns(patterns: Sequence[Pattern], i_total: int) -> list[RankedPattern]:
    """Sort patterns by descending suspicion.

    Equal scores are broken by more labels first, then fewer instances,
    then the label list in string order.
    """
    keyed = sorted(
        patterns,
        key=lambda p: (-_exact_score(p.length, p.support, i_total), -p.length, p.support, p.labels),
    )
    return [RankedPattern(i, p, suspicion_score(p.length, p.support, i_total)) for i, p in enumerate(keyed, 1)]


class PresentationRow(NamedTuple):
    Date: str
    Time: str
    Medium: str
    Message: str
    Message2: str
    SrcIP: str
    DestIP: str
    User: str
    Target: str
    Label: str


class FeatureMap:
    """Per log type, which source attribute fills each presentation field."""

    def __init__(self, mapping: Mapping[str, Mapping[str, str]]):
        self.mapping: dict[str, dict[str, str]] = {}
        for log_type, targets in mapping.items():
            clean = {}
            for target, source in targets.items():
                if target not in MAPPABLE_FIELDS:
                    raise ValueError(f"{log_type}: {target!r} is not a mappable presentation field")
                clean[target] = source
            self.mapping[log_type] = clean

    @classmethod
    def from_source_map(cls, data: Mapping[str, Mapping[str, object]]) -> "FeatureMap":
        """Build from ``{log_type: {source: Field or [Field, ...]}}``."""
        mapping: dict[str, dict[str, str]] = {}
        for log_type, entries in data.items():
            targets: dict[str, str] = {}
            for source, target in entries.items():
                for t in [target] if isinstance(target, str) else list(target):
                    if t in targets:
                        raise ValueError(f"{log_type}: field {t!r} mapped from both {targets[t]!r} and {source!r}")
                    targets[t] = source
            mapping[log_type] = targets
        return cls(mapping)

    @classmethod
    def load(cls, path) -> "FeatureMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_source_map(json.load(fh))

    @classmethod
    def from_schemas(cls, schemas: Mapping[str, Sequence[AttributeSchema]]) -> "FeatureMap":
        return cls.from_source_map({
            lt: {a.name: a.presentation_target for a in attrs if a.presentation_target}
            for lt, attrs in schemas.items()
        })

    def to_source_map(self) -> dict:
        out: dict[str, dict] = {}
        for lt, targets in self.mapping.items():
            by_source: dict[str, list] = {}
            for t, s in targets.items():
                by_source.setdefault(s, []).append(t)
            out[lt] = {s: ts[0] if len(ts) == 1 else ts for s, ts in by_source.items()}
        return out

    def __contains__(self, log_type: str) -> bool:
        return log_type in self.mapping

    def row(self, record: RawLogRecord, label: str) -> PresentationRow:
        targets = self.mapping[record.log_type]
        values = {}
        for f in MAPPABLE_FIELDS:
            src = targets.get(f)
            v = record.attributes.get(src, "") if src else ""
            values[f] = v if v not in ("", None) else PLACEHOLDER
        return PresentationRow(
            Date=record.timestamp.strftime("%Y-%m-%d"),
            Time=record.timestamp.strftime("%H:%M:%S"),
            Label=label,
            **values,
        )


def render_pattern(ranked: RankedPattern, transactions: Sequence[Transaction], chron_db: Sequence[ChronRecord],
                   raw_records: Mapping[tuple[str, int], RawLogRecord], fmap: FeatureMap) -> list[PresentationRow]:
    """One presentation row per event of every instance of the pattern,
    ordered by instance id then time."""
    by_id = {t.transaction_id: t for t in transactions}
    chron_by_key = {c.key: c for c in chron_db}
    rows = []
    for tid in sorted(ranked.pattern.instances):
        members = [chron_by_key[k] for k in by_id[tid].member_records]
        for c in sorted(members, key=lambda c: c.datetime):
            if c.log_type not in fmap:
                raise KeyError(f"no feature map for log type {c.log_type!r}")
            rows.append(fmap.row(raw_records[c.key], c.phase1_label))
    return rows


# --------------------------------------------------------------------------
# reports

def _labels_text(labels: Sequence[str]) -> str:
    return "[" + ", ".join(f"'{lab}'" for lab in labels) + "]"


def emit_report(ranked: Sequence[RankedPattern], rendered: Mapping[int, Sequence[PresentationRow]],
                path, fmt: str = "markdown") -> Path:
    """Write the ranked-pattern index followed by each pattern's events.

    ``rendered`` maps rank to the rows of that pattern; patterns without
    rows get only an index entry.
    """
    if not ranked:
        raise ValueError("nothing to report")
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")
    path = Path(path)
    writer = {"csv": _write_csv, "markdown": _write_markdown, "html": _write_html}[fmt]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer(fh, ranked, rendered)
    return path


CSV_HEADER = ["section", "rank", "pattern", "supports", "score", "log10_score", *PresentationRow._fields]


def _write_csv(fh, ranked, rendered):
    w = csv.writer(fh)
    w.writerow(CSV_HEADER)
    blank = [""] * len(PresentationRow._fields)
    for rp in ranked:
        w.writerow(["index", rp.rank, " ".join(rp.pattern.labels), " ".join(map(str, rp.supports)),
                    repr(rp.score), f"{rp.log10_score:.4f}", *blank])
    for rp in ranked:
        for row in rendered.get(rp.rank, ()):
            w.writerow(["event", rp.rank, "", "", "", "", *row])


def read_report_csv(path) -> list[tuple[int, tuple[str, ...], tuple[int, ...], float]]:
    """The index section of a CSV report as ``(rank, labels, supports, score)``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["section"] == "index":
                out.append((int(row["rank"]), tuple(row["pattern"].split()),
                            tuple(int(s) for s in row["supports"].split()), float(row["score"])))
    return out


def _md_cell(value) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


def _write_markdown(fh, ranked, rendered):
    fh.write("# Ranked patterns\n\n")
    fh.write("| Rank | Pattern | Supports | Score | log10(Score) |\n|---|---|---|---|---|\n")
    for rp in ranked:
        fh.write(f"| {rp.rank} | {_md_cell(_labels_text(rp.pattern.labels))} | "
                 f"{_md_cell(list(rp.supports))} | {rp.score:.6g} | {rp.log10_score:.4f} |\n")
    header = "| " + " | ".join(PresentationRow._fields) + " |\n"
    rule = "|" + "---|" * len(PresentationRow._fields) + "\n"
    for rp in ranked:
        rows = rendered.get(rp.rank)
        if not rows:
            continue
        fh.write(f"\n## Rank {rp.rank}: {_md_cell(_labels_text(rp.pattern.labels))}\n\n")
        fh.write(f"Supports: {list(rp.supports)}\n\n")
        fh.write(header + rule)
        for row in rows:
            fh.write("| " + " | ".join(_md_cell(v) for v in row) + " |\n")


_CSS = ("body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin-bottom:1.5em}"
        "td,th{border:1px solid #999;padding:2px 6px;font-size:90%;vertical-align:top}"
        "th{background:#eee}td.msg{max-width:40em;word-break:break-all}")


def _write_html(fh, ranked, rendered):
    e = html.escape
    fh.write("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Ranked patterns</title>"
             f"<style>{_CSS}</style></head><body>\n<h1>Ranked patterns</h1>\n")
    fh.write("<table id=\"index\"><tr><th>Rank</th><th>Pattern</th><th>Supports</th><th>Score</th>"
             "<th>log10(Score)</th></tr>\n")
    for rp in ranked:
        fh.write(f"<tr><td><a href=\"#rank-{rp.rank}\">{rp.rank}</a></td>"
                 f"<td>{e(_labels_text(rp.pattern.labels))}</td><td>{e(str(list(rp.supports)))}</td>"
                 f"<td>{rp.score:.6g}</td><td>{rp.log10_score:.4f}</td></tr>\n")
    fh.write("</table>\n")
    for rp in ranked:
        rows = rendered.get(rp.rank)
        if not rows:
            continue
        fh.write(f"<h2 id=\"rank-{rp.rank}\">Rank {rp.rank}: {e(_labels_text(rp.pattern.labels))}</h2>\n")
        fh.write("<table><tr>" + "".join(f"<th>{f}</th>" for f in PresentationRow._fields) + "</tr>\n")
        for row in rows:
            cells = "".join(
                f"<td class=\"msg\">{e(v)}</td>" if f in ("Message", "Message2") else f"<td>{e(v)}</td>"
                for f, v in zip(PresentationRow._fields, row)
            )
            fh.write(f"<tr>{cells}</tr>\n")
        fh.write("</table>\n")
    fh.write("</body></html>\n")
