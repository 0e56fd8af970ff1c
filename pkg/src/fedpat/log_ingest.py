"""Parse heterogeneous log files and encode them as numeric feature matrices.

Attribute kinds follow the naming convention of the schema files: a leading
``@`` marks free text, ``~`` ordinal data, ``$`` an IP address and no marker
a nominal category.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

NOMINAL, ORDINAL, TEXT, IP = "nominal", "ordinal", "text", "ip"
PREFIX_KINDS = {"@": TEXT, "~": ORDINAL, "$": IP}
PRESENTATION_FIELDS = ("Date", "Time", "Medium", "Message", "Message2", "SrcIP", "DestIP", "User", "Target", "Label")
MISSING = ("", "-")
DEFAULT_SYSLOG_YEAR = 1970


class SchemaError(ValueError):
    pass


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: str = NOMINAL
    phase1_selected: bool = False
    presentation_target: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (NOMINAL, ORDINAL, TEXT, IP):
            raise SchemaError(f"unknown attribute kind {self.kind!r}")
        if self.presentation_target is not None and self.presentation_target not in PRESENTATION_FIELDS:
            raise SchemaError(f"{self.presentation_target!r} is not a presentation field")


def _canonical(name: str) -> str:
    return re.sub(r"\s+", "_", name.strip())


def parse_schema_line(line: str) -> Optional[AttributeSchema]:
    """One schema entry: ``[prefix]name [phase1] [->Field]``.

    The kind marker may also trail the name (``ClientIP$``). Blank lines
    and ``#`` comments give None.
    """
    line = line.split("#", 1)[0].strip()
    if not line:
        return None
    tokens = line.split()
    raw = tokens[0]
    kind = NOMINAL
    if raw[0] in PREFIX_KINDS:
        kind, raw = PREFIX_KINDS[raw[0]], raw[1:]
    elif raw[-1] in PREFIX_KINDS:
        kind, raw = PREFIX_KINDS[raw[-1]], raw[:-1]
    if not raw:
        raise SchemaError(f"missing attribute name in {line!r}")
    phase1 = False
    target = None
    rest = tokens[1:]
    i = 0
    while i < len(rest):
        tok = rest[i]
        if tok == "phase1":
            phase1 = True
        elif tok.startswith("->"):
            target = tok[2:]
            if not target and i + 1 < len(rest):
                i += 1
                target = rest[i]
            if target not in PRESENTATION_FIELDS:
                raise SchemaError(f"unknown presentation field {target!r} in {line!r}")
        else:
            raise SchemaError(f"unknown flag {tok!r} in {line!r}")
        i += 1
    return AttributeSchema(_canonical(raw), kind, phase1, target)


def parse_schema(lines: Iterable[str]) -> list[AttributeSchema]:
    schema: list[AttributeSchema] = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        try:
            attr = parse_schema_line(line)
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
        if attr is None:
            continue
        if attr.name in seen:
            raise SchemaError(f"line {lineno}: duplicate attribute {attr.name!r}")
        seen.add(attr.name)
        schema.append(attr)
    return schema


def load_schema(path) -> list[AttributeSchema]:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh)


# --------------------------------------------------------------------------
# line formats

@dataclass(frozen=True)
class LogFormat:
    """A line regex with named groups. The ``timestamp`` group is parsed
    with ``ts_formats``; ``extra`` derives more attributes from the match."""

    name: str
    pattern: re.Pattern
    ts_formats: tuple[str, ...]
    needs_year: bool = False
    extra: Optional[Callable[[dict], dict]] = None

    def parse(self, line: str, year: int) -> tuple[datetime, dict]:
        match = self.pattern.match(line)
        if match is None:
            raise LogFormatError("line does not match the format")
        fields = {k: v for k, v in match.groupdict().items() if v is not None}
        ts_raw = fields.pop("timestamp", None)
        if ts_raw is None:
            raise LogFormatError("no timestamp captured")
        ts = _parse_timestamp(re.sub(r"\s+", " ", ts_raw), self.ts_formats, year if self.needs_year else None)
        if self.extra is not None:
            fields.update(self.extra(fields))
        return ts, fields


def _parse_timestamp(raw: str, formats: Sequence[str], year: Optional[int]) -> datetime:
    for fmt in formats:
        try:
            if year is not None:
                ts = datetime.strptime(f"{year} {raw}", "%Y " + fmt)
            else:
                ts = datetime.strptime(raw, fmt)
        except ValueError:
            continue
        # wall-clock time; offsets are dropped so all sources share one local clock
        return ts.replace(tzinfo=None, microsecond=0)
    raise LogFormatError(f"unparseable timestamp {raw!r}")


def _error_extra(fields: dict) -> dict:
    # "sh: fg: no job control" -> reason "sh", message "fg: no job control"
    msg = fields.get("Message", "")
    if ": " in msg:
        reason, rest = msg.split(": ", 1)
        return {"Reason_Phrase": reason, "Message": rest}
    return {"Reason_Phrase": ""}


_SYSLOG = (r"^(?P<timestamp>\w{3}\s+\d{1,2} \d{2}:\d{2}:\d{2}) (?P<Logging_device>\S+) "
           r"(?P<Logging_Daemon>[^\s\[:]+)(?:\[(?P<PID>\d+)\])?: ?(?P<System_message>.*)$")


def _first(pattern: str, text: str) -> str:
    m = re.search(pattern, text)
    return m.group(1) if m else ""


def _operation(msg: str) -> str:
    return re.split(r" for | from |: |; |\(", msg, maxsplit=1)[0].strip()


def _secure_extra(fields: dict) -> dict:
    msg = fields.get("System_message", "")
    return {
        "Operation": _operation(msg),
        "User": _first(r"(?:for|user) (?:invalid user |illegal user )?([^\s,;]+)", msg),
        "Source": _first(r"from (?:::ffff:)?([0-9a-fA-F.:]+)", msg),
        "Port": _first(r"port (\d+)", msg),
    }


def _messages_extra(fields: dict) -> dict:
    msg = fields.get("System_message", "")
    return {
        "Operation": _operation(msg),
        "User": _first(r"\buser[= ]([^\s,;()]+)", msg),
        "Tty": _first(r"\btty=(\S+)", msg),
        "UID": _first(r"\buid=(\d+)", msg),
        "EUID": _first(r"\beuid=(\d+)", msg),
        "Remotehost": _first(r"\brhost=(\S+)", msg),
    }


_MAIL_KEYS = {
    "from": "From", "to": "To", "size": "Size", "class": "Class", "nrcpts": "nrcpts", "proto": "Protocol",
    "daemon": "Daemon", "msgid": "Msgid", "relay": "Relay", "ruleset": "Ruleset", "arg1": "Arg",
    "ctladdr": "Ctladdr", "delay": "Delay", "xdelay": "xDelay", "mailer": "Mailer", "pri": "Priv",
    "reject": "Reject", "dsn": "DNS", "stat": "Stat",
}


def _mail_extra(fields: dict) -> dict:
    msg = fields.get("System_message", "")
    out = {"QID": _first(r"^(\w+): ", msg)}
    body = msg.split(": ", 1)[1] if re.match(r"^\w+: ", msg) else msg
    for key, value in re.findall(r"(\w+)=((?:<[^>]*>|\([^)]*\)|[^,])*)", body):
        name = _MAIL_KEYS.get(key.lower())
        if name:
            out[name] = value.strip()
    return out


_SNORT_BODY = re.compile(
    r"\[(?P<RuleNumber>[\d:]+)\] (?P<Rule>.*?) (?:\[Classification: (?P<Classification>[^\]]*)\] )?"
    r"\[Priority: (?P<Priority>\d+)\]:? \{(?P<Protocol>\w+)\} (?P<SrcIP>[\d.]+)(?::(?P<SrcPort>\d+))? -> "
    r"(?P<DstIP>[\d.]+)(?::(?P<DstPort>\d+))?"
)


def _snort_extra(fields: dict) -> dict:
    m = _SNORT_BODY.search(fields.get("System_message", ""))
    return {k: v for k, v in m.groupdict().items() if v is not None} if m else {}


_ERROR = re.compile(r"^\[(?P<timestamp>\w{3} \w{3}\s+\d{1,2} [\d:]{8} \d{4})\] \[(?P<Type>[^\]]+)\]"
                    r"(?: \[client (?P<ClientIP>[^\]]+)\])? ?(?P<Message>.*)$")

BUILTIN_FORMATS: dict[str, LogFormat] = {
    "http_access": LogFormat(
        "http_access",
        re.compile(r'^(?P<ClientIP>\S+) (?P<Ident>\S+) (?P<AuthUser>\S+) \[(?P<timestamp>[^\]]+)\] '
                   r'"(?P<HTTP_method>[A-Z]+|-)(?: (?P<ClientRequestLine>.*?))?(?: (?P<Http_protocol>HTTP/[\d.]+))?" '
                   r'(?P<StatusCode>\d{3}|-) (?P<ObjectSize>\d+|-)(?: "(?P<Referrer>[^"]*)" "(?P<Agent>[^"]*)")?\s*$'),
        ("%d/%b/%Y:%H:%M:%S %z", "%d/%b/%Y:%H:%M:%S"),
    ),
    "http_error": LogFormat("http_error", _ERROR, ("%a %b %d %H:%M:%S %Y",), extra=_error_extra),
    "http_ssl_error": LogFormat("http_ssl_error", _ERROR, ("%a %b %d %H:%M:%S %Y",), extra=_error_extra),
    "syslog_messages": LogFormat("syslog_messages", re.compile(_SYSLOG), ("%b %d %H:%M:%S",), True, _messages_extra),
    "syslog_secure": LogFormat("syslog_secure", re.compile(_SYSLOG), ("%b %d %H:%M:%S",), True, _secure_extra),
    "syslog_mail": LogFormat("syslog_mail", re.compile(_SYSLOG), ("%b %d %H:%M:%S",), True, _mail_extra),
    "snort": LogFormat("snort", re.compile(_SYSLOG), ("%b %d %H:%M:%S",), True, _snort_extra),
}


def custom_format(name: str, pattern: str, ts_formats: Sequence[str], needs_year: bool = False) -> LogFormat:
    """A user-supplied line format; ``pattern`` must have a ``timestamp`` group."""
    compiled = re.compile(pattern)
    if "timestamp" not in compiled.groupindex:
        raise LogFormatError("custom pattern needs a named group 'timestamp'")
    return LogFormat(name, compiled, tuple(ts_formats), needs_year)


# --------------------------------------------------------------------------
# records

@dataclass
class RawLogRecord:
    source_file: str
    original_index: int
    timestamp: datetime
    log_type: str
    attributes: dict = field(default_factory=dict)
    pid: Optional[int] = None


@dataclass
class Reject:
    source_file: str
    original_index: int
    log_type: str
    raw: str
    error: str


class ParsedLog(list):
    """The records of one file; ``rejects`` holds the lines that failed."""

    def __init__(self, records=(), rejects=()):
        super().__init__(records)
        self.rejects: list[Reject] = list(rejects)


def parse_log(path, log_type: str, schema: Sequence[AttributeSchema] = (), *,
              year: int = DEFAULT_SYSLOG_YEAR, fmt: Optional[LogFormat] = None,
              source_name: Optional[str] = None) -> ParsedLog:
    """Parse one log file into records.

    ``original_index`` is the 0-based line number; blank lines are skipped.
    Lines that fail to parse are kept in ``result.rejects``. Attribute keys
    are the schema names (attributes a line lacks are ""), or every
    captured field when the schema is empty. ``year`` is used by formats
    whose timestamps omit it (syslog), rolling over at a December to
    January wrap.
    """
    if fmt is None:
        try:
            fmt = BUILTIN_FORMATS[log_type]
        except KeyError:
            raise LogFormatError(f"no line pattern for log type {log_type!r}") from None
    path = Path(path)
    source = source_name or path.name
    names = [a.name for a in schema]
    lookup = {n.lower(): n for n in names}
    result = ParsedLog()
    last_month = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for idx, line in enumerate(fh):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                ts, fields = fmt.parse(line, year)
            except LogFormatError as exc:
                result.rejects.append(Reject(source, idx, log_type, line, str(exc)))
                continue
            if fmt.needs_year:
                if last_month is not None and ts.month < last_month - 6:
                    year += 1
                    ts = ts.replace(year=year)
                last_month = ts.month
            pid_raw = fields.get("PID")
            fields["Date"] = ts.strftime("%Y-%m-%d")
            fields["Time"] = ts.strftime("%H:%M:%S")
            if names:
                captured = {_canonical(k).lower(): v for k, v in fields.items()}
                attrs = {lookup[key]: captured.get(key, "") for key in lookup}
                attrs = {n: attrs[n] for n in names}
            else:
                attrs = fields
            result.append(RawLogRecord(source, idx, ts, log_type, attrs, int(pid_raw) if pid_raw else None))
    if result.rejects:
        log.warning("%s: %d unparseable lines rejected", source, len(result.rejects))
    return result


RECORD_FIELDS = ["source_file", "original_index", "timestamp", "pid", "log_type"]


def write_records_csv(path, records: Sequence[RawLogRecord]) -> None:
    attr_names: list[str] = []
    for r in records:
        for k in r.attributes:
            if k not in attr_names:
                attr_names.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS + attr_names)
        for r in records:
            w.writerow([r.source_file, r.original_index, r.timestamp.isoformat(sep=" "),
                        "" if r.pid is None else r.pid, r.log_type]
                       + [r.attributes.get(a, "") for a in attr_names])


def read_records_csv(path) -> list[RawLogRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            attrs = {k: v for k, v in row.items() if k not in RECORD_FIELDS}
            out.append(RawLogRecord(
                source_file=row["source_file"],
                original_index=int(row["original_index"]),
                timestamp=datetime.fromisoformat(row["timestamp"]),
                log_type=row["log_type"],
                attributes=attrs,
                pid=int(row["pid"]) if row["pid"] else None,
            ))
    return out


def write_rejects_csv(path, rejects: Sequence[Reject]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS + ["raw", "error"])
        for r in rejects:
            w.writerow([r.source_file, r.original_index, "", "", r.log_type, r.raw, r.error])


# --------------------------------------------------------------------------
# encoding

_HEX_RUN = re.compile(r"[0-9a-f]{4,}")
_DIGITS = re.compile(r"\d+")
_SPACE = re.compile(r"\s+")


def normalize_text(value: str) -> str:
    """Lowercase, mask hex runs (4+ chars mixing digits and letters) and
    digit runs, collapse whitespace."""
    s = value.lower()

    def hex_sub(m):
        run = m.group(0)
        if any(c.isdigit() for c in run) and any(c.isalpha() for c in run):
            return "<HEX>"
        return run

    s = _HEX_RUN.sub(hex_sub, s)
    s = _DIGITS.sub("<NUM>", s)
    return _SPACE.sub(" ", s).strip()


@dataclass(frozen=True)
class ColumnMeta:
    source: str
    kind: str
    categories: tuple
    value: Optional[str] = None

    @property
    def name(self) -> str:
        return f"{self.source}={self.value}" if self.value is not None else self.source

    def to_dict(self) -> dict:
        return {"source": self.source, "kind": self.kind, "categories": list(self.categories), "value": self.value}


@dataclass
class FeatureMatrix:
    values: np.ndarray
    column_meta: list

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def meta_hash(self) -> str:
        # column names only, so a matrix reloaded from CSV hashes the same
        blob = json.dumps([c.name for c in self.column_meta]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([c.name for c in self.column_meta])
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            values = np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(-1, len(header))
        return cls(values, [ColumnMeta(h, "loaded", ()) for h in header])


def _as_number(v: str) -> Optional[float]:
    try:
        return float(v)
    except ValueError:
        return None


def _ordinal_order(values: Sequence[str]) -> list[str]:
    present = sorted({v for v in values if v not in MISSING})
    missing = sorted({v for v in values if v in MISSING})
    nums = [_as_number(v) for v in present]
    if present and all(n is not None for n in nums):
        present = [v for _, v in sorted(zip(nums, present))]
    return missing + present


def _minmax(col: np.ndarray) -> np.ndarray:
    lo, hi = col.min(), col.max()
    if hi == lo:
        return np.zeros_like(col)
    return (col - lo) / (hi - lo)


def encode(records: Sequence[RawLogRecord], schema: Sequence[AttributeSchema]) -> FeatureMatrix:
    """Encode the phase-1 attributes of ``records`` and min-max scale each column.

    nominal   one 0/1 column per observed category (categories sorted)
    ordinal   rank among the sorted distinct values (numeric order when
              every present value is a number; missing values rank lowest)
    text      code of the normalized string among the sorted distinct ones
    ip        code of the address string among the sorted distinct ones
    """
    if not records:
        raise ValueError("cannot encode an empty record set")
    selected = [a for a in schema if a.phase1_selected]
    if not selected:
        raise SchemaError("schema selects no phase-1 attributes")
    columns: list[np.ndarray] = []
    meta: list[ColumnMeta] = []
    for attr in selected:
        raw = [str(r.attributes.get(attr.name, "")) for r in records]
        if attr.kind == NOMINAL:
            cats = sorted(set(raw))
            for cat in cats:
                columns.append(np.array([1.0 if v == cat else 0.0 for v in raw]))
                meta.append(ColumnMeta(attr.name, NOMINAL, tuple(cats), cat))
            continue
        if attr.kind == ORDINAL:
            order = _ordinal_order(raw)
            keys = raw
        elif attr.kind == TEXT:
            keys = [normalize_text(v) for v in raw]
            order = sorted(set(keys))
        else:
            keys = [v.strip() for v in raw]
            order = sorted(set(keys))
        code = {v: i for i, v in enumerate(order)}
        columns.append(np.array([float(code[v]) for v in keys]))
        meta.append(ColumnMeta(attr.name, attr.kind, tuple(order)))
    values = np.column_stack([_minmax(c) for c in columns])
    return FeatureMatrix(values, meta)
