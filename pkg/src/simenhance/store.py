"""Series persistence: CSV, line protocol, and an optional HTTP write sink.

CSV layout::

    timestamp,value
    2020-01-01T00:00:00.000000000Z,0.0
    2020-01-01T00:00:01.000000000Z,0.0052...

Timestamps are either ISO-8601 UTC with nanosecond fraction or integer
nanoseconds since the epoch; the reader accepts both. Values are written with
``repr`` so they round-trip exactly.

Line protocol, one sample per line::

    <measurement>[,<tag>=<value>...] <field>=<value> <timestamp_ns>

Commas and spaces in the measurement, and commas, spaces and equals signs in
tag keys, tag values and field names, are escaped with a backslash; a literal
backslash is written as ``\\\\``.
"""
from __future__ import annotations

import csv
import gzip
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConfigurationError, ParseError, TransportError, ValidationError
from .signal import NS_PER_S, TimeSeries

log = logging.getLogger(__name__)

CSV_HEADER = ("timestamp", "value")


@dataclass(frozen=True)
class SeriesRecord:
    measurement: str
    tags: dict[str, str]
    field_name: str
    value: float
    timestamp: int  # ns since epoch


# ---------------------------------------------------------------- CSV

def format_iso_ns(ns: int) -> str:
    sec, frac = divmod(int(ns), NS_PER_S)
    base = datetime.fromtimestamp(sec, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")
    return f"{base}.{frac:09d}Z"


def parse_timestamp(text: str) -> int:
    """Integer nanoseconds, or ISO-8601 UTC (``Z`` or ``+00:00``) with up to 9 fraction digits."""
    text = text.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    body = text
    if body.endswith("Z"):
        body = body[:-1]
    elif body.endswith("+00:00"):
        body = body[:-6]
    else:
        raise ValueError(f"timestamp {text!r} is neither integer ns nor UTC ISO-8601")
    frac_ns = 0
    if "." in body:
        body, frac = body.split(".", 1)
        if not frac.isdigit() or len(frac) > 9:
            raise ValueError(f"bad fractional seconds in {text!r}")
        frac_ns = int(frac.ljust(9, "0"))
    dt = datetime.strptime(body, "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) * NS_PER_S + frac_ns


def write_series_csv(series: TimeSeries, path, timestamps: str = "iso") -> Path:
    """Write ``series``; ``timestamps`` is ``"iso"`` or ``"ns"``."""
    if timestamps not in ("iso", "ns"):
        raise ValidationError(f"timestamps must be 'iso' or 'ns', got {timestamps!r}")
    path = Path(path)
    fmt = format_iso_ns if timestamps == "iso" else str
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for ts, v in zip(series.timestamps_ns().tolist(), series.values.tolist()):
            w.writerow([fmt(ts), repr(v)])
    return path


def _uniform_series(stamps: list[int], values: list[float], lines: list[int], default_interval_ns: int) -> TimeSeries:
    if len(stamps) == 1:
        return TimeSeries.from_ns(stamps[0], default_interval_ns, values)
    interval = stamps[1] - stamps[0]
    if interval <= 0:
        raise ValidationError(f"line {lines[1]}: timestamps must increase (interval {interval} ns)")
    for i in range(2, len(stamps)):
        if stamps[i] - stamps[i - 1] != interval:
            raise ValidationError(
                f"line {lines[i]}: non-uniform sampling, gap of {stamps[i] - stamps[i - 1]} ns "
                f"where {interval} ns expected")
    return TimeSeries.from_ns(stamps[0], interval, values)


def read_series_csv(path, default_interval: float = 1.0) -> TimeSeries:
    """Read a ``timestamp,value`` CSV; a one-row file gets ``default_interval`` seconds."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", line=1)
    if tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise ParseError(f"expected header 'timestamp,value', got {','.join(rows[0])!r}", line=1)
    stamps, values, lines = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
        try:
            stamps.append(parse_timestamp(row[0]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, column=1) from None
        try:
            v = float(row[1])
        except ValueError:
            raise ParseError(f"bad value {row[1]!r}", line=lineno, column=2) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {row[1]!r}", line=lineno, column=2)
        values.append(v)
        lines.append(lineno)
    if not stamps:
        raise ParseError(f"{path}: no data rows", line=2)
    return _uniform_series(stamps, values, lines, int(round(default_interval * NS_PER_S)))


# ---------------------------------------------------------------- line protocol

_MEASUREMENT_SPECIAL = ("\\", ",", " ")
_KEY_SPECIAL = ("\\", ",", "=", " ")


def _escape(text: str, special) -> str:
    for ch in special:
        text = text.replace(ch, "\\" + ch)
    return text


def format_line(rec: SeriesRecord) -> str:
    if not rec.measurement or not rec.field_name:
        raise ValidationError("measurement and field_name must be non-empty")
    if rec.measurement.startswith("#"):
        raise ValidationError("measurement may not start with '#' (comment marker)")
    if not math.isfinite(rec.value):
        raise ValidationError(f"cannot encode non-finite value {rec.value}")
    key = _escape(rec.measurement, _MEASUREMENT_SPECIAL)
    for k in sorted(rec.tags):
        if not k or not rec.tags[k]:
            raise ValidationError("tag keys and values must be non-empty")
        key += f",{_escape(k, _KEY_SPECIAL)}={_escape(rec.tags[k], _KEY_SPECIAL)}"
    return f"{key} {_escape(rec.field_name, _KEY_SPECIAL)}={float(rec.value)!r} {int(rec.timestamp)}"


def series_to_lines(series: TimeSeries, measurement: str, tags: dict[str, str] | None = None,
                    field_name: str = "value") -> list[str]:
    tags = dict(tags or {})
    return [
        format_line(SeriesRecord(measurement, tags, field_name, v, ts))
        for ts, v in zip(series.timestamps_ns().tolist(), series.values.tolist())
    ]


def write_line_protocol(series: TimeSeries, measurement: str, tags: dict[str, str] | None,
                        field_name: str, path) -> Path:
    path = Path(path)
    lines = series_to_lines(series, measurement, tags, field_name)
    path.write_text("".join(line + "\n" for line in lines))
    return path


def _split_unescaped(text: str, sep: str, start_col: int, lineno: int) -> list[tuple[str, int]]:
    """Split on unescaped ``sep``; returns (raw piece, 1-based column) pairs."""
    parts, buf, col = [], [], start_col
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise ParseError("dangling escape", line=lineno, column=start_col + i)
            buf.append(text[i:i + 2])
            i += 2
            continue
        if ch == sep:
            parts.append(("".join(buf), col))
            buf, col = [], start_col + i + 1
        else:
            buf.append(ch)
        i += 1
    parts.append(("".join(buf), col))
    return parts


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def parse_line(line: str, lineno: int = 1) -> list[SeriesRecord]:
    sections = _split_unescaped(line, " ", 1, lineno)
    if len(sections) != 3 or any(not s for s, _ in sections):
        col = sections[-1][1] if sections else 1
        if len(sections) < 3:
            raise ParseError("expected '<measurement>[,tags] <field>=<value> <timestamp>', "
                             "missing section", line=lineno, column=len(line) + 1)
        raise ParseError("unexpected extra or empty section", line=lineno, column=col)
    (key, kcol), (fields, fcol), (stamp, tcol) = sections
    key_parts = _split_unescaped(key, ",", kcol, lineno)
    measurement = _unescape(key_parts[0][0])
    if not measurement:
        raise ParseError("empty measurement", line=lineno, column=kcol)
    tags = {}
    for raw, col in key_parts[1:]:
        kv = _split_unescaped(raw, "=", col, lineno)
        if len(kv) != 2 or not kv[0][0] or not kv[1][0]:
            raise ParseError(f"malformed tag {raw!r}", line=lineno, column=col)
        tags[_unescape(kv[0][0])] = _unescape(kv[1][0])
    if not stamp.lstrip("-").isdigit():
        raise ParseError(f"bad timestamp {stamp!r}", line=lineno, column=tcol)
    ts = int(stamp)
    records = []
    for raw, col in _split_unescaped(fields, ",", fcol, lineno):
        kv = _split_unescaped(raw, "=", col, lineno)
        if len(kv) != 2 or not kv[0][0]:
            raise ParseError(f"malformed field {raw!r}", line=lineno, column=col)
        try:
            value = float(kv[1][0])
        except ValueError:
            raise ParseError(f"bad field value {kv[1][0]!r}", line=lineno, column=kv[1][1]) from None
        if not math.isfinite(value):
            raise ParseError("non-finite field value", line=lineno, column=kv[1][1])
        records.append(SeriesRecord(measurement, dict(tags), _unescape(kv[0][0]), value, ts))
    return records


def read_line_protocol(path) -> list[SeriesRecord]:
    """Parse a line-protocol file; blank lines and ``#`` comments are skipped."""
    records: list[SeriesRecord] = []
    last_ts = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            for rec in parse_line(line, lineno):
                if last_ts is not None and rec.timestamp < last_ts:
                    raise ParseError("timestamps must be non-decreasing", line=lineno)
                last_ts = rec.timestamp
                records.append(rec)
    return records


def records_to_series(records: list[SeriesRecord], default_interval: float = 1.0) -> TimeSeries:
    if not records:
        raise ValidationError("no records")
    return _uniform_series([r.timestamp for r in records], [r.value for r in records],
                           list(range(1, len(records) + 1)), int(round(default_interval * NS_PER_S)))


# ---------------------------------------------------------------- HTTP sink

@dataclass
class PushAck:
    status: int
    attempts: int
    lines: int
    errors: list[str] = field(default_factory=list)


def push_series(
    endpoint_url: str,
    auth_token: str,
    series: TimeSeries,
    measurement: str = "telemetry",
    tags: dict[str, str] | None = None,
    field_name: str = "value",
    attempts: int = 3,
    backoff: float = 0.5,
    timeout: float = 10.0,
    compress: bool = False,
    session=None,
) -> PushAck:
    """POST ``series`` as line protocol to a time-series write endpoint.

    2xx is success. 4xx raises :class:`ConfigurationError` at once. 5xx and
    connection failures are retried with exponential backoff
    (``backoff * 2**k`` seconds), then :class:`TransportError`.
    """
    import requests

    if not auth_token:
        raise ConfigurationError("auth token is empty")
    body = "\n".join(series_to_lines(series, measurement, tags, field_name)).encode()
    headers = {"Authorization": f"Token {auth_token}", "Content-Type": "text/plain; charset=utf-8"}
    if compress:
        body = gzip.compress(body)
        headers["Content-Encoding"] = "gzip"
    http = session or requests.Session()
    errors: list[str] = []
    for attempt in range(1, attempts + 1):
        try:
            resp = http.post(endpoint_url, data=body, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            errors.append(f"attempt {attempt}: {exc}")
        else:
            if 200 <= resp.status_code < 300:
                return PushAck(resp.status_code, attempt, len(series), errors)
            if 400 <= resp.status_code < 500:
                raise ConfigurationError(f"{endpoint_url} rejected write: HTTP {resp.status_code} {resp.text[:200]}")
            errors.append(f"attempt {attempt}: HTTP {resp.status_code}")
        log.warning("push to %s failed (%s)", endpoint_url, errors[-1])
        if attempt < attempts:
            time.sleep(backoff * 2 ** (attempt - 1))
    raise TransportError(f"{endpoint_url}: giving up after {attempts} attempts; " + "; ".join(errors))

