import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import HealthCheck
from hypothesis import strategies as st

from simenhance.errors import ConfigurationError, ParseError, TransportError, ValidationError
from simenhance.signal import TimeSeries
from simenhance.store import (
    SeriesRecord,
    format_iso_ns,
    format_line,
    parse_line,
    parse_timestamp,
    push_series,
    read_line_protocol,
    read_series_csv,
    records_to_series,
    write_line_protocol,
    write_series_csv,
)

values = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)
starts = st.integers(0, 4_000_000_000_000_000_000)
intervals = st.integers(1, 10**12)
tag_text = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=12)


def series(start_ns, interval_ns, vals):
    return TimeSeries.from_ns(start_ns, interval_ns, vals)


# ------------------------------------------------------------ CSV

@settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(values, starts, intervals, st.sampled_from(["iso", "ns"]))
def test_csv_round_trip(tmp_path, vals, start, interval, fmt):
    s = series(start, interval, vals)
    path = write_series_csv(s, tmp_path / "s.csv", timestamps=fmt)
    back = read_series_csv(path)
    assert np.array_equal(back.timestamps_ns(), s.timestamps_ns())
    assert np.max(np.abs(back.values - s.values)) <= 1e-12


def test_csv_layout(tmp_path):
    s = series(0, 1_500_000_000, [1.0, -2.5])
    text = write_series_csv(s, tmp_path / "a.csv").read_text().splitlines()
    assert text == ["timestamp,value", "1970-01-01T00:00:00.000000000Z,1.0", "1970-01-01T00:00:01.500000000Z,-2.5"]
    text = write_series_csv(s, tmp_path / "b.csv", timestamps="ns").read_text().splitlines()
    assert text[1:] == ["0,1.0", "1500000000,-2.5"]


def test_iso_parsing_variants():
    assert parse_timestamp("2020-01-01T00:00:00Z") == 1577836800 * 10**9
    assert parse_timestamp("2020-01-01T00:00:00.5+00:00") == 1577836800 * 10**9 + 500_000_000
    assert parse_timestamp(format_iso_ns(123456789012345678)) == 123456789012345678
    with pytest.raises(ValueError):
        parse_timestamp("2020-01-01T00:00:00+02:00")


def test_csv_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        read_series_csv(p)


def test_csv_header_only(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("timestamp,value\n")
    with pytest.raises(ParseError):
        read_series_csv(p)


def test_csv_gap_cites_line(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("timestamp,value\n0,1.0\n1000,2.0\n3000,3.0\n4000,4.0\n")
    with pytest.raises(ValidationError, match="line 4"):
        read_series_csv(p)


@pytest.mark.parametrize("row,line,col", [
    ("0,1.0,extra", 3, None),
    ("abc,1.0", 3, 1),
    ("1000,notanumber", 3, 2),
    ("1000,nan", 3, 2),
])
def test_csv_malformed_rows(tmp_path, row, line, col):
    p = tmp_path / "m.csv"
    p.write_text(f"timestamp,value\n0,1.0\n{row}\n")
    with pytest.raises(ParseError) as info:
        read_series_csv(p)
    assert info.value.line == line
    assert info.value.column == col


# ------------------------------------------------------------ line protocol

def test_line_protocol_example():
    rec = SeriesRecord("telemetry", {"sat": "goes"}, "v", 1.5, 1_000_000_000)
    assert format_line(rec) == "telemetry,sat=goes v=1.5 1000000000"
    assert parse_line("telemetry,sat=goes v=1.5 1000000000") == [rec]


def test_tag_value_with_space_is_escaped():
    rec = SeriesRecord("telemetry", {"sat": "a b"}, "v", 2.0, 5)
    line = format_line(rec)
    assert line == r"telemetry,sat=a\ b v=2.0 5"
    assert parse_line(line) == [rec]


def test_missing_timestamp_is_an_error():
    with pytest.raises(ParseError) as info:
        parse_line("telemetry,sat=goes v=1.5", lineno=7)
    assert info.value.line == 7
    assert info.value.column is not None


@pytest.mark.parametrize("line", [
    "telemetry v=1.5 notatime",
    "telemetry v=abc 10",
    "telemetry,sat v=1.0 10",
    ",sat=x v=1.0 10",
    "telemetry v 10",
    "telemetry v=1.0 10 extra",
    "telemetry v=1.0 10\\",
])
def test_malformed_lines(line):
    with pytest.raises(ParseError):
        parse_line(line)


def test_measurement_cannot_look_like_comment():
    with pytest.raises(ValidationError):
        format_line(SeriesRecord("#m", {}, "v", 1.0, 0))


def test_read_rejects_decreasing_timestamps(tmp_path):
    p = tmp_path / "d.lp"
    p.write_text("m v=1.0 20\nm v=2.0 10\n")
    with pytest.raises(ParseError, match="line 2"):
        read_line_protocol(p)


@settings(max_examples=50, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(values, starts, intervals, tag_text.filter(lambda m: not m.startswith("#")), st.dictionaries(tag_text, tag_text, max_size=3), tag_text)
def test_line_protocol_round_trip(tmp_path, vals, start, interval, measurement, tags, field_name):
    s = series(start, interval, vals)
    path = write_line_protocol(s, measurement, tags, field_name, tmp_path / "s.lp")
    recs = read_line_protocol(path)
    assert len(recs) == len(vals)
    assert all(r.measurement == measurement and r.tags == tags and r.field_name == field_name for r in recs)
    back = records_to_series(recs)
    assert np.array_equal(back.timestamps_ns(), s.timestamps_ns())
    assert np.array_equal(back.values, s.values)


# ------------------------------------------------------------ HTTP sink

class ScriptedEndpoint:
    """Local HTTP server answering successive POSTs with scripted status codes."""

    def __init__(self, statuses):
        self.statuses = list(statuses)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                outer.requests.append((dict(self.headers), body))
                status = outer.statuses.pop(0) if outer.statuses else 500
                self.send_response(status)
                self.send_header("Content-Length", "0")
                self.end_headers()

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/api/v2/write"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


SAMPLE = series(1_000_000_000, 1_000_000_000, [1.5, 2.5, -0.25])


def test_push_success():
    with ScriptedEndpoint([204]) as ep:
        ack = push_series(ep.url, "tok", SAMPLE, tags={"sat": "goes"}, backoff=0)
    assert ack.status == 204 and ack.attempts == 1 and ack.lines == 3
    headers, body = ep.requests[0]
    assert headers["Authorization"] == "Token tok"
    assert body.decode().splitlines() == [
        "telemetry,sat=goes value=1.5 1000000000",
        "telemetry,sat=goes value=2.5 2000000000",
        "telemetry,sat=goes value=-0.25 3000000000",
    ]


def test_push_client_error_is_not_retried():
    with ScriptedEndpoint([401, 204]) as ep:
        with pytest.raises(ConfigurationError):
            push_series(ep.url, "bad", SAMPLE, backoff=0)
    assert len(ep.requests) == 1


def test_push_retries_transient_failures():
    with ScriptedEndpoint([503, 500, 204]) as ep:
        ack = push_series(ep.url, "tok", SAMPLE, backoff=0)
    assert ack.attempts == 3
    assert len(ep.requests) == 3


def test_push_gives_up_after_three_attempts():
    with ScriptedEndpoint([503, 503, 503, 204]) as ep:
        with pytest.raises(TransportError):
            push_series(ep.url, "tok", SAMPLE, backoff=0)
    assert len(ep.requests) == 3


def test_push_unreachable():
    with pytest.raises(TransportError):
        push_series("http://127.0.0.1:9/write", "tok", SAMPLE, backoff=0, timeout=0.5)


def test_push_needs_token():
    with pytest.raises(ConfigurationError):
        push_series("http://127.0.0.1:9/write", "", SAMPLE)


def test_push_gzip_body():
    import gzip

    with ScriptedEndpoint([204]) as ep:
        push_series(ep.url, "tok", SAMPLE, backoff=0, compress=True)
    headers, body = ep.requests[0]
    assert headers["Content-Encoding"] == "gzip"
    assert gzip.decompress(body).decode().count("\n") == 2
