"""Delimited-text and binary file formats.

Panel file
    Header ``sender_label,receiver_label,time_index,response,<covariates...>``,
    one row per directed pair and time; ``NA`` marks a missing response.
Config file
    Flat ``key = value`` lines; ``#`` starts a comment.
Chain file (text)
    First line ``# lsrm-chain <json>`` holding the layout and run metadata, then
    a CSV header ``scan,<column names>`` and one row per saved draw.  Floats are
    written with ``repr`` so a round trip is lossless.
Chain file (binary)
    ``LSRMCHN1``, a uint32 length and the JSON header (which includes the
    column names), then records of a uint32 byte length, an int64 scan index
    and the float64 row.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import (
    ConfigInvalid,
    DuplicateTriple,
    EmptyChain,
    ParseError,
    RaggedTime,
    SelfLoop,
)
from .model import DyadPanel
from .posterior import ChainLayout, PosteriorChain

PANEL_HEADER = ("sender_label", "receiver_label", "time_index", "response")
CHAIN_MARK = "# lsrm-chain "
BINARY_MAGIC = b"LSRMCHN1"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "NA"
    return repr(v)


def _parse_float(text, row, column):
    t = text.strip()
    if t in ("NA", "nan", "NaN", ""):
        return math.nan
    try:
        return float(t)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row=row, column=column) from None


# ---------------------------------------------------------------------------
# panels


def read_panel(path, family: str = "gaussian") -> DyadPanel:
    with open(path, newline="") as fh:
        return parse_panel(fh.read(), family)


def parse_panel(text: str, family: str = "gaussian") -> DyadPanel:
    """Parse panel text; actors are indexed in order of first appearance."""
    reader = csv.reader(_io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty panel file", row=1) from None
    if tuple(header[:4]) != PANEL_HEADER:
        raise ParseError(f"header must start with {','.join(PANEL_HEADER)}", row=1)
    covs = header[4:]
    if len(set(covs)) != len(covs):
        raise ParseError("duplicate covariate column", row=1)
    actors: dict = {}
    records = []
    seen = set()
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=rowno)
        s, r = row[0].strip(), row[1].strip()
        if not s or not r:
            raise ParseError("empty actor label", row=rowno, column="sender_label" if not s else "receiver_label")
        if s == r:
            raise SelfLoop(f"sender equals receiver ({s!r})", row=rowno, column="receiver_label")
        try:
            t = int(row[2].strip())
        except ValueError:
            raise ParseError(f"time_index {row[2]!r} is not an integer", row=rowno,
                             column="time_index") from None
        key = (s, r, t)
        if key in seen:
            raise DuplicateTriple(f"duplicate (sender, receiver, time) {key}", row=rowno)
        seen.add(key)
        y = _parse_float(row[3], rowno, "response")
        x = [_parse_float(v, rowno, c) for v, c in zip(row[4:], covs)]
        for v, c in zip(x, covs):
            if math.isnan(v):
                raise ParseError("covariates must not be missing", row=rowno, column=c)
        if family == "binary" and not math.isnan(y) and y not in (0.0, 1.0):
            raise ParseError("binary response must be 0, 1 or NA", row=rowno, column="response")
        for a in (s, r):
            actors.setdefault(a, len(actors))
        records.append((actors[s], actors[r], t, y, x, rowno))
    if not records:
        raise ParseError("panel file has no data rows", row=2)
    times = sorted({rec[2] for rec in records})
    if times != list(range(times[0], times[0] + len(times))):
        raise RaggedTime(f"time indices are not contiguous: {times}")
    A, T, p = len(actors), len(times), len(covs)
    t0 = times[0]
    y = np.full((A, A, T), np.nan)
    x = np.zeros((A, A, T, p))
    have = np.zeros((A, A, T), dtype=bool)
    for i, j, t, yv, xv, _ in records:
        y[i, j, t - t0] = yv
        x[i, j, t - t0] = xv
        have[i, j, t - t0] = True
    off = ~np.eye(A, dtype=bool)
    lacking = np.argwhere(off[:, :, None] & ~have)
    if len(lacking):
        labels = list(actors)
        i, j, t = lacking[0]
        raise RaggedTime(f"no row for ({labels[i]}, {labels[j]}, {times[t]}); "
                         f"{len(lacking)} directed pair-times missing")
    observed = off[:, :, None] & ~np.isnan(y)
    return DyadPanel(tuple(actors), y, observed, x, tuple(covs), family, tuple(times))


def format_panel(panel: DyadPanel) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(PANEL_HEADER) + list(panel.covariate_names))
    labels = panel.actor_labels
    binary = panel.family == "binary"
    for t in range(panel.T):
        for i in range(panel.A):
            for j in range(panel.A):
                if i == j:
                    continue
                yv = panel.y[i, j, t]
                if not panel.observed[i, j, t]:
                    ys = "NA"
                elif binary:
                    ys = str(int(yv))
                else:
                    ys = repr(float(yv))
                w.writerow([labels[i], labels[j], panel.time_labels[t], ys]
                           + [repr(float(v)) for v in panel.x[i, j, t]])
    return buf.getvalue()


def write_panel(panel: DyadPanel, path) -> None:
    atomic_write_text(path, format_panel(panel))


# ---------------------------------------------------------------------------
# key = value config files


def parse_kv(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", row=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", row=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", row=lineno, column=key)
        out[key] = value
    return out


def read_kv(path) -> dict:
    with open(path) as fh:
        return parse_kv(fh.read())


def kv_floats(value: str, key: str) -> list:
    try:
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"{key}: expected comma-separated numbers, got {value!r}") from None


def kv_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigInvalid(f"{key}: expected true/false, got {value!r}")


def kv_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigInvalid(f"{key}: expected an integer, got {value!r}") from None


def kv_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigInvalid(f"{key}: expected a number, got {value!r}") from None


# ---------------------------------------------------------------------------
# chains


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _header(chain: PosteriorChain) -> dict:
    return {"layout": chain.layout.to_dict(), "meta": chain.meta}


def format_chain(chain: PosteriorChain) -> str:
    buf = _io.StringIO()
    buf.write(CHAIN_MARK + json.dumps(_header(chain), sort_keys=True, default=_json_default) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scan",) + chain.names)
    for scan, row in zip(chain.scans, chain.values):
        w.writerow([str(int(scan))] + [fmt(v) for v in row])
    return buf.getvalue()


def write_chain(chain: PosteriorChain, path) -> None:
    atomic_write_text(path, format_chain(chain))


def parse_chain(text: str) -> PosteriorChain:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(CHAIN_MARK):
        raise ParseError("missing chain header line", row=1)
    try:
        head = json.loads(lines[0][len(CHAIN_MARK):])
        layout = ChainLayout.from_dict(head["layout"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad chain header: {exc}", row=1) from None
    if len(lines) < 2:
        raise ParseError("missing column header", row=2)
    reader = csv.reader(lines[1:])
    names = next(reader)
    if tuple(names) != ("scan",) + layout.names:
        raise ParseError("column names do not match the chain layout", row=2)
    scans, rows = [], []
    for rowno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != len(names):
            raise ParseError(f"expected {len(names)} fields, got {len(row)}", row=rowno)
        try:
            scans.append(int(row[0]))
        except ValueError:
            raise ParseError("scan index is not an integer", row=rowno, column="scan") from None
        rows.append([_parse_float(v, rowno, c) for v, c in zip(row[1:], names[1:])])
    values = np.array(rows, dtype=float).reshape(len(rows), len(layout.names))
    return PosteriorChain(layout, values, np.array(scans, dtype=int), head.get("meta", {}))


def read_chain(path) -> PosteriorChain:
    with open(path, "rb") as fh:
        start = fh.read(len(BINARY_MAGIC))
    if start == BINARY_MAGIC:
        return read_chain_binary(path)
    with open(path, newline="") as fh:
        return parse_chain(fh.read())


class BinaryChainWriter:
    """Streams draws to a length-prefixed binary chain file."""

    def __init__(self, path, layout: ChainLayout, meta=None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "wb")
        head = json.dumps({"layout": layout.to_dict(), "meta": meta or {}, "names": list(layout.names)},
                          sort_keys=True, default=_json_default).encode()
        self._fh.write(BINARY_MAGIC + struct.pack("<I", len(head)) + head)
        self._n = len(layout.names)

    def write(self, scan: int, row) -> None:
        row = np.asarray(row, dtype="<f8")
        if row.size != self._n:
            raise ValueError("row length does not match the layout")
        payload = struct.pack("<q", int(scan)) + row.tobytes()
        self._fh.write(struct.pack("<I", len(payload)) + payload)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_chain_binary(chain: PosteriorChain, path) -> None:
    tmp = Path(str(path) + ".tmp")
    with BinaryChainWriter(tmp, chain.layout, chain.meta) as w:
        for scan, row in zip(chain.scans, chain.values):
            w.write(scan, row)
    os.replace(tmp, path)


def read_chain_binary(path) -> PosteriorChain:
    data = Path(path).read_bytes()
    if not data.startswith(BINARY_MAGIC):
        raise ParseError("not a binary chain file", row=1)
    k = len(BINARY_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", data, k)
        head = json.loads(data[k + 4:k + 4 + hlen])
        layout = ChainLayout.from_dict(head["layout"])
    except (struct.error, ValueError, KeyError) as exc:
        raise ParseError(f"bad binary chain header: {exc}", row=1) from None
    k += 4 + hlen
    n = len(layout.names)
    scans, rows = [], []
    rec = 0
    while k < len(data):
        rec += 1
        if k + 4 > len(data):
            raise ParseError("truncated record length", row=rec)
        (length,) = struct.unpack_from("<I", data, k)
        if length != 8 + 8 * n or k + 4 + length > len(data):
            raise ParseError("record length does not match the layout", row=rec)
        (scan,) = struct.unpack_from("<q", data, k + 4)
        scans.append(scan)
        rows.append(np.frombuffer(data, dtype="<f8", count=n, offset=k + 12))
        k += 4 + length
    values = np.array(rows, dtype=float).reshape(len(rows), n)
    return PosteriorChain(layout, values, np.array(scans, dtype=int), head.get("meta", {}))


def convert_chain(src, dst) -> None:
    """Binary -> text (or text -> binary when ``dst`` ends in ``.bin``)."""
    chain = read_chain(src)
    if str(dst).endswith(".bin"):
        write_chain_binary(chain, dst)
    else:
        write_chain(chain, dst)


# ---------------------------------------------------------------------------
# traces and tables


def format_trace(scans, values) -> str:
    lines = ["scan,value"]
    lines += [f"{int(s)},{fmt(v)}" for s, v in zip(scans, values)]
    return "\n".join(lines) + "\n"


def parse_trace(text: str):
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0] != ["scan", "value"]:
        raise ParseError("trace header must be 'scan,value'", row=1)
    if len(rows) == 1:
        raise EmptyChain("trace has no rows")
    scans = np.array([int(r[0]) for r in rows[1:]])
    vals = np.array([_parse_float(r[1], k + 2, "value") for k, r in enumerate(rows[1:])])
    return scans, vals


def format_table(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()
