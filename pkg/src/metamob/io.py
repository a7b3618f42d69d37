"""File formats: NDJSON/CSV trajectories, network tables, curve CSVs and
byte-stable JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import IO, Any, Iterable, Iterator, Mapping

import numpy as np

from .core import MovementEvent
from .fitting import BinnedCurve
from .network import EDGE_HEADER, NODE_HEADER, EdgeStats, MobilityNetwork, NodeStats

FIELDS = ("agent", "t", "loc")


class TrajectoryFormatError(ValueError):
    """A malformed input record; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int | None = None, _level: int = 0) -> str:
    """JSON with sorted keys and every float written to 17 significant digits."""
    if isinstance(obj, Enum):
        obj = obj.value
    if isinstance(obj, np.generic):
        obj = obj.item()
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        items = [(str(k.value if isinstance(k, Enum) else k), v) for k, v in obj.items()]
        items.sort()
        parts = [f"{json.dumps(k, ensure_ascii=False)}:{' ' if indent else ''}"
                 f"{dumps(v, indent, _level + 1)}" for k, v in items]
        return _wrap("{", "}", parts, indent, _level)
    if isinstance(obj, (list, tuple, np.ndarray)):
        return _wrap("[", "]", [dumps(v, indent, _level + 1) for v in obj], indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _wrap(open_: str, close: str, parts: list[str], indent: int | None, level: int) -> str:
    if not parts:
        return open_ + close
    if not indent:
        return open_ + ",".join(parts) + close
    pad = " " * (indent * (level + 1))
    return open_ + "\n" + ",\n".join(pad + p for p in parts) + "\n" + " " * (indent * level) + close


def event_line(ev: MovementEvent) -> str:
    return json.dumps({"agent": ev.agent, "t": ev.t, "loc": ev.loc},
                      separators=(",", ":"), ensure_ascii=False)


@contextmanager
def open_output(path: str | Path) -> Iterator[IO[str]]:
    if str(path) == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def write_events(path: str | Path, events: Iterable[MovementEvent],
                 meta: Mapping[str, Any] | None = None) -> None:
    with open_output(path) as fh:
        if meta is not None:
            fh.write(dumps({"meta": meta}) + "\n")
        for ev in events:
            fh.write(event_line(ev) + "\n")


def parse_mapping(spec: str | None) -> dict[str, str]:
    """Parse ``agent=COL,t=COL,loc=COL`` into ``{field: column}``."""
    if not spec:
        return {}
    out = {}
    for part in spec.split(","):
        key, sep, col = part.partition("=")
        key = key.strip()
        if not sep or key not in FIELDS or not col.strip():
            raise ValueError(f"bad column mapping entry {part!r}")
        out[key] = col.strip()
    return out


def _coerce_time(value: Any, lineno: int) -> int:
    if isinstance(value, bool) or value is None:
        raise TrajectoryFormatError(lineno, f"invalid time {value!r}")
    if isinstance(value, int):
        t = value
    else:
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise TrajectoryFormatError(lineno, f"invalid time {value!r}") from None
        if not math.isfinite(f) or f != int(f):
            raise TrajectoryFormatError(lineno, f"time must be an integer, got {value!r}")
        t = int(f)
    if t < 0:
        raise TrajectoryFormatError(lineno, f"negative time {t}")
    return t


def _coerce_id(value: Any, name: str, lineno: int) -> str:
    if value is None or isinstance(value, (bool, dict, list)):
        raise TrajectoryFormatError(lineno, f"invalid {name} {value!r}")
    s = str(value).strip()
    if not s:
        raise TrajectoryFormatError(lineno, f"empty {name}")
    return s


def _record(rec: Mapping[str, Any], mapping: Mapping[str, str], lineno: int) -> MovementEvent:
    vals = {}
    for f in FIELDS:
        col = mapping.get(f, f)
        if col not in rec:
            raise TrajectoryFormatError(lineno, f"missing field {col!r}")
        vals[f] = rec[col]
    return MovementEvent(_coerce_id(vals["agent"], "agent", lineno),
                         _coerce_time(vals["t"], lineno),
                         _coerce_id(vals["loc"], "loc", lineno))


class EventLog:
    """Events read from a file, plus its metadata header when present."""

    def __init__(self, events: list[MovementEvent], meta: dict[str, Any] | None):
        self.events = events
        self.meta = meta

    @property
    def generated(self) -> bool:
        return self.meta is not None


def _read_ndjson(lines: Iterable[str], mapping: Mapping[str, str]) -> EventLog:
    events = []
    meta = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrajectoryFormatError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise TrajectoryFormatError(lineno, "record is not a JSON object")
        if "meta" in rec and len(rec) == 1:
            if events or meta is not None:
                raise TrajectoryFormatError(lineno, "metadata header must be the first line")
            meta = rec["meta"]
            continue
        events.append(_record(rec, mapping, lineno))
    return EventLog(events, meta)


def _read_csv(lines: Iterable[str], mapping: Mapping[str, str]) -> EventLog:
    reader = csv.reader(lines)
    header = None
    events = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            for f in FIELDS:
                if mapping.get(f, f) not in header:
                    raise TrajectoryFormatError(lineno, f"header lacks column {mapping.get(f, f)!r}")
            continue
        if len(row) != len(header):
            raise TrajectoryFormatError(lineno, f"expected {len(header)} columns, got {len(row)}")
        events.append(_record(dict(zip(header, row)), mapping, lineno))
    return EventLog(events, None)


def read_events(path: str | Path, mapping: Mapping[str, str] | None = None,
                fmt: str | None = None) -> EventLog:
    """Read NDJSON or headed CSV trajectories.

    The format is taken from ``fmt``, else the extension (``.csv`` means CSV),
    else sniffed from the first non-blank character.
    """
    mapping = mapping or {}
    if str(path) == "-":
        text = sys.stdin.read()
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    if fmt is None:
        if str(path).lower().endswith(".csv"):
            fmt = "csv"
        else:
            first = text.lstrip()[:1]
            fmt = "ndjson" if first in ("{", "") else "csv"
    lines = io.StringIO(text, newline="")
    if fmt == "csv":
        return _read_csv(lines, mapping)
    return _read_ndjson(lines, mapping)


def network_paths(prefix: str | Path) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + ".edges.csv"), Path(prefix + ".nodes.csv")


def write_network(net: MobilityNetwork, prefix: str | Path) -> tuple[Path, Path]:
    edge_path, node_path = network_paths(prefix)
    with open(edge_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for (a, b) in sorted(net.edges):
            e = net.edges[(a, b)]
            w.writerow((a, b, e.weight_events, e.weight_agents))
    degrees = net.degrees()
    with open(node_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_HEADER)
        for loc in sorted(net.nodes):
            n = net.nodes[loc]
            w.writerow((loc, n.visitors, n.events, n.self_transitions, degrees[loc]))
    return edge_path, node_path


def _int_field(row: Mapping[str, str], key: str, path: Path, lineno: int) -> int:
    try:
        v = int(row[key])
    except (KeyError, TypeError, ValueError):
        raise TrajectoryFormatError(lineno, f"{path}: bad {key!r} value") from None
    if v < 0:
        raise TrajectoryFormatError(lineno, f"{path}: negative {key!r}")
    return v


def read_network(prefix: str | Path, directed: bool = True) -> MobilityNetwork:
    edge_path, node_path = network_paths(prefix)
    net = MobilityNetwork(directed=directed)
    with open(node_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != NODE_HEADER:
            raise TrajectoryFormatError(1, f"{node_path}: header must be {','.join(NODE_HEADER)}")
        for row in reader:
            ln = reader.line_num
            net.nodes[row["loc"]] = NodeStats(_int_field(row, "visitors", node_path, ln),
                                              _int_field(row, "events", node_path, ln),
                                              _int_field(row, "self_transitions", node_path, ln))
    with open(edge_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != EDGE_HEADER:
            raise TrajectoryFormatError(1, f"{edge_path}: header must be {','.join(EDGE_HEADER)}")
        for row in reader:
            ln = reader.line_num
            a, b = row["src"], row["dst"]
            for n in (a, b):
                net.nodes.setdefault(n, NodeStats())
            net.edges[net.key(a, b)] = EdgeStats(_int_field(row, "weight_events", edge_path, ln),
                                                 _int_field(row, "weight_agents", edge_path, ln))
    return net


def write_curve(path: str | Path, curve: BinnedCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_center,value,count\n")
        for c, v, n in curve.rows():
            fh.write(f"{format_float(c)},{format_float(v)},{n}\n")
