"""Readers and writers for tree specs, datasets, networks and posterior matrices.

Formats
-------
tree spec (JSON)::

    {"nodes": [{"id": "1"}, {"id": "11", "parent": "1", "data": "leaf11.csv"}]}

dataset (CSV)::

    series,time,<var1>,...,<varP>[,intervened]

``intervened`` is a ``;``-separated list of variable names, constant within
a series.

network / prior network (CSV edge list)::

    parent,child

inclusion matrix (CSV): header row and column of variable names, row =
parent, column = child, six decimals.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .likelihood import TimeSeriesDataset
from .netcore import Network, SltTopology, TopologyError


class FormatError(ValueError):
    """Malformed input file."""


def parse_tree_spec(text: str) -> SltTopology:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"tree spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise FormatError('tree spec needs a top-level "nodes" list')
    nodes, parent_of, data = [], {}, {}
    for entry in doc["nodes"]:
        if not isinstance(entry, dict) or "id" not in entry:
            raise FormatError(f"tree node without an id: {entry!r}")
        nid = str(entry["id"])
        if nid in nodes:
            raise TopologyError("duplicate", nid, "node listed twice")
        nodes.append(nid)
        if entry.get("parent") is not None:
            parent_of[nid] = str(entry["parent"])
        if entry.get("data") is not None:
            data[nid] = str(entry["data"])
    return SltTopology(tuple(nodes), parent_of, data)


def format_tree_spec(t: SltTopology) -> str:
    nodes = []
    for n in t.nodes:
        entry = {"id": n}
        if n in t.parent_of:
            entry["parent"] = t.parent_of[n]
        if n in t.data:
            entry["data"] = str(t.data[n])
        nodes.append(entry)
    return json.dumps({"nodes": nodes}, indent=2) + "\n"


def parse_dataset(text: str) -> TimeSeriesDataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise FormatError("dataset is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0] != "series" or header[1] != "time":
        raise FormatError("dataset header must start with 'series,time'")
    has_iv = header[-1] == "intervened"
    names = header[2:-1] if has_iv else header[2:]
    if len(set(names)) != len(names):
        raise FormatError("duplicate variable names in header")
    index = {name: j for j, name in enumerate(names)}

    values, sid, interventions = [], [], set()
    seen, iv_of, last_time = set(), {}, None
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} fields, got {len(r)}")
        s = r[0].strip()
        try:
            t = int(r[1])
        except ValueError:
            raise FormatError(f"line {lineno}: time {r[1]!r} is not an integer") from None
        if not sid or sid[-1] != s:
            if s in seen:
                raise FormatError(f"line {lineno}: rows of series {s!r} are not contiguous")
            seen.add(s)
        elif t != last_time + 1:
            raise FormatError(f"line {lineno}: time gap in series {s!r} ({last_time} -> {t})")
        last_time = t
        try:
            values.append([float(x) for x in r[2:2 + len(names)]])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value") from None
        sid.append(s)
        if has_iv:
            field = r[-1].strip()
            if iv_of.setdefault(s, field) != field:
                raise FormatError(f"line {lineno}: intervened field changes within series {s!r}")
            for name in filter(None, (x.strip() for x in field.split(";"))):
                if name not in index:
                    raise FormatError(f"line {lineno}: unknown intervened variable {name!r}")
                interventions.add((s, index[name]))
    if not values:
        raise FormatError("dataset has no rows")
    try:
        return TimeSeriesDataset(np.array(values), np.array(sid), frozenset(interventions),
                                 tuple(names))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def format_dataset(d: TimeSeriesDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    has_iv = bool(d.interventions)
    w.writerow(["series", "time", *d.names] + (["intervened"] if has_iv else []))
    t = 0
    for i in range(d.n):
        t = 1 if d.is_initial[i] else t + 1
        s = d.series_id[i]
        row = [s, t, *(repr(float(x)) for x in d.values[i])]
        if has_iv:
            row.append(";".join(d.names[v] for v in sorted(v for ss, v in d.interventions if ss == s)))
        w.writerow(row)
    return buf.getvalue()


def parse_network(text: str, names: Sequence[str]) -> Network:
    index = {name: j for j, name in enumerate(names)}
    edges = []
    for lineno, r in enumerate(csv.reader(io.StringIO(text)), start=1):
        r = [c.strip() for c in r]
        if not any(r):
            continue
        if lineno == 1 and r == ["parent", "child"]:
            continue
        if len(r) != 2:
            raise FormatError(f"line {lineno}: expected 'parent,child'")
        for name in r:
            if name not in index:
                raise FormatError(f"line {lineno}: unknown variable {name!r}")
        edges.append((index[r[0]], index[r[1]]))
    return Network.from_edges(len(names), edges)


def parse_prior_network(text: Optional[str], names: Sequence[str],
                        self_edges: bool = True) -> Network:
    """Prior network from an edge list; ``None`` (no file) means complete."""
    if text is None:
        return Network.complete(len(names), self_edges)
    return parse_network(text, names)


def format_network(g: Network, names: Sequence[str]) -> str:
    lines = ["parent,child"] + [f"{names[k]},{names[l]}" for k, l in g.edges()]
    return "\n".join(lines) + "\n"


def format_inclusion(probs: np.ndarray, names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *names])
    for k, name in enumerate(names):
        w.writerow([name, *(f"{p:.6f}" for p in probs[k])])
    return buf.getvalue()


def parse_inclusion(text: str) -> tuple[np.ndarray, list[str]]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise FormatError("empty inclusion matrix")
    names = rows[0][1:]
    if len(rows) != len(names) + 1:
        raise FormatError("inclusion matrix is not square")
    try:
        M = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError:
        raise FormatError("non-numeric entry in inclusion matrix") from None
    if M.shape != (len(names), len(names)):
        raise FormatError("inclusion matrix is not square")
    if [r[0] for r in rows[1:]] != names:
        raise FormatError("row and column names differ")
    return M, names


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
