"""Reading and writing hypernetworks, and dataset ingestion.

Two on-disk formats:

* hyperedge list: one hyperedge per line, whitespace-separated node tokens.
  Tokens become dense ids in first-appearance order; blank lines and lines
  starting with ``#`` are skipped.
* structured: JSON ``{"nodes": [label, ...], "hyperedges": [[label, ...], ...]}``.
  ``nodes`` fixes the id order and may list nodes that appear in no hyperedge.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, InvalidArgument
from .hypergraph import Hypernetwork, hyperdegrees, restrict_to_gcc

FORMATS = ("hyperedge-list", "structured")


def parse_hyperedge_list(text: str) -> Hypernetwork:
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if any(not t.isprintable() for t in tokens):
            raise FormatError(f"line {lineno}: unparsable token")
        edges.append(tokens)
    return Hypernetwork.from_labelled_edges(edges)


def format_hyperedge_list(g: Hypernetwork, header: Optional[dict] = None) -> str:
    lines = [f"# {k}={v}" for k, v in (header or {}).items()]
    lines += [" ".join(g.label(v) for v in e) for e in g.hyperedges]
    return "\n".join(lines) + "\n"


def parse_structured(text: str) -> Hypernetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "hyperedges" not in doc:
        raise FormatError("structured file needs a 'hyperedges' array")
    labels = [str(x) for x in doc.get("nodes", [])]
    index = {lab: i for i, lab in enumerate(labels)}
    if len(index) != len(labels):
        raise FormatError("duplicate node labels in 'nodes'")
    edges = []
    for k, e in enumerate(doc["hyperedges"]):
        if not isinstance(e, list):
            raise FormatError(f"hyperedge {k} is not an array")
        members = []
        for tok in e:
            key = str(tok)
            if key not in index:
                index[key] = len(labels)
                labels.append(key)
            if index[key] not in members:
                members.append(index[key])
        if not members:
            raise FormatError(f"hyperedge {k} is empty")
        edges.append(tuple(members))
    return Hypernetwork(len(labels), tuple(edges), tuple(labels))


def format_structured(g: Hypernetwork, header: Optional[dict] = None) -> str:
    doc = {
        "nodes": [g.label(v) for v in range(g.num_nodes)],
        "hyperedges": [[g.label(v) for v in e] for e in g.hyperedges],
    }
    if header:
        doc["header"] = header
    return json.dumps(doc, indent=1) + "\n"


def _read_text(path) -> str:
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        for lineno, line in enumerate(raw.split(b"\n"), 1):
            try:
                line.decode("utf-8")
            except UnicodeDecodeError:
                raise FormatError(f"line {lineno}: not valid UTF-8") from None
        raise


def read_hypernetwork(path, fmt: str = "hyperedge-list") -> Hypernetwork:
    if fmt not in FORMATS:
        raise InvalidArgument(f"unknown format {fmt!r}; expected one of {FORMATS}")
    text = _read_text(path)
    return parse_hyperedge_list(text) if fmt == "hyperedge-list" else parse_structured(text)


def write_hyperedge_list(g: Hypernetwork, path, header: Optional[dict] = None):
    Path(path).write_text(format_hyperedge_list(g, header))


def write_structured(g: Hypernetwork, path, header: Optional[dict] = None):
    Path(path).write_text(format_structured(g, header))


def export(g: Hypernetwork, path, fmt: str = "hyperedge-list", header: Optional[dict] = None):
    if fmt == "hyperedge-list":
        write_hyperedge_list(g, path, header)
    elif fmt == "structured":
        write_structured(g, path, header)
    else:
        raise InvalidArgument(f"unknown format {fmt!r}; expected one of {FORMATS}")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    path: str
    raw_nodes: int
    raw_edges: int
    num_nodes: int
    num_edges: int
    avg_hyperdegree: float
    avg_edge_size: float

    def to_dict(self) -> dict:
        return asdict(self)


def dedupe_hyperedges(g: Hypernetwork) -> Hypernetwork:
    seen = set()
    kept = []
    for e in g.hyperedges:
        if e not in seen:
            seen.add(e)
            kept.append(e)
    return Hypernetwork(g.num_nodes, tuple(kept), g.node_labels)


def manifest_for(g: Hypernetwork, name: str = "", path: str = "", raw: Optional[Hypernetwork] = None) -> DatasetManifest:
    raw = raw or g
    return DatasetManifest(
        name=name,
        path=path,
        raw_nodes=raw.num_nodes,
        raw_edges=raw.num_edges,
        num_nodes=g.num_nodes,
        num_edges=g.num_edges,
        avg_hyperdegree=float(hyperdegrees(g).mean()) if g.num_nodes else 0.0,
        avg_edge_size=float(g.edge_sizes.mean()) if g.num_edges else 0.0,
    )


def ingest(path, fmt: str = "hyperedge-list", name: Optional[str] = None) -> tuple[Hypernetwork, DatasetManifest]:
    """Load a dataset, drop repeated hyperedges and keep only its GCC."""
    raw = read_hypernetwork(path, fmt)
    if raw.num_edges == 0:
        raise InvalidArgument(f"{path}: dataset has no hyperedges")
    deduped = dedupe_hyperedges(raw)
    g = restrict_to_gcc(deduped)
    g = Hypernetwork(g.num_nodes, g.hyperedges, g.node_labels)
    return g, manifest_for(g, name or Path(path).stem, str(path), raw)


def save_manifest(m: DatasetManifest, path):
    Path(path).write_text(json.dumps(m.to_dict(), indent=2) + "\n")


def write_csv(path, header: list[str], rows, provenance: Optional[dict] = None):
    """Comma-separated table with a header row, preceded by ``# key=value`` provenance lines."""
    lines = [f"# {k}={v}" for k, v in (provenance or {}).items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    rows = [ln.split(",") for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return rows[0], rows[1:]


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)
