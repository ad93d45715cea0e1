"""CSV and JSON formats.

Edge-observation file: header ``from,to,weight``; repeated ``(from, to)``
rows are repeated observations of the same edge.  When grouped into
samples, the r-th observation of every in-edge of node i forms the r-th
sample of i, so a file written by :func:`write_observations` loads back
into the same samples.

Node-attribute file: header ``node,f1,...,fd``.

Node labels are arbitrary strings.  They are mapped to dense ids
``0..n-1``: numerically sorted when every label is an integer, otherwise in
order of first appearance.  Outputs are keyed by label, which persists the
mapping.
"""

import csv
import json
from collections import defaultdict

import numpy as np

from .errors import ValidationError
from .graph import ObservationDataset, WeightedDigraph


class NodeIndex:
    def __init__(self, labels):
        self.labels = [str(x) for x in labels]
        self.ids = {label: k for k, label in enumerate(self.labels)}
        if len(self.ids) != len(self.labels):
            raise ValidationError("duplicate node label")

    @classmethod
    def from_labels(cls, seen):
        seen = list(dict.fromkeys(str(s) for s in seen))
        try:
            return cls(sorted(seen, key=int))
        except ValueError:
            return cls(seen)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, label):
        try:
            return self.ids[str(label)]
        except KeyError:
            raise ValidationError(f"unknown node label {label!r}") from None


def _open_csv(path, header):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(fh)
    first = next(reader, None)
    if first is None or [c.strip() for c in first[: len(header)]] != header:
        fh.close()
        raise ValidationError(f"{path}: expected header starting with {','.join(header)}")
    return fh, first, reader


def read_edge_rows(path):
    """Return ``[(from_label, to_label, weight), ...]`` from an edge file."""
    fh, _, reader = _open_csv(path, ["from", "to", "weight"])
    rows = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns")
            try:
                w = float(row[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad weight {row[2]!r}") from None
            if not np.isfinite(w) or w < 0:
                raise ValidationError(f"{path}:{lineno}: weight must be finite and >= 0")
            rows.append((row[0].strip(), row[1].strip(), w))
    return rows


def read_attribute_rows(path):
    fh, header, reader = _open_csv(path, ["node"])
    if len(header) < 2:
        raise ValidationError(f"{path}: need at least one feature column")
    rows = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                rows[row[0].strip()] = [float(v) for v in row[1:]]
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric feature") from None
    return [c.strip() for c in header[1:]], rows


def rows_to_dataset(rows, index):
    per_edge = defaultdict(list)
    for src, dst, w in rows:
        per_edge[(index[dst], index[src])].append(w)
    by_node = defaultdict(dict)
    for (i, j), ws in per_edge.items():
        by_node[i][j] = ws
    samples = []
    for i in sorted(by_node):
        nbrs = by_node[i]
        for r in range(max(len(ws) for ws in nbrs.values())):
            obs = [(j, ws[r]) for j, ws in sorted(nbrs.items()) if r < len(ws)]
            samples.append((i, obs))
    # order samples round-major so truncating to the first rounds is a prefix
    rounds = {}
    ordered = []
    for i, obs in samples:
        r = rounds.get(i, 0)
        rounds[i] = r + 1
        ordered.append((r, i, obs))
    ordered.sort(key=lambda t: (t[0], t[1]))
    return ObservationDataset.from_samples(len(index), [(i, obs) for _, i, obs in ordered])


def load_observations(path, attributes_path=None):
    """Load an edge-observation file (and optional attributes).

    Returns ``(dataset, index)``.  With an attribute file every node must
    have an attribute row; nodes that appear only there are included.
    """
    rows = read_edge_rows(path)
    labels = [r[0] for r in rows] + [r[1] for r in rows]
    attr_rows = None
    if attributes_path is not None:
        _, attr_rows = read_attribute_rows(attributes_path)
        labels += list(attr_rows)
    index = NodeIndex.from_labels(labels)
    data = rows_to_dataset(rows, index)
    if attr_rows is not None:
        missing = [lab for lab in index.labels if lab not in attr_rows]
        if missing:
            raise ValidationError(f"missing attribute row for node(s) {missing[:5]}")
        data = data.with_attributes(np.array([attr_rows[lab] for lab in index.labels]))
    return data, index


def load_graph(path, directed=True):
    """Load a graph file (one row per edge) as ``(graph, index)``."""
    rows = read_edge_rows(path)
    index = NodeIndex.from_labels([r[0] for r in rows] + [r[1] for r in rows])
    seen = set()
    edges = []
    for src, dst, w in rows:
        key = (index[src], index[dst])
        if key in seen:
            raise ValidationError(f"{path}: repeated edge {src}->{dst}; load as observations")
        seen.add(key)
        edges.append((key[0], key[1], w))
    g = WeightedDigraph.from_edges(len(index), edges, directed=True)
    if not directed:
        g = WeightedDigraph(g.n, g.weights, directed=False)
    return g, index


def load_attributes(path, index=None):
    """Attribute matrix ordered by ``index`` (or by the file's own labels)."""
    _, rows = read_attribute_rows(path)
    if index is None:
        index = NodeIndex.from_labels(rows)
    missing = [lab for lab in index.labels if lab not in rows]
    if missing:
        raise ValidationError(f"missing attribute row for node(s) {missing[:5]}")
    return np.array([rows[lab] for lab in index.labels], dtype=float), index


def _fmt(w):
    # shortest string that round-trips exactly
    return repr(float(w))


def _label(index, k):
    return str(k) if index is None else index.labels[k]


def write_graph(path, g, index=None):
    """Write one ``from,to,weight`` row per stored edge; floats round-trip exactly."""
    src, dst, w = g.edges()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["from", "to", "weight"])
        for s, t, x in zip(src, dst, w):
            out.writerow([_label(index, s), _label(index, t), _fmt(x)])


def write_observations(path, data, index=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["from", "to", "weight"])
        for i, nbrs, ws in data.samples():
            for j, w in zip(nbrs, ws):
                out.writerow([_label(index, j), _label(index, i), _fmt(w)])


def write_attributes(path, attributes, index=None):
    attributes = np.atleast_2d(attributes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["node"] + [f"f{k + 1}" for k in range(attributes.shape[1])])
        for k, row in enumerate(attributes):
            out.writerow([_label(index, k)] + [_fmt(v) for v in row])


def dump_json(obj, path=None):
    """Serialise deterministically (sorted keys, fixed float repr)."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        return text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON {path}: {exc}") from exc
