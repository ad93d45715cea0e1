"""Graph data model, observation datasets and structural checks.

Edge direction convention: ``w[i, j]`` is the weight of the edge j -> i.
Edge files list rows as ``(from, to, weight)`` and are stored as
``w[to, from]``.  Every module in the package follows this convention.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError


def _as_csr(matrix, n):
    w = sp.csr_matrix(matrix, dtype=float, shape=(n, n), copy=True)
    w.sum_duplicates()
    w.eliminate_zeros()
    w.sort_indices()
    return w


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Non-negative weighted adjacency ``W`` with ``W[i, j]`` the weight of j -> i.

    Zero entries are not stored.  Undirected graphs are stored as symmetric
    pairs and flagged ``directed=False``.
    """

    n: int
    weights: sp.csr_matrix
    directed: bool = True

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("node count must be non-negative")
        w = _as_csr(self.weights, self.n)
        if w.nnz and (not np.all(np.isfinite(w.data)) or w.data.min() < 0):
            raise ValidationError("edge weights must be finite and non-negative")
        if not self.directed and (w - w.T).count_nonzero():
            raise ValidationError("undirected graph must have a symmetric adjacency")
        w.data.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n, edges, directed=True):
        """Build from ``(source, target, weight)`` triples.

        For undirected graphs each pair is listed once and mirrored.
        Repeated edges are an error; use an :class:`ObservationDataset` for
        repeated observations.
        """
        edges = list(edges)
        if not edges:
            return cls(n, sp.csr_matrix((n, n)), directed)
        src, dst, w = (np.asarray(col) for col in zip(*edges))
        src = src.astype(int)
        dst = dst.astype(int)
        w = w.astype(float)
        if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n:
            raise ValidationError("edge endpoint out of range")
        if not directed:
            off = src != dst
            src, dst, w = (np.concatenate([a, b[off]]) for a, b in ((src, dst), (dst, src), (w, w)))
        keys = dst * n + src
        if len(np.unique(keys)) != len(keys):
            raise ValidationError("duplicate edge")
        return cls(n, sp.coo_matrix((w, (dst, src)), shape=(n, n)), directed)

    @classmethod
    def from_dense(cls, matrix, directed=None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError("adjacency must be square")
        if directed is None:
            directed = not np.array_equal(matrix, matrix.T)
        return cls(matrix.shape[0], sp.csr_matrix(matrix), directed)

    def to_dense(self):
        return self.weights.toarray()

    @property
    def num_edges(self):
        """Number of stored (directed) adjacency entries."""
        return self.weights.nnz

    def edges(self):
        """Return ``(source, target, weight)`` arrays sorted by (source, target)."""
        coo = self.weights.tocoo()
        order = np.lexsort((coo.row, coo.col))
        return coo.col[order], coo.row[order], coo.data[order]

    def in_neighbors(self, i):
        w = self.weights
        lo, hi = w.indptr[i], w.indptr[i + 1]
        return w.indices[lo:hi], w.data[lo:hi]

    def subgraph(self, nodes):
        nodes = np.asarray(nodes, dtype=int)
        w = self.weights[nodes][:, nodes]
        return WeightedDigraph(len(nodes), w, self.directed)

    def scaled(self, alpha):
        return WeightedDigraph(self.n, self.weights * float(alpha), self.directed)

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.directed == other.directed
            and (self.weights != other.weights).nnz == 0
        )

    __hash__ = None


def check_strongly_connected(g):
    """True iff every node reaches every other node along positive-weight edges."""
    if g.n == 0:
        return False
    ncomp, _ = connected_components(g.weights, directed=True, connection="strong")
    return ncomp == 1


def largest_scc(g):
    """Induced subgraph on the largest strongly connected component.

    Ties are broken in favour of the component holding the smallest
    original node id.  Returns ``(subgraph, mapping)`` where ``mapping[k]``
    is the original id of new node ``k`` (ascending).
    """
    if g.n == 0:
        raise ValidationError("empty graph has no strongly connected component")
    _, labels = connected_components(g.weights, directed=True, connection="strong")
    sizes = np.bincount(labels)
    first = np.full(len(sizes), g.n)
    np.minimum.at(first, labels, np.arange(g.n))
    best = min(range(len(sizes)), key=lambda c: (-sizes[c], first[c]))
    mapping = np.flatnonzero(labels == best)
    return g.subgraph(mapping), mapping


@dataclass(frozen=True, eq=False)
class ObservationDataset:
    """Repeated noisy observations of incoming edges.

    Sample ``k`` is node ``sample_node[k]`` together with the neighbour ids
    ``neighbors[indptr[k]:indptr[k+1]]`` and their observed weights.  The
    flat CSR-like layout keeps bound evaluation vectorised.
    """

    n: int
    sample_node: np.ndarray
    indptr: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    attributes: np.ndarray = None
    edge_sample: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sample_node = np.asarray(self.sample_node, dtype=np.int64)
        indptr = np.asarray(self.indptr, dtype=np.int64)
        neighbors = np.asarray(self.neighbors, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=float)
        if len(indptr) != len(sample_node) + 1 or indptr[0] != 0 or indptr[-1] != len(neighbors):
            raise ValidationError("inconsistent sample index pointer")
        if len(weights) != len(neighbors):
            raise ValidationError("neighbour and weight arrays differ in length")
        counts = np.diff(indptr)
        if np.any(counts <= 0):
            raise ValidationError("every sample needs at least one observed in-edge")
        for ids in (sample_node, neighbors):
            if len(ids) and (ids.min() < 0 or ids.max() >= self.n):
                raise ValidationError("node id out of range")
        if len(weights) and (not np.all(np.isfinite(weights)) or weights.min() < 0):
            raise ValidationError("observed weights must be finite and non-negative")
        attributes = self.attributes
        if attributes is not None:
            attributes = np.array(attributes, dtype=float, ndmin=2)
            if attributes.shape[0] != self.n:
                raise ValidationError("need one attribute row per node")
            attributes.flags.writeable = False
        for arr in (sample_node, indptr, neighbors, weights):
            arr.flags.writeable = False
        object.__setattr__(self, "sample_node", sample_node)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "attributes", attributes)
        edge_sample = np.repeat(np.arange(len(sample_node)), counts)
        edge_sample.flags.writeable = False
        object.__setattr__(self, "edge_sample", edge_sample)

    @classmethod
    def from_samples(cls, n, samples, attributes=None):
        """Build from an iterable of ``(node, [(neighbor, weight), ...])``."""
        nodes, indptr, nbrs, ws = [], [0], [], []
        for node, obs in samples:
            obs = list(obs)
            nodes.append(node)
            nbrs.extend(j for j, _ in obs)
            ws.extend(w for _, w in obs)
            indptr.append(len(nbrs))
        return cls(n, np.array(nodes, dtype=np.int64), np.array(indptr), np.array(nbrs, dtype=np.int64),
                   np.array(ws, dtype=float), attributes)

    @property
    def num_samples(self):
        return len(self.sample_node)

    def samples(self):
        """Iterate over ``(node, neighbor_ids, weights)``."""
        for k, i in enumerate(self.sample_node):
            lo, hi = self.indptr[k], self.indptr[k + 1]
            yield int(i), self.neighbors[lo:hi], self.weights[lo:hi]

    def take(self, sample_ids):
        """Dataset restricted to the given samples (in the given order)."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        return ObservationDataset.from_samples(
            self.n,
            ((i, zip(nb, w)) for i, nb, w in (self._sample(k) for k in sample_ids)),
            self.attributes,
        )

    def _sample(self, k):
        lo, hi = self.indptr[k], self.indptr[k + 1]
        return int(self.sample_node[k]), self.neighbors[lo:hi], self.weights[lo:hi]

    def with_attributes(self, attributes):
        return ObservationDataset(self.n, self.sample_node, self.indptr, self.neighbors,
                                  self.weights, attributes)

    def restrict(self, nodes):
        """Dataset on the induced node subset, renumbered to ``0..len(nodes)-1``.

        Samples of dropped nodes are removed, as are observed edges from
        dropped neighbours; samples left without neighbours are discarded.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        samples = []
        for i, nb, w in self.samples():
            if remap[i] < 0:
                continue
            keep = remap[nb] >= 0
            if keep.any():
                samples.append((remap[i], zip(remap[nb][keep], w[keep])))
        attrs = None if self.attributes is None else self.attributes[nodes]
        return ObservationDataset.from_samples(len(nodes), samples, attrs)


@dataclass(frozen=True, eq=False)
class AveragedWeights:
    """Entrywise average of observed weights with per-edge observation counts."""

    matrix: sp.csr_matrix
    counts: sp.csr_matrix

    def graph(self):
        return WeightedDigraph(self.matrix.shape[0], self.matrix, directed=True)


def average_observations(data, n=None):
    """Average repeated observations per edge; unobserved edges stay at zero."""
    n = data.n if n is None else n
    rows = data.sample_node[data.edge_sample]
    cols = data.neighbors
    if len(rows) and max(rows.max(), cols.max()) >= n:
        raise ValidationError("node id out of range")
    totals = sp.coo_matrix((data.weights, (rows, cols)), shape=(n, n)).tocsr()
    counts = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    c = counts.tocoo()
    t = np.asarray(totals[c.row, c.col]).ravel()
    mean = sp.csr_matrix((t / c.data, (c.row, c.col)), shape=(n, n))
    mean.eliminate_zeros()
    return AveragedWeights(mean, counts)
