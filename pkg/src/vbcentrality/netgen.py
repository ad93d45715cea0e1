"""Synthetic networks and noisy observation datasets.

All generators are deterministic functions of their arguments and seed.
"""

import logging
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp
from scipy.stats import truncnorm

from .errors import ValidationError, VbcError
from .graph import ObservationDataset, WeightedDigraph, check_strongly_connected, largest_scc
from .rng import as_generator

log = logging.getLogger(__name__)

RING_WEIGHT = 1e-3


def _undirected(n, rows, cols, weights=None):
    weights = np.ones(len(rows)) if weights is None else np.asarray(weights, dtype=float)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    if len(lo):
        # repeated pairs keep their largest weight
        key = lo * n + hi
        order = np.lexsort((-weights, key))
        first = np.concatenate([[True], key[order][1:] != key[order][:-1]])
        pick = order[first]
        lo, hi, weights = lo[pick], hi[pick], weights[pick]
    m = sp.coo_matrix((weights, (lo, hi)), shape=(n, n)).tocsr()
    m = m + sp.triu(m, k=1).T.tocsr()
    return WeightedDigraph(n, m, directed=False)


def gen_er(n, p, seed=None, max_retries=100):
    """Erdos-Renyi G(n, p), unit weights, regenerated until connected."""
    if not 0 <= p <= 1:
        raise ValidationError("p must lie in [0, 1]")
    rng = as_generator(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        keep = rng.random(len(iu)) < p
        g = _undirected(n, iu[keep], ju[keep])
        if check_strongly_connected(g):
            return g
    raise VbcError(f"no connected ER({n}, {p}) graph after {max_retries} attempts")


def gen_ba(n, m_attach, seed=None, max_retries=100):
    """Barabasi-Albert preferential attachment, unit weights.

    Growth starts from a clique on ``m_attach + 1`` nodes; each new node
    links to ``m_attach`` distinct existing nodes chosen proportionally to
    degree.  The result has ``C(m+1, 2) + (n - m - 1) m`` edges.
    """
    if not 1 <= m_attach < n:
        raise ValidationError("need 1 <= m_attach < n")
    rng = as_generator(seed)
    for _ in range(max_retries):
        core = m_attach + 1
        rows, cols = map(list, np.triu_indices(core, k=1))
        # each node appears once per incident edge end
        ends = rows + cols
        for new in range(core, n):
            targets = set()
            while len(targets) < m_attach:
                targets.add(ends[rng.integers(len(ends))])
            for t in sorted(targets):
                rows.append(t)
                cols.append(new)
                ends.extend((t, new))
        g = _undirected(n, np.array(rows), np.array(cols))
        if check_strongly_connected(g):
            return g
    raise VbcError(f"no connected BA({n}, {m_attach}) graph after {max_retries} attempts")


@dataclass(frozen=True)
class LinkSpec:
    """Attribute-driven link function ``w_ij = exp(-d(x_i, x_j)^2 / lengthscale^2)``.

    ``d`` is the Euclidean distance restricted to ``relevant_dims`` (all
    dimensions when ``None``).  Weights below ``threshold`` are dropped.
    """

    lengthscale: float = 0.4
    threshold: float = 0.05
    relevant_dims: tuple = None


def gen_attribute_graph(n, d, link=None, seed=None):
    """Undirected weighted graph whose weights are a function of node attributes.

    Attributes are uniform on ``[0, 1]^d``.  A ring of weight ``1e-3`` fills
    missing links between consecutive ids, guaranteeing connectivity.
    Returns ``(graph, attributes)``.
    """
    if n < 2 or d < 1:
        raise ValidationError("need n >= 2 and d >= 1")
    link = link or LinkSpec()
    rng = as_generator(seed)
    x = rng.random((n, d))
    dims = list(range(d)) if link.relevant_dims is None else list(link.relevant_dims)
    xs = x[:, dims]
    d2 = np.sum((xs[:, None, :] - xs[None, :, :]) ** 2, axis=-1)
    if np.isinf(link.lengthscale):
        w = np.ones((n, n))
    else:
        w = np.exp(-d2 / link.lengthscale**2)
    w[w < link.threshold] = 0.0
    np.fill_diagonal(w, 0.0)
    ring = np.arange(n)
    nxt = (ring + 1) % n
    w[nxt, ring] = np.maximum(w[nxt, ring], RING_WEIGHT)
    w[ring, nxt] = np.maximum(w[ring, nxt], RING_WEIGHT)
    if n == 2:
        w[0, 1] = w[1, 0] = max(w[0, 1], RING_WEIGHT)
    return WeightedDigraph(n, sp.csr_matrix(w), directed=False), x


@dataclass(frozen=True)
class NoiseSpec:
    """Log-normal edge noise: ``sigma2`` is the log-space variance."""

    sigma2: float = 1.0
    samples_per_node: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sigma2 < 0 or self.samples_per_node < 1:
            raise ValidationError("need sigma2 >= 0 and samples_per_node >= 1")


def _round_major_dataset(g, rounds, draw, attributes=None):
    """Samples ordered round by round; within a round by node id."""
    w = g.weights
    counts = np.diff(w.indptr)
    nodes = np.flatnonzero(counts > 0)
    per_round_nodes = nodes
    per_round_nbrs = np.concatenate([w.indices[w.indptr[i]:w.indptr[i + 1]] for i in nodes]) \
        if len(nodes) else np.zeros(0, dtype=np.int64)
    per_round_w = np.concatenate([w.data[w.indptr[i]:w.indptr[i + 1]] for i in nodes]) \
        if len(nodes) else np.zeros(0)
    sample_node = np.tile(per_round_nodes, rounds)
    neighbors = np.tile(per_round_nbrs, rounds)
    weights = draw(np.tile(per_round_w, rounds))
    indptr = np.concatenate([[0], np.cumsum(np.tile(counts[nodes], rounds))])
    return ObservationDataset(g.n, sample_node, indptr, neighbors, weights, attributes)


def sample_observations(g, noise, attributes=None):
    """Repeated noisy observations of every node's in-edges.

    For each of ``noise.samples_per_node`` rounds every node with in-edges
    yields one sample.  Observed weights are log-normal with log-space mean
    ``log w - sigma2/2`` and variance ``sigma2``, so ``E[w_hat] = w``.
    """
    rng = as_generator(noise.seed)
    s2 = noise.sigma2

    def draw(w):
        if s2 == 0:
            return w.copy()
        return w * np.exp(rng.normal(-0.5 * s2, np.sqrt(s2), size=len(w)))

    return _round_major_dataset(g, noise.samples_per_node, draw, attributes)


def sample_contact_observations(g, seed=None, rounds=1, variance=0.5, attributes=None):
    """Observed contact weights from ``N(w, variance)`` truncated to ``[0, 1]``."""
    data = g.weights.data
    if data.size and (data.min() < 0 or data.max() > 1):
        raise ValidationError("contact weights must lie in [0, 1]")
    rng = as_generator(seed)

    def draw(w):
        if variance == 0:
            return w.copy()
        sd = np.sqrt(variance)
        a = (0.0 - w) / sd
        b = (1.0 - w) / sd
        return truncnorm.rvs(a, b, loc=w, scale=sd, size=len(w), random_state=rng)

    return _round_major_dataset(g, rounds, draw, attributes)


# ---------------------------------------------------------------------------
# location-based contact populations


@dataclass(frozen=True)
class ContactPopulationSpec:
    """Hierarchical location-based contact network parameters.

    People live in households and spend the day in one location chosen by
    age band: pre-school group (age < 6), classroom within a school
    (6-17), university class (18-22), department within a firm (23-64) or
    community group (65+).  Contacts form within each location with the
    given probability; weights are uniform on ``[lo, hi]``.  A pair meeting
    in several locations keeps the largest weight.
    """

    households: int = 100
    household_size_min: int = 1
    household_size_max: int = 6
    age_max: int = 90
    preschool_size_min: int = 8
    preschool_size_max: int = 15
    classroom_size_min: int = 15
    classroom_size_max: int = 30
    classrooms_per_school_min: int = 2
    classrooms_per_school_max: int = 8
    university_size_min: int = 15
    university_size_max: int = 40
    department_size_min: int = 5
    department_size_max: int = 20
    departments_per_firm_min: int = 1
    departments_per_firm_max: int = 8
    community_size_min: int = 10
    community_size_max: int = 40
    p_household: float = 1.0
    p_preschool: float = 0.5
    p_classroom: float = 0.8
    p_school: float = 0.6
    p_university: float = 0.3
    p_department: float = 0.8
    p_firm: float = 0.6
    p_community: float = 0.1
    w_household_lo: float = 0.05
    w_household_hi: float = 0.15
    w_day_lo: float = 0.005
    w_day_hi: float = 0.035
    w_wide_lo: float = 0.0005
    w_wide_hi: float = 0.003

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("p_") and not 0 <= v <= 1:
                raise ValidationError(f"{f.name} must be a probability")
            if f.name.startswith("w_") and not 0 <= v <= 1:
                raise ValidationError(f"{f.name} must lie in [0, 1]")
            if f.name.endswith("_min") and getattr(self, f.name[:-4] + "_max") < v:
                raise ValidationError(f"{f.name} exceeds its maximum")
            if f.name.endswith(("_min", "_max")) and v < 1:
                raise ValidationError(f"{f.name} must be >= 1")
        if self.households < 0:
            raise ValidationError("households must be >= 0")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(known)
        if unknown:
            raise ValidationError(f"unknown population keys: {sorted(unknown)}")
        conv = {}
        for key, value in mapping.items():
            conv[key] = int(value) if known[key] is int else float(value)
        return cls(**conv)


def _groups(members, lo, hi, rng):
    """Partition ``members`` into consecutive groups of random size in [lo, hi]."""
    out = []
    k = 0
    while k < len(members):
        size = int(rng.integers(lo, hi + 1))
        out.append(members[k:k + size])
        k += size
    return out


def gen_contact_population(spec=None, seed=None):
    """Generate a contact network with weights in ``[0, 1]``.

    Returns ``(graph, attributes, mapping)`` restricted to the largest
    strongly connected component; ``mapping`` holds the original person
    ids.  Attributes per person: age, household size, size of the primary
    day location (classroom, department, ...) and size of the enclosing
    location (school, firm; equal to the primary size otherwise).
    """
    spec = spec or ContactPopulationSpec()
    rng = as_generator(seed)
    if spec.households == 0:
        raise ValidationError("empty population")
    sizes = rng.integers(spec.household_size_min, spec.household_size_max + 1, size=spec.households)
    n = int(sizes.sum())
    household = np.repeat(np.arange(spec.households), sizes)
    age = np.empty(n)
    start = 0
    for s in sizes:
        # one adult heads every household; others follow the overall age mix
        age[start] = rng.integers(23, min(spec.age_max, 80) + 1)
        age[start + 1:start + s] = rng.integers(0, spec.age_max + 1, size=s - 1)
        start += s
    hh_size = sizes[household].astype(float)
    primary = np.ones(n)
    secondary = np.ones(n)
    rows, cols, weights = [], [], []

    def connect(group, p, lo, hi):
        group = np.asarray(group)
        if len(group) < 2 or p == 0:
            return
        iu, ju = np.triu_indices(len(group), k=1)
        keep = rng.random(len(iu)) < p
        rows.append(group[iu[keep]])
        cols.append(group[ju[keep]])
        weights.append(rng.uniform(lo, hi, size=int(keep.sum())))

    for h in range(spec.households):
        connect(np.flatnonzero(household == h), spec.p_household, spec.w_household_lo,
                spec.w_household_hi)

    order = rng.permutation(n)
    day_lo, day_hi = spec.w_day_lo, spec.w_day_hi
    wide_lo, wide_hi = spec.w_wide_lo, spec.w_wide_hi
    bands = [
        ("preschool", (age < 6)),
        ("school", (age >= 6) & (age < 18)),
        ("university", (age >= 18) & (age < 23)),
        ("work", (age >= 23) & (age < 65)),
        ("community", age >= 65),
    ]
    for name, mask in bands:
        members = order[mask[order]]
        if name == "preschool":
            for g in _groups(members, spec.preschool_size_min, spec.preschool_size_max, rng):
                primary[g] = secondary[g] = len(g)
                connect(g, spec.p_preschool, day_lo, day_hi)
        elif name == "university":
            for g in _groups(members, spec.university_size_min, spec.university_size_max, rng):
                primary[g] = secondary[g] = len(g)
                connect(g, spec.p_university, day_lo, day_hi)
        elif name == "community":
            for g in _groups(members, spec.community_size_min, spec.community_size_max, rng):
                primary[g] = secondary[g] = len(g)
                connect(g, spec.p_community, day_lo, day_hi)
        else:
            if name == "school":
                unit = (spec.classroom_size_min, spec.classroom_size_max, spec.p_classroom)
                outer = (spec.classrooms_per_school_min, spec.classrooms_per_school_max, spec.p_school)
            else:
                unit = (spec.department_size_min, spec.department_size_max, spec.p_department)
                outer = (spec.departments_per_firm_min, spec.departments_per_firm_max, spec.p_firm)
            units = _groups(members, unit[0], unit[1], rng)
            for block in _groups(list(range(len(units))), outer[0], outer[1], rng):
                people = np.concatenate([units[u] for u in block])
                connect(people, outer[2], wide_lo, wide_hi)
                for u in block:
                    g = units[u]
                    primary[g] = len(g)
                    secondary[g] = len(people)
                    connect(g, unit[2], day_lo, day_hi)

    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        w = np.concatenate(weights)
    else:
        r = c = np.zeros(0, dtype=int)
        w = np.zeros(0)
    g = _undirected(n, r, c, w)
    attrs = np.column_stack([age, hh_size, primary, secondary])
    sub, mapping = largest_scc(g)
    return sub, attrs[mapping], mapping
