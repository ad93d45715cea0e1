import numpy as np
import pytest

from vbcentrality.graph import ObservationDataset, WeightedDigraph, check_strongly_connected
from vbcentrality.netgen import NoiseSpec, sample_observations
from vbcentrality.sparse_gp import KernelConfig, SparseGpState
from vbcentrality.vbc import VbcPosterior
from vbcentrality.vbcgp import VbcGpPosterior


def random_strong_graph(rng, n, density=0.4):
    """Random weighted digraph made strongly connected by a directed ring."""
    w = rng.uniform(0.1, 2.0, size=(n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(w, 0.0)
    ring = np.arange(n)
    w[(ring + 1) % n, ring] = rng.uniform(0.1, 2.0, size=n)
    g = WeightedDigraph.from_dense(w, directed=True)
    assert check_strongly_connected(g)
    return g


def dense_perron(w):
    """Leading eigenpair by dense eigendecomposition, sign-aligned and unit-L2."""
    vals, vecs = np.linalg.eig(w)
    k = np.argmax(vals.real)
    v = np.real(vecs[:, k])
    v = v * np.sign(v.sum())
    return float(vals[k].real), v / np.linalg.norm(v)


def finite_difference(f, x, h=1e-5):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def finite_difference_4(f, x, h=1e-4):
    """Fourth-order central differences."""
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def random_posterior(rng, n, tied=True):
    return VbcPosterior(rng.normal(0, 0.7, n), rng.uniform(0.05, 0.8, n), float(rng.normal()),
                        float(rng.uniform(0.1, 1.0)), rng.uniform(0.2, 1.5, 1 if tied else n))


def toy_dataset(rng, n=5, rounds=2):
    w = rng.uniform(0.2, 2.0, (n, n)) * (rng.random((n, n)) < 0.6)
    np.fill_diagonal(w, 0)
    w[(np.arange(n) + 1) % n, np.arange(n)] += 0.5
    g = WeightedDigraph.from_dense(w, directed=True)
    return sample_observations(g, NoiseSpec(0.5, rounds, int(rng.integers(1000))))


def toy_problem(rng, n=6, d=2, m=3, kind="ard"):
    x = rng.normal(size=(n, d))
    samples = []
    for _ in range(2):
        for i in range(n):
            nbrs = sorted({(i + 1) % n, int(rng.integers(n))} - {i})
            samples.append((i, [(j, float(rng.uniform(0.3, 2.0))) for j in nbrs]))
    data = ObservationDataset.from_samples(n, samples, attributes=x)
    ls = rng.uniform(0.7, 1.8, d if kind == "ard" else 1)
    kern = KernelConfig(kind, tuple(ls), float(rng.uniform(0.5, 1.5)))
    z = rng.normal(size=(m, d))
    kmm = SparseGpState(z, np.zeros(m), np.eye(m), kern).kmm()
    # S = c Kmm + L A A^T L^T with L = chol(Kmm) keeps b^T S b of order a^2
    # however ill-conditioned Kmm is
    lk = np.linalg.cholesky(kmm + 1e-8 * np.eye(m))
    a = lk @ rng.normal(size=(m, m))
    cov = rng.uniform(0.2, 0.6) * kmm + 0.05 * a @ a.T / m
    gp = SparseGpState(z, kmm @ rng.normal(0, 0.5, m), cov, kern)
    post = VbcGpPosterior(gp, float(rng.normal()), float(rng.uniform(0.2, 1.0)),
                          float(rng.uniform(0.3, 1.2)))
    return data, post


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


class Criterion:
    def __init__(self, label, lines):
        self.label = label
        self.lines = lines
        self.recorded = False

    def check(self, ok, detail):
        """Record one PASS/FAIL line for the summary, then assert."""
        line = f"{self.label} {'PASS' if ok else 'FAIL'}  {detail}"
        self.lines.append(line)
        self.recorded = True
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    label = request.node.name.split("_")[1].upper()
    crit = Criterion(label, request.config.stash.setdefault(ACCEPTANCE, []))
    yield crit
    if not crit.recorded:
        crit.lines.append(f"{label} FAIL  raised before reaching its check")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
