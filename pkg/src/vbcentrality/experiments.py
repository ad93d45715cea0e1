"""Experiment harness: noisy-edge, attribute-mapping, ARD and vaccination pipelines.

Every pipeline draws its randomness from named streams of one root seed
(see :mod:`vbcentrality.rng`), so results are reproducible and adding a
setting does not perturb the others.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .centrality import eigenvector_centrality
from .epi import SirConfig, StrategySummary, compare_strategies, vaccinate_topk
from .errors import NumericalError, ValidationError
from .graph import average_observations
from .metrics import kendall_tau, topk_overlap
from .netgen import (ContactPopulationSpec, LinkSpec, NoiseSpec, gen_attribute_graph, gen_ba,
                     gen_contact_population, gen_er, sample_contact_observations,
                     sample_observations)
from .rng import stream
from .sparse_gp import KernelConfig, jittered_cholesky, kernel_matrix
from .vbc import INIT_FLOOR, fit_vbc
from .vbcgp import ard_relevance, fit_vbcgp, predict_centrality, standardization

log = logging.getLogger(__name__)

SEED_SPACE = 2**31


def _seed(root, *names):
    return int(stream(root, *names).integers(SEED_SPACE))


# ---------------------------------------------------------------------------
# Full-GP baseline


@dataclass
class FullGp:
    """Dense GP regression with an SE kernel and constant mean."""

    x_train: np.ndarray
    y_train: np.ndarray
    kernel: KernelConfig
    noise_var: float
    shift: np.ndarray
    scale: np.ndarray
    y_mean: float

    def predict(self, x):
        xs = (np.atleast_2d(x) - self.shift) / self.scale
        k = kernel_matrix(self.kernel, self.x_train, self.x_train)
        lk, _ = jittered_cholesky(k + self.noise_var * np.eye(len(k)), self.kernel.jitter)
        alpha = cho_solve((lk, True), self.y_train - self.y_mean)
        return self.y_mean + kernel_matrix(self.kernel, xs, self.x_train) @ alpha


def _kernel_from_params(params, kind, d):
    n_ls = d if kind == "ard" else 1
    ls = np.exp(params[:n_ls])
    return KernelConfig(kind, tuple(ls), float(np.exp(params[n_ls])), 1e-10), n_ls


def _neg_log_marginal(params, x, y, kind, fixed_noise):
    kern, n_ls = _kernel_from_params(params, kind, x.shape[1])
    noise = fixed_noise if fixed_noise is not None else np.exp(params[n_ls + 1])
    k = kernel_matrix(kern, x, x) + noise * np.eye(len(x))
    try:
        lk, _ = jittered_cholesky(k, 1e-10)
    except NumericalError:
        return 1e25
    alpha = cho_solve((lk, True), y)
    return 0.5 * y @ alpha + np.sum(np.log(np.diag(lk))) + 0.5 * len(y) * np.log(2 * np.pi)


def fit_full_gp(x, y, noise_var=None, init_lengthscale=1.0, kind="se"):
    """Fit kernel hyperparameters by maximum marginal likelihood (L-BFGS-B).

    Inputs are standardised first.  ``noise_var=None`` optimises the
    observation noise too; a number fixes it.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    shift, scale = standardization(x)
    xs = (x - shift) / scale
    y_mean = float(y.mean())
    yc = y - y_mean
    amp0 = max(float(np.var(yc)), 1e-6)
    n_ls = x.shape[1] if kind == "ard" else 1
    p0 = [np.log(init_lengthscale)] * n_ls + [np.log(amp0)]
    bounds = [(-5.0, 5.0)] * n_ls + [(-15.0, 10.0)]
    if noise_var is None:
        p0.append(np.log(0.1 * amp0))
        bounds.append((-15.0, 5.0))
    res = minimize(_neg_log_marginal, p0, args=(xs, yc, kind, noise_var), method="L-BFGS-B",
                   bounds=bounds)
    kern, _ = _kernel_from_params(res.x, kind, x.shape[1])
    noise = noise_var if noise_var is not None else float(np.exp(res.x[n_ls + 1]))
    return FullGp(xs, y, kern, noise, shift, scale, y_mean)


def baseline_kernel(data, kind="ard", init_lengthscale=1.0):
    """Data-driven VBC-GP starting kernel from the log baseline centralities.

    Lengthscales come from a type-II maximum-likelihood GP fit on all nodes;
    the amplitude is the sample variance of the targets, which keeps the
    initial ``S = Kmm`` from blowing up the log-normal moments.
    """
    c_bl = eigenvector_centrality(average_observations(data).graph()).values
    y = np.log(np.maximum(c_bl, INIT_FLOOR))
    gp = fit_full_gp(data.attributes, y, None, init_lengthscale, kind)
    return KernelConfig(kind, gp.kernel.lengthscales, max(float(np.var(y)), 1e-6))


def fullgp_baseline(data, train_fraction=0.8, seed=0, noise_var=None):
    """Two-step baseline: averaged-weight centralities, then a dense GP on attributes.

    Fits log baseline centralities of a seeded ``train_fraction`` node
    split and predicts log-centralities for every node.  Returns
    ``(predicted_log_centrality, train_ids)``.
    """
    if data.attributes is None:
        raise ValidationError("Full-GP baseline needs node attributes")
    c_bl = eigenvector_centrality(average_observations(data).graph()).values
    y = np.log(np.maximum(c_bl, INIT_FLOOR))
    n = data.n
    n_train = max(2, int(round(train_fraction * n)))
    train = np.sort(stream(seed, "fullgp-split").permutation(n)[:n_train])
    gp = fit_full_gp(data.attributes[train], y[train], noise_var)
    return gp.predict(data.attributes), train


# ---------------------------------------------------------------------------
# noisy-edge experiment


NETWORK_BUILDERS = {
    "er": lambda n, param, seed: gen_er(n, param, seed),
    "ba": lambda n, param, seed: gen_ba(n, int(param), seed),
}


def parse_network(spec):
    """``"er:50:0.2077"`` or ``"ba:50:5"`` -> (kind, n, param)."""
    try:
        kind, n, param = spec.split(":")
        n = int(n)
        param = float(param)
    except ValueError:
        raise ValidationError(f"bad network spec {spec!r}; expected kind:n:param") from None
    if kind not in NETWORK_BUILDERS:
        raise ValidationError(f"unknown network kind {kind!r}")
    return kind, n, param


def noise_experiment(networks, sigma2s=(1.0, 5.0, 10.0), samples=tuple(range(1, 11)), seeds=15,
                     root_seed=0, optimizer=None, top=10):
    """Rows ``(network, sigma2, Ns, seed, method, kendall, top10)``.

    Each seed draws its own graph; the datasets for increasing ``Ns`` are
    nested (the first ``Ns`` rounds of one draw).
    """
    rows = []
    for spec in networks:
        kind, n, param = parse_network(spec)
        for s in range(seeds):
            g = NETWORK_BUILDERS[kind](n, param, _seed(root_seed, "graph", spec, s))
            ref = eigenvector_centrality(g).values
            k = min(top, n)
            for sigma2 in sigma2s:
                full = sample_observations(
                    g, NoiseSpec(sigma2, max(samples), _seed(root_seed, "obs", spec, sigma2, s)))
                per_round = full.num_samples // max(samples)
                for ns in samples:
                    data = full.take(np.arange(per_round * ns))
                    bl = eigenvector_centrality(average_observations(data).graph()).values
                    post, _ = fit_vbc(data, config=optimizer)
                    for method, c in (("vbc", post.centralities()), ("bl", bl)):
                        rows.append({"network": spec, "sigma2": sigma2, "Ns": ns, "seed": s,
                                     "method": method, "kendall": kendall_tau(c, ref),
                                     "top10": topk_overlap(c, ref, k)})
    rows.sort(key=lambda r: (r["network"], r["sigma2"], r["Ns"], r["seed"], r["method"]))
    return rows


def median_score(rows, **match):
    vals = [r["kendall"] for r in rows if all(r[k] == v for k, v in match.items())]
    return float(np.median(vals))


# ---------------------------------------------------------------------------
# attribute mapping experiment


def gp_experiment(n=60, d=3, num_inducing=15, sigma2=5.0, samples=10, seeds=15, root_seed=0,
                  link=None, kernel=None, optimizer=None, with_fullgp=True):
    """VBC-GP vs Full-GP on attribute-driven synthetic networks.

    Scores are Kendall tau against the noise-free eigenvector centrality;
    VBC-GP nodes are ranked by their predictive location.
    """
    rows = []
    for s in range(seeds):
        g, x = gen_attribute_graph(n, d, link, _seed(root_seed, "attr-graph", s))
        ref = eigenvector_centrality(g).values
        data = sample_observations(g, NoiseSpec(sigma2, samples, _seed(root_seed, "attr-obs", s)),
                                   attributes=x)
        post, report = fit_vbcgp(data, kernel_init=kernel, num_inducing=num_inducing,
                                 config=optimizer, seed=_seed(root_seed, "kmeans", s))
        pred = predict_centrality(post, x)
        row = {"seed": s, "vbcgp": kendall_tau(pred.location, ref),
               "bl": kendall_tau(eigenvector_centrality(average_observations(data).graph()).values, ref),
               "iterations": report.iterations}
        if with_fullgp:
            fg, _ = fullgp_baseline(data, 0.8, _seed(root_seed, "fullgp", s))
            row["fullgp"] = kendall_tau(fg, ref)
        rows.append(row)
    return rows


def _initial_kernel(data, hyper_init, init_lengthscale):
    d = data.attributes.shape[1]
    if hyper_init == "baseline":
        return baseline_kernel(data, "ard", init_lengthscale)
    if hyper_init == "fixed":
        return KernelConfig.ard([init_lengthscale] * d)
    raise ValidationError(f"hyper_init must be 'baseline' or 'fixed', got {hyper_init!r}")


def ard_experiment(n=60, d=3, relevant=(0,), num_inducing=15, sigma2=1.0, samples=10, seeds=15,
                   root_seed=0, init_lengthscale=1.0, link=None, optimizer=None,
                   hyper_init="baseline"):
    """Fit ARD VBC-GP models; returns initial and fitted lengthscales per seed.

    ``relevant=()`` produces a null experiment: the attributes handed to
    the model are independent of the graph.  ``hyper_init`` is
    ``"baseline"`` (see :func:`baseline_kernel`) or ``"fixed"`` (all
    lengthscales ``init_lengthscale``, unit amplitude).
    """
    out = []
    for s in range(seeds):
        if relevant:
            spec = link or LinkSpec(relevant_dims=tuple(relevant))
            g, x = gen_attribute_graph(n, d, spec, _seed(root_seed, "ard-graph", s))
        else:
            g, _ = gen_attribute_graph(n, d, link, _seed(root_seed, "ard-graph", s))
            x = stream(root_seed, "ard-null-attrs", s).random((n, d))
        data = sample_observations(g, NoiseSpec(sigma2, samples, _seed(root_seed, "ard-obs", s)),
                                   attributes=x)
        kern = _initial_kernel(data, hyper_init, init_lengthscale)
        post, _ = fit_vbcgp(data, kernel_init=kern, num_inducing=num_inducing, config=optimizer,
                            seed=_seed(root_seed, "ard-kmeans", s))
        out.append({"seed": s, "relevance": ard_relevance(post),
                    "initial_lengthscales": list(kern.lengthscales),
                    "lengthscales": list(post.gp.kernel.lengthscales)})
    return out


# ---------------------------------------------------------------------------
# vaccination case study


@dataclass
class VaccineSettings:
    networks: int = 3
    train_households: int = 100
    test_households: int = 550
    observation_rounds: int = 5
    observation_variance: float = 0.5
    num_inducing: int = 40
    vaccinate_fraction: float = 0.3
    runs: int = 100
    p_transmit: float = 0.5
    p_recover: float = 0.1
    initial_fraction: float = 0.01
    horizon: int = 365
    init_lengthscale: float = 1.0
    hyper_init: str = "baseline"
    strategies: tuple = ("none", "random", "vbcgp")

    def __post_init__(self):
        if self.networks < 1 or self.runs < 1:
            raise ValidationError("need at least one network and one run")
        if self.train_households < 1:
            raise ValidationError("training population is empty")
        if self.test_households < 1:
            raise ValidationError("test population is empty")
        if not 0 < self.vaccinate_fraction <= 1:
            raise ValidationError("vaccinate_fraction must lie in (0, 1]")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValidationError(f"unknown strategies: {sorted(unknown)}")


STRATEGIES = ("none", "random", "vbcgp", "fullgp", "true")


def merge_summaries(parts):
    """Pool per-network summaries of one strategy into a single summary.

    Curves are padded with their final state and averaged; the total
    standard deviation pools within- and between-network spread.
    """
    length = max(len(p.mean_infected) for p in parts)

    def avg(attr):
        return np.mean([np.concatenate([getattr(p, attr),
                                        np.full(length - len(getattr(p, attr)),
                                                getattr(p, attr)[-1])]) for p in parts], axis=0)

    mean_i = avg("mean_infected")
    totals = np.array([p.total_infected for p in parts])
    within = np.mean([p.total_infected_std**2 for p in parts])
    return StrategySummary(parts[0].name, mean_i, avg("mean_susceptible"), avg("mean_recovered"),
                           float(totals.mean()), float(np.sqrt(within + totals.var())),
                           float(mean_i.max()), int(np.argmax(mean_i)),
                           sum(p.runs for p in parts))


def _vaccination_sets(strategies, graph, k, rng_names, root_seed, scores):
    sets = {}
    for strategy in strategies:
        if strategy == "none":
            sets[strategy] = set()
        elif strategy == "random":
            pick = stream(root_seed, "random-vaccine", *rng_names).permutation(graph.n)[:k]
            sets[strategy] = set(pick.tolist())
        elif strategy == "true":
            sets[strategy] = vaccinate_topk(eigenvector_centrality(graph).values, k)
        else:
            sets[strategy] = vaccinate_topk(scores[strategy], k)
    return sets


def _population(pop, households, seed):
    spec = ContactPopulationSpec(**{**pop.__dict__, "households": households})
    g, attrs, _ = gen_contact_population(spec, seed)
    return g, attrs


def vaccine_experiment(settings=None, population=None, root_seed=0, optimizer=None):
    """Train VBC-GP on small contact networks and vaccinate by predicted centrality.

    One model is fitted per training network from noisy contact
    observations; it vaccinates its own network and, using predicted
    centralities only, one larger test population.  Returns a dict with
    ``"train"`` and ``"test"`` entries holding pooled
    :class:`~vbcentrality.epi.StrategySummary` objects per strategy, plus
    the fitted ``"models"`` and their ``"reports"``.
    """
    st = settings or VaccineSettings()
    pop = population or ContactPopulationSpec()
    cfg = SirConfig(st.p_transmit, st.p_recover, st.initial_fraction, st.horizon,
                    _seed(root_seed, "sir"))
    g_test, attrs_test = _population(pop, st.test_households, _seed(root_seed, "pop-test"))
    models, reports, scorers = [], [], []
    train_parts = {name: [] for name in st.strategies}
    sizes = []
    for r in range(st.networks):
        g, attrs = _population(pop, st.train_households, _seed(root_seed, "pop-train", r))
        k = int(np.floor(st.vaccinate_fraction * g.n))
        if k == 0:
            raise ValidationError("training population too small to vaccinate")
        data = sample_contact_observations(g, _seed(root_seed, "contact-obs", r),
                                           st.observation_rounds, st.observation_variance,
                                           attributes=attrs)
        kern = _initial_kernel(data, st.hyper_init, st.init_lengthscale)
        post, report = fit_vbcgp(data, kernel_init=kern, num_inducing=min(st.num_inducing, g.n),
                                 config=optimizer, seed=_seed(root_seed, "kmeans", r))
        log.info("network %d: n=%d, bound %.4g after %d iterations", r, g.n, report.bound,
                 report.iterations)
        scorer = {"vbcgp": lambda x, post=post: predict_centrality(post, x).location}
        if "fullgp" in st.strategies:
            c_bl = eigenvector_centrality(average_observations(data).graph()).values
            n_train = max(2, int(round(0.8 * g.n)))
            idx = np.sort(stream(root_seed, "fullgp-split", r).permutation(g.n)[:n_train])
            fg = fit_full_gp(attrs[idx], np.log(np.maximum(c_bl[idx], INIT_FLOOR)))
            scorer["fullgp"] = fg.predict
        scores = {name: fn(attrs) for name, fn in scorer.items()}
        sets = _vaccination_sets(st.strategies, g, k, ("train", r), root_seed, scores)
        summaries = compare_strategies(g, cfg, sets, st.runs, _seed(root_seed, "sir-runs", r))
        for name in st.strategies:
            train_parts[name].append(summaries[name])
        models.append(post)
        reports.append(report)
        scorers.append(scorer)
        sizes.append((g.n, g.num_edges, k))
    results = {"models": models, "reports": reports,
               "train": {"n": [s[0] for s in sizes], "edges": [s[1] for s in sizes],
                         "k": [s[2] for s in sizes],
                         "summaries": {name: merge_summaries(parts)
                                       for name, parts in train_parts.items()}}}
    k = int(np.floor(st.vaccinate_fraction * g_test.n))
    if k == 0:
        raise ValidationError("test population too small to vaccinate")
    seed = _seed(root_seed, "sir-runs", "test")
    fixed = [s for s in st.strategies if s in ("none", "random", "true")]
    base = compare_strategies(
        g_test, cfg, _vaccination_sets(fixed, g_test, k, ("test",), root_seed, {}),
        st.runs, seed)
    parts = {name: [base[name]] for name in fixed}
    for scorer in scorers:
        learned = [s for s in st.strategies if s in scorer]
        scores = {name: scorer[name](attrs_test) for name in learned}
        sets = _vaccination_sets(learned, g_test, k, ("test",), root_seed, scores)
        for name, summary in compare_strategies(g_test, cfg, sets, st.runs, seed).items():
            parts.setdefault(name, []).append(summary)
    results["test"] = {"n": g_test.n, "edges": g_test.num_edges, "k": k,
                       "summaries": {name: merge_summaries(parts[name])
                                     for name in st.strategies}}
    return results


def reduction(summaries, strategy, reference="none"):
    """Relative reduction of mean cumulative infections versus ``reference``."""
    base = summaries[reference].total_infected
    return 1.0 - summaries[strategy].total_infected / base if base > 0 else 0.0
