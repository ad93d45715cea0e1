"""Variational Bayesian centrality (VBC).

Centralities are ``c_i = exp(z_i)`` and the eigenvalue is
``lambda = exp(z_lambda)`` with Gaussian ``z``.  A sample ``k`` of node
``i`` contributes the Gaussian log-likelihood of
``log(sum_j w_ij c_j) - z_lambda - z_i`` with variance ``noise_var``.
The posterior is mean-field Gaussian over every ``z_i`` and ``z_lambda``
and is fitted by maximising the approximate lower bound
:func:`l2_bound` with conjugate gradients.

Parameter vector layout used by :func:`l2_gradient` and the optimiser::

    [mu (n), log var (n), mu_lambda, log var_lambda, log noise_var (1 or n)]
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .centrality import eigenvector_centrality
from .errors import NotStronglyConnectedError, NumericalError, ValidationError
from .graph import average_observations, check_strongly_connected, largest_scc
from .optimize import OptimizerConfig, maximize

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
INIT_FLOOR = 1e-8


def lognormal_moments(mu, var):
    """Mean and variance of ``exp(z)`` for ``z ~ N(mu, var)``.

    Uses the standard log-normal variance ``(e^var - 1) e^(2 mu + var)``.
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValidationError("variance must be non-negative")
    mean = np.exp(mu + 0.5 * var)
    variance = np.expm1(var) * np.exp(2 * mu + var)
    if mean.ndim == 0:
        return float(mean), float(variance)
    return mean, variance


def xi_approx(neighbors):
    """Second-order approximation of ``E[log sum_j w_j exp(z_j)]``.

    ``neighbors`` is a sequence of ``(w_ij, mu_j, var_j)``.
    """
    arr = np.array(list(neighbors), dtype=float, ndmin=2)
    if arr.size == 0:
        raise ValidationError("xi needs at least one neighbour")
    w, mu, var = arr.T
    if np.any(w < 0):
        raise ValidationError("weights must be non-negative")
    mean, variance = lognormal_moments(mu, var)
    total = np.sum(w * mean)
    if not total > 0:
        raise NumericalError("weighted neighbour sum is zero; log undefined")
    return float(np.log(total) - np.sum(w**2 * variance) / (2 * total**2))


def gaussian_kl(mu_q, cov_q, mu_p, cov_p):
    """KL(N(mu_q, cov_q) || N(mu_p, cov_p)).

    Covariances may be full matrices or 1-D arrays of variances (diagonal
    case); scalars are treated as 1-D.
    """
    mu_q = np.atleast_1d(np.asarray(mu_q, dtype=float))
    mu_p = np.atleast_1d(np.asarray(mu_p, dtype=float))
    cov_q = np.asarray(cov_q, dtype=float)
    cov_p = np.asarray(cov_p, dtype=float)
    if cov_q.ndim <= 1 and cov_p.ndim <= 1:
        vq = np.broadcast_to(cov_q, mu_q.shape)
        vp = np.broadcast_to(cov_p, mu_q.shape)
        if np.any(vq <= 0) or np.any(vp <= 0):
            raise ValidationError("variances must be positive")
        diff = mu_p - mu_q
        return float(0.5 * np.sum(vq / vp + diff**2 / vp - 1.0 - np.log(vq) + np.log(vp)))
    cov_q = np.diag(cov_q) if cov_q.ndim == 1 else cov_q
    cov_p = np.diag(cov_p) if cov_p.ndim == 1 else cov_p
    d = len(mu_q)
    try:
        lq = np.linalg.cholesky(cov_q)
        lp = np.linalg.cholesky(cov_p)
    except np.linalg.LinAlgError:
        raise ValidationError("covariance is not positive definite") from None
    a = np.linalg.solve(lp, lq)
    diff = np.linalg.solve(lp, mu_p - mu_q)
    logdet = 2 * (np.sum(np.log(np.diag(lp))) - np.sum(np.log(np.diag(lq))))
    return float(0.5 * (np.sum(a**2) + diff @ diff - d + logdet))


@dataclass(frozen=True)
class VbcPriors:
    """Gaussian priors on the log-centralities and the log-eigenvalue.

    ``node_mu`` and ``node_var`` may be scalars (shared) or length-n arrays.
    """

    node_mu: object = 0.0
    node_var: object = 10.0
    mu_lambda: float = 0.0
    var_lambda: float = 10.0

    def __post_init__(self):
        if np.any(np.asarray(self.node_var) <= 0) or self.var_lambda <= 0:
            raise ValidationError("prior variances must be positive")

    def node_arrays(self, n):
        return (np.broadcast_to(np.asarray(self.node_mu, dtype=float), (n,)),
                np.broadcast_to(np.asarray(self.node_var, dtype=float), (n,)))


@dataclass
class VbcPosterior:
    mu: np.ndarray
    var: np.ndarray
    mu_lambda: float
    var_lambda: float
    noise_var: np.ndarray  # shape (1,) when tied, (n,) per node

    @property
    def n(self):
        return len(self.mu)

    @property
    def tied(self):
        return len(self.noise_var) == 1

    def centrality_mean(self):
        return np.exp(self.mu + 0.5 * self.var)

    def centralities(self):
        """Posterior-mean centralities scaled to unit L2 norm."""
        c = self.centrality_mean()
        return c / np.linalg.norm(c)

    def pack(self):
        return np.concatenate([self.mu, np.log(self.var), [self.mu_lambda, np.log(self.var_lambda)],
                               np.log(self.noise_var)])

    @classmethod
    def unpack(cls, x, n, tied=True):
        x = np.asarray(x, dtype=float)
        k = 1 if tied else n
        if len(x) != 2 * n + 2 + k:
            raise ValidationError("parameter vector has the wrong length")
        return cls(x[:n].copy(), np.exp(x[n:2 * n]), float(x[2 * n]), float(np.exp(x[2 * n + 1])),
                   np.exp(x[2 * n + 2:]))

    def to_dict(self):
        return {
            "mu": self.mu.tolist(),
            "var": self.var.tolist(),
            "mu_lambda": self.mu_lambda,
            "var_lambda": self.var_lambda,
            "noise_var": self.noise_var.tolist(),
        }


# ---------------------------------------------------------------------------
# shared likelihood term


def data_term(data, node_mean, exp_mean, exp_var, mu_lambda, noise_var, grad=True):
    """Expected log-likelihood with the second-order xi approximation.

    ``node_mean`` is the mean of ``z_i`` entering the residual,
    ``exp_mean``/``exp_var`` the moments of ``exp(z_j)`` for every node.
    ``noise_var`` has length 1 (tied) or n.  Returns ``(value, grads)``
    where ``grads`` holds derivatives with respect to ``node_mean``,
    ``exp_mean``, ``exp_var``, ``mu_lambda`` and ``log noise_var``.
    """
    n = data.n
    k_of_edge = data.edge_sample
    nbr = data.neighbors
    w = data.weights
    nk = data.num_samples
    if nk == 0:
        value = 0.0
        if not grad:
            return value, None
        zeros = np.zeros(n)
        return value, {"node_mean": zeros, "exp_mean": zeros.copy(), "exp_var": zeros.copy(),
                       "mu_lambda": 0.0, "log_noise": np.zeros(len(noise_var))}
    total = np.bincount(k_of_edge, weights=w * exp_mean[nbr], minlength=nk)
    spread = np.bincount(k_of_edge, weights=w**2 * exp_var[nbr], minlength=nk)
    if np.any(total <= 0):
        raise NumericalError("a sample has zero weighted neighbour sum; log undefined")
    xi = np.log(total) - spread / (2 * total**2)
    nodes = data.sample_node
    resid = xi - mu_lambda - node_mean[nodes]
    noise_idx = np.zeros(nk, dtype=np.int64) if len(noise_var) == 1 else nodes
    s2 = noise_var[noise_idx]
    value = float(-0.5 * np.sum(LOG_2PI + np.log(s2)) - np.sum(resid**2 / (2 * s2)))
    if not grad:
        return value, None
    g_xi = -resid / s2
    g_total = g_xi * (1 / total + spread / total**3)
    g_spread = g_xi * (-0.5 / total**2)
    grads = {
        "node_mean": np.bincount(nodes, weights=-g_xi, minlength=n),
        "exp_mean": np.bincount(nbr, weights=g_total[k_of_edge] * w, minlength=n),
        "exp_var": np.bincount(nbr, weights=g_spread[k_of_edge] * w**2, minlength=n),
        "mu_lambda": float(-np.sum(g_xi)),
        "log_noise": np.bincount(noise_idx, weights=-0.5 + resid**2 / (2 * s2),
                                 minlength=len(noise_var)),
    }
    return value, grads


def _kl_diag_terms(mu, var, mu0, var0):
    """Summed KL of diagonal Gaussians and gradients w.r.t. mu and log var."""
    diff = mu - mu0
    kl = 0.5 * np.sum(var / var0 + diff**2 / var0 - 1.0 - np.log(var) + np.log(var0))
    return float(kl), diff / var0, 0.5 * (var / var0 - 1.0)


def _l2(data, post, priors, grad):
    n = post.n
    if data.n != n:
        raise ValidationError("posterior and data disagree on the node count")
    mean, variance = lognormal_moments(post.mu, post.var)
    value, g = data_term(data, post.mu, mean, variance, post.mu_lambda, post.noise_var, grad)
    mu0, var0 = priors.node_arrays(n)
    kl_z, gk_mu, gk_lv = _kl_diag_terms(post.mu, post.var, mu0, var0)
    kl_l, gl_mu, gl_lv = _kl_diag_terms(np.array([post.mu_lambda]), np.array([post.var_lambda]),
                                        priors.mu_lambda, priors.var_lambda)
    bound = value - kl_z - kl_l
    if not grad:
        return bound, None
    # chain through E = exp(mu + v/2) and V = expm1(v) exp(2 mu + v), v = exp(log v)
    g_mu = g["node_mean"] + g["exp_mean"] * mean + g["exp_var"] * 2 * variance - gk_mu
    dv_mean = 0.5 * mean
    dv_var = variance + np.exp(2 * post.mu + 2 * post.var)
    g_lv = post.var * (g["exp_mean"] * dv_mean + g["exp_var"] * dv_var) - gk_lv
    gradient = np.concatenate([g_mu, g_lv, [g["mu_lambda"] - gl_mu[0], -gl_lv[0]], g["log_noise"]])
    return bound, gradient


def l2_bound(data, post, priors):
    """Approximate variational lower bound of the VBC model."""
    return _l2(data, post, priors, grad=False)[0]


def l2_gradient(data, post, priors):
    """Gradient of :func:`l2_bound` in the packed log-variance parameterisation."""
    return _l2(data, post, priors, grad=True)[1]


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitReport:
    bound: float
    iterations: int
    evaluations: int
    grad_norm: float
    converged: bool
    message: str
    wall_time: float
    trace: list = field(default_factory=list, repr=False)
    node_map: np.ndarray = None

    def to_dict(self):
        out = {
            "bound": self.bound,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "message": self.message,
        }
        if self.node_map is not None:
            out["node_map"] = [int(i) for i in self.node_map]
        return out


def prepare_graph(data, restrict_to_scc=False):
    """Check strong connectivity of the averaged graph.

    Returns ``(data, averaged_graph, node_map)``; ``node_map`` is ``None``
    unless the data had to be restricted to the largest SCC.
    """
    g = average_observations(data).graph()
    if check_strongly_connected(g):
        return data, g, None
    if not restrict_to_scc:
        raise NotStronglyConnectedError(
            "observed graph is not strongly connected; enable SCC restriction to proceed")
    sub, mapping = largest_scc(g)
    log.warning("restricting to the largest SCC: %d of %d nodes", sub.n, g.n)
    return data.restrict(mapping), sub, mapping


def baseline_centrality(data):
    """Eigenvector centrality of the averaged observed weight matrix."""
    return eigenvector_centrality(average_observations(data).graph()).values


def initial_posterior(data, log_c, tied=True, init_var=1e-2):
    """Start at the given log-centralities with eigenvalue and noise matched to them."""
    n = data.n
    mu = np.asarray(log_c, dtype=float).copy()
    var = np.full(n, init_var)
    probe = VbcPosterior(mu, var, 0.0, 1.0, np.ones(1 if tied else n))
    xi = sample_xi(data, probe)
    gap = xi - mu[data.sample_node] if len(xi) else np.zeros(1)
    mu_lambda = float(np.mean(gap))
    noise = max(float(np.mean((gap - mu_lambda) ** 2)), 1e-4)
    return VbcPosterior(mu, var, mu_lambda, 1e-2, np.full(1 if tied else n, noise))


def sample_xi(data, post):
    """Per-sample xi values under the posterior moments."""
    if data.num_samples == 0:
        return np.zeros(0)
    mean, variance = lognormal_moments(post.mu, post.var)
    total = np.bincount(data.edge_sample, weights=data.weights * mean[data.neighbors],
                        minlength=data.num_samples)
    spread = np.bincount(data.edge_sample, weights=data.weights**2 * variance[data.neighbors],
                         minlength=data.num_samples)
    if np.any(total <= 0):
        raise NumericalError("a sample has zero weighted neighbour sum; log undefined")
    return np.log(total) - spread / (2 * total**2)


def fit_vbc(data, priors=None, init=None, config=None, tied_noise=True, restrict_to_scc=False):
    """Maximise the VBC bound; returns ``(posterior, report)``.

    Without ``init`` the log-centralities start at the log of the baseline
    (averaged-weight) eigenvector centrality, floored at ``1e-8``.
    """
    config = config or OptimizerConfig()
    priors = priors or VbcPriors()
    start = time.perf_counter()
    data, g, node_map = prepare_graph(data, restrict_to_scc)
    if np.any(np.bincount(data.edge_sample, weights=data.weights, minlength=data.num_samples) <= 0):
        raise NumericalError("a sample has only zero-weight observations")
    if init is None:
        c0 = eigenvector_centrality(g).values
    else:
        c0 = np.asarray(getattr(init, "values", init), dtype=float)
        if node_map is not None and len(c0) != data.n:
            c0 = c0[node_map]
        if len(c0) != data.n:
            raise ValidationError("initial centrality has the wrong length")
    post0 = initial_posterior(data, np.log(np.maximum(c0, INIT_FLOOR)), tied_noise)
    n = data.n

    def objective(x):
        return _l2(data, VbcPosterior.unpack(x, n, tied_noise), priors, grad=True)

    result = maximize(objective, post0.pack(), config)
    post = VbcPosterior.unpack(result.x, n, tied_noise)
    if not np.all(np.isfinite(post.centrality_mean())):
        raise NumericalError("fitted centralities are not finite")
    report = FitReport(result.value, result.iterations, result.evaluations, result.grad_norm,
                       result.converged, result.message, time.perf_counter() - start,
                       result.trace, node_map)
    return post, report
