"""VBC-GP: log-centralities as a sparse GP over node attributes.

The latent log-centrality of node j is ``z_j | u ~ N(b_j^T u, sigma_hat_j^2)``
with ``b_j = Kmm^-1 k_j`` and inducing variables ``u ~ q(u) = N(m, S)``.
The approximate bound combines the VBC likelihood term, evaluated with the
moments of ``exp(z_j)`` under the sparse GP, with ``KL(q(u) || N(0, Kmm))``
and ``KL(q(z_lambda) || p(z_lambda))``.

Optimised parameter vector::

    [m (M), tril(L) (M(M+1)/2, softplus diagonal), mu_lambda, log var_lambda,
     log noise_var, log lengthscales (1 or d), log amplitude, [Z (M*d)]]

with ``S = L L^T``.  Inducing inputs ``Z`` are included only when
``optimize_inducing=True``.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NumericalError, ValidationError
from .optimize import OptimizerConfig, maximize
from .sparse_gp import (KernelConfig, SparseGpState, jittered_cholesky, kernel_matrix,
                        predictive_components, select_inducing_kmeans)
from .vbc import (INIT_FLOOR, FitReport, VbcPriors, _kl_diag_terms, data_term,
                  lognormal_moments, prepare_graph)
from .centrality import eigenvector_centrality

log = logging.getLogger(__name__)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 30, y, np.log(np.expm1(np.minimum(y, 30))))


def sigmoid(x):
    return 0.5 * (1 + np.tanh(0.5 * x))


def inducing_lognormal_moments(state, x, standardized=True):
    """Moments of ``exp(z_j)`` with ``u`` integrated out.

    ``E = exp(a + sigma_hat^2/2 + bSb/2)`` and
    ``V = (exp(bSb) - 1) exp(2a + sigma_hat^2 + bSb)`` where ``a`` is the
    predictive mean, ``sigma_hat^2`` the conditional variance and
    ``bSb = b^T S b``.
    """
    a, cond, bsb = predictive_components(state, x, standardized)
    e = np.exp(a + 0.5 * cond + 0.5 * bsb)
    v = np.expm1(bsb) * np.exp(2 * a + cond + bsb)
    if np.ndim(x) == 1:
        return float(e[0]), float(v[0])
    return e, v


@dataclass
class VbcGpPosterior:
    gp: SparseGpState
    mu_lambda: float
    var_lambda: float
    noise_var: float
    node_mean: np.ndarray = None
    node_cond_var: np.ndarray = None
    node_bsb: np.ndarray = None

    def centralities(self):
        """Training-node centralities ``exp(a + (cond + bSb)/2)``, unit L2."""
        c = np.exp(self.node_mean + 0.5 * (self.node_cond_var + self.node_bsb))
        return c / np.linalg.norm(c)

    def to_dict(self):
        out = self.gp.to_dict()
        out.update(mu_lambda=self.mu_lambda, var_lambda=self.var_lambda, noise_var=self.noise_var)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(SparseGpState.from_dict(d), float(d["mu_lambda"]), float(d["var_lambda"]),
                   float(d["noise_var"]))


@dataclass(frozen=True)
class Prediction:
    location: np.ndarray
    scale2: np.ndarray
    mean: np.ndarray
    variance: np.ndarray


def predict_centrality(post, x, standardized=False):
    """Log-normal predictive centrality for raw attribute rows ``x``."""
    single = np.ndim(x) == 1
    a, cond, bsb = predictive_components(post.gp, x, standardized)
    scale2 = cond + bsb
    mean, var = lognormal_moments(a, scale2)
    if single:
        return Prediction(float(a[0]), float(scale2[0]), float(mean[0]), float(var[0]))
    return Prediction(a, scale2, np.atleast_1d(mean), np.atleast_1d(var))


def ard_relevance(post):
    """Input dimensions sorted by fitted ARD lengthscale (most relevant first)."""
    k = post.gp.kernel
    if k.kind != "ard":
        raise ValidationError("relevance needs an ARD kernel")
    ls = np.asarray(k.lengthscales)
    order = np.argsort(ls, kind="stable")
    return [(int(i), float(ls[i])) for i in order]


# ---------------------------------------------------------------------------
# bound


@dataclass
class _Layout:
    m: int
    d: int
    kind: str
    optimize_inducing: bool
    # q(u) stored as u = Lk v with Lk = chol(Kmm); decouples q(u) from the kernel
    whitened: bool = False

    @property
    def n_ls(self):
        return self.d if self.kind == "ard" else 1

    @property
    def size(self):
        m = self.m
        return m + m * (m + 1) // 2 + 3 + self.n_ls + 1 + (m * self.d if self.optimize_inducing else 0)

    def unpack(self, x, inducing=None):
        m = self.m
        p = 0
        mean = x[p:p + m]
        p += m
        tril = x[p:p + m * (m + 1) // 2]
        p += m * (m + 1) // 2
        mu_l, lv_l, ln = x[p:p + 3]
        p += 3
        log_ls = x[p:p + self.n_ls]
        p += self.n_ls
        log_amp = x[p]
        p += 1
        if self.optimize_inducing:
            inducing = x[p:p + m * self.d].reshape(m, self.d)
        return mean, tril, mu_l, lv_l, ln, log_ls, log_amp, inducing

    def pack(self, mean, tril, mu_l, lv_l, ln, log_ls, log_amp, inducing):
        parts = [mean, tril, [mu_l, lv_l, ln], log_ls, [log_amp]]
        if self.optimize_inducing:
            parts.append(np.asarray(inducing).ravel())
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])


def _chol_from_tril(tril, m):
    lower = np.zeros((m, m))
    lower[np.tril_indices(m)] = tril
    raw_diag = np.diag(lower).copy()
    np.fill_diagonal(lower, softplus(raw_diag))
    return lower, raw_diag


def _tril_from_chol(lower):
    m = len(lower)
    raw = lower.copy()
    np.fill_diagonal(raw, softplus_inv(np.diag(lower)))
    return raw[np.tril_indices(m)]


def _l4(data, x_std, layout, params, priors, inducing, jitter, grad):
    m = layout.m
    mean, tril, mu_l, lv_l, ln, log_ls, log_amp, z = layout.unpack(params, inducing)
    ls = np.broadcast_to(np.exp(log_ls), (layout.d,))
    amp = float(np.exp(log_amp))
    var_l = float(np.exp(lv_l))
    noise = np.array([np.exp(ln)])
    lower, raw_diag = _chol_from_tril(tril, m)

    xs = x_std / ls
    zs = z / ls
    diff_nm = xs[:, None, :] - zs[None, :, :]
    diff_mm = zs[:, None, :] - zs[None, :, :]
    knm = amp * np.exp(-0.5 * np.sum(diff_nm**2, axis=-1))
    kmm0 = amp * np.exp(-0.5 * np.sum(diff_mm**2, axis=-1))
    lk, eps = jittered_cholesky(kmm0, jitter)
    if layout.whitened:
        mean_w, lower_w = mean, lower
        mean, lower = lk @ mean_w, lk @ lower_w
    s = lower @ lower.T
    a_inv = cho_solve((lk, True), np.eye(m))
    b = knm @ a_inv
    node_a = b @ mean
    cond = amp - np.sum(b * knm, axis=1)
    bs = b @ s
    bsb = np.sum(bs * b, axis=1)
    q = np.exp(2 * node_a + cond + bsb)
    e = np.exp(node_a + 0.5 * cond + 0.5 * bsb)
    v = np.expm1(bsb) * q

    value, g = data_term(data, node_a, e, v, mu_l, noise, grad)
    a_m = a_inv @ mean
    logdet_s = 2 * np.sum(np.log(np.diag(lower)))
    logdet_k = 2 * np.sum(np.log(np.diag(lk)))
    kl_u = 0.5 * (np.sum(a_inv * s) + mean @ a_m - m - logdet_s + logdet_k)
    kl_l, gl_mu, gl_lv = _kl_diag_terms(np.array([mu_l]), np.array([var_l]),
                                        priors.mu_lambda, priors.var_lambda)
    bound = value - kl_u - kl_l
    if not np.isfinite(bound):
        raise NumericalError("L4 bound is not finite")
    if not grad:
        return bound, None

    g_a = g["node_mean"] + g["exp_mean"] * e + g["exp_var"] * 2 * v
    g_cond = 0.5 * g["exp_mean"] * e + g["exp_var"] * v
    g_bsb = 0.5 * g["exp_mean"] * e + g["exp_var"] * (v + np.exp(bsb) * q)

    g_mean = b.T @ g_a - a_m
    g_s_data = b.T @ (g_bsb[:, None] * b)
    g_lower = 2 * g_s_data @ lower - a_inv @ lower
    g_lower[np.diag_indices(m)] += 1.0 / np.diag(lower)
    g_lower = np.tril(g_lower)

    g_b = g_a[:, None] * mean[None, :] + 2 * g_bsb[:, None] * bs - g_cond[:, None] * knm
    g_knm = -g_cond[:, None] * b + g_b @ a_inv
    g_ainv = knm.T @ g_b - 0.5 * (s + np.outer(mean, mean))
    g_kmm = -a_inv @ g_ainv @ a_inv - 0.5 * a_inv

    if layout.whitened:
        # chain through m = Lk m_w, L = Lk L_w and dLk = Lk tril_half(Lk^-1 dK Lk^-T)
        h = np.outer(g_mean, mean_w) + g_lower @ lower_w.T
        phi = np.tril(lk.T @ h)
        phi[np.diag_indices(m)] *= 0.5
        p_k = solve_triangular(lk, solve_triangular(lk, phi, trans="T", lower=True).T,
                               trans="T", lower=True).T
        g_kmm = g_kmm + 0.5 * (p_k + p_k.T)
        g_mean = lk.T @ g_mean
        g_lower = np.tril(lk.T @ g_lower)

    g_lower[np.diag_indices(m)] *= sigmoid(raw_diag)
    g_tril = g_lower[np.tril_indices(m)]

    wnm = g_knm * knm
    wmm = g_kmm * kmm0
    g_log_amp = np.sum(wnm) + np.sum(wmm) + amp * np.sum(g_cond)
    g_log_ls_full = (np.einsum("ij,ijk->k", wnm, diff_nm**2) +
                     np.einsum("ij,ijk->k", wmm, diff_mm**2))
    g_log_ls = g_log_ls_full if layout.kind == "ard" else np.array([g_log_ls_full.sum()])

    parts = [g_mean, g_tril, [g["mu_lambda"] - gl_mu[0], -gl_lv[0] * 1.0, g["log_noise"][0]],
             g_log_ls, [g_log_amp]]
    if layout.optimize_inducing:
        # d k(x, z)/dz = k (x - z) / l^2, expressed through the scaled differences
        g_z = (np.einsum("ij,ijk->jk", wnm, diff_nm) +
               np.einsum("ij,ijk->ik", wmm + wmm.T, -diff_mm)) / ls
        parts.append(g_z.ravel())
    gradient = np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    return bound, gradient


def l4_bound(data, post, priors=None, standardized_x=None):
    """Approximate VBC-GP lower bound for a posterior."""
    priors = priors or VbcPriors()
    x = _training_inputs(data, post.gp, standardized_x)
    layout, params = _layout_from_posterior(post)
    return _l4(data, x, layout, params, priors, post.gp.inducing, post.gp.kernel.jitter, False)[0]


def l4_gradient(data, post, priors=None, standardized_x=None, optimize_inducing=False):
    """Gradient of :func:`l4_bound` in the packed parameterisation."""
    priors = priors or VbcPriors()
    x = _training_inputs(data, post.gp, standardized_x)
    layout, params = _layout_from_posterior(post, optimize_inducing)
    return _l4(data, x, layout, params, priors, post.gp.inducing, post.gp.kernel.jitter, True)[1]


def l4_objective(data, post, priors=None, optimize_inducing=False):
    """``(fun, x0)`` with ``fun(params) -> (bound, gradient)``; for checks and custom loops."""
    priors = priors or VbcPriors()
    x = _training_inputs(data, post.gp, None)
    layout, params = _layout_from_posterior(post, optimize_inducing)

    def fun(p):
        return _l4(data, x, layout, p, priors, post.gp.inducing, post.gp.kernel.jitter, True)

    return fun, params


def _training_inputs(data, gp, standardized_x):
    if standardized_x is not None:
        return np.atleast_2d(standardized_x)
    if data.attributes is None:
        raise ValidationError("dataset has no node attributes")
    return gp.standardize(data.attributes)


def _layout_from_posterior(post, optimize_inducing=False):
    gp = post.gp
    layout = _Layout(gp.num_inducing, gp.dim, gp.kernel.kind, optimize_inducing)
    try:
        lower = np.linalg.cholesky(gp.cov)
    except np.linalg.LinAlgError:
        raise ValidationError("q(u) covariance is not positive definite") from None
    params = layout.pack(gp.mean, _tril_from_chol(lower), post.mu_lambda, np.log(post.var_lambda),
                         np.log(post.noise_var), np.log(gp.kernel.lengthscales),
                         np.log(gp.kernel.amplitude), gp.inducing)
    return layout, params


def _posterior_from_params(layout, params, base_state, x_std):
    mean, tril, mu_l, lv_l, ln, log_ls, log_amp, z = layout.unpack(params, base_state.inducing)
    lower, _ = _chol_from_tril(tril, layout.m)
    kern = KernelConfig(base_state.kernel.kind, tuple(np.exp(log_ls)), float(np.exp(log_amp)),
                        base_state.kernel.jitter)
    if layout.whitened:
        lk, _ = jittered_cholesky(kernel_matrix(kern, z, z), kern.jitter)
        mean, lower = lk @ mean, lk @ lower
    s = lower @ lower.T
    s = 0.5 * (s + s.T)
    gp = SparseGpState(np.array(z), mean.copy(), s, kern, base_state.attr_shift,
                       base_state.attr_scale)
    post = VbcGpPosterior(gp, float(mu_l), float(np.exp(lv_l)), float(np.exp(ln)))
    if x_std is not None:
        post.node_mean, post.node_cond_var, post.node_bsb = predictive_components(gp, x_std)
    return post


# ---------------------------------------------------------------------------
# fitting


def standardization(x):
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    return shift, scale


def fit_vbcgp(data, priors=None, kernel_init=None, num_inducing=10, config=None, seed=0,
              restrict_to_scc=False, optimize_inducing=False, init_centrality=None):
    """Fit the VBC-GP model; returns ``(posterior, report)``.

    Attributes are standardised (zero mean, unit variance) and the
    constants are kept on the posterior for prediction.  Inducing inputs
    are k-means centroids of the standardised attributes.  ``q(u)`` starts
    at ``S = Kmm`` with ``m`` a regularised least-squares fit of the
    (centred) log baseline centralities.
    """
    priors = priors or VbcPriors()
    config = config or OptimizerConfig()
    start = time.perf_counter()
    if data.attributes is None:
        raise ValidationError("VBC-GP needs node attributes")
    if not np.all(np.isfinite(data.attributes)):
        raise ValidationError("node attributes must be finite (missing attribute row?)")
    data, g, node_map = prepare_graph(data, restrict_to_scc)
    n, d = data.attributes.shape
    if not 1 <= num_inducing <= n:
        raise ValidationError(f"need 1 <= m <= n, got m={num_inducing} for n={n}")
    kernel_init = kernel_init or KernelConfig.se(1.0)
    kernel_init.scales(d)

    shift, scale = standardization(data.attributes)
    x_std = (data.attributes - shift) / scale
    z = select_inducing_kmeans(x_std, num_inducing, seed)

    if init_centrality is None:
        c0 = eigenvector_centrality(g).values
    else:
        c0 = np.asarray(init_centrality, dtype=float)
    y = np.log(np.maximum(c0, INIT_FLOOR))
    y = y - y.mean()

    kmm = kernel_matrix(kernel_init, z, z)
    lk, eps = jittered_cholesky(kmm, kernel_init.jitter)
    kmm = kmm + eps * np.eye(num_inducing)
    knm = kernel_matrix(kernel_init, x_std, z)
    reg = 1e-2 * kernel_init.amplitude
    mean0 = kmm @ np.linalg.solve(knm.T @ knm + reg * kmm, knm.T @ y)
    state0 = SparseGpState(z, mean0, kmm, kernel_init, shift, scale)

    # eigenvalue and noise matched to the initial residuals
    probe = VbcGpPosterior(state0, 0.0, 1.0, 1.0)
    a, cond, bsb = predictive_components(state0, x_std)
    e = np.exp(a + 0.5 * cond + 0.5 * bsb)
    v = np.expm1(bsb) * np.exp(2 * a + cond + bsb)
    total = np.bincount(data.edge_sample, weights=data.weights * e[data.neighbors],
                        minlength=data.num_samples)
    spread = np.bincount(data.edge_sample, weights=data.weights**2 * v[data.neighbors],
                         minlength=data.num_samples)
    if np.any(total <= 0):
        raise NumericalError("a sample has zero weighted neighbour sum; log undefined")
    gap = np.log(total) - spread / (2 * total**2) - a[data.sample_node]
    probe.mu_lambda = float(gap.mean())
    probe.var_lambda = 1e-2
    probe.noise_var = max(float(np.var(gap)), 1e-4)

    layout, x0 = _layout_from_posterior(probe, optimize_inducing)
    # optimise in whitened coordinates: m_w = Lk^-1 m, L_w = I for S = Kmm
    layout.whitened = True
    mean_w = solve_triangular(lk, mean0, lower=True)
    x0 = layout.pack(mean_w, _tril_from_chol(np.eye(num_inducing)), probe.mu_lambda,
                     np.log(probe.var_lambda), np.log(probe.noise_var),
                     np.log(kernel_init.lengthscales), np.log(kernel_init.amplitude), z)

    def objective(p):
        try:
            return _l4(data, x_std, layout, p, priors, z, kernel_init.jitter, True)
        except (NumericalError, FloatingPointError, ValueError, np.linalg.LinAlgError):
            return -np.inf, np.full(len(p), np.nan)

    with np.errstate(over="ignore", invalid="ignore"):
        result = maximize(objective, x0, config)
    post = _posterior_from_params(layout, result.x, state0, x_std)
    report = FitReport(result.value, result.iterations, result.evaluations, result.grad_norm,
                       result.converged, result.message, time.perf_counter() - start,
                       result.trace, node_map)
    return post, report
