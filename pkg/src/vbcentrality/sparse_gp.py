"""Squared-exponential / ARD kernels and sparse-GP algebra over inducing inputs."""

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import NumericalError, ValidationError
from .rng import as_generator

log = logging.getLogger(__name__)

JITTER = 1e-8
MAX_JITTER = 1e-2


@dataclass(frozen=True)
class KernelConfig:
    """``amplitude * exp(-0.5 * sum_k (x_k - x'_k)^2 / l_k^2)``.

    ``kind`` is ``"se"`` (one shared lengthscale) or ``"ard"`` (one per
    input dimension).  ``amplitude`` is the signal variance ``a^2``.
    """

    kind: str = "se"
    lengthscales: tuple = (1.0,)
    amplitude: float = 1.0
    jitter: float = JITTER

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.kind not in ("se", "ard"):
            raise ValidationError("kernel kind must be 'se' or 'ard'")
        if self.kind == "se" and len(ls) != 1:
            raise ValidationError("SE kernel takes a single lengthscale")
        if np.any(ls <= 0) or self.amplitude <= 0 or self.jitter < 0:
            raise ValidationError("lengthscales and amplitude must be positive")
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in ls))

    @classmethod
    def se(cls, lengthscale=1.0, amplitude=1.0, jitter=JITTER):
        return cls("se", (lengthscale,), amplitude, jitter)

    @classmethod
    def ard(cls, lengthscales, amplitude=1.0, jitter=JITTER):
        return cls("ard", tuple(lengthscales), amplitude, jitter)

    def scales(self, d):
        ls = np.asarray(self.lengthscales, dtype=float)
        if self.kind == "ard" and len(ls) != d:
            raise ValidationError(f"ARD kernel has {len(ls)} lengthscales for {d}-D inputs")
        return np.broadcast_to(ls, (d,))

    def to_dict(self):
        return {"kind": self.kind, "lengthscales": list(self.lengthscales),
                "amplitude": self.amplitude, "jitter": self.jitter}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["lengthscales"]), float(d["amplitude"]),
                   float(d.get("jitter", JITTER)))


def kernel_matrix(cfg, x1, x2):
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[1] != x2.shape[1]:
        raise ValidationError("input dimensions differ")
    ls = cfg.scales(x1.shape[1])
    a = x1 / ls
    b = x2 / ls
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return cfg.amplitude * np.exp(-0.5 * d2)


def kernel_eval(cfg, x, x_prime):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise ValidationError("input dimensions differ")
    return float(kernel_matrix(cfg, x[None, :], x_prime[None, :])[0, 0])


def jittered_cholesky(k, jitter=JITTER, max_jitter=MAX_JITTER):
    """Lower Cholesky factor of ``k + eps I``, escalating ``eps`` x10 on failure.

    Returns ``(factor, eps)``.
    """
    eps = jitter
    eye = np.eye(len(k))
    while True:
        try:
            return cholesky(k + eps * eye, lower=True, check_finite=True), eps
        except (np.linalg.LinAlgError, ValueError):
            nxt = max(eps * 10, 1e-12)
            if nxt > max_jitter * (1 + 1e-9):
                raise NumericalError(f"Cholesky failed with jitter up to {eps:.1e}") from None
            log.warning("Cholesky failed at jitter %.1e; retrying with %.1e", eps, nxt)
            eps = nxt


@dataclass(frozen=True, eq=False)
class SparseGpState:
    """Inducing inputs, ``q(u) = N(mean, cov)`` and kernel.

    ``attr_shift``/``attr_scale`` hold the standardisation applied to raw
    attributes before they reach the kernel (identity when ``None``).
    """

    inducing: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    kernel: KernelConfig
    attr_shift: np.ndarray = None
    attr_scale: np.ndarray = None

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.inducing, dtype=float))
        m = np.asarray(self.mean, dtype=float).ravel()
        s = np.asarray(self.cov, dtype=float)
        if s.shape != (len(z), len(z)) or len(m) != len(z):
            raise ValidationError("q(u) dimensions do not match the inducing inputs")
        if not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
            raise ValidationError("q(u) covariance must be symmetric")
        object.__setattr__(self, "inducing", z)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", s)
        kmm = kernel_matrix(self.kernel, z, z)
        chol, eps = jittered_cholesky(kmm, self.kernel.jitter)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "jitter_used", eps)

    @property
    def num_inducing(self):
        return len(self.mean)

    @property
    def dim(self):
        return self.inducing.shape[1]

    def kmm(self):
        return kernel_matrix(self.kernel, self.inducing, self.inducing) + \
            self.jitter_used * np.eye(self.num_inducing)

    def standardize(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValidationError(f"expected {self.dim}-D attributes, got {x.shape[1]}")
        if self.attr_shift is None:
            return x
        return (x - self.attr_shift) / self.attr_scale

    def with_q(self, mean, cov):
        return replace(self, mean=mean, cov=cov)

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "inducing": self.inducing.tolist(),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "attr_shift": None if self.attr_shift is None else np.asarray(self.attr_shift).tolist(),
            "attr_scale": None if self.attr_scale is None else np.asarray(self.attr_scale).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        shift = d.get("attr_shift")
        scale = d.get("attr_scale")
        return cls(np.array(d["inducing"], dtype=float), np.array(d["mean"], dtype=float),
                   np.array(d["cov"], dtype=float), KernelConfig.from_dict(d["kernel"]),
                   None if shift is None else np.array(shift, dtype=float),
                   None if scale is None else np.array(scale, dtype=float))


def predictive_components(state, x, standardized=True):
    """Per-input ``(k^T Kmm^-1 m, k** - k^T Kmm^-1 k, b^T S b)`` with ``b = Kmm^-1 k``.

    ``x`` is already standardised unless ``standardized=False``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not standardized:
        x = state.standardize(x)
    if x.shape[1] != state.dim:
        raise ValidationError(f"expected {state.dim}-D inputs, got {x.shape[1]}")
    knm = kernel_matrix(state.kernel, x, state.inducing)
    b = cho_solve((state.chol, True), knm.T).T
    mean = b @ state.mean
    cond = state.kernel.amplitude - np.sum(b * knm, axis=1)
    bsb = np.sum((b @ state.cov) * b, axis=1)
    return mean, _clamp(cond, state.kernel.amplitude), bsb


def _clamp(v, scale):
    tol = 1e-6 * scale
    bad = v < -tol
    if np.any(bad):
        raise NumericalError(f"predictive variance {v[bad].min():.3g} is significantly negative")
    if np.any(v < 0):
        warnings.warn("clamping slightly negative predictive variance to 0", RuntimeWarning)
    return np.maximum(v, 0.0)


def predictive_moments(state, x, standardized=True):
    """Latent predictive mean and variance ``k** - k^T Kmm^-1 k + b^T S b``."""
    mean, cond, bsb = predictive_components(state, x, standardized)
    var = cond + bsb
    if np.ndim(x) == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def select_inducing_kmeans(x, m, seed=None, max_iter=100):
    """k-means++ seeding followed by Lloyd iterations; returns ``m`` centroids."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(x)
    if n < 1:
        raise ValidationError("need at least one point")
    if not 1 <= m <= n:
        raise ValidationError(f"cannot select {m} inducing inputs from {n} points")
    rng = as_generator(seed)
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    duplicates = False
    for _ in range(1, m):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            duplicates = True
            idx = rng.integers(n)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    centers = np.array(centers)
    for _ in range(max_iter):
        dist = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        label = np.argmin(dist, axis=1)
        new = centers.copy()
        for k in range(m):
            members = x[label == k]
            if len(members):
                new[k] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    if duplicates or len(np.unique(centers, axis=0)) < m:
        warnings.warn("k-means produced duplicate centroids", RuntimeWarning)
    return centers
