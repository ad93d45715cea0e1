"""Deterministic centrality measures: degree, eigenvector and Katz."""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DivergenceError, NotStronglyConnectedError, ValidationError
from .graph import check_strongly_connected


@dataclass(frozen=True)
class CentralityVector:
    values: np.ndarray
    normalization: str = "raw"  # "unit-l2" | "unit-sum" | "raw"
    eigenvalue: float = None

    def __len__(self):
        return len(self.values)

    def normalized(self, kind="unit-l2"):
        v = np.asarray(self.values, dtype=float)
        if kind == "unit-l2":
            v = v / np.linalg.norm(v)
        elif kind == "unit-sum":
            v = v / v.sum()
        elif kind != "raw":
            raise ValidationError(f"unknown normalization {kind!r}")
        return CentralityVector(v, kind, self.eigenvalue)


def degree_centrality(g, direction="in"):
    """Weighted in-degree ``sum_j w_ij`` or out-degree ``sum_j w_ji``."""
    if direction == "in":
        values = np.asarray(g.weights.sum(axis=1)).ravel()
    elif direction == "out":
        values = np.asarray(g.weights.sum(axis=0)).ravel()
    else:
        raise ValidationError("direction must be 'in' or 'out'")
    return CentralityVector(values, "raw")


def eigenvector_centrality(g, tol=1e-12, max_iter=100_000):
    """Perron vector of ``W`` by power iteration.

    The iteration runs on ``W + sI`` with ``s`` half the largest in-degree;
    the shift leaves the eigenvectors unchanged but removes the periodicity
    of bipartite or cyclic graphs, for which plain power iteration
    oscillates.  Converged when ``||Wc - lambda c||_inf <= tol * lambda``
    with ``lambda`` the Rayleigh quotient.  Returns a unit-L2, positive vector.
    """
    if not check_strongly_connected(g):
        raise NotStronglyConnectedError("eigenvector centrality needs a strongly connected graph")
    w = g.weights
    n = g.n
    shift = 0.5 * np.asarray(w.sum(axis=1)).max()
    c = np.full(n, 1.0 / np.sqrt(n))
    residual = np.inf
    for it in range(1, max_iter + 1):
        wc = w @ c
        lam = c @ wc
        residual = np.max(np.abs(wc - lam * c))
        if residual <= tol * lam:
            break
        c = wc + shift * c
        c /= np.linalg.norm(c)
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations (residual {residual:.3g})",
            residual=residual, iterations=max_iter)
    c = np.abs(c)  # entries are positive up to rounding
    return CentralityVector(c / np.linalg.norm(c), "unit-l2", float(lam))


def spectral_radius(g):
    if g.n == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(g.to_dense()))))


def katz_centrality(g, a, b=1.0):
    """Solve ``(I - aW) c = b 1`` densely (O(n^3)).

    Requires ``0 <= a < 1/lambda_1``; at or beyond that the series
    diverges and :class:`DivergenceError` is raised.
    """
    if a < 0 or b <= 0:
        raise ValidationError("Katz needs a >= 0 and b > 0")
    lam = spectral_radius(g)
    if a * lam >= 1.0:
        raise DivergenceError(f"Katz attenuation a={a} must be below 1/lambda_1={1 / lam:.6g}")
    m = np.eye(g.n) - a * g.to_dense()
    c = np.linalg.solve(m, np.full(g.n, float(b)))
    return CentralityVector(c, "raw", lam)
