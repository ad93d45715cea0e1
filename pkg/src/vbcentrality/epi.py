"""Discrete-time SIR dynamics on weighted contact networks.

Each step every infectious node j infects each susceptible out-neighbour i
(edge j -> i, weight ``w_ij``) independently with probability
``w_ij * p_transmit``, then every node that was infectious at the start of
the step recovers with probability ``p_recover``.  Updates are synchronous:
a node infected during a step cannot transmit until the next one.
Vaccinated nodes start (and stay) in the recovered compartment.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .metrics import top_k
from .rng import stream

S, I, R = 0, 1, 2
# log(0) stand-in: exp(-700) underflows to ~0 without producing inf * 0 = nan
LOG_FLOOR = -700.0


@dataclass(frozen=True)
class SirConfig:
    p_transmit: float = 0.5
    p_recover: float = 0.1
    initial_fraction: float = 0.01
    horizon: int = 365
    seed: int = 0

    def __post_init__(self):
        for name in ("p_transmit", "p_recover", "initial_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.horizon < 0:
            raise ValidationError("horizon must be non-negative")


@dataclass
class SirTrajectory:
    susceptible: np.ndarray
    infected: np.ndarray
    recovered: np.ndarray
    cumulative_infected: float
    initial_infected: int = 0
    vaccinated: int = 0

    @property
    def steps(self):
        return len(self.infected) - 1

    @property
    def peak(self):
        return float(self.infected.max())

    @property
    def peak_step(self):
        return int(np.argmax(self.infected))

    def padded(self, length):
        """Extend to ``length`` points by holding the final (absorbing) state."""
        def pad(a):
            a = np.asarray(a, dtype=float)
            return np.concatenate([a, np.full(length - len(a), a[-1])]) if length > len(a) else a
        return SirTrajectory(pad(self.susceptible), pad(self.infected), pad(self.recovered),
                             self.cumulative_infected, self.initial_infected, self.vaccinated)


def _log_escape_matrix(g, p):
    w = g.weights.copy()
    with np.errstate(divide="ignore"):
        w.data = np.maximum(np.log1p(-np.minimum(w.data * p, 1.0)), LOG_FLOOR)
    return w


def initial_count(n, fraction, unvaccinated):
    """Number of initially infected nodes: ``round(fraction * n)`` capped at the unvaccinated."""
    k = min(int(round(fraction * n)), unvaccinated)
    if k == 0:
        raise ValidationError("initial infected fraction rounds to zero among unvaccinated nodes")
    return k


def run_sir(g, cfg, vaccinated=(), rng=None, _log_escape=None):
    """Simulate one outbreak and return its :class:`SirTrajectory`.

    Randomness comes from ``rng`` when given (common random numbers across
    strategies), otherwise from ``cfg.seed``.  Draw order: a permutation of
    the nodes (the first unvaccinated entries are the index cases), then two
    length-n uniform vectors per step (infection, recovery).
    """
    data = g.weights.data
    if data.size and (data.min() < 0 or data.max() > 1):
        raise ValidationError("contact weights must lie in [0, 1]")
    n = g.n
    rng = rng if rng is not None else stream(cfg.seed, "sir")
    vacc = np.zeros(n, dtype=bool)
    idx = np.asarray(list(vaccinated), dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError("vaccinated node out of range")
    vacc[idx] = True
    k0 = initial_count(n, cfg.initial_fraction, int(n - vacc.sum()))
    order = rng.permutation(n)
    seeds = order[~vacc[order]][:k0]

    state = np.full(n, S, dtype=np.int8)
    state[vacc] = R
    state[seeds] = I
    log_escape = _log_escape if _log_escape is not None else _log_escape_matrix(g, cfg.p_transmit)

    s_t = [int(np.sum(state == S))]
    i_t = [k0]
    r_t = [int(np.sum(state == R))]
    for _ in range(cfg.horizon):
        if i_t[-1] == 0:
            break
        u_inf = rng.random(n)
        u_rec = rng.random(n)
        infectious = (state == I).astype(float)
        p_inf = -np.expm1(log_escape @ infectious)
        new_inf = (state == S) & (u_inf < p_inf)
        recover = (state == I) & (u_rec < cfg.p_recover)
        state[new_inf] = I
        state[recover] = R
        s_t.append(int(np.sum(state == S)))
        i_t.append(int(np.sum(state == I)))
        r_t.append(int(np.sum(state == R)))
    s_arr = np.array(s_t, dtype=float)
    cumulative = float(n - s_arr[-1] - vacc.sum())
    return SirTrajectory(s_arr, np.array(i_t, dtype=float), np.array(r_t, dtype=float), cumulative,
                         k0, int(vacc.sum()))


def vaccinate_topk(scores, k):
    """Node ids of the ``k`` highest scores (ties to the lower id)."""
    scores = np.asarray(getattr(scores, "values", scores), dtype=float)
    if not 0 <= k <= len(scores):
        raise ValidationError("k must lie in [0, n]")
    return set(top_k(scores, k).tolist())


@dataclass
class StrategySummary:
    name: str
    mean_infected: np.ndarray
    mean_susceptible: np.ndarray
    mean_recovered: np.ndarray
    total_infected: float
    total_infected_std: float
    peak: float
    peak_step: int
    runs: int

    def to_dict(self):
        return {"strategy": self.name, "total_infected": self.total_infected,
                "total_infected_std": self.total_infected_std, "peak": self.peak,
                "peak_step": self.peak_step, "runs": self.runs}


def compare_strategies(g, cfg, strategies, runs=100, seed=None):
    """Average ``runs`` outbreaks per vaccination strategy.

    ``strategies`` maps a name to a vaccinated node set.  Run ``r`` of every
    strategy draws from the same stream (common random numbers), so the
    strategies differ only through their vaccinated sets.  Peak and peak
    step refer to the averaged infected curve.
    """
    seed = cfg.seed if seed is None else seed
    log_escape = _log_escape_matrix(g, cfg.p_transmit)
    out = {}
    for name, vaccinated in strategies.items():
        vaccinated = sorted(vaccinated)
        trajs = [run_sir(g, cfg, vaccinated, stream(seed, "sir-run", r), log_escape)
                 for r in range(runs)]
        length = max(t.steps for t in trajs) + 1
        trajs = [t.padded(length) for t in trajs]
        mean_i = np.mean([t.infected for t in trajs], axis=0)
        totals = np.array([t.cumulative_infected for t in trajs])
        out[name] = StrategySummary(
            name, mean_i, np.mean([t.susceptible for t in trajs], axis=0),
            np.mean([t.recovered for t in trajs], axis=0), float(totals.mean()),
            float(totals.std()), float(mean_i.max()), int(np.argmax(mean_i)), runs)
    return out
