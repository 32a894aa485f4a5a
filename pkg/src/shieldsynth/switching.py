"""Bayesian optimization of the switching threshold.

The objective ``ln(V + 1) - V*/(I + 1)`` (violating episodes ``V``,
necessary interventions ``V*``, all interventions ``I``) is minimized over
``lambda in [0, lambda_max]`` with a zero-mean Matern-5/2 Gaussian process on
the normalized domain and expected improvement evaluated on a dense grid.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError
from .shield import Shield
from .sim import DEFAULT_HORIZON, evaluate

LENGTH_SCALE = 0.2
JITTER = 1e-6
GRID_POINTS = 512


def objective(V, V_star, I):
    if min(V, V_star, I) < 0:
        raise ContractError("counts must be >= 0")
    if V_star > I:
        raise ContractError(f"necessary interventions ({V_star}) exceed interventions ({I})")
    return math.log(V + 1) - V_star / (I + 1)


def matern52(a, b, length_scale=LENGTH_SCALE, variance=1.0):
    r = np.abs(np.subtract.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))
    z = math.sqrt(5.0) * r / length_scale
    return variance * (1.0 + z + z * z / 3.0) * np.exp(-z)


@dataclass
class GaussianProcess:
    """Zero-mean GP regression on scalar inputs."""

    length_scale: float = LENGTH_SCALE
    variance: float = 1.0
    jitter: float = JITTER
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)

    def __post_init__(self):
        if self.length_scale <= 0 or self.variance <= 0 or self.jitter < 0:
            raise ContractError("length scale and variance must be positive, jitter >= 0")
        self._chol = None

    def add(self, x, y):
        self.x.append(float(x))
        self.y.append(float(y))
        self._chol = None

    def kernel(self, a, b):
        return matern52(a, b, self.length_scale, self.variance)

    def _factor(self):
        if self._chol is None:
            X = np.array(self.x)
            G = self.kernel(X, X) + self.jitter * np.eye(len(X))
            try:
                L = np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                raise NumericalError("Gram matrix is not positive definite") from None
            alpha = np.linalg.solve(L.T, np.linalg.solve(L, np.array(self.y)))
            self._chol = (L, alpha)
        return self._chol

    def predict(self, xs):
        """Posterior mean and variance at each of ``xs``."""
        if not self.x:
            raise ContractError("the GP has no observations")
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        L, alpha = self._factor()
        Ks = self.kernel(xs, np.array(self.x))
        mean = Ks @ alpha
        v = np.linalg.solve(L, Ks.T)
        var = self.variance - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)


def gp_posterior(gp, x):
    mean, var = gp.predict([x])
    return float(mean[0]), float(var[0])


def _norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _norm_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def ei_from_moments(mean, sd, best):
    """Expected improvement below ``best`` of a normal with ``mean``, ``sd``."""
    if sd <= 0.0:
        return max(best - mean, 0.0)
    z = (best - mean) / sd
    return max((best - mean) * _norm_cdf(z) + sd * _norm_pdf(z), 0.0)


def expected_improvement(gp, x, best):
    mean, var = gp_posterior(gp, x)
    return ei_from_moments(mean, math.sqrt(var), best)


@dataclass(frozen=True)
class BoConfig:
    lambda_max: float
    init_points: int = 5
    iterations: int = 30
    eval_episodes: int = 20
    eval_steps: int = 1000
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    threads: int = 1
    grid_points: int = GRID_POINTS

    def __post_init__(self):
        if not (self.lambda_max > 0 and math.isfinite(self.lambda_max)):
            raise ContractError("lambda_max must be positive and finite")
        if self.iterations < 1 or self.init_points < 1:
            raise ContractError("iterations and init_points must be >= 1")
        if self.eval_episodes < 1 or self.eval_steps < 1 or self.grid_points < 2:
            raise ContractError("evaluation budget and grid size must be positive")

    @property
    def lambda_bounds(self):
        return (0.0, self.lambda_max)


def threshold_evaluator(env, policy, shield, cfg):
    """``lam -> (V, V*, I)`` on a fixed episode set (common random numbers)."""
    def run(lam):
        rep = evaluate(env, policy, shield.with_threshold(lam), cfg.eval_episodes, cfg.eval_steps,
                       cfg.seed, cfg.horizon, cfg.threads)
        return rep.violations, rep.necessary_interventions, rep.interventions
    return run


def optimize_threshold(env, policy, K, cfg, evaluator=None, norm="linf"):
    """Return ``(lambda, trace)``; ``trace`` rows are dicts with lambda, V, V_star, I, objective.

    ``evaluator`` overrides the simulation (any ``lam -> (V, V*, I)``).
    The returned threshold is the first one in the trace with the lowest
    objective.
    """
    if evaluator is None:
        base = K if isinstance(K, Shield) else Shield(K, 0.0, norm)
        evaluator = threshold_evaluator(env, policy, base, cfg)
    rng = np.random.default_rng(cfg.seed)
    cache = {}
    trace = []

    def observe(u):
        lam = float(u * cfg.lambda_max)
        if lam not in cache:
            cache[lam] = tuple(int(v) for v in evaluator(lam))
        V, Vs, I = cache[lam]
        row = {"lambda": lam, "V": V, "V_star": Vs, "I": I, "objective": objective(V, Vs, I)}
        trace.append(row)
        return row["objective"]

    xs = list(rng.uniform(0.0, 1.0, size=cfg.init_points))
    ys = [observe(u) for u in xs]
    var = float(np.var(ys))
    gp = GaussianProcess(variance=var if var > 0 else 1.0)
    for u, y in zip(xs, ys):
        gp.add(u, y)
    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    for _ in range(cfg.iterations):
        best = min(gp.y)
        mean, var = gp.predict(grid)
        ei = [ei_from_moments(m, math.sqrt(v), best) for m, v in zip(mean, var)]
        u = float(grid[int(np.argmax(ei))])  # argmax keeps the smallest lambda on ties
        gp.add(u, observe(u))
    best_row = min(trace, key=lambda r: r["objective"])  # min keeps the first on ties
    return best_row["lambda"], trace


def grid_search_threshold(evaluator, lambda_max, points=200):
    """Exhaustive reference: evaluate ``points`` evenly spaced thresholds."""
    rows = []
    for lam in np.linspace(0.0, lambda_max, points):
        V, Vs, I = evaluator(float(lam))
        rows.append({"lambda": float(lam), "V": V, "V_star": Vs, "I": I,
                     "objective": objective(V, Vs, I)})
    best = min(rows, key=lambda r: r["objective"])
    return best["lambda"], rows


def random_threshold(lambda_max, seed, low_fraction=1e-3):
    """Seeded log-uniform draw on ``[low_fraction * lambda_max, lambda_max]``."""
    rng = np.random.default_rng(seed)
    lo = math.log(low_fraction * lambda_max)
    return float(math.exp(rng.uniform(lo, math.log(lambda_max))))


def trace_csv(trace):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["lambda", "V", "V_star", "I", "objective"],
                       lineterminator="\n")
    w.writeheader()
    for row in trace:
        w.writerow(row)
    return buf.getvalue()
