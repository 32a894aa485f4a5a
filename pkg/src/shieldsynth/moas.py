"""Maximal output admissible sets of closed-loop linear systems.

The MOAS of ``s+ = A_cl s`` for a polytope ``X = {D s <= d}`` is the set of
states whose whole forward orbit stays in ``X``.  It is built by adding the
constraints ``D A_cl^k s <= d`` for ``k = 1, 2, ...`` until an LP shows that
one more step cannot leave the current set.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import lp
from .envs import box_corners
from .errors import ContractError, LpError, UnboundedSafeSet
from .polytope import Polytope

# an LP maximum above this counts as a violated constraint
TERMINATION_TOL = 1e-9
COUNTEREXAMPLE_TOL = 1e-9


@dataclass(frozen=True)
class MoasResult:
    set: Polytope
    horizon: int
    converged: bool

    def contains(self, s, tol=0.0):
        return self.set.contains(s, tol)

    def to_json(self):
        return {"D": self.set.D.tolist(), "d": self.set.d.tolist(),
                "horizon": self.horizon, "converged": self.converged}

    @classmethod
    def from_json(cls, obj):
        return cls(Polytope(obj["D"], obj["d"]), int(obj["horizon"]), bool(obj["converged"]))


def _lp_max(obj, D, d):
    res = lp.maximize(obj, D, d)
    if res.status == lp.UNBOUNDED:
        raise UnboundedSafeSet("constraint set is unbounded; cannot certify admissibility")
    if res.status != lp.OPTIMAL:
        raise LpError(f"LP returned {res.status} on a set that contains its starting polytope")
    return res.value


def compute_moas(a_cl, safe, max_horizon=500, prune=True):
    """Return the MOAS of ``a_cl`` inside ``safe``.

    ``horizon`` is the smallest ``t`` for which ``X_t`` (constraints up to
    power ``t``) is invariant.  ``converged`` is False when ``max_horizon``
    is exhausted first; ``set`` is then the last (outer) approximation.
    """
    a_cl = np.atleast_2d(np.asarray(a_cl, dtype=float))
    if a_cl.shape != (safe.dim, safe.dim):
        raise ContractError(f"closed loop is {a_cl.shape}, safe set has dimension {safe.dim}")
    if max_horizon < 1:
        raise ContractError("max_horizon must be >= 1")
    if not safe.is_bounded():
        raise UnboundedSafeSet("safe polytope must be bounded")
    D0, d0 = safe.D, safe.d
    D, d = D0.copy(), d0.copy()
    power = a_cl.copy()
    t = 0
    while True:
        J = D0 @ power
        viol = []
        for i in range(J.shape[0]):
            if _lp_max(J[i], D, d) - d0[i] > TERMINATION_TOL:
                viol.append(i)
        if not viol:
            break
        if t >= max_horizon:
            return MoasResult(Polytope(D, d, check=False), t, False)
        D = np.vstack([D, J[viol]])
        d = np.concatenate([d, d0[viol]])
        power = a_cl @ power
        t += 1
    if prune:
        D, d = prune_redundant(D, d, keep=D0.shape[0])
    return MoasResult(Polytope(D, d, check=False), t, True)


def prune_redundant(D, d, keep=0):
    """Drop rows (beyond the first ``keep``) implied by the remaining rows."""
    active = np.ones(D.shape[0], dtype=bool)
    for i in range(D.shape[0] - 1, keep - 1, -1):
        active[i] = False
        res = lp.maximize(D[i], D[active], d[active])
        if not (res.status == lp.OPTIMAL and res.value <= d[i] + TERMINATION_TOL):
            active[i] = True
    return D[active], d[active]


def brute_force_membership(a_cl, safe, s, steps):
    """True iff ``s`` and its next ``steps`` iterates under ``a_cl`` are all safe."""
    s = np.asarray(s, dtype=float)
    if not safe.contains(s):
        return False
    for _ in range(steps):
        s = a_cl @ s
        if not safe.contains(s):
            return False
    return True


@dataclass(frozen=True)
class CounterexampleSet:
    points: np.ndarray

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def box_containment(moas, lo, hi):
    """LP certificate of ``[lo, hi] ⊆ MOAS``; returns (holds, worst slack)."""
    box = Polytope.from_box(lo, hi)
    worst = np.inf
    for Di, di in zip(moas.set.D, moas.set.d):
        worst = min(worst, di - _lp_max(Di, box.D, box.d))
    return worst >= -COUNTEREXAMPLE_TOL, float(worst)


def find_counterexamples(moas, init_lo, init_hi, samples=256, rng_seed=0):
    """Corners of the initial box, then uniform samples, that lie outside the MOAS."""
    if not moas.converged:
        raise ContractError("counterexamples need a converged MOAS")
    lo = np.asarray(init_lo, dtype=float)
    hi = np.asarray(init_hi, dtype=float)
    rng = np.random.default_rng(rng_seed)
    cand = np.vstack([box_corners(lo, hi), rng.uniform(lo, hi, size=(samples, lo.shape[0]))])
    slack = moas.set.d[None, :] - cand @ moas.set.D.T
    outside = slack.min(axis=1) < -COUNTEREXAMPLE_TOL
    return CounterexampleSet(cand[outside])
