"""Two-phase simplex for ``max c.x  s.t.  D x <= d`` with free ``x``.

MOAS construction issues thousands of LPs with a handful of variables and up
to a few hundred rows.  The solver therefore works on the dual standard form

    min d.y   s.t.  D^T y = c,  y >= 0

whose tableau has one row per *variable* of the original problem, and reads
the primal optimizer back from the simplex multipliers.  Both phases use
Bland's rule (lowest index enters; ties in the ratio test leave by lowest
basic index), which rules out cycling.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, NumericalError
from .kernels import backend as _k

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
# pivot elements below this are treated as zero in the ratio test
PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class LpResult:
    status: str
    value: Optional[float] = None
    argmax: Optional[np.ndarray] = None

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclass(frozen=True)
class LpProblem:
    """Maximize ``objective . s`` over a :class:`~shieldsynth.polytope.Polytope`."""

    objective: np.ndarray
    constraints: object

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float).ravel()
        if obj.shape[0] != self.constraints.dim:
            raise ContractError(
                f"objective has {obj.shape[0]} entries, polytope has dimension "
                f"{self.constraints.dim}"
            )
        object.__setattr__(self, "objective", obj)


def solve(problem):
    return maximize(problem.objective, problem.constraints.D, problem.constraints.d)


def _pivot(T, row, col):
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])


def _minimize(T, basis, ncols, max_pivots):
    """Bland-rule primal simplex on tableau ``T`` (last row = reduced costs).

    ``T[-1, j] < 0`` means column ``j`` lowers the objective.  Only columns
    below ``ncols`` may enter.  Returns False when the objective is unbounded
    below.
    """
    status = _k.simplex_minimize(T, basis, ncols, max_pivots, OPT_TOL, PIVOT_TOL, FEAS_TOL)
    if status == _k.LP_PIVOT_LIMIT:
        raise NumericalError(f"simplex exceeded {max_pivots} pivots")
    return status == _k.LP_OPTIMAL


def _standard_form(A, b, cost, max_pivots):
    """``min cost.y  s.t.  A y = b, y >= 0`` by two-phase simplex.

    Returns ``(status, y, pi)`` where ``pi`` are the equality multipliers
    (``cost - A^T pi >= 0`` at optimality).  ``status`` refers to this
    standard-form problem.
    """
    k, N = A.shape
    flip = np.where(b < 0, -1.0, 1.0)
    T = np.zeros((k + 1, N + k + 1))
    T[:k, :N] = A * flip[:, None]
    T[:k, N:N + k] = np.eye(k)
    T[:k, -1] = b * flip
    basis = np.arange(N, N + k, dtype=np.int64)

    # phase 1: minimize the sum of artificials
    T[-1, :N] = -T[:k, :N].sum(axis=0)
    T[-1, -1] = -T[:k, -1].sum()
    _minimize(T, basis, N, max_pivots)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
        return INFEASIBLE, None, None
    # pivot zero-level artificials out where possible; others stay (redundant rows)
    for i in range(k):
        if basis[i] >= N:
            cols = np.flatnonzero(np.abs(T[i, :N]) > 1e-9)
            if cols.size:
                _pivot(T, i, int(cols[0]))
                basis[i] = int(cols[0])

    # phase 2 reduced costs; artificial columns are kept to read off pi
    full = np.concatenate([cost, np.zeros(k)])
    T[-1, :N + k] = full
    T[-1, -1] = 0.0
    for i in range(k):
        cb = full[basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    if not _minimize(T, basis, N, max_pivots):
        return UNBOUNDED, None, None
    if not np.all(np.isfinite(T)):
        raise NumericalError("non-finite tableau after simplex")
    y = np.zeros(N + k)
    y[basis] = T[:k, -1]
    # reduced cost of artificial j is 0 - pi_j (rows scaled by flip)
    pi = -T[-1, N:N + k] * flip
    return OPTIMAL, y[:N], pi


def maximize(objective, D, d):
    """Solve ``max objective.x s.t. D x <= d`` with ``x`` unrestricted in sign."""
    c = np.asarray(objective, dtype=float).ravel()
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    m, n = D.shape
    if c.shape[0] != n or d.shape[0] != m:
        raise ContractError("objective/constraint dimensions disagree")
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
        raise NumericalError("LP data must be finite")
    max_pivots = 50 * (m + n) + 1000

    # dual: min d.y  s.t.  D^T y = c, y >= 0 ; primal x = multipliers
    status, _, x = _standard_form(D.T, c, d, max_pivots)
    if status == OPTIMAL:
        return LpResult(OPTIMAL, float(c @ x), x)
    if status == UNBOUNDED:
        return LpResult(INFEASIBLE)
    # dual infeasible: primal is unbounded if feasible at all
    return LpResult(UNBOUNDED if _feasible(D, d, max_pivots) else INFEASIBLE)


def _feasible(D, d, max_pivots):
    # Farkas: D x <= d infeasible iff some y >= 0 has D^T y = 0 and d.y < 0;
    # normalise with sum(y) = 1 so the certificate LP is bounded
    m, n = D.shape
    A = np.vstack([D.T, np.ones((1, m))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    status, y, _ = _standard_form(A, b, d, max_pivots)
    if status != OPTIMAL:
        return True
    return float(d @ y) >= -FEAS_TOL * max(1.0, np.abs(d).max())


def is_feasible(D, d):
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    return _feasible(D, d, 50 * sum(D.shape) + 1000)
