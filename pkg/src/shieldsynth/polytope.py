"""H-representation polytopes ``{s | D s <= d}``."""

import numpy as np

from . import lp
from .errors import ContractError, NumericalError, UnboundedSafeSet


class Polytope:
    """Closed convex set ``{s | D s <= d}``.

    Construction checks non-emptiness with an LP, so every instance is a
    genuine (possibly lower-dimensional) set.
    """

    __slots__ = ("D", "d")

    def __init__(self, D, d, check=True):
        D = np.atleast_2d(np.array(D, dtype=float))
        d = np.array(d, dtype=float).ravel()
        if D.shape[0] != d.shape[0]:
            raise ContractError(f"{D.shape[0]} constraint rows but {d.shape[0]} bounds")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(d))):
            raise NumericalError("polytope data must be finite")
        D.setflags(write=False)
        d.setflags(write=False)
        self.D = D
        self.d = d
        if check and not lp.is_feasible(D, d):
            raise ContractError("polytope is empty")

    @classmethod
    def from_box(cls, lo, hi):
        """Axis-aligned box; compiles to ``2*m`` rows (upper bounds first)."""
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractError("box needs lo <= hi elementwise")
        m = lo.shape[0]
        eye = np.eye(m)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def dim(self):
        return self.D.shape[1]

    @property
    def n_constraints(self):
        return self.D.shape[0]

    def contains(self, s, tol=0.0):
        s = np.asarray(s, dtype=float).ravel()
        if s.shape[0] != self.dim:
            raise ContractError(f"state has {s.shape[0]} entries, polytope dimension is {self.dim}")
        return bool(np.all(self.D @ s <= self.d + tol))

    def slack(self, s):
        """Row-wise ``d - D s``; negative entries are violated constraints."""
        return self.d - self.D @ np.asarray(s, dtype=float).ravel()

    def intersect(self, other):
        return Polytope(np.vstack([self.D, other.D]), np.concatenate([self.d, other.d]))

    def support(self, direction):
        """``max direction . s`` over the polytope (the LP support function)."""
        res = lp.maximize(direction, self.D, self.d)
        if res.status == lp.UNBOUNDED:
            raise UnboundedSafeSet("polytope is unbounded in the requested direction")
        if res.status != lp.OPTIMAL:
            raise ContractError("polytope is empty")
        return res.value

    def is_bounded(self):
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            for sign in (1.0, -1.0):
                if lp.maximize(sign * e, self.D, self.d).status == lp.UNBOUNDED:
                    return False
        return True

    def contains_polytope(self, other, tol=1e-9):
        """Exact LP test ``other ⊆ self``; returns the worst slack as well."""
        worst = np.inf
        for Di, di in zip(self.D, self.d):
            worst = min(worst, di - other.support(Di))
        return worst >= -tol, worst

    def to_json(self):
        return {"D": self.D.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["D"], obj["d"])

    def __eq__(self, other):
        return (
            isinstance(other, Polytope)
            and self.D.shape == other.D.shape
            and np.array_equal(self.D, other.D)
            and np.array_equal(self.d, other.d)
        )

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_constraints})"
