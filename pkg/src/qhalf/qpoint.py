"""Unordered Q-tuples of vectors and the optimal-matching metric.

A Q-point is a multiset of Q values in R^n. The distance between two
Q-points is the smallest root-sum-square pairing cost over all ways of
matching the sheets of one onto the sheets of the other.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

MAX_BRUTEFORCE_Q = 8
MAX_TABLE_Q = 6

_REL_TIE_TOL = 1e-12


class QPoint:
    """A point of the space of unordered Q-tuples in R^n.

    Stores sheets as a (Q, n) float array. Sheet order is an artifact of
    storage and carries no meaning; all operations treat the sheets as a
    multiset.
    """

    __slots__ = ("sheets",)

    def __init__(self, sheets):
        arr = np.asarray(sheets, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("sheets must be a (Q, n) array with Q >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sheets must be finite")
        self.sheets = arr

    @property
    def Q(self) -> int:
        return self.sheets.shape[0]

    @property
    def n(self) -> int:
        return self.sheets.shape[1]

    def sorted_sheets(self) -> np.ndarray:
        """Sheets in lexicographic order, for canonical comparison."""
        order = np.lexsort(self.sheets.T[::-1])
        return self.sheets[order]

    def permuted(self, perm) -> "QPoint":
        return QPoint(self.sheets[list(perm)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, QPoint):
            return NotImplemented
        if self.Q != other.Q or self.n != other.n:
            return False
        return bool(np.array_equal(self.sorted_sheets(), other.sorted_sheets()))

    def __repr__(self) -> str:
        return f"QPoint(Q={self.Q}, n={self.n}, sheets={self.sheets.tolist()})"

    def to_json(self) -> str:
        payload = {"Q": self.Q, "n": self.n, "sheets": self.sheets.ravel().tolist()}
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "QPoint":
        payload = json.loads(text)
        q, n = int(payload["Q"]), int(payload["n"])
        flat = np.asarray(payload["sheets"], dtype=float)
        if flat.size != q * n:
            raise ValueError(f"expected {q * n} values, got {flat.size}")
        return QPoint(flat.reshape(q, n))


@dataclass(frozen=True)
class Matching:
    """A pairing of sheets between two Q-points and its transport cost.

    perm[i] is the sheet index of the second point matched to sheet i of
    the first; cost is the root-sum-square distance realized by perm.
    """

    perm: tuple
    cost: float


def _as_sheets(p) -> np.ndarray:
    if isinstance(p, QPoint):
        return p.sheets
    return QPoint(p).sheets


def _cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def g_distance(a, b) -> float:
    """Optimal-matching distance between two Q-points.

    Uses an exact assignment solve, O(Q^3).
    """
    sa, sb = _as_sheets(a), _as_sheets(b)
    if sa.shape != sb.shape:
        raise ValueError(f"shape mismatch: {sa.shape} vs {sb.shape}")
    cost = _cost_matrix(sa, sb)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].sum()))


def g_distance_bruteforce(a, b) -> float:
    """Reference metric by enumerating all Q! matchings. Q <= 8 only."""
    sa, sb = _as_sheets(a), _as_sheets(b)
    if sa.shape != sb.shape:
        raise ValueError(f"shape mismatch: {sa.shape} vs {sb.shape}")
    q = sa.shape[0]
    if q > MAX_BRUTEFORCE_Q:
        raise ValueError(f"bruteforce limited to Q <= {MAX_BRUTEFORCE_Q}, got Q={q}")
    cost = _cost_matrix(sa, sb)
    best = np.inf
    for perm in itertools.permutations(range(q)):
        total = cost[range(q), perm].sum()
        if total < best:
            best = total
    return float(np.sqrt(best))


def optimal_matching(a, b) -> Matching:
    """Optimal sheet pairing, ties broken by lexicographically smallest perm.

    Among all permutations realizing the minimal cost (up to a relative
    tolerance for floating-point ties), returns the one that is smallest
    in lexicographic order, so the result is deterministic.
    """
    sa, sb = _as_sheets(a), _as_sheets(b)
    if sa.shape != sb.shape:
        raise ValueError(f"shape mismatch: {sa.shape} vs {sb.shape}")
    q = sa.shape[0]
    cost = _cost_matrix(sa, sb)
    rows, cols = linear_sum_assignment(cost)
    best = cost[rows, cols].sum()
    tol = _REL_TIE_TOL * (1.0 + best)

    # Greedy lexicographic completion: fix sheet i to the smallest column
    # that still admits an optimal completion of the remainder.
    free_cols = list(range(q))
    perm = []
    fixed = 0.0
    for i in range(q):
        chosen = None
        for jpos, j in enumerate(free_cols):
            rest_rows = list(range(i + 1, q))
            rest_cols = free_cols[:jpos] + free_cols[jpos + 1 :]
            if rest_rows:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = sub[r, c].sum()
            else:
                rest = 0.0
            if fixed + cost[i, j] + rest <= best + tol:
                chosen = jpos
                break
        if chosen is None:  # cannot happen for a valid cost matrix
            raise RuntimeError("assignment completion failed")
        j = free_cols.pop(chosen)
        perm.append(j)
        fixed += cost[i, j]
    return Matching(perm=tuple(perm), cost=float(np.sqrt(fixed)))


def eta_mean(a) -> np.ndarray:
    """Mean of the sheets, a single vector in R^n."""
    return _as_sheets(a).mean(axis=0)


def blend(a, b, t: float) -> QPoint:
    """Point at parameter t on the matched segment from a to b.

    t must lie in [0, 1]. The matching between a and b is the
    deterministic optimal one, and the blend moves every sheet of a
    straight toward its matched sheet of b, so the distance from a grows
    exactly linearly in t.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"blend parameter t={t} outside [0, 1]")
    sa, sb = _as_sheets(a), _as_sheets(b)
    m = optimal_matching(sa, sb)
    matched = sb[list(m.perm)]
    return QPoint((1.0 - t) * sa + t * matched)


@lru_cache(maxsize=None)
def perm_table(q: int) -> np.ndarray:
    """All permutations of range(q) in lexicographic order, shape (q!, q)."""
    if q > MAX_TABLE_Q:
        raise ValueError(f"permutation table limited to Q <= {MAX_TABLE_Q}")
    return np.array(list(itertools.permutations(range(q))), dtype=np.intp)


def batch_match_cost2(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Squared matching distance for each row of two (M, Q, n) stacks."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    q = U.shape[1]
    if q == 1:
        d = U - V
        return np.einsum("mqn,mqn->m", d, d)
    P = perm_table(q)
    d = U[:, None, :, :] - V[:, P, :]
    costs = np.einsum("mkqn,mkqn->mk", d, d)
    return costs.min(axis=1)


def batch_match_values(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Rearrange each row of V by its optimal matching against U.

    U, V: (M, Q, n). Returns W with W[m, i] the sheet of V[m] matched to
    sheet i of U[m]. Ties resolve to the lexicographically first
    permutation of the table, so results are deterministic.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    q = U.shape[1]
    if q == 1:
        return V
    P = perm_table(q)
    d = U[:, None, :, :] - V[:, P, :]
    costs = np.einsum("mkqn,mkqn->mk", d, d)
    k = costs.argmin(axis=1)
    m_idx = np.arange(U.shape[0])[:, None]
    return V[m_idx, P[k]]
