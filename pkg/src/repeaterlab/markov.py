"""Finite discrete-time Markov chain analysis on dense row-stochastic matrices.

Everything here works on small dense matrices (protocol chains have a handful
of states), so direct linear algebra is always preferred over iterative or
sparse methods. Power iteration is kept only as an independent cross-check
for the equilibrium solver.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

ROW_SUM_ATOL = 1e-12


class MarkovError(Exception):
    """Base class for structural and numerical chain errors."""


class NonSquareError(MarkovError):
    def __init__(self, shape):
        super().__init__(f"transition matrix must be square and 2-d, got shape {shape}")
        self.shape = shape


class RowSumError(MarkovError):
    def __init__(self, row, total):
        super().__init__(f"row {row} sums to {total!r}, expected 1 within {ROW_SUM_ATOL}")
        self.row = row
        self.total = total


class EntryRangeError(MarkovError):
    def __init__(self, row, col, value):
        super().__init__(f"entry ({row}, {col}) = {value!r} outside [0, 1]")
        self.row = row
        self.col = col
        self.value = value


class NoReturnPathError(MarkovError):
    def __init__(self, state):
        super().__init__(f"state {state} has no positive-probability return path")
        self.state = state


class NotConvergedError(MarkovError):
    def __init__(self, iterations):
        super().__init__(f"power iteration did not converge in {iterations} iterations")
        self.iterations = iterations


class SingularSystemError(MarkovError):
    """Equilibrium linear solve degenerated (typically a reducible chain)."""


class SingularMatrixError(MarkovError):
    """I - Q is not invertible for the requested target state."""


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StochasticMatrix:
    """Validated row-stochastic transition matrix. Build via :func:`validate`."""

    rows: np.ndarray

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def __getitem__(self, idx):
        return self.rows[idx]


@dataclass(frozen=True)
class Distribution:
    """Probability row vector over chain states."""

    probs: np.ndarray

    def __getitem__(self, idx) -> float:
        return float(self.probs[idx])

    def __len__(self) -> int:
        return len(self.probs)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


@dataclass(frozen=True)
class FundamentalMatrix:
    """Inverse of (I - Q) where Q drops the target row and column.

    ``index_map[r]`` gives the original state index of reduced row/column r.
    """

    matrix: np.ndarray
    target: int
    index_map: tuple[int, ...]


@dataclass(frozen=True)
class HittingStats:
    """Mean and variance of the first-hitting time of ``target``, in steps.

    Entry r refers to start state ``index_map[r]``; the target itself is not
    included (its hitting time is trivially zero).
    """

    target: int
    index_map: tuple[int, ...]
    means: np.ndarray
    variances: np.ndarray

    def for_state(self, state: int) -> tuple[float, float]:
        r = self.index_map.index(state)
        return float(self.means[r]), float(self.variances[r])


def validate(rows) -> StochasticMatrix:
    """Check and wrap a raw matrix as a row-stochastic transition matrix.

    Args:
        rows: square array-like of reals; rows must lie in [0, 1] and sum
            to 1 within ``ROW_SUM_ATOL``.

    Returns:
        StochasticMatrix wrapping a read-only float copy of the input.

    Raises:
        NonSquareError: input is not a square 2-d array with n >= 1.
        EntryRangeError: some entry falls outside [0, 1].
        RowSumError: some row sum deviates from 1 beyond tolerance.
    """
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise NonSquareError(a.shape)
    bad = np.argwhere((a < 0.0) | (a > 1.0) | ~np.isfinite(a))
    if bad.size:
        r, c = map(int, bad[0])
        raise EntryRangeError(r, c, float(a[r, c]))
    sums = a.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.max() > ROW_SUM_ATOL:
        r = int(off.argmax())
        raise RowSumError(r, float(sums[r]))
    return StochasticMatrix(_readonly(a.copy()))


def _as_rows(matrix) -> np.ndarray:
    if isinstance(matrix, StochasticMatrix):
        return matrix.rows
    return validate(matrix).rows


def _successors(support: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(support[i]) for i in range(support.shape[0])]


def _reachable(adj: list[np.ndarray], start: int) -> np.ndarray:
    """States reachable from ``start`` via paths of length >= 1."""
    n = len(adj)
    seen = np.zeros(n, dtype=bool)
    queue = deque(adj[start])
    for j in adj[start]:
        seen[j] = True
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_irreducible(matrix) -> bool:
    """True iff the support graph is a single strongly connected component."""
    rows = _as_rows(matrix)
    support = rows > 0.0
    fwd = _successors(support)
    bwd = _successors(support.T)
    reach_f = _reachable(fwd, 0)
    reach_b = _reachable(bwd, 0)
    reach_f[0] = reach_b[0] = True  # length-0 path
    return bool(reach_f.all() and reach_b.all())


def period(matrix, state: int) -> int:
    """Period of ``state``: gcd of the lengths of all cycles through it.

    Computed as the gcd of BFS level differences d(u) + 1 - d(v) over all
    support edges u -> v inside the state's communicating class.

    Raises:
        NoReturnPathError: no positive-probability cycle passes through
            ``state``.
    """
    rows = _as_rows(matrix)
    support = rows > 0.0
    fwd = _successors(support)
    bwd = _successors(support.T)
    reach_f = _reachable(fwd, state)
    reach_b = _reachable(bwd, state)
    if not (reach_f[state] and reach_b[state]):
        raise NoReturnPathError(state)
    comm = reach_f & reach_b

    level = {state: 0}
    queue = deque([state])
    while queue:
        u = queue.popleft()
        for v in fwd[u]:
            if comm[v] and v not in level:
                level[v] = level[u] + 1
                queue.append(v)

    g = 0
    for u in level:
        for v in fwd[u]:
            if comm[v]:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


def matrix_power(matrix, k: int) -> np.ndarray:
    """P**k by exponentiation by squaring (k >= 0)."""
    rows = _as_rows(matrix)
    if k < 0:
        raise ValueError("power must be nonnegative")
    return np.linalg.matrix_power(rows, k)


def _direct_equilibrium(rows: np.ndarray) -> np.ndarray:
    # pi (P - I) = 0 with one equation replaced by sum(pi) = 1.
    n = rows.shape[0]
    a = rows.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"equilibrium solve failed: {exc}") from exc
    return pi


def _power_equilibrium(rows: np.ndarray, tol: float, max_iterations: int) -> np.ndarray:
    pi = np.full(rows.shape[0], 1.0 / rows.shape[0])
    for _ in range(max_iterations):
        nxt = pi @ rows
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol:
            if np.abs(nxt @ rows - nxt).max() <= tol:
                return nxt
        pi = nxt
    raise NotConvergedError(max_iterations)


def equilibrium(matrix, tol: float = 1e-12, method: str = "direct",
                max_iterations: int = 1_000_000) -> Distribution:
    """Stationary distribution pi with pi P = pi and sum(pi) = 1.

    Args:
        matrix: row-stochastic matrix (or raw rows).
        tol: bound enforced on the fixed-point residual of the returned
            vector, max|pi P - pi|.
        method: "direct" solves the linear system with one equation replaced
            by the normalization; "power" iterates pi <- pi P from uniform
            and exists as an independent cross-check.
        max_iterations: iteration cap for the power method.

    Raises:
        SingularSystemError: the direct solve degenerated or produced a
            vector violating the fixed-point or probability constraints
            (typical for reducible chains with no unique equilibrium).
        NotConvergedError: power method hit the iteration cap (typical for
            periodic chains).
    """
    rows = _as_rows(matrix)
    if method == "direct":
        pi = _direct_equilibrium(rows)
    elif method == "power":
        pi = _power_equilibrium(rows, tol, max_iterations)
    else:
        raise ValueError(f"unknown method {method!r}")

    if not np.isfinite(pi).all() or pi.min() < -1e-9:
        raise SingularSystemError("equilibrium solution is not a probability vector")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    if np.abs(pi @ rows - pi).max() > tol:
        raise SingularSystemError("equilibrium residual exceeds tolerance")
    return Distribution(_readonly(pi))


def fundamental_matrix(matrix, target: int) -> FundamentalMatrix:
    """N = (I - Q)^-1 where Q is P with the target row and column removed.

    Raises:
        SingularMatrixError: I - Q is singular or too ill-conditioned for
            the inverse to satisfy its defining identity at 1e-10.
    """
    rows = _as_rows(matrix)
    n = rows.shape[0]
    if not 0 <= target < n:
        raise IndexError(f"target {target} outside 0..{n - 1}")
    keep = [i for i in range(n) if i != target]
    q = rows[np.ix_(keep, keep)]
    a = np.eye(n - 1) - q
    try:
        fund = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"I - Q singular for target {target}: {exc}") from exc
    if keep and np.abs(a @ fund - np.eye(n - 1)).max() > 1e-10:
        raise SingularMatrixError(f"inverse of I - Q inaccurate for target {target}")
    return FundamentalMatrix(_readonly(fund), target, tuple(keep))


def hitting_stats(matrix, target: int) -> HittingStats:
    """First-hitting-time mean and variance of ``target`` from each other state.

    Mean vector is N 1; variance vector is (2N - I) t - t*t with t = N 1,
    both in squared step units.
    """
    fund = fundamental_matrix(matrix, target)
    m = fund.matrix.shape[0]
    t = fund.matrix @ np.ones(m)
    var = (2.0 * fund.matrix - np.eye(m)) @ t - t * t
    if m and var.min() < -1e-9:
        raise SingularMatrixError(
            f"hitting variance came out negative ({var.min()!r}); ill-conditioned chain")
    return HittingStats(fund.target, fund.index_map, _readonly(t), _readonly(var))


def mean_return_time(matrix, state: int) -> float:
    """Expected steps to return to ``state``, 1 / pi_state (Kac's formula)."""
    pi = equilibrium(matrix)
    p = pi[state]
    if p <= 0.0:
        return math.inf
    return 1.0 / p


def matrix_to_json(matrix) -> str:
    """Serialize as '{"n": ..., "rows": [[...], ...]}' with full precision."""
    rows = _as_rows(matrix)
    doc = {"n": int(rows.shape[0]), "rows": [[float(x) for x in row] for row in rows]}
    return json.dumps(doc)


def matrix_from_json(text: str) -> StochasticMatrix:
    doc = json.loads(text)
    if not isinstance(doc, dict) or set(doc) != {"n", "rows"}:
        raise ValueError('matrix document must have exactly the keys "n" and "rows"')
    rows = doc["rows"]
    if len(rows) != doc["n"]:
        raise NonSquareError((doc["n"], len(rows)))
    return validate(rows)
