"""Minimum-norm linear programs over a weight-delta vector.

The programs are tiny (one flattened weight matrix per solve), so the solver
is a dense two-phase simplex with Bland's anti-cycling rule. Exactness and
predictability matter more than speed here.

L1 programs split the delta as d = p - q with p, q >= 0 and minimize
sum(p + q). Linf programs add one bound variable t with -t <= d_j <= t and
minimize t. Both reformulations are plain LPs, so the returned point is a
global optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

L1 = "l1"
LINF = "linf"
NORMS = (L1, LINF)

PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

# When set, every solved program is appended here in tableau form (CLI debug flag).
tableau_dump: TextIO | None = None


class LpError(RuntimeError):
    """Internal solver failure, e.g. a norm objective reported unbounded."""


@dataclass(eq=False)
class LinearProgram:
    """Rows c . d <= r over a delta vector of dimension num_vars."""

    rows: list[tuple[np.ndarray, float]]
    num_vars: int
    norm: str = L1


@dataclass(eq=False)
class LpSolution:
    status: str
    delta: np.ndarray
    objective: float


def _check_rows(rows, num_vars):
    checked = []
    for i, (coeffs, rhs) in enumerate(rows):
        c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
        if c.shape[0] != num_vars:
            raise ValueError(f"row {i}: expected {num_vars} coefficients, got {c.shape[0]}")
        r = float(rhs)
        if not (np.all(np.isfinite(c)) and np.isfinite(r)):
            raise ValueError(f"row {i}: coefficients must be finite")
        checked.append((c, r))
    return checked


def solve_min_norm(rows, num_vars: int, norm: str = L1) -> LpSolution:
    """Minimize ||d|| subject to the given rows c . d <= r.

    Returns status "infeasible" when the rows admit no solution at all;
    unboundedness cannot occur since a norm is bounded below by zero, and
    is reported as an internal error if the pivoting ever claims it.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    checked = _check_rows(rows, num_vars)
    if tableau_dump is not None:
        tableau_dump.write(format_tableau(checked, num_vars, norm))
        tableau_dump.write("\n")
    if not checked:
        return LpSolution(OPTIMAL, np.zeros(num_vars), 0.0)
    g0 = np.array([c for c, _ in checked])
    h0 = np.array([r for _, r in checked])
    if np.all(h0 >= 0.0):
        # d = 0 is feasible and no norm can beat 0.
        return LpSolution(OPTIMAL, np.zeros(num_vars), 0.0)

    m = num_vars
    if norm == L1:
        g = np.hstack([g0, -g0])
        h = h0
        cost = np.ones(2 * m)
    else:
        k = g0.shape[0]
        g = np.zeros((k + 2 * m, 2 * m + 1))
        g[:k, :m] = g0
        g[:k, m : 2 * m] = -g0
        eye = np.eye(m)
        g[k : k + m, :m] = eye
        g[k : k + m, m : 2 * m] = -eye
        g[k : k + m, -1] = -1.0
        g[k + m :, :m] = -eye
        g[k + m :, m : 2 * m] = eye
        g[k + m :, -1] = -1.0
        h = np.concatenate([h0, np.zeros(2 * m)])
        cost = np.zeros(2 * m + 1)
        cost[-1] = 1.0

    status, x = _solve_standard(g, h, cost)
    if status != OPTIMAL:
        return LpSolution(INFEASIBLE, np.zeros(num_vars), float("inf"))
    delta = x[:m] - x[m : 2 * m]
    return LpSolution(OPTIMAL, delta, float(cost @ x))


def _solve_standard(g: np.ndarray, h: np.ndarray, cost: np.ndarray):
    """min cost . x  s.t.  g x <= h,  x >= 0, by two-phase simplex."""
    m, n = g.shape
    flip = h < 0
    a = np.where(flip[:, None], -g, g)
    b = np.where(flip, -h, h)
    art_rows = np.nonzero(flip)[0]
    n_art = len(art_rows)

    ncols = n + m + n_art
    t = np.zeros((m + 1, ncols + 1))
    t[:m, :n] = a
    t[np.arange(m), n + np.arange(m)] = np.where(flip, -1.0, 1.0)
    t[art_rows, n + m + np.arange(n_art)] = 1.0
    t[:m, -1] = b
    basis = n + np.arange(m)
    basis[art_rows] = n + m + np.arange(n_art)

    if n_art:
        # Phase 1: minimize the artificial variables priced out of the cost row.
        for r in art_rows:
            t[-1, :] -= t[r, :]
        t[-1, n + m : ncols] += 1.0
        if _pivot_until_optimal(t, basis, ncols) != OPTIMAL:
            raise LpError("phase 1 objective is bounded by construction")
        if -t[-1, -1] > _FEAS_TOL:
            return INFEASIBLE, np.zeros(n)
        t, basis = _drop_artificials(t, basis, n + m)
        ncols = n + m

    t[-1, :] = 0.0
    t[-1, :n] = cost
    for r, col in enumerate(basis):
        if t[-1, col] != 0.0:
            t[-1, :] -= t[-1, col] * t[r, :]
    if _pivot_until_optimal(t, basis, ncols) != OPTIMAL:
        raise LpError("a minimum-norm objective reported unbounded")

    x = np.zeros(ncols)
    x[basis] = t[:-1, -1]
    return OPTIMAL, x[:n]


def _pivot_until_optimal(t: np.ndarray, basis: np.ndarray, ncols: int) -> str:
    while True:
        negative = np.nonzero(t[-1, :ncols] < -PIVOT_TOL)[0]
        if negative.size == 0:
            return OPTIMAL
        col = int(negative[0])  # Bland: lowest eligible index enters
        column = t[:-1, col]
        eligible = column > PIVOT_TOL
        if not eligible.any():
            return "unbounded"
        ratios = np.full(column.shape[0], np.inf)
        ratios[eligible] = t[:-1, -1][eligible] / column[eligible]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-15)[0]
        row = int(ties[np.argmin(basis[ties])])  # Bland: lowest basis label leaves
        _pivot(t, basis, row, col)


def _pivot(t: np.ndarray, basis: np.ndarray, row: int, col: int):
    t[row, :] /= t[row, col]
    factors = t[:, col].copy()
    factors[row] = 0.0
    t -= np.outer(factors, t[row, :])
    t[:, col] = 0.0
    t[row, col] = 1.0
    basis[row] = col


def _drop_artificials(t: np.ndarray, basis: np.ndarray, n_real: int):
    """Pivot artificials out of the basis, drop redundant rows, cut their columns."""
    drop_rows = []
    for r in range(len(basis)):
        if basis[r] < n_real:
            continue
        candidates = np.nonzero(np.abs(t[r, :n_real]) > PIVOT_TOL)[0]
        if candidates.size:
            _pivot(t, basis, r, int(candidates[0]))
        else:
            drop_rows.append(r)
    if drop_rows:
        keep = [r for r in range(len(basis)) if r not in drop_rows]
        t = t[keep + [len(basis)], :]
        basis = basis[keep]
    return np.hstack([t[:, :n_real], t[:, -1:]]), basis


def format_tableau(rows, num_vars: int, norm: str) -> str:
    """Plain-text rendering of a program, one aligned row per constraint."""
    lines = [f"min ||d||_{norm}  ({num_vars} variables, {len(rows)} rows)"]
    header = "".join(f"{f'd{j}':>12}" for j in range(num_vars)) + " |" + f"{'rhs':>12}"
    lines.append(header)
    for coeffs, rhs in rows:
        c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
        lines.append("".join(f"{v:>12.6g}" for v in c) + " |" + f"{rhs:>12.6g}")
    return "\n".join(lines) + "\n"
