"""Dense revised-simplex feasibility solver (phase I, Bland's rule).

Decides whether ``A x = b, x >= 0`` has a solution.  If not, a Farkas
certificate ``y`` with ``A^T y <= 0`` and ``b^T y > 0`` is returned.
Sized for small problems (tens of rows, ~100 columns).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    """The solver failed (singular basis, iteration limit, or an invalid certificate)."""


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    x: np.ndarray | None
    certificate: np.ndarray | None
    infeasibility: float
    iterations: int


def feasibility(A, b, tol: float = 1e-9, max_iter: int = 20_000) -> FeasibilityResult:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("b has the wrong shape")
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    aug = np.hstack([A, np.eye(m)])
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))

    for it in range(max_iter):
        B = aug[:, basis]
        try:
            x_b = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, cost[basis])
        except np.linalg.LinAlgError as exc:
            raise LPError("singular basis matrix") from exc
        reduced = cost - aug.T @ y
        in_basis = np.zeros(n + m, dtype=bool)
        in_basis[basis] = True
        candidates = np.flatnonzero((reduced < -tol) & ~in_basis)
        if candidates.size == 0:
            break
        j = int(candidates[0])
        d = np.linalg.solve(B, aug[:, j])
        rows = np.flatnonzero(d > tol)
        if rows.size == 0:
            raise LPError("phase-I problem reported unbounded")
        ratios = np.maximum(x_b[rows], 0.0) / d[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol]
        leave = min(ties, key=lambda r: basis[r])
        basis[int(leave)] = j
    else:
        raise LPError(f"no convergence within {max_iter} pivots")

    objective = float(cost[basis] @ x_b)
    if objective <= tol * max(1.0, float(np.abs(b).sum())):
        x = np.zeros(n + m)
        x[basis] = np.maximum(x_b, 0.0)
        return FeasibilityResult(True, x[:n], None, objective, it)

    cert = y * sign
    A0 = A * sign[:, None]  # undo the row flips
    b0 = b * sign
    slack = float((A0.T @ cert).max(initial=0.0))
    if b0 @ cert <= slack:
        raise LPError("certificate does not separate the point from the columns")
    return FeasibilityResult(False, None, cert, objective, it)
