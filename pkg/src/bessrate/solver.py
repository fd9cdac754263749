"""Linear programs: a canonical carrier, solvers and an LP-format dump.

Two backends solve the same :class:`LpProblem`:

* ``"highs"`` (default) calls the HiGHS dual simplex through scipy. It is
  deterministic single-threaded and fast enough for month-long runs.
* ``"bland"`` is a dense two-phase tableau simplex using Bland's rule. It is
  slow but self-contained and is used to cross-check HiGHS on small problems.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LpProblem:
    """min c.x + offset  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper."""

    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] = field(default_factory=list)
    row_names_ub: list[str] = field(default_factory=list)
    row_names_eq: list[str] = field(default_factory=list)
    offset: float = 0.0

    def __post_init__(self):
        n = self.c.size
        self.A_ub = sp.csr_matrix(self.A_ub, shape=(len(self.b_ub), n))
        self.A_eq = sp.csr_matrix(self.A_eq, shape=(len(self.b_eq), n))
        if not self.names:
            self.names = [f"x{i}" for i in range(n)]
        for arr in (self.c, self.b_ub, self.b_eq, self.A_ub.data, self.A_eq.data):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")
        if self.lower.size != n or self.upper.size != n or len(self.names) != n:
            raise ValueError("bounds/names do not match the variable count")

    @property
    def n(self) -> int:
        return self.c.size

    def constraints(self):
        """Yield ``(coefficient row, relation, rhs)`` with relation ``"<="`` or ``"="``."""
        for A, b, rel in ((self.A_ub, self.b_ub, "<="), (self.A_eq, self.b_eq, "=")):
            for i in range(A.shape[0]):
                yield A.getrow(i).toarray().ravel(), rel, float(b[i])

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.offset)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation over rows and bounds, evaluated from scratch."""
        worst = 0.0
        if self.A_ub.shape[0]:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst


@dataclass
class LpSolution:
    status: LpStatus
    values: np.ndarray
    objective: float
    max_constraint_violation: float
    message: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve_lp(
    p: LpProblem,
    feas_tol: float = 1e-8,
    opt_tol: float = 1e-8,
    method: str = "highs",
) -> LpSolution:
    if method == "highs":
        return _solve_highs(p, feas_tol, opt_tol)
    if method == "bland":
        return _solve_bland(p, feas_tol)
    raise ValueError(f"unknown LP method {method!r}")


_HIGHS_STATUS = {
    0: LpStatus.OPTIMAL,
    2: LpStatus.INFEASIBLE,
    3: LpStatus.UNBOUNDED,
}


def _solve_highs(p: LpProblem, feas_tol: float, opt_tol: float) -> LpSolution:
    res = linprog(
        p.c,
        A_ub=p.A_ub if p.A_ub.shape[0] else None,
        b_ub=p.b_ub if p.A_ub.shape[0] else None,
        A_eq=p.A_eq if p.A_eq.shape[0] else None,
        b_eq=p.b_eq if p.A_eq.shape[0] else None,
        bounds=np.column_stack([
            np.where(np.isfinite(p.lower), p.lower, -np.inf),
            np.where(np.isfinite(p.upper), p.upper, np.inf),
        ]),
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": feas_tol,
            "dual_feasibility_tolerance": opt_tol,
            "presolve": True,
        },
    )
    status = _HIGHS_STATUS.get(res.status, LpStatus.NUMERICAL_FAILURE)
    if res.x is None:
        x = np.full(p.n, np.nan)
        return LpSolution(status, x, math.nan, math.inf, res.message, int(getattr(res, "nit", 0)))
    x = np.asarray(res.x, dtype=float)
    return LpSolution(status, x, p.objective(x), p.max_violation(x), res.message, int(res.nit))


# -- dense Bland simplex ---------------------------------------------------

def _solve_bland(p: LpProblem, tol: float) -> LpSolution:
    """Two-phase tableau simplex with Bland's smallest-index rule."""
    n = p.n
    A_ub = p.A_ub.toarray()
    A_eq = p.A_eq.toarray()
    # columns of the standard-form problem: x = shift + M @ y, y >= 0
    cols: list[tuple[int, float]] = []  # (original var, sign)
    shift = np.zeros(n)
    extra_rows: list[tuple[int, float]] = []  # (y column, upper bound on y)
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    M = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    if np.any(p.lower > p.upper):
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), math.nan, math.inf, "crossed bounds")

    # rows: A_ub y' <= b', bound rows y_k <= u_k, equality rows
    ub_rows = [A_ub @ M] if A_ub.size else []
    ub_rhs = [p.b_ub - A_ub @ shift] if A_ub.size else []
    if extra_rows:
        B = np.zeros((len(extra_rows), ny))
        for r, (k, _) in enumerate(extra_rows):
            B[r, k] = 1.0
        ub_rows.append(B)
        ub_rhs.append(np.array([u for _, u in extra_rows]))
    G = np.vstack(ub_rows) if ub_rows else np.zeros((0, ny))
    g = np.concatenate(ub_rhs) if ub_rhs else np.zeros(0)
    E = A_eq @ M if A_eq.size else np.zeros((0, ny))
    e = p.b_eq - A_eq @ shift if A_eq.size else np.zeros(0)

    m_ub, m_eq = G.shape[0], E.shape[0]
    m = m_ub + m_eq
    # standard form [G I; E 0] z = [g; e], z >= 0
    A = np.zeros((m, ny + m_ub))
    A[:m_ub, :ny] = G
    A[:m_ub, ny:] = np.eye(m_ub)
    A[m_ub:, :ny] = E
    b = np.concatenate([g, e])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    nz = A.shape[1]
    cz = np.zeros(nz)
    cz[:ny] = p.c @ M

    # phase 1 with one artificial per row
    T = np.zeros((m + 1, nz + m + 1))
    T[:m, :nz] = A
    T[:m, nz:nz + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(nz, nz + m))
    T[m, :nz] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    status, iters = _pivot_loop(T, basis, nz + m, tol)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(LpStatus.NUMERICAL_FAILURE, np.full(n, np.nan), math.nan, math.inf, "phase 1 failed", iters)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[m, -1] > tol * scale * max(1, m):
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), math.nan, math.inf, "phase 1 optimum > 0", iters)

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= nz:
            pivot_col = next((k for k in range(nz) if abs(T[r, k]) > tol), None)
            if pivot_col is None:
                continue
            _pivot(T, basis, r, pivot_col)
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(nz)) + [-1]], np.zeros((1, nz + 1))])
    basis = [basis[r] for r in keep]
    mk = len(keep)
    T[mk, :nz] = cz
    for r, k in enumerate(basis):
        if T[mk, k] != 0:
            T[mk] -= T[mk, k] * T[r]
    status, it2 = _pivot_loop(T, basis, nz, tol)
    iters += it2
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, np.full(n, np.nan), math.nan, math.inf, "phase 2", iters)
    z = np.zeros(nz)
    for r, k in enumerate(basis):
        z[k] = T[r, -1]
    x = shift + M @ z[:ny]
    return LpSolution(LpStatus.OPTIMAL, x, p.objective(x), p.max_violation(x), "bland simplex", iters)


def _pivot(T: np.ndarray, basis: list[int], r: int, k: int) -> None:
    T[r] /= T[r, k]
    for i in range(T.shape[0]):
        if i != r and T[i, k] != 0:
            T[i] -= T[i, k] * T[r]
    basis[r] = k


def _pivot_loop(T: np.ndarray, basis: list[int], ncols: int, tol: float, max_iter: int = 50_000):
    m = len(basis)
    for it in range(max_iter):
        cost = T[m, :ncols]
        entering = next((k for k in range(ncols) if cost[k] < -tol), None)
        if entering is None:
            return LpStatus.OPTIMAL, it
        col = T[:m, entering]
        best = None
        for r in range(m):
            if col[r] > tol:
                ratio = T[r, -1] / col[r]
                if best is None or ratio < best[0] - tol or (abs(ratio - best[0]) <= tol and basis[r] < basis[best[1]]):
                    best = (ratio, r)
        if best is None:
            return LpStatus.UNBOUNDED, it
        _pivot(T, basis, best[1], entering)
    return LpStatus.NUMERICAL_FAILURE, max_iter


# -- text dump ---------------------------------------------------------------

def _expr(row, names) -> str:
    parts = [f"{'-' if v < 0 else '+'} {abs(float(v))!r} {names[j]}" for j, v in row if v != 0]
    if not parts:
        return f"0 {names[0]}"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dump_lp(p: LpProblem) -> str:
    """CPLEX LP-format text of ``p`` for cross-checking with external solvers."""
    out = io.StringIO()
    names = p.names
    obj = [(j, v) for j, v in enumerate(p.c) if v != 0]
    out.write("\\ offset " + repr(p.offset) + "\nMinimize\n obj: " + _expr(obj, names) + "\nSubject To\n")
    for A, b, rel, rn, tag in ((p.A_ub, p.b_ub, "<=", p.row_names_ub, "u"), (p.A_eq, p.b_eq, "=", p.row_names_eq, "e")):
        A = A.tocsr()
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            row = list(zip(A.indices[lo:hi], A.data[lo:hi]))
            label = rn[i] if i < len(rn) else f"{tag}{i}"
            out.write(f" {label}: {_expr(row, names)} {rel} {float(b[i])!r}\n")
    out.write("Bounds\n")
    for j, name in enumerate(names):
        lo, hi = p.lower[j], p.upper[j]
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.write(f" {name} free\n")
        else:
            lo_s = repr(float(lo)) if np.isfinite(lo) else "-inf"
            hi_s = repr(float(hi)) if np.isfinite(hi) else "+inf"
            out.write(f" {lo_s} <= {name} <= {hi_s}\n")
    out.write("End\n")
    return out.getvalue()
