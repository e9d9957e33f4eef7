"""Dense strictly convex QP solver (Goldfarb-Idnani dual active set).

Solves

    min  1/2 x^T G x + a^T x    s.t.  A x <= b

for symmetric positive definite G.  The method starts from the unconstrained
minimum and adds violated constraints one at a time, taking dual steps that
keep all multipliers nonnegative, so no phase-1 feasible point is needed and
primal infeasibility is detected as an unbounded dual step.  The working
factorization (Cholesky of G, implicit QR of the active-constraint normals)
is updated incrementally: a Householder reflection per added constraint, a
Givens sweep per dropped one.

The iteration runs as a compiled kernel (numba); the surrounding problem
setup, validation, and scaling stay in plain numpy.  The solver is
deterministic: the most violated constraint is added first and ties break on
the lowest row index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


class QpInputError(ValueError):
    """Malformed or non-positive-definite QP data."""


@dataclass
class QpSolution:
    x: np.ndarray
    obj: float
    active: list[int]  # row indices of A active at the solution
    multipliers: np.ndarray  # one per row of A, zero for inactive rows
    iterations: int
    status: str  # "optimal" or "infeasible"


@njit(cache=True)
def _dual_iterate(x, Jt, Nr, b_int, u, active, feas_tol, max_iter):
    """Goldfarb-Idnani iteration on preprocessed data.

    x       -- unconstrained minimum on entry, solution on exit (n,)
    Jt      -- L^-1 on entry (rows are the columns of J = L^-T); mutated
    Nr      -- internal constraint normals as rows, n_i^T x >= b_int_i (m, n)
    u       -- active multipliers, aligned with `active` (n,); mutated
    active  -- active row indices (n,); first q entries valid on exit

    Returns (status, iterations, q) with status 0 = optimal, 1 = infeasible,
    2 = iteration limit.
    """
    n = x.shape[0]
    m = Nr.shape[0]
    R = np.zeros((n, n))
    is_inactive = np.ones(m, np.bool_)
    r = np.empty(n)
    v = np.empty(n)
    w = np.empty(n)
    q = 0
    iters = 0

    while True:
        # Most violated inactive constraint; ties break on the lowest index.
        s = np.dot(Nr, x)
        worst = -feas_tol
        p = -1
        for i in range(m):
            if is_inactive[i]:
                si = s[i] - b_int[i]
                if si < worst:
                    worst = si
                    p = i
        if p < 0:
            return 0, iters, q

        n_p = Nr[p]
        u_p = 0.0
        s_p = worst

        while True:
            iters += 1
            if iters > max_iter:  # finite termination safeguard
                return 2, iters, q

            d = np.dot(Jt, n_p)
            dd = 0.0
            for j in range(n):
                dd += d[j] * d[j]
            zz = 0.0
            for j in range(q, n):
                zz += d[j] * d[j]
            have_primal_dir = zz > 1e-14 * max(dd, 1.0)

            # r = R[:q, :q]^-1 d[:q] by back substitution.
            for i in range(q - 1, -1, -1):
                acc = d[i]
                for j in range(i + 1, q):
                    acc -= R[i, j] * r[j]
                r[i] = acc / R[i, i]

            # Largest dual step before some active multiplier reaches zero.
            t1 = np.inf
            k = -1
            for i in range(q):
                if r[i] > 1e-12:
                    ratio = u[i] / r[i]
                    if ratio < t1:
                        t1 = ratio
                        k = i

            t2 = -s_p / zz if have_primal_dir else np.inf
            t = min(t1, t2)
            if t == np.inf:
                return 1, iters, q

            if have_primal_dir:
                for col in range(q, n):
                    step = t * d[col]
                    if step != 0.0:
                        for i in range(n):
                            x[i] += step * Jt[col, i]
                s_p = -b_int[p]
                for j in range(n):
                    s_p += n_p[j] * x[j]
            # Clamp at zero: a multiplier that lands at -1e-17 by rounding
            # must not produce a negative dual step later.
            for i in range(q):
                nu = u[i] - t * r[i]
                u[i] = nu if nu > 0.0 else 0.0
            u_p += t

            if have_primal_dir and t == t2:
                # Full step: constraint p becomes active.  One Householder
                # reflection maps the tail of d onto e_q; applying it to the
                # trailing columns of J (rows of Jt) keeps J equal to L^-T
                # times an orthogonal matrix.
                alpha = math.sqrt(zz)
                if d[q] < 0.0:
                    alpha = -alpha
                v[q] = d[q] + alpha
                for j in range(q + 1, n):
                    v[j] = d[j]
                vv = 0.0
                for j in range(q, n):
                    vv += v[j] * v[j]
                if vv > 0.0:
                    scale = 2.0 / vv
                    for i in range(n):
                        w[i] = 0.0
                    for col in range(q, n):
                        vc = v[col]
                        if vc != 0.0:
                            for i in range(n):
                                w[i] += vc * Jt[col, i]
                    for col in range(q, n):
                        f = scale * v[col]
                        if f != 0.0:
                            for i in range(n):
                                Jt[col, i] -= f * w[i]
                for i in range(q):
                    R[i, q] = d[i]
                R[q, q] = -alpha
                active[q] = p
                u[q] = u_p
                q += 1
                is_inactive[p] = False
                break

            # Partial (or pure dual) step: drop the blocking constraint k and
            # retry adding p against the smaller active set.
            if k < 0:
                return 3, iters, q
            is_inactive[active[k]] = True
            for i in range(k, q - 1):
                active[i] = active[i + 1]
                u[i] = u[i + 1]
            for i in range(q):
                for c in range(k, q - 1):
                    R[i, c] = R[i, c + 1]
                R[i, q - 1] = 0.0
            q -= 1
            # Restore triangularity of the shifted block with Givens sweeps.
            for j in range(k, q):
                aa = R[j, j]
                bb = R[j + 1, j]
                if bb == 0.0:
                    continue
                h = math.hypot(aa, bb)
                c_rot = aa / h
                s_rot = bb / h
                for c in range(j, q):
                    hi = R[j, c]
                    lo = R[j + 1, c]
                    R[j, c] = c_rot * hi + s_rot * lo
                    R[j + 1, c] = -s_rot * hi + c_rot * lo
                for i in range(n):
                    ca = Jt[j, i]
                    cb = Jt[j + 1, i]
                    Jt[j, i] = c_rot * ca + s_rot * cb
                    Jt[j + 1, i] = -s_rot * ca + c_rot * cb
            for c in range(n):
                R[q, c] = 0.0


def solve_qp(
    G: np.ndarray,
    a: np.ndarray,
    A: np.ndarray | None = None,
    b: np.ndarray | None = None,
    feas_tol: float = 1e-9,
) -> QpSolution:
    """Minimize 1/2 x^T G x + a^T x subject to A x <= b.

    Raises QpInputError on shape mismatches or indefinite G.  Returns status
    "infeasible" when the constraints have no common point.
    """
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if G.shape != (n, n):
        raise QpInputError(f"G must be {n}x{n}, got {G.shape}")
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise QpInputError("G must be positive definite") from exc

    # Unconstrained minimum; Jt = L^-1, whose rows are the columns of the
    # working basis J = L^-T.
    x = -np.linalg.solve(L.T, np.linalg.solve(L, a))
    Jt = np.linalg.solve(L, np.eye(n))

    if A is None or len(A) == 0:
        obj = 0.5 * x @ G @ x + a @ x
        return QpSolution(x, float(obj), [], np.zeros(0), 0, "optimal")

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    if A.shape != (m, n) or b.shape != (m,):
        raise QpInputError("A/b shapes inconsistent with G/a")

    # Internal form: n_i^T x >= b_i with unit normals.  Rows are normalized
    # so the feasibility tolerance means the same thing for every constraint;
    # multipliers are rescaled back on return.
    row_norm = np.linalg.norm(A, axis=1)
    if np.any(row_norm == 0.0):
        raise QpInputError("constraint rows must be nonzero")
    Nr = np.ascontiguousarray(-(A / row_norm[:, None]))
    b_int = -(b / row_norm)

    u = np.zeros(n)
    active = np.full(n, -1, dtype=np.int64)
    x = np.ascontiguousarray(x)
    code, iters, q = _dual_iterate(
        x,
        np.ascontiguousarray(Jt),
        Nr,
        np.ascontiguousarray(b_int),
        u,
        active,
        feas_tol,
        100 * (m + n),
    )
    if code == 2:
        raise RuntimeError("dual active-set iteration limit exceeded")
    if code == 3:
        raise RuntimeError("dual step with no blocking constraint")

    active_rows = sorted(int(i) for i in active[:q])
    if code == 0:
        lam = np.zeros(m)
        for idx, mult in zip(active[:q], u[:q]):
            lam[idx] = mult / row_norm[idx]
        obj = 0.5 * x @ G @ x + a @ x
        return QpSolution(x, float(obj), active_rows, lam, int(iters), "optimal")
    return QpSolution(x, float("nan"), active_rows, np.zeros(m), int(iters), "infeasible")
