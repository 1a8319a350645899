"""Independent brute-force oracles the solver tests compare against."""

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from leolift.milp_ir import MilpModel


def random_box_lp(rng, max_vars=6, max_rows=6):
    """Random dense LP with finite variable boxes (so it is always bounded)."""
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A = rng.normal(size=(m, n)).round(3)
    x0 = rng.uniform(0.0, 2.0, n)          # keep a point feasible
    b = A @ x0 + rng.uniform(0.0, 2.0, m)
    c = rng.normal(size=n).round(3)
    lb = np.zeros(n)
    ub = rng.uniform(2.0, 6.0, n).round(3)
    return A, b, c, lb, ub


def vertex_enumeration_min(A, b, c, lb, ub, tol=1e-9):
    """Exact bounded-LP minimum by enumerating basic feasible points.

    Considers every choice of n active constraints among the rows and the
    box faces; the polytope is bounded because every variable has a finite
    box, so the optimum sits at one of these points.
    """
    m, n = A.shape
    rows = [(A[i], b[i]) for i in range(m)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append((-e, -lb[j]))
        rows.append((e, ub[j]))
    best = math.inf
    feasible = False
    for combo in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[i][0] for i in combo])
        rhs = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        if (A @ x <= b + 1e-7).all() and (x >= lb - 1e-7).all() and (x <= ub + 1e-7).all():
            feasible = True
            best = min(best, float(c @ x))
    return best if feasible else None


def model_from_dense(A, senses, b, c, lb, ub, kinds):
    """Dense rows into a MilpModel (helper for solver comparisons)."""
    m = MilpModel("dense")
    ids = [m.add_variable(f"x{j}", kinds[j], lb[j], ub[j]) for j in range(len(c))]
    for i in range(A.shape[0]):
        terms = [(ids[j], A[i, j]) for j in range(len(c)) if A[i, j] != 0.0]
        m.add_constraint(terms, senses[i], b[i], tag=f"r{i}")
    for j in range(len(c)):
        if c[j] != 0.0:
            m.add_objective_term(ids[j], c[j])
    return m


def exhaustive_milp_min(A, b, c, lb, ub, is_int):
    """Optimal value by enumerating every integer assignment and solving the
    continuous remainder with an LP (scipy HiGHS); None when infeasible."""
    n = len(c)
    int_ids = [j for j in range(n) if is_int[j]]
    cont = [j for j in range(n) if not is_int[j]]
    choices = [range(int(math.ceil(lb[j] - 1e-9)), int(math.floor(ub[j] + 1e-9)) + 1)
               for j in int_ids]
    best = None
    for combo in itertools.product(*choices):
        fixed = dict(zip(int_ids, combo))
        resid = b - sum(A[:, j] * v for j, v in fixed.items()) if fixed else b.copy()
        if not cont:
            if (resid >= -1e-9).all():
                val = float(sum(c[j] * v for j, v in fixed.items()))
                best = val if best is None else min(best, val)
            continue
        res = linprog(c=[c[j] for j in cont],
                      A_ub=A[:, cont], b_ub=resid,
                      bounds=[(lb[j], ub[j]) for j in cont], method="highs")
        if res.status == 0:
            val = float(res.fun) + float(sum(c[j] * v for j, v in fixed.items()))
            best = val if best is None else min(best, val)
    return best
