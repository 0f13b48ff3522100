"""Dense two-phase simplex solver with dual multipliers and degeneracy flags.

Problems here are tiny (a few dozen variables), so the solver favors exact
certificates and reproducibility over speed: deterministic Dantzig pivoting
with a Bland's-rule fallback against cycling, explicit basis tracking, and
duals read off the final basis.  Statuses are values, not exceptions;
only numerical breakdown raises.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import LpFaultError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9
_DEGEN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """maximize objective.x  s.t.  ineq rows row.x <= rhs, eq rows row.x = rhs,
    and per-variable bounds lower <= x <= upper (entries may be infinite)."""

    objective: np.ndarray
    ineq: tuple = ()
    eq: tuple = ()
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        n = c.size
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "ineq", tuple((np.asarray(r, dtype=float).reshape(-1), float(b)) for r, b in self.ineq))
        object.__setattr__(self, "eq", tuple((np.asarray(r, dtype=float).reshape(-1), float(b)) for r, b in self.eq))
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        up = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        for r, _ in self.ineq + self.eq:
            if r.size != n:
                raise ValueError("constraint row length != number of variables")
        if lo.size != n or up.size != n or np.any(lo > up + 1e-15):
            raise ValueError("inconsistent bounds")

    @property
    def n(self):
        return self.objective.size

    def to_dict(self):
        def _f(v):
            return [None if not np.isfinite(x) else float(x) for x in v]

        return {
            "objective": [float(x) for x in self.objective],
            "ineq": [{"row": [float(x) for x in r], "rhs": b} for r, b in self.ineq],
            "eq": [{"row": [float(x) for x in r], "rhs": b} for r, b in self.eq],
            "lower": _f(self.lower),
            "upper": _f(self.upper),
        }


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    primal: np.ndarray = None
    value: float = np.nan
    ineq_duals: np.ndarray = None
    eq_duals: np.ndarray = None
    primal_degenerate: bool = False
    dual_degenerate: bool = False


def perturb_objective(lp, seed):
    """Multiply each objective entry by (1 + 1e-7 u), u ~ U[-1, 1] under `seed`."""
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=lp.n)
    return LinearProgram(
        objective=lp.objective * (1.0 + 1e-7 * u),
        ineq=lp.ineq,
        eq=lp.eq,
        lower=lp.lower,
        upper=lp.upper,
    )


# ---------------------------------------------------------------------------
# standard-form conversion
# ---------------------------------------------------------------------------


class _StandardForm:
    """min c.y  s.t.  M y = q (q >= 0), y >= 0, tracking the map back to x."""

    def __init__(self, lp):
        n = lp.n
        cols = []  # (var_index, sign) per standard column
        shift = np.zeros(n)
        extra_rows = []  # upper-bound rows appended to the inequality block
        for i in range(n):
            lo, up = lp.lower[i], lp.upper[i]
            if np.isfinite(lo):
                shift[i] = lo
                cols.append((i, +1.0))
                if np.isfinite(up):
                    row = np.zeros(n)
                    row[i] = 1.0
                    extra_rows.append((row, up - lo, i))  # y_i <= up - lo
            elif np.isfinite(up):
                shift[i] = up
                cols.append((i, -1.0))
            else:
                cols.append((i, +1.0))
                cols.append((i, -1.0))
        self.cols = cols
        self.shift = shift
        n_y = len(cols)

        T = np.zeros((n, n_y))
        for j, (i, s) in enumerate(cols):
            T[i, j] = s
        self.T = T

        rows = []
        rhs = []
        self.n_ineq = len(lp.ineq)
        for r, b in lp.ineq:
            rows.append(r @ T)
            rhs.append(b - r @ shift)
        self.n_ub = len(extra_rows)
        for row, _, i in extra_rows:
            rows.append(row @ T)
            rhs.append(lp.upper[i] - lp.lower[i])
        for r, b in lp.eq:
            rows.append(r @ T)
            rhs.append(b - r @ shift)
        m = len(rows)
        n_slack = self.n_ineq + self.n_ub
        M = np.zeros((m, n_y + n_slack))
        for k, row in enumerate(rows):
            M[k, :n_y] = row
            if k < n_slack:
                M[k, n_y + k] = 1.0
        q = np.asarray(rhs, dtype=float)
        self.row_sign = np.ones(m)
        neg = q < 0
        M[neg] *= -1.0
        q[neg] *= -1.0
        self.row_sign[neg] = -1.0
        self.M = M
        self.q = q
        self.n_y = n_y
        self.c = np.concatenate([-(lp.objective @ T), np.zeros(n_slack)])
        self.const = float(lp.objective @ shift)

    def primal_back(self, y):
        return self.shift + self.T @ y[: self.n_y]

    def duals_back(self, pi, lp):
        # std value = -(orig value) + const';  dV_orig/db_orig = -pi * row_sign
        full = -pi * self.row_sign
        ineq_duals = full[: self.n_ineq]
        eq_duals = full[self.n_ineq + self.n_ub : ]
        return ineq_duals, eq_duals


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    for r in range(tab.shape[0]):
        if r != row and abs(tab[r, col]) > 0:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _run_simplex(tab, basis, n_cols, allowed, max_iter=20000):
    """Minimize the objective encoded in the last tableau row over y >= 0.

    `tab` has shape (m+1, n_cols+1); last row is reduced costs with the
    negated objective value in its rhs cell.  `allowed[j]` marks columns
    permitted to enter.  Dantzig rule with lowest-index ties; switches to
    Bland's rule after a burn-in to guarantee termination.
    """
    m = tab.shape[0] - 1
    bland_after = 50 * (m + n_cols)
    for it in range(max_iter):
        bland = it >= bland_after
        red = tab[-1, :n_cols]
        candidates = np.where(allowed & (red < -_PIVOT_TOL))[0]
        if candidates.size == 0:
            return OPTIMAL
        col = candidates[0] if bland else candidates[np.argmin(red[candidates])]
        ratios = np.full(m, np.inf)
        pos = tab[:m, col] > _PIVOT_TOL
        ratios[pos] = tab[:m, -1][pos] / tab[:m, col][pos]
        if not np.isfinite(ratios).any():
            return UNBOUNDED
        best = np.min(ratios)
        tied = np.where(ratios <= best + _PIVOT_TOL)[0]
        if bland:  # leave by lowest basis-variable index (anti-cycling)
            row = int(tied[np.argmin([basis[r] for r in tied])])
        else:
            row = int(tied[0])
        _pivot(tab, basis, row, col)
    raise LpFaultError("simplex iteration limit exceeded")


def solve(lp):
    """Solve the LP, returning primal/dual certificates and degeneracy flags."""
    sf = _StandardForm(lp)
    M, q, c = sf.M, sf.q, sf.c
    m, n = M.shape

    if m == 0:
        # bounds-only problem: optimize each variable at its favorable bound
        x = np.where(lp.objective > 0, lp.upper, lp.lower)
        x = np.where(lp.objective == 0, np.where(np.isfinite(lp.lower), lp.lower, np.minimum(lp.upper, 0.0)), x)
        if not np.all(np.isfinite(x)):
            return LpSolution(status=UNBOUNDED, value=np.inf)
        return LpSolution(status=OPTIMAL, primal=x, value=float(lp.objective @ x), ineq_duals=np.zeros(0), eq_duals=np.zeros(0))

    # phase 1
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = M
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = q
    basis = list(range(n, n + m))
    tab[-1, :] = 0.0
    tab[-1, n : n + m] = 1.0
    for r in range(m):
        tab[-1, :] -= tab[r, :]
    allowed = np.ones(n + m, dtype=bool)
    allowed[n:] = False
    status = _run_simplex(tab, basis, n + m, allowed)
    if status != OPTIMAL:
        raise LpFaultError("phase 1 reported unbounded; artificial objective is bounded below")
    if -tab[-1, -1] > 1e-8 * max(1.0, np.abs(q).max()):
        return LpSolution(status=INFEASIBLE)

    # drive artificials out of the basis; drop redundant rows
    keep_rows = list(range(m))
    for r in range(m):
        if basis[r] >= n:
            entering = next((j for j in range(n) if abs(tab[r, j]) > _PIVOT_TOL), None)
            if entering is None:
                keep_rows.remove(r)
            else:
                _pivot(tab, basis, r, entering)
    dropped = [r for r in range(m) if r not in keep_rows]

    # phase 2: keep artificial columns in the tableau (blocked from entering)
    # so the final objective row under them reads c_B B^{-1} = pi.
    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for r in keep_rows:
        if basis[r] < n and abs(c[basis[r]]) > 0:
            tab[-1, :] -= c[basis[r]] * tab[r, :]
    if dropped:
        live = keep_rows + [m]
        tab = tab[live, :]
        basis = [basis[r] for r in keep_rows]
    status = _run_simplex(tab, basis, n, np.ones(n, dtype=bool))
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, value=np.inf)

    mm = len(basis)
    y = np.zeros(n)
    for r in range(mm):
        y[basis[r]] = tab[r, -1]
    std_value = float(c @ y)
    value = sf.const - std_value

    # duals: the objective row under artificial column j reads -pi_j
    # (artificial phase-2 cost is zero, so the entry is 0 - c_B B^{-1} e_j)
    pi = np.zeros(m)
    for r in range(m):
        if r not in dropped:
            pi[r] = -tab[-1, n + r]
    ineq_duals, eq_duals = sf.duals_back(pi, lp)

    red = tab[-1, :n].copy()
    nonbasic = np.ones(n, dtype=bool)
    nonbasic[[b for b in basis if b < n]] = False
    basic_vals = np.array([tab[r, -1] for r in range(mm)])
    primal_degenerate = bool(np.any(basic_vals <= _DEGEN_TOL * max(1.0, np.abs(q).max())))
    scale = max(1.0, np.abs(c).max())
    dual_degenerate = bool(np.any(nonbasic & (np.abs(red) <= _DEGEN_TOL * scale)))

    x = sf.primal_back(y)
    if not np.all(np.isfinite(x)):
        raise LpFaultError("non-finite primal recovered")
    return LpSolution(
        status=OPTIMAL,
        primal=x,
        value=value,
        ineq_duals=ineq_duals,
        eq_duals=eq_duals,
        primal_degenerate=primal_degenerate,
        dual_degenerate=dual_degenerate,
    )


def verify_certificates(lp, sol, tol=1e-8):
    """Check feasibility, complementary slackness, and the duality gap.

    Returns a dict of residuals; raises AssertionError on violation.  Used
    by tests and available for triage.
    """
    assert sol.status == OPTIMAL
    x = sol.primal
    res = {}
    slack_viol = 0.0
    comp_viol = 0.0
    dual_obj = 0.0
    for (row, rhs), y in zip(lp.ineq, sol.ineq_duals):
        s = rhs - row @ x
        slack_viol = max(slack_viol, -s)
        assert y >= -tol, f"negative inequality dual {y}"
        comp_viol = max(comp_viol, abs(y * s))
        dual_obj += y * rhs
    for (row, rhs), y in zip(lp.eq, sol.eq_duals):
        slack_viol = max(slack_viol, abs(row @ x - rhs))
        dual_obj += y * rhs
    # bound multipliers from stationarity: c - A_ub^T y_ub - A_eq^T y_eq
    resid = lp.objective.copy()
    for (row, _), y in zip(lp.ineq, sol.ineq_duals):
        resid -= y * row
    for (row, _), y in zip(lp.eq, sol.eq_duals):
        resid -= y * row
    for i in range(lp.n):
        if resid[i] > tol:  # must lean on the upper bound
            assert np.isfinite(lp.upper[i]), "stationarity requires a finite upper bound"
            comp_viol = max(comp_viol, abs(resid[i] * (lp.upper[i] - x[i])))
            dual_obj += resid[i] * lp.upper[i]
        elif resid[i] < -tol:
            assert np.isfinite(lp.lower[i]), "stationarity requires a finite lower bound"
            comp_viol = max(comp_viol, abs(resid[i] * (lp.lower[i] - x[i])))
            dual_obj += resid[i] * lp.lower[i]
    scale = max(1.0, abs(sol.value))
    res["primal_infeasibility"] = slack_viol
    res["complementary_slackness"] = comp_viol
    res["duality_gap"] = abs(dual_obj - sol.value) / scale
    assert slack_viol <= tol, f"primal infeasibility {slack_viol}"
    assert comp_viol <= max(tol, tol * scale), f"complementary slackness {comp_viol}"
    assert res["duality_gap"] <= tol, f"duality gap {res['duality_gap']}"
    return res
