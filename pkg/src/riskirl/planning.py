"""Forward planners: static minimax over envelope vertices and the exact /
soft risk-sensitive Bellman recursions over prepare-react scenario trees.

The multi-step model: the disturbance mode is resampled every N steps; a
planning stage covers N steps of which the first N - n_d run under the mode
already in progress ("prepare") and the last n_d under the freshly sampled
mode ("react").  An open-loop N-step control trajectory is chosen per stage
from a finite library, turning planning into a finite game against nature.

A `scenario` object supplies the rollout:

    scenario.stage_features(state, action, prev_mode) -> (phi, next_states)

with phi of shape (L, H) holding the accumulated feature vector for each
possible next mode, and next_states the L successor states.  Stage costs are
phi @ weights.
"""

from dataclasses import dataclass

import numpy as np

from .costs import ControlBounds
from .envelopes import Pmf, evaluate_crm
from .errors import PlannerError

SOFTMIN_EXPECTATION = "expectation"
SOFTMIN_LOGSUMEXP = "logsumexp"


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Discrete disturbance model: L modes resampled every N steps, react
    phase of n_d steps, T branching events in the look-ahead, Boltzmann
    inverse temperature beta, analysis time step dt."""

    L: int
    pmf: Pmf
    N: int
    n_d: int
    T: int
    beta: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if not isinstance(self.pmf, Pmf):
            object.__setattr__(self, "pmf", Pmf(self.pmf))
        if self.pmf.dim != self.L:
            raise ValueError("pmf dimension != L")
        if not 0 < self.n_d < self.N:
            raise ValueError("require 0 < n_d < N")
        if self.T < 1:
            raise ValueError("require T >= 1")
        if self.beta <= 0:
            raise ValueError("require beta > 0")

    def to_dict(self):
        return {
            "L": self.L,
            "pmf": [float(p) for p in self.pmf.probs],
            "N": self.N,
            "n_d": self.n_d,
            "T": self.T,
            "beta": self.beta,
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(L=int(d["L"]), pmf=Pmf(d["pmf"]), N=int(d["N"]), n_d=int(d["n_d"]),
                   T=int(d["T"]), beta=float(d.get("beta", 1.0)), dt=float(d.get("dt", 0.1)))


@dataclass(frozen=True, eq=False)
class ActionLibrary:
    """Finite sets of open-loop N-step control trajectories, one per stage
    kind: a fine first-stage set and a coarser set for later stages."""

    first_stage: np.ndarray  # (K1, N, m)
    later_stage: np.ndarray  # (K2, N, m)

    def __post_init__(self):
        fs = np.asarray(self.first_stage, dtype=float)
        ls = np.asarray(self.later_stage, dtype=float)
        if fs.ndim != 3 or ls.ndim != 3 or fs.shape[0] == 0 or ls.shape[0] == 0:
            raise ValueError("libraries must be nonempty (K, N, m) arrays")
        if fs.shape[1:] != ls.shape[1:]:
            raise ValueError("stage libraries must share trajectory shape")
        object.__setattr__(self, "first_stage", fs)
        object.__setattr__(self, "later_stage", ls)
        fs.setflags(write=False)
        ls.setflags(write=False)

    def stage(self, t):
        return self.first_stage if t == 0 else self.later_stage

    def validate_bounds(self, bounds: ControlBounds):
        for block in (self.first_stage, self.later_stage):
            if not (np.all(block >= bounds.lower - 1e-9) and np.all(block <= bounds.upper + 1e-9)):
                raise ValueError("library trajectory violates control bounds")


@dataclass(frozen=True)
class GameHistory:
    """Partial game path: chosen trajectory indices and disturbance modes.

    disturbances holds (w'_{-1}, w'_0, ..., w'_{t-1}); controls holds the
    stage actions already committed, so len(controls) = len(disturbances)-1.
    """

    controls: tuple
    disturbances: tuple

    def __post_init__(self):
        if len(self.controls) != len(self.disturbances) - 1:
            raise ValueError("require |controls| = |disturbances| - 1")

    def extend(self, action_index, mode):
        return GameHistory(self.controls + (int(action_index),), self.disturbances + (int(mode),))


# ---------------------------------------------------------------------------
# softmin / Boltzmann
# ---------------------------------------------------------------------------


def boltzmann(values, beta):
    """Probabilities proportional to exp(-beta * value), max-shift stabilized.

    beta = 0 returns the uniform distribution (boundary case; the model
    itself requires beta > 0).
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("boltzmann requires finite values")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    w = np.exp(-beta * (v - v.min()))
    return w / w.sum()


def softmin(values, beta, form=SOFTMIN_EXPECTATION):
    """Soft minimum of a finite value set at inverse temperature beta.

    expectation form: E_{sigma_beta}[f]  (numerically stable variant);
    logsumexp form:  -(1/beta) log sum exp(-beta f).
    """
    v = np.asarray(values, dtype=float)
    if form == SOFTMIN_EXPECTATION:
        return float(boltzmann(v, beta) @ v)
    if form == SOFTMIN_LOGSUMEXP:
        lo = v.min()
        return float(lo - np.log(np.exp(-beta * (v - lo)).sum()) / beta)
    raise ValueError(f"unknown softmin form {form!r}")


# ---------------------------------------------------------------------------
# static forward problem
# ---------------------------------------------------------------------------


class _EnvelopeVertexCosts:
    """Stacked per-vertex scalar costs v_i . g(x, u) for a fixed state."""

    def __init__(self, x, env, cost):
        self.x = x
        self.V = env.vertices
        self.cost = cost

    def values(self, u):
        return self.V @ np.asarray(self.cost.eval(self.x, u), dtype=float)

    def grads(self, u):
        return self.V @ np.asarray(self.cost.grad_u(self.x, u))

    def hesses(self, u):
        if self.cost.hess_u is None:
            return None
        return np.tensordot(self.V, np.asarray(self.cost.hess_u(self.x, u)), axes=(1, 0))


class _ProductVertexCosts:
    """Per-vertex costs <Z_i, phi(x, u)> for product-polytope vertices."""

    def __init__(self, x, vertices_lh, model):
        self.x = x
        self.Z = np.asarray(vertices_lh)  # (V, L, H)
        self.model = model

    def values(self, u):
        phi = np.asarray(self.model.features(self.x, u))
        return np.einsum("vlh,lh->v", self.Z, phi)

    def grads(self, u):
        dphi = self.model.grad_u_features(self.x, u)
        return np.einsum("vlh,lhm->vm", self.Z, dphi)

    def hesses(self, u):
        return None


def _minimax_epigraph(vertex_costs, bounds, n_starts=5, seed=0, ftol=1e-12):
    """min over bounded u of max_i f_i(u) via SLSQP on (u, t), multi-start."""
    from scipy.optimize import minimize

    m = bounds.m
    rng = np.random.default_rng(seed)
    finite = np.isfinite(bounds.lower) & np.isfinite(bounds.upper)
    center = np.where(finite, 0.5 * (bounds.lower + bounds.upper), 0.0)
    starts = [center]
    for _ in range(n_starts - 1):
        s = np.where(finite, rng.uniform(bounds.lower, bounds.upper), rng.normal(size=m))
        starts.append(np.where(np.isfinite(s), s, 0.0))

    def cons_fun(z):
        return z[-1] - vertex_costs.values(z[:m])

    def cons_jac(z):
        G = vertex_costs.grads(z[:m])
        return np.hstack([-G, np.ones((G.shape[0], 1))])

    box = [(lo if np.isfinite(lo) else None, up if np.isfinite(up) else None) for lo, up in zip(bounds.lower, bounds.upper)]
    best = None
    import warnings as _warnings

    for s in starts:
        t0 = vertex_costs.values(s).max()
        z0 = np.concatenate([s, [t0]])
        with _warnings.catch_warnings():
            _warnings.filterwarnings("ignore", message="Values in x were outside bounds")
            res = minimize(
                lambda z: z[-1],
                z0,
                jac=lambda z: np.concatenate([np.zeros(m), [1.0]]),
                method="SLSQP",
                bounds=box + [(None, None)],
                constraints=[{"type": "ineq", "fun": cons_fun, "jac": cons_jac}],
                options={"maxiter": 400, "ftol": ftol},
            )
        u = bounds.clip(res.x[:m])
        val = float(vertex_costs.values(u).max())
        if best is None or val < best[1]:
            best = (u, val, res)
    if best is None or not np.isfinite(best[1]):
        raise PlannerError("static forward minimization failed to produce a finite value")
    return best[0], best[1]


def _newton_polish(u0, vertex_costs, bounds, active_tol=1e-6, iters=40):
    """Sharpen an interior minimax solution by solving the smooth KKT system
    over the active vertex set.  Returns None when not applicable."""
    m = u0.size
    margin = 1e-7
    if np.any(u0 <= bounds.lower + margin) or np.any(u0 >= bounds.upper - margin):
        return None
    H = vertex_costs.hesses(u0)
    if H is None:
        return None
    vals = vertex_costs.values(u0)
    top = vals.max()
    active = np.where(vals >= top - active_tol * max(1.0, abs(top)))[0]
    u = u0.copy()
    for _ in range(iters):
        vals = vertex_costs.values(u)
        G = vertex_costs.grads(u)
        H = vertex_costs.hesses(u)
        k = active.size
        if k == 1:
            i = active[0]
            try:
                du = np.linalg.solve(H[i], -G[i])
            except np.linalg.LinAlgError:
                return None
            u = u + du
            if np.linalg.norm(du) < 1e-12:
                break
            continue
        lam = np.full(k, 1.0 / k)
        tau = vals[active].mean()
        # Newton on [sum lam_i grad f_i; f_i - tau; sum lam - 1] in (u, lam, tau)
        for _ in range(iters):
            vals = vertex_costs.values(u)
            G = vertex_costs.grads(u)
            H = vertex_costs.hesses(u)
            r = np.concatenate([
                lam @ G[active],
                vals[active] - tau,
                [lam.sum() - 1.0],
            ])
            if np.abs(r).max() < 1e-12:
                break
            J = np.zeros((m + k + 1, m + k + 1))
            J[:m, :m] = np.einsum("i,imn->mn", lam, H[active])
            J[:m, m : m + k] = G[active].T
            J[m : m + k, :m] = G[active]
            J[m : m + k, m + k] = -1.0
            J[m + k, m : m + k] = 1.0
            try:
                step = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                return None
            u = u + step[:m]
            lam = lam + step[m : m + k]
            tau = tau + step[m + k]
        if np.any(lam < -1e-9):
            drop = active[np.argmin(lam)]
            active = np.array([i for i in active if i != drop])
            continue
        break
    if not bounds.contains(u, tol=0.0):
        return None
    return u


def solve_static_forward(x, env, cost, bounds, n_starts=5, seed=0):
    """min_{u in bounds} max_{v in vert(env)} v . g(x, u) -> (u*, tau*)."""
    vc = _EnvelopeVertexCosts(x, env, cost)
    u, val = _minimax_epigraph(vc, bounds, n_starts=n_starts, seed=seed)
    polished = _newton_polish(u, vc, bounds)
    if polished is not None:
        pval = float(vc.values(polished).max())
        if pval <= val + 1e-12:
            u, val = polished, pval
    return u, val


def solve_product_forward(x, pz, model, bounds, n_starts=5, seed=0):
    """Forward problem in product space: min_u max_z sum z_jh phi_h[j](x,u)."""
    vc = _ProductVertexCosts(x, pz.matrix_vertices(), model)
    return _minimax_epigraph(vc, bounds, n_starts=n_starts, seed=seed)


# ---------------------------------------------------------------------------
# Bellman recursions over the prepare-react scenario tree
# ---------------------------------------------------------------------------


def _stage_costs(scenario, weights, state, action, prev_mode):
    phi, next_states = scenario.stage_features(state, action, prev_mode)
    return np.asarray(phi) @ np.asarray(weights, dtype=float), next_states


def exact_bellman(x, w_prev, lib, cfg, env, scenario, weights):
    """Risk-sensitive dynamic program over the scenario tree.

    Returns (tau_map, policy): tau_map[history] is the value vector over the
    stage library, policy[history] the argmin index (lowest index on ties).
    The stage cost vector accumulates N per-step costs, the first N - n_d
    under the in-progress mode and the last n_d under the sampled mode.
    """
    tau_map, policy = {}, {}

    def recurse(t, state, prev_mode, hist):
        actions = lib.stage(t)
        vals = np.empty(len(actions))
        for a_idx in range(len(actions)):
            costs, next_states = _stage_costs(scenario, weights, state, actions[a_idx], prev_mode)
            if t == cfg.T - 1:
                z = costs
            else:
                tails = np.array([
                    recurse(t + 1, next_states[j], j, hist.extend(a_idx, j))
                    for j in range(cfg.L)
                ])
                z = costs + tails
            vals[a_idx], _ = evaluate_crm(env, z)
        tau_map[hist] = vals
        policy[hist] = int(np.argmin(vals))
        return float(vals.min())

    root = GameHistory(controls=(), disturbances=(int(w_prev),))
    recurse(0, x, int(w_prev), root)
    return tau_map, policy


def soft_bellman(x, w_prev, lib, cfg, crm, scenario, weights, beta=None, form=SOFTMIN_EXPECTATION):
    """Soft risk-sensitive recursion: min -> softmin_beta, rho -> rho^r.

    Returns the value per first-stage action (tau-tilde at the root).
    """
    beta = cfg.beta if beta is None else float(beta)
    env = crm.envelope()

    def recurse(t, state, prev_mode):
        actions = lib.stage(t)
        vals = np.empty(len(actions))
        for a_idx in range(len(actions)):
            costs, next_states = _stage_costs(scenario, weights, state, actions[a_idx], prev_mode)
            if t == cfg.T - 1:
                z = costs
            else:
                z = costs + np.array([
                    softmin(recurse(t + 1, next_states[j], j), beta, form=form)
                    for j in range(cfg.L)
                ])
            vals[a_idx], _ = evaluate_crm(env, z)
        return vals

    return recurse(0, x, int(w_prev))
