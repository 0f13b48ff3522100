"""Semi-parametric maximum likelihood for the multi-step model.

The likelihood of (offsets r, weights c) treats each N-step demonstration
segment independently: per segment, the soft Bellman recursion produces a
value per first-stage action, the observed action is the library trajectory
closest in L2 norm, and log-probabilities follow the Boltzmann model.

Gradients are assembled by a recursive chain rule from the terminal stage:
at each tree node the stage value is an LP over the offset-parametrized
envelope, whose rhs-sensitivity gives -lambda* for the offsets and whose
objective-sensitivity routes the feature sums and the softmin derivatives
of the tail values.  For the expectation-form softmin the exact derivative
carries a covariance correction, sigma-weighted by (1 - beta (f - softmin)),
which reduces to the plain sigma expectation in the log-sum-exp form.

Since trajectories and features never depend on (r, c), the whole scenario
tree is rolled out once per dataset and reused across optimizer iterations.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .envelopes import SemiParametricCrm, project_offsets
from .errors import DegenerateLpError
from .planning import SOFTMIN_EXPECTATION, SOFTMIN_LOGSUMEXP

_TIE_TOL = 1e-9
_ACTIVE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    """One receding-horizon demonstration: the mode in progress when the plan
    was made, the mode realized mid-segment, and the executed N-step action."""

    prev_mode: int
    realized_mode: int
    observed_action: np.ndarray  # (N, m)
    start_state: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.observed_action, dtype=float)
        s = np.asarray(self.start_state, dtype=float).reshape(-1)
        if a.ndim != 2:
            raise ValueError("observed_action must be an (N, m) array")
        object.__setattr__(self, "observed_action", a)
        object.__setattr__(self, "start_state", s)
        object.__setattr__(self, "prev_mode", int(self.prev_mode))
        object.__setattr__(self, "realized_mode", int(self.realized_mode))

    def validate_modes(self, L, N):
        if not (0 <= self.prev_mode < L and 0 <= self.realized_mode < L):
            raise ValueError("modes must lie in [0, L)")
        if self.observed_action.shape[0] != N:
            raise ValueError("observed action length != N")

    def to_dict(self):
        return {
            "start_state": [float(v) for v in self.start_state],
            "prev_mode": self.prev_mode,
            "realized_mode": self.realized_mode,
            "observed_action": [[float(v) for v in row] for row in self.observed_action],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            prev_mode=d["prev_mode"],
            realized_mode=d["realized_mode"],
            observed_action=np.asarray(d["observed_action"], dtype=float),
            start_state=np.asarray(d["start_state"], dtype=float),
        )


@dataclass(frozen=True)
class FitHyperparams:
    step_r: float = 0.05
    step_c: float = 0.2
    max_iters: int = 60
    grad_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.step_r <= 0 or self.step_c <= 0 or self.max_iters < 1:
            raise ValueError("steps must be positive and max_iters >= 1")


# ---------------------------------------------------------------------------
# action library helpers
# ---------------------------------------------------------------------------


def nearest_action(observed, lib, stage=0):
    """Index of the library trajectory closest in L2 norm (ties: lowest)."""
    block = lib.stage(stage)
    obs = np.asarray(observed, dtype=float)
    d = np.linalg.norm(block.reshape(block.shape[0], -1) - obs.reshape(1, -1), axis=1)
    return int(np.argmin(d))


def _kmeans_pp(X, k, rng):
    centers = [X[rng.integers(X.shape[0])]]
    for _ in range(k - 1):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 1e-18:
            centers.append(X[rng.integers(X.shape[0])])
            continue
        centers.append(X[rng.choice(X.shape[0], p=d2 / total)])
    return np.array(centers)


def _kmeans(X, k, rng, iters=200, history=None):
    centers = _kmeans_pp(X, k, rng)
    labels = None
    for _ in range(iters):
        d = np.linalg.norm(X[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(d, axis=1)
        if history is not None:
            history.append(float(np.sum(d[np.arange(X.shape[0]), new_labels] ** 2)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
    return centers


def cluster_actions(raw, k_first, k_later, seed, bounds=None):
    """K-means (k-means++ init, Euclidean on flattened trajectories) action
    libraries for the two stage kinds; centroids clipped to bounds."""
    from .planning import ActionLibrary

    raw = np.asarray(raw, dtype=float)
    if raw.shape[0] < max(k_first, k_later):
        raise ValueError("need at least max(k_first, k_later) raw trajectories")
    N, m = raw.shape[1], raw.shape[2]
    X = raw.reshape(raw.shape[0], -1)
    rng = np.random.default_rng(seed)
    first = _kmeans(X, k_first, rng).reshape(k_first, N, m)
    later = _kmeans(X, k_later, rng).reshape(k_later, N, m)
    if bounds is not None:
        first = np.clip(first, bounds.lower, bounds.upper)
        later = np.clip(later, bounds.lower, bounds.upper)
    return ActionLibrary(first_stage=first, later_stage=later)


# ---------------------------------------------------------------------------
# envelope LP cache: vertices + per-vertex dual maps
# ---------------------------------------------------------------------------


class _CrmCache:
    """Vertex table and active-set dual maps for one offset vector.

    Evaluating rho^r(q) = max_v q.v reduces to an argmax over vertices; the
    offset gradient -lambda* comes from the linear map q -> multipliers at
    the optimal vertex, precomputed from the inverse of the active-set
    matrix.  Vertices whose active set is degenerate are marked; gradient
    evaluations landing there raise after the heuristics have had their
    chance upstream.
    """

    def __init__(self, crm):
        self.crm = crm
        env = crm.envelope()
        self.V = env.vertices  # (nv, L)
        A = crm.normals
        rhs = crm.rhs()
        M, L = A.shape
        nv = self.V.shape[0]
        self.dual_maps = np.zeros((nv, M, L))
        self.degenerate = np.zeros(nv, dtype=bool)
        for k in range(nv):
            v = self.V[k]
            act_param = [j for j in range(M) if abs(A[j] @ v - rhs[j]) <= _ACTIVE_TOL]
            act_nonneg = [i for i in range(L) if v[i] <= _ACTIVE_TOL]
            if len(act_param) + len(act_nonneg) != L - 1:
                self.degenerate[k] = True
                continue
            G = np.vstack([A[act_param], -np.eye(L)[act_nonneg], np.ones((1, L))])
            try:
                inv = np.linalg.inv(G.T)
            except np.linalg.LinAlgError:
                self.degenerate[k] = True
                continue
            # rows of inv map q to the multipliers in G's row order
            for pos, j in enumerate(act_param):
                self.dual_maps[k, j] = inv[pos]
        u = np.random.default_rng(0x5EED).uniform(-1.0, 1.0, size=L)
        self._tie_pattern = 1e-7 * u

    def evaluate(self, q, need_duals):
        """Batched rho^r over the trailing axis of q.

        Returns (values, vstar, lam, tie_count); lam is None unless asked.
        """
        qf = q.reshape(-1, q.shape[-1])
        scores = qf @ self.V.T  # (B, nv)
        idx = np.argmax(scores, axis=1)
        values = np.take_along_axis(scores, idx[:, None], axis=1)[:, 0]
        ties = 0
        if scores.shape[1] > 1:
            part = np.partition(scores, -2, axis=1)
            second = part[:, -2]
            scale = np.maximum(1.0, np.abs(values))
            tied = (values - second) <= _TIE_TOL * scale
            ties = int(tied.sum())
            if ties:
                # dual degeneracy: deterministically distort the objective
                # to pick a single optimal vertex (value kept from q itself)
                qp = qf[tied] * (1.0 + self._tie_pattern)
                idx[tied] = np.argmax(qp @ self.V.T, axis=1)
        vstar = self.V[idx]
        lam = None
        if need_duals:
            if self.degenerate[idx].any():
                bad = int(idx[np.where(self.degenerate[idx])[0][0]])
                raise DegenerateLpError(
                    "primal-degenerate envelope vertex reached in gradient evaluation",
                    dump={"offsets": self.crm.offsets.tolist(), "vertex": self.V[bad].tolist()},
                )
            lam = np.einsum("bml,bl->bm", self.dual_maps[idx], qf)
        shape = q.shape[:-1]
        return (
            values.reshape(shape),
            vstar.reshape(shape + (self.V.shape[1],)),
            None if lam is None else lam.reshape(shape + (self.crm.n_constraints,)),
            ties,
        )


# ---------------------------------------------------------------------------
# scenario feature tree
# ---------------------------------------------------------------------------


class FeatureTree:
    """Rolled-out stage features for a batch of segment roots.

    Level t holds phi[t] of shape (n_t, K_t, L, H): accumulated features for
    node n, stage action k, next mode j.  Nodes at level t+1 are ordered
    (node, action, mode) C-style, so values reshape cleanly between levels.
    """

    def __init__(self, phi_levels, observed_indices, root_modes):
        self.phi = phi_levels
        self.observed = observed_indices
        self.root_modes = root_modes

    @property
    def depth(self):
        return len(self.phi)

    @classmethod
    def build(cls, scenario, cfg, lib, segments):
        states = [np.asarray(s.start_state, dtype=float) for s in segments]
        prev = [int(s.prev_mode) for s in segments]
        observed = np.array([nearest_action(s.observed_action, lib, stage=0) for s in segments])
        phi_levels = []
        for t in range(cfg.T):
            actions = lib.stage(t)
            K = actions.shape[0]
            n_t = len(states)
            phi_t = None
            next_states = []
            next_prev = []
            for i in range(n_t):
                for k in range(K):
                    phi, nxt = scenario.stage_features(states[i], actions[k], prev[i])
                    phi = np.asarray(phi, dtype=float)
                    if phi_t is None:
                        phi_t = np.empty((n_t, K) + phi.shape)
                    phi_t[i, k] = phi
                    if t < cfg.T - 1:
                        next_states.extend(nxt)
                        next_prev.extend(range(cfg.L))
            phi_levels.append(phi_t)
            states = next_states
            prev = next_prev
        return cls(phi_levels, observed, np.array([int(s.prev_mode) for s in segments]))


def _softmin_reduce(tau, beta, form, grads=None):
    """Softmin over the trailing axis with exact derivative weights.

    tau: (..., K'); grads: optional list of (..., K', P) arrays.
    Returns (soft, reduced_grads).
    """
    shift = tau.min(axis=-1, keepdims=True)
    sig = np.exp(-beta * (tau - shift))
    sig /= sig.sum(axis=-1, keepdims=True)
    if form == SOFTMIN_LOGSUMEXP:
        lo = shift[..., 0]
        soft = lo - np.log(np.exp(-beta * (tau - shift)).sum(axis=-1)) / beta
        w = sig
    elif form == SOFTMIN_EXPECTATION:
        soft = np.einsum("...k,...k->...", sig, tau)
        w = sig * (1.0 - beta * (tau - soft[..., None]))
    else:
        raise ValueError(f"unknown softmin form {form!r}")
    out_grads = None
    if grads is not None:
        out_grads = [np.einsum("...k,...kp->...p", w, g) for g in grads]
    return soft, out_grads


def soft_tree_values(tree, crm, c, beta, form=SOFTMIN_EXPECTATION, want_grads=False, fit_r=True, stats=None):
    """Root values (S, K0) and, optionally, gradients w.r.t. (r, c)."""
    cache = _CrmCache(crm)
    c = np.asarray(c, dtype=float)
    M = crm.n_constraints
    H = c.size
    tau = None
    d_r = d_c = None
    for t in reversed(range(tree.depth)):
        phi = tree.phi[t]  # (n_t, K_t, L, H)
        costs = phi @ c  # (n_t, K_t, L)
        n_t, K_t, L = costs.shape
        if tau is None:
            q = costs
            tail_grads = None
        else:
            K_next = tau.shape[-1]
            tau_in = tau.reshape(n_t, K_t, L, K_next)
            grads_in = None
            if want_grads:
                grads_in = [
                    d_r.reshape(n_t, K_t, L, K_next, M) if fit_r else None,
                    d_c.reshape(n_t, K_t, L, K_next, H),
                ]
                grads_in = [g for g in grads_in if g is not None]
            soft, reduced = _softmin_reduce(tau_in, beta, form, grads=grads_in)
            q = costs + soft
            tail_grads = reduced
        values, vstar, lam, ties = cache.evaluate(q, need_duals=want_grads and fit_r)
        if stats is not None:
            stats["ties"] = stats.get("ties", 0) + ties
        if want_grads:
            new_dc = np.einsum("nkl,nklh->nkh", vstar, phi)
            if tail_grads is not None:
                gi = 0
                if fit_r:
                    new_dr = np.einsum("nkl,nklm->nkm", vstar, tail_grads[gi]) - lam
                    gi += 1
                new_dc = new_dc + np.einsum("nkl,nklh->nkh", vstar, tail_grads[gi])
                if not fit_r:
                    new_dr = None
            else:
                new_dr = -lam if fit_r else None
            d_r, d_c = new_dr, new_dc
        tau = values
    if want_grads:
        return tau, d_r, d_c
    return tau


# ---------------------------------------------------------------------------
# likelihood, gradient, fitter
# ---------------------------------------------------------------------------


def _segment_loglik(values, observed, beta):
    """Per-segment log p =  -beta tau(obs) + softmin_lse over beta tau."""
    g = beta * values  # (S, K)
    lo = g.min(axis=1, keepdims=True)
    lse = lo[:, 0] - np.log(np.exp(-(g - lo)).sum(axis=1))
    picked = np.take_along_axis(g, observed[:, None], axis=1)[:, 0]
    return -picked + lse


def log_likelihood(r, c, data, cfg, normals, lib, scenario, beta=None, form=SOFTMIN_EXPECTATION, tree=None, stats=None):
    """Mean per-segment log-likelihood of the Boltzmann action model (<= 0)."""
    beta = cfg.beta if beta is None else float(beta)
    crm = SemiParametricCrm(normals=normals, offsets=np.asarray(r, dtype=float))
    if tree is None:
        tree = FeatureTree.build(scenario, cfg, lib, data)
    values = soft_tree_values(tree, crm, c, beta, form=form, stats=stats)
    return float(_segment_loglik(values, tree.observed, beta).mean())


def likelihood_gradient(r, c, data, cfg, normals, lib, scenario, beta=None, form=SOFTMIN_EXPECTATION, tree=None, fit_r=True, stats=None):
    """Analytic (grad_r, grad_c) of the mean log-likelihood."""
    beta = cfg.beta if beta is None else float(beta)
    crm = SemiParametricCrm(normals=normals, offsets=np.asarray(r, dtype=float))
    if tree is None:
        tree = FeatureTree.build(scenario, cfg, lib, data)
    values, d_r, d_c = soft_tree_values(tree, crm, c, beta, form=form, want_grads=True, fit_r=fit_r, stats=stats)
    # Boltzmann over actions per segment
    g = beta * values
    w = np.exp(-(g - g.min(axis=1, keepdims=True)))
    w /= w.sum(axis=1, keepdims=True)  # (S, K)
    S = values.shape[0]
    pick = tree.observed
    grad_r = None
    coeff = w.copy()
    coeff[np.arange(S), pick] -= 1.0  # sigma(u) - 1 at the observed action
    grad_c = beta * np.einsum("sk,skh->h", coeff, d_c) / S
    if fit_r:
        grad_r = beta * np.einsum("sk,skm->m", coeff, d_r) / S
    return grad_r, grad_c


def rn_pinned_offsets(pmf):
    """Offsets pinning the basis-normal envelope to {p}: the RN baseline."""
    p = np.asarray(pmf.probs if hasattr(pmf, "probs") else pmf, dtype=float)
    return np.concatenate([1.0 - p, p])


@dataclass
class FitTrace:
    iterations: list = field(default_factory=list)

    def append(self, **kw):
        self.iterations.append(kw)

    @property
    def best_loglik_series(self):
        return [it["best_loglik"] for it in self.iterations]


def fit(data, normals, lib, cfg, hyper, init_r, init_c, scenario=None, beta=None, form=SOFTMIN_EXPECTATION, fit_r=True, fit_c=True):
    """Projected gradient ascent on r + entropic mirror ascent on c.

    Returns (r_star, c_star, trace): the best-likelihood iterate and the
    per-iteration record.  Steps halve when a proposed move decreases the
    likelihood; offsets are re-projected (with the redundancy bump) after
    every r update.
    """
    beta = cfg.beta if beta is None else float(beta)
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    crm_template = SemiParametricCrm(normals=normals, offsets=np.zeros(normals.shape[0]))
    # pinned offsets stay verbatim: projection (and its bump) only applies
    # to the coordinates actually being optimized
    r = project_offsets(crm_template, np.asarray(init_r, dtype=float)) if fit_r else np.asarray(init_r, dtype=float).copy()
    c = np.asarray(init_c, dtype=float)
    c = np.maximum(c, 1e-12)
    c = c / c.sum()
    tree = FeatureTree.build(scenario, cfg, lib, data)
    step_r, step_c = hyper.step_r, hyper.step_c
    ll = log_likelihood(r, c, data, cfg, normals, lib, scenario, beta=beta, form=form, tree=tree)
    best = (ll, r.copy(), c.copy())
    trace = FitTrace()
    for it in range(hyper.max_iters):
        # degeneracy heuristic: a gradient evaluation that lands on a
        # primal-degenerate vertex gets another projection round (whose
        # redundancy bump displaces the offending constraint) and a retry
        for attempt in range(4):
            try:
                gr, gc = likelihood_gradient(r, c, data, cfg, normals, lib, scenario, beta=beta, form=form, tree=tree, fit_r=fit_r)
                break
            except DegenerateLpError:
                if not fit_r or attempt == 3:
                    raise
                r_bumped = project_offsets(crm_template, r)
                if np.allclose(r_bumped, r, atol=1e-15):
                    raise
                r = r_bumped
                ll = log_likelihood(r, c, data, cfg, normals, lib, scenario, beta=beta, form=form, tree=tree)
        if not (np.all(np.isfinite(gc)) and (gr is None or np.all(np.isfinite(gr)))):
            raise DegenerateLpError("non-finite likelihood gradient", dump={"r": r.tolist(), "c": c.tolist()})
        gnorm = np.linalg.norm(np.concatenate([gr if (fit_r and gr is not None) else np.zeros(0), gc if fit_c else np.zeros(0)]))
        trace.append(loglik=ll, grad_norm=float(gnorm), step_r=step_r, step_c=step_c, best_loglik=best[0], r=r.copy(), c=c.copy())
        if gnorm < hyper.grad_tol:
            break
        accepted = False
        for _ in range(12):
            r_new = project_offsets(crm_template, r + step_r * gr) if fit_r else r
            if fit_c:
                c_new = np.maximum(c * np.exp(step_c * gc), 1e-12)
                c_new = c_new / c_new.sum()
            else:
                c_new = c
            # reject proposals whose envelope has gone flat (projection onto
            # the boundary of the feasible offset set): every vertex there is
            # degenerate and the likelihood is not differentiable
            if fit_r and _CrmCache(SemiParametricCrm(normals=normals, offsets=r_new)).degenerate.any():
                step_r *= 0.5
                step_c *= 0.5
                continue
            ll_new = log_likelihood(r_new, c_new, data, cfg, normals, lib, scenario, beta=beta, form=form, tree=tree)
            if ll_new >= ll - 1e-12:
                r, c, ll = r_new, c_new, ll_new
                accepted = True
                break
            step_r *= 0.5
            step_c *= 0.5
        if not accepted:
            break
        if ll > best[0]:
            best = (ll, r.copy(), c.copy())
    trace.append(loglik=ll, grad_norm=np.nan, step_r=step_r, step_c=step_c, best_loglik=max(best[0], ll), r=r.copy(), c=c.copy())
    if ll > best[0]:
        best = (ll, r.copy(), c.copy())
    return best[1], best[2], trace
