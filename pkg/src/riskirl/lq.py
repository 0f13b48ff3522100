"""Linear-quadratic synthetic expert: one-step system with multiplicative
mode uncertainty x1 = A(w) x0 + B(w) u0 and quadratic costs, used as ground
truth for the static inference benchmarks."""

from dataclasses import dataclass

import numpy as np

from .costs import ControlBounds, CostOracle, FeatureCostModel
from .envelopes import RiskEnvelope
from .planning import solve_static_forward
from .static_inference import Demonstration


@dataclass(frozen=True, eq=False)
class LqSystem:
    A: np.ndarray  # (L, n, n)
    B: np.ndarray  # (L, n, m)
    Q: np.ndarray  # (n, n) PSD
    R: np.ndarray  # (m, m) PD
    true_envelope: RiskEnvelope

    def __post_init__(self):
        if np.linalg.eigvalsh(self.Q).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.A.shape[0] != self.true_envelope.dim:
            raise ValueError("number of modes != envelope dimension")

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.B.shape[2]

    @property
    def L(self):
        return self.A.shape[0]

    def cost_oracle(self):
        """g_j(x, u) = u'Ru + x1'Q x1 with x1 = A_j x + B_j u."""
        A, B, Q, R = self.A, self.B, self.Q, self.R

        def _eval(x, u):
            x1 = A @ x + B @ u  # (L, n)
            return np.einsum("i,ij,j->", u, R, u) + np.einsum("lj,jk,lk->l", x1, Q, x1)

        def _grad(x, u):
            x1 = A @ x + B @ u
            return 2.0 * (R @ u)[None, :] + 2.0 * np.einsum("lmn,nk,lk->lm", B.transpose(0, 2, 1), Q, x1)

        def _hess(x, u):
            return 2.0 * R[None, :, :] + 2.0 * np.einsum("lmn,nk,lkp->lmp", B.transpose(0, 2, 1), Q, B)

        return CostOracle(eval=_eval, grad_u=_grad, hess_u=_hess)


def sample_lq_system(seed, n=10, m=5, L=3, n_envelope_samples=5):
    """Random system: A, B, S ~ N(0,1) entrywise, Q = SS', R = I, and the
    true envelope the convex hull of uniform simplex samples."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((L, n, n))
    B = rng.standard_normal((L, n, m))
    S = rng.standard_normal((n, n))
    Q = S @ S.T
    R = np.eye(m)
    samples = rng.dirichlet(np.ones(L), size=n_envelope_samples)
    env = RiskEnvelope.from_points(samples)
    return LqSystem(A=A, B=B, Q=Q, R=R, true_envelope=env)


def lq_expert_demo(system, seed, count, bounds=None, n_starts=2):
    """Exactly-optimal demonstrations at standard-normal initial states.

    The per-vertex costs are strictly convex quadratics, so a couple of
    starts plus the Newton polish recover the optimum to ~1e-12.
    """
    rng = np.random.default_rng(seed)
    if bounds is None:
        bounds = ControlBounds.box(system.m, 10.0)
    cost = system.cost_oracle()
    demos = []
    for _ in range(count):
        x = rng.standard_normal(system.n)
        u, _ = solve_static_forward(x, system.true_envelope, cost, bounds, n_starts=n_starts)
        demos.append(Demonstration(state=x, control=u))
    return demos


def lq_feature_cost_model(system, seed, H=3):
    """Random PSD quadratic features phi_h(x1) = x1' S_h S_h' x1 on the
    successor state, for the unknown-cost experiments."""
    rng = np.random.default_rng(seed)
    F = np.empty((H, system.n, system.n))
    for h in range(H):
        S = rng.standard_normal((system.n, system.n))
        F[h] = S @ S.T
    A, B = system.A, system.B

    def _features(x, u):
        x1 = A @ x + B @ u  # (L, n)
        return np.einsum("lj,hjk,lk->lh", x1, F, x1)

    def _features_grad(x, u):
        x1 = A @ x + B @ u
        return 2.0 * np.einsum("lmn,hnk,lk->lhm", B.transpose(0, 2, 1), F, x1)

    return FeatureCostModel(features=_features, features_grad_u=_features_grad), F


def lq_true_weights(seed, H=3):
    """Weights drawn uniformly in [0,1] and normalized to the simplex."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.0, 1.0, size=H)
    return c / c.sum()


def weighted_cost_oracle(system, F, weights):
    """CostOracle for g_j = sum_h c_h x1' F_h x1 with exact derivatives."""
    c = np.asarray(weights, dtype=float)
    Fc = np.einsum("h,hnk->nk", c, F)
    A, B = system.A, system.B

    def _eval(x, u):
        x1 = A @ x + B @ u
        return np.einsum("lj,jk,lk->l", x1, Fc, x1)

    def _grad(x, u):
        x1 = A @ x + B @ u
        return 2.0 * np.einsum("lmn,nk,lk->lm", B.transpose(0, 2, 1), Fc, x1)

    def _hess(x, u):
        return 2.0 * np.einsum("lmn,nk,lkp->lmp", B.transpose(0, 2, 1), Fc, B)

    return CostOracle(eval=_eval, grad_u=_grad, hess_u=_hess)
