"""Control bounds and cost-model containers shared by planners and inference."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ControlBounds:
    """Componentwise box  lower <= u <= upper  (entries may be infinite)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        up = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.size != up.size or np.any(lo > up):
            raise ValueError("require lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def m(self):
        return self.lower.size

    def clip(self, u):
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def contains(self, u, tol=1e-9):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    @classmethod
    def box(cls, m, radius):
        return cls(lower=-radius * np.ones(m), upper=radius * np.ones(m))


@dataclass(frozen=True, eq=False)
class CostOracle:
    """Per-disturbance scalar costs g(x,u) with analytic control gradients.

    eval(x, u) -> (L,) cost vector, grad_u(x, u) -> (L, m) Jacobian, and an
    optional hess_u(x, u) -> (L, m, m) used for Newton polish in the static
    forward solver.
    """

    eval: callable
    grad_u: callable
    hess_u: callable = None

    def check_gradient(self, x, u, rel_tol=1e-5, h=1e-6):
        """Compare grad_u against central finite differences of eval."""
        u = np.asarray(u, dtype=float)
        g = np.asarray(self.grad_u(x, u))
        fd = np.zeros_like(g)
        for k in range(u.size):
            e = np.zeros(u.size)
            e[k] = h
            fd[:, k] = (np.asarray(self.eval(x, u + e)) - np.asarray(self.eval(x, u - e))) / (2 * h)
        scale = max(1.0, np.abs(g).max())
        return np.abs(g - fd).max() / scale <= rel_tol


@dataclass(frozen=True, eq=False)
class FeatureCostModel:
    """Cost as a simplex-weighted combination of features: g(j) = weights . phi[j].

    features(x, u) -> (L, H); weights in Delta^H, or None while unknown.
    features_grad_u(x, u) -> (L, H, m); defaults to central differences.
    """

    features: callable
    weights: np.ndarray = None
    features_grad_u: callable = None

    def __post_init__(self):
        if self.weights is not None:
            c = np.asarray(self.weights, dtype=float).reshape(-1)
            if np.any(c < -1e-12) or abs(c.sum() - 1.0) > 1e-9:
                raise ValueError("feature weights must be nonnegative and sum to one")
            object.__setattr__(self, "weights", c)
            self.weights.setflags(write=False)

    def grad_u_features(self, x, u, h=1e-6):
        if self.features_grad_u is not None:
            return np.asarray(self.features_grad_u(x, u))
        u = np.asarray(u, dtype=float)
        phi0 = np.asarray(self.features(x, u))
        out = np.zeros(phi0.shape + (u.size,))
        for k in range(u.size):
            e = np.zeros(u.size)
            e[k] = h
            out[:, :, k] = (np.asarray(self.features(x, u + e)) - np.asarray(self.features(x, u - e))) / (2 * h)
        return out

    def cost_oracle(self):
        if self.weights is None:
            raise ValueError("weights are unknown; cannot build a cost oracle")
        c = self.weights

        def _eval(x, u):
            return np.asarray(self.features(x, u)) @ c

        def _grad(x, u):
            return np.einsum("lhm,h->lm", self.grad_u_features(x, u), c)

        return CostOracle(eval=_eval, grad_u=_grad)
