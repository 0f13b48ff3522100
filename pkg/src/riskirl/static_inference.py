"""Static-setting inference: KKT-based halfspace bounds on the risk envelope,
sequential pruning, and the product-variable extension for unknown costs.

Each expert state-control pair yields one LP whose optimum tau' bounds
g(x*,u*).v over every envelope vertex consistent with the demonstration's
first-order optimality conditions; the halfspace {v : g.v <= tau'} therefore
contains the expert's envelope, and intersecting halfspaces across
demonstrations gives an outer approximation that shrinks monotonically.

Stationarity rows are normalized and relaxed to a small tolerance band so
that numerically-optimal demonstrations stay feasible; the relaxation can
only enlarge tau', preserving the outer bound.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import lp
from .costs import ControlBounds, FeatureCostModel
from .envelopes import RiskEnvelope, intersect_halfspace
from .errors import (
    EmptyEnvelopeError,
    InconsistentDemonstrationError,
    InconsistentDemonstrationWarning,
)

SATURATION_TOL = 1e-6
STATIONARITY_TOL = 1e-6
MAX_PRODUCT_DIM = 12


@dataclass(frozen=True, eq=False)
class Demonstration:
    """One expert state-control pair."""

    state: np.ndarray
    control: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.state, dtype=float).reshape(-1)
        u = np.asarray(self.control, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(u))):
            raise ValueError("demonstration entries must be finite")
        object.__setattr__(self, "state", s)
        object.__setattr__(self, "control", u)
        self.state.setflags(write=False)
        self.control.setflags(write=False)

    def to_dict(self):
        return {"state": [float(v) for v in self.state], "control": [float(v) for v in self.control]}

    @classmethod
    def from_dict(cls, d):
        return cls(state=np.asarray(d["state"], dtype=float), control=np.asarray(d["control"], dtype=float))


def saturation_sets(demo, bounds, tol=SATURATION_TOL):
    """Index sets of control components saturated above / below."""
    u = demo.control
    if not bounds.contains(u, tol=1e-9):
        raise ValueError("demonstrated control violates the bounds")
    j_plus = {j for j in range(u.size) if u[j] >= bounds.upper[j] - tol}
    j_minus = {j for j in range(u.size) if u[j] <= bounds.lower[j] + tol}
    return j_plus, j_minus


def _stationarity_rows(grad_matrix, j_plus, j_minus, n_extra_front, tol):
    """Relaxed stationarity band rows for the KKT LP.

    grad_matrix is (L_or_LH, m): column k holds the objective-gradient
    coefficients of the decision variables (v or z) for control component k.
    Returns inequality rows over [front_vars, sigma_plus, sigma_minus].
    """
    m = grad_matrix.shape[1]
    jp = sorted(j_plus)
    jm = sorted(j_minus)
    n_sig_p, n_sig_m = len(jp), len(jm)
    n_all = n_extra_front + n_sig_p + n_sig_m
    rows = []
    for k in range(m):
        col = grad_matrix[:, k]
        scale = max(np.linalg.norm(col), 1.0)
        row = np.zeros(n_all)
        row[:n_extra_front] = col / scale
        if k in j_plus:
            row[n_extra_front + jp.index(k)] = 1.0 / scale
        if k in j_minus:
            row[n_extra_front + n_sig_p + jm.index(k)] = -1.0 / scale
        rows.append((row.copy(), tol))
        rows.append((-row, tol))
    return rows, n_sig_p, n_sig_m


def _kkt_lp(objective_vec, grad_matrix, j_plus, j_minus, extra_halfspaces, stationarity_tol):
    """Assemble the Theorem-2 LP over [v-or-z, sigma+, sigma-]."""
    d = objective_vec.size
    rows, n_sp, n_sm = _stationarity_rows(grad_matrix, j_plus, j_minus, d, stationarity_tol)
    n_all = d + n_sp + n_sm
    ineq = list(rows)
    for a, b in extra_halfspaces:
        row = np.zeros(n_all)
        row[:d] = a
        ineq.append((row, b))
    eq_row = np.zeros(n_all)
    eq_row[:d] = 1.0
    lower = np.zeros(n_all)
    upper = np.concatenate([np.ones(d), np.full(n_sp + n_sm, np.inf)])
    return lp.LinearProgram(
        objective=np.concatenate([objective_vec, np.zeros(n_sp + n_sm)]),
        ineq=tuple(ineq),
        eq=((eq_row, 1.0),),
        lower=lower,
        upper=upper,
    )


def kkt_halfspace(demo, cost, current, bounds, saturation_tol=SATURATION_TOL, stationarity_tol=STATIONARITY_TOL):
    """Bounding halfspace (normal, offset) on the envelope from one demo.

    Solves the KKT LP with the probability vector constrained to `current`
    (the running outer approximation), which tightens the offset without
    voiding the containment guarantee.
    """
    j_plus, j_minus = saturation_sets(demo, bounds, tol=saturation_tol)
    g = np.asarray(cost.eval(demo.state, demo.control), dtype=float)
    grad = np.asarray(cost.grad_u(demo.state, demo.control), dtype=float)
    problem = _kkt_lp(g, grad, j_plus, j_minus, current.halfspaces, stationarity_tol)
    sol = lp.solve(problem)
    if sol.status != lp.OPTIMAL:
        raise InconsistentDemonstrationError(
            f"KKT LP status {sol.status}: no envelope point satisfies stationarity"
        )
    return g, float(sol.value)


def prune_envelope_trace(demos, cost, bounds, dim=None, saturation_tol=SATURATION_TOL, stationarity_tol=STATIONARITY_TOL):
    """Sequential halfspace pruning, returning the envelope after each demo.

    Inconsistent demonstrations (infeasible LP or emptying cut) are skipped
    with a warning; the trace entry repeats the previous envelope.
    """
    if dim is None:
        probe = np.asarray(cost.eval(demos[0].state, demos[0].control))
        dim = probe.size
    env = RiskEnvelope.simplex(dim)
    trace = [env]
    for i, demo in enumerate(demos):
        try:
            normal, offset = kkt_halfspace(demo, cost, env, bounds, saturation_tol, stationarity_tol)
            env = intersect_halfspace(env, normal, offset)
        except (InconsistentDemonstrationError, EmptyEnvelopeError) as exc:
            warnings.warn(
                f"skipping demonstration {i}: {exc}", InconsistentDemonstrationWarning
            )
        trace.append(env)
    return trace


def prune_envelope(demos, cost, bounds, dim=None, **kwargs):
    """Outer approximation of the expert envelope (Delta^L if no demos)."""
    if not demos:
        if dim is None:
            raise ValueError("dim required when no demonstrations are given")
        return RiskEnvelope.simplex(dim)
    return prune_envelope_trace(demos, cost, bounds, dim=dim, **kwargs)[-1]


# ---------------------------------------------------------------------------
# unknown cost: product variables z_jh = v(j) c(h)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProductPolytope:
    """Polytope over flattened product variables z in Delta^{L*H}.

    The box 0 <= z <= 1 is implied by the simplex constraints and holds at
    every vertex.  Exact vertex enumeration is refused above L*H = 12.
    """

    L: int
    H: int
    envelope: RiskEnvelope

    def __post_init__(self):
        if self.L * self.H > MAX_PRODUCT_DIM:
            raise ValueError(
                f"product dimension L*H = {self.L * self.H} exceeds the exact-enumeration cap {MAX_PRODUCT_DIM}"
            )
        if self.envelope.dim != self.L * self.H:
            raise ValueError("envelope dimension != L*H")

    @classmethod
    def unit(cls, L, H):
        if L * H > MAX_PRODUCT_DIM:
            raise ValueError(
                f"product dimension L*H = {L * H} exceeds the exact-enumeration cap {MAX_PRODUCT_DIM}"
            )
        return cls(L=L, H=H, envelope=RiskEnvelope.simplex(L * H))

    def cut(self, normal, offset):
        return ProductPolytope(L=self.L, H=self.H, envelope=intersect_halfspace(self.envelope, normal, offset))

    def matrix_vertices(self):
        return self.envelope.vertices.reshape(-1, self.L, self.H)


def kkt_halfspace_product(demo, model, current, bounds, saturation_tol=SATURATION_TOL, stationarity_tol=STATIONARITY_TOL):
    """Theorem-2 LP rewritten in product variables z for unknown weights.

    Every product v(j)c(h) in the stationarity conditions becomes z_jh; the
    returned halfspace normal is the flattened feature matrix at (x*, u*).
    """
    j_plus, j_minus = saturation_sets(demo, bounds, tol=saturation_tol)
    phi = np.asarray(model.features(demo.state, demo.control), dtype=float)  # (L, H)
    dphi = model.grad_u_features(demo.state, demo.control)  # (L, H, m)
    L, H = phi.shape
    grad_flat = dphi.reshape(L * H, -1)
    problem = _kkt_lp(phi.reshape(-1), grad_flat, j_plus, j_minus, current.envelope.halfspaces, stationarity_tol)
    sol = lp.solve(problem)
    if sol.status != lp.OPTIMAL:
        raise InconsistentDemonstrationError(
            f"product KKT LP status {sol.status}: no product point satisfies stationarity"
        )
    return phi.reshape(-1), float(sol.value)


def prune_product_trace(demos, model, bounds, L, H, saturation_tol=SATURATION_TOL, stationarity_tol=STATIONARITY_TOL):
    """Sequential pruning in product space; returns polytopes after each demo.

    Enumerates vertices after every cut; use prune_product for long runs.
    """
    pz = ProductPolytope.unit(L, H)
    trace = [pz]
    for i, demo in enumerate(demos):
        try:
            normal, offset = kkt_halfspace_product(demo, model, pz, bounds, saturation_tol, stationarity_tol)
            pz = pz.cut(normal, offset)
        except (InconsistentDemonstrationError, EmptyEnvelopeError) as exc:
            warnings.warn(
                f"skipping demonstration {i}: {exc}", InconsistentDemonstrationWarning
            )
        trace.append(pz)
    return trace


class _LazyHalfspaceSet:
    """Stands in for a ProductPolytope during pruning: accumulates halfspaces
    without recomputing vertices (the KKT LP consumes only the halfspaces)."""

    def __init__(self, dim):
        self.dim = dim
        self.halfspaces = []

    @property
    def envelope(self):
        return self

    def add(self, normal, offset):
        normal = np.asarray(normal, dtype=float)
        nrm = np.linalg.norm(normal)
        self.halfspaces.append((normal / nrm, float(offset) / nrm))


def prune_product(demos, model, bounds, L, H, saturation_tol=SATURATION_TOL, stationarity_tol=STATIONARITY_TOL, enumeration_margin=0.0):
    """Sequential product-space pruning with vertices enumerated once at the
    end (most-violated-cut-first); Remark-2 tightening still applies because
    every LP is constrained by all previously accumulated halfspaces.

    A positive `enumeration_margin` drops final cuts violated by at most
    that amount, returning a slightly larger outer approximation with far
    fewer sliver vertices; the stored halfspace description always matches
    the returned vertex set exactly.
    """
    from .envelopes import _enumerate_from_halfspaces

    if L * H > MAX_PRODUCT_DIM:
        raise ValueError(
            f"product dimension L*H = {L * H} exceeds the exact-enumeration cap {MAX_PRODUCT_DIM}"
        )
    acc = _LazyHalfspaceSet(L * H)
    for i, demo in enumerate(demos):
        try:
            normal, offset = kkt_halfspace_product(demo, model, acc, bounds, saturation_tol, stationarity_tol)
            acc.add(normal, offset)
        except (InconsistentDemonstrationError, EmptyEnvelopeError) as exc:
            warnings.warn(
                f"skipping demonstration {i}: {exc}", InconsistentDemonstrationWarning
            )
    verts, applied = _enumerate_from_halfspaces(L * H, acc.halfspaces, margin=enumeration_margin, return_applied=True)
    if not verts:
        raise EmptyEnvelopeError("accumulated product cuts emptied the polytope")
    env = RiskEnvelope(dim=L * H, halfspaces=tuple(applied), vertices=np.array(verts))
    return ProductPolytope(L=L, H=H, envelope=env)


def recover_weights_and_envelope(pz):
    """Per-vertex weight estimates (column sums), the envelope spanned by the
    row-sum probability vectors, and rank-one quality ratios (0 = rank one)."""
    Z = pz.matrix_vertices()
    weights = [z.sum(axis=0) for z in Z]
    probs = [z.sum(axis=1) for z in Z]
    qualities = []
    for z in Z:
        s = np.linalg.svd(z, compute_uv=False)
        qualities.append(float(s[1] / s[0]) if s.size > 1 and s[0] > 1e-15 else 0.0)
    env = RiskEnvelope.from_points(np.array(probs))
    return weights, env, qualities
