"""Probability-simplex geometry and polytopic coherent risk measures.

A risk envelope is a polytope ``{q in Delta^L : a_k . q <= b_k}`` stored in
halfspace form with its vertex set cached.  The simplex constraints
(nonnegativity and the unit-sum equality) are implicit and always enforced;
the stored halfspaces are only the extra cuts.  Everything in this module is
an immutable value after construction and every operation is pure.

Vertex enumeration is incremental: cutting a polytope with one halfspace
keeps the vertices that satisfy it and adds the crossing points of edges
that straddle it.  Candidate crossing points are generated from all
(strictly-inside, strictly-outside) vertex pairs and filtered by an
active-set rank test, which is exact at the target scale (dim <= 12).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyEnvelopeError

ACTIVITY_TOL = 1e-9
DEDUP_TOL = 1e-9
PMF_SUM_TOL = 1e-12


def _as_vector(x, name="vector"):
    v = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function over L outcomes; strictly positive entries."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_vector(self.probs, "pmf")
        if np.any(p <= 0.0):
            raise ValueError("pmf entries must be strictly positive")
        if abs(p.sum() - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"pmf entries sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)
        self.probs.setflags(write=False)

    @property
    def dim(self):
        return self.probs.size


@dataclass(frozen=True, eq=False)
class DiscreteCost:
    """Cost vector with one finite entry per disturbance realization."""

    values: np.ndarray

    def __post_init__(self):
        z = _as_vector(self.values, "cost vector")
        object.__setattr__(self, "values", z)
        self.values.setflags(write=False)

    @property
    def dim(self):
        return self.values.size


def _cost_values(z):
    if isinstance(z, DiscreteCost):
        return z.values
    return _as_vector(z, "cost vector")


# ---------------------------------------------------------------------------
# vertex engine: polytopes of the form  {x in Delta^d : A x <= b}
# ---------------------------------------------------------------------------


def _normalize_halfspace(normal, offset):
    a = _as_vector(normal, "halfspace normal")
    nrm = np.linalg.norm(a)
    if nrm <= ACTIVITY_TOL:
        # zero normal: trivially true (offset >= 0) or infeasible
        return None, float(offset)
    return a / nrm, float(offset) / nrm


def _dedup_grid(arr, tol=DEDUP_TOL):
    """Fast row dedup by grid rounding at tol/2 (may keep straddling pairs)."""
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if arr.shape[0] <= 1:
        return arr
    keys = np.round(arr / (0.5 * tol)).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return arr[np.sort(first)]


def _dedup_rows(arr, tol=DEDUP_TOL):
    """Deduplicate rows within max-norm `tol` (grid rounding, then an exact
    pairwise pass against the survivors)."""
    arr = _dedup_grid(arr, tol)
    if arr.shape[0] <= 1:
        return arr
    kept = np.empty_like(arr)
    n = 0
    for row in arr:
        if n == 0 or np.abs(kept[:n] - row).max(axis=1).min() > tol:
            kept[n] = row
            n += 1
    return kept[:n]


def _cross_dedup(new, old, tol=DEDUP_TOL):
    """Rows of `new` not within max-norm `tol` of any row of `old`."""
    if new.shape[0] == 0 or old.shape[0] == 0:
        return new
    keep = np.ones(new.shape[0], dtype=bool)
    chunk = max(1, int(2e6 / max(old.shape[0], 1)))
    for start in range(0, new.shape[0], chunk):
        sl = slice(start, start + chunk)
        d = np.abs(new[sl, None, :] - old[None, :, :]).max(axis=2)  # (c, O)
        keep[sl] = d.min(axis=1) > tol
    return new[keep]


def _dedup_points(points, tol=DEDUP_TOL):
    if len(points) == 0:
        return []
    return [row for row in _dedup_rows(np.asarray(points, dtype=float), tol)]


def _batch_vertex_filter(W, A, b, dim):
    """Keep candidates whose active constraint set (halfspaces + simplex)
    has rank == dim: the extreme points among feasible candidates.

    Active rows are gathered into compact per-candidate stacks (active
    counts hover near dim) and ranked by one batched SVD per chunk.
    """
    if W.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    n_hs = A.shape[0]
    rows_all = np.vstack([A, -np.eye(dim), np.zeros((1, dim))]) if n_hs else np.vstack([-np.eye(dim), np.zeros((1, dim))])
    pad_idx = rows_all.shape[0] - 1
    act_hs = np.abs(W @ A.T - b) <= ACTIVITY_TOL if n_hs else np.zeros((W.shape[0], 0), dtype=bool)
    act_nn = W <= ACTIVITY_TOL
    act = np.hstack([act_hs, act_nn])  # (P, n_hs + dim)
    counts = 1 + act.sum(axis=1)
    out = np.zeros(W.shape[0], dtype=bool)
    idx = np.where(counts >= dim)[0]
    if idx.size == 0:
        return out
    for start in range(0, idx.size, 16384):
        chunk = idx[start : start + 16384]
        sub = act[chunk]
        r_small = int(sub.sum(axis=1).max())
        # indices of active rows first (inactive map to the zero pad row)
        order = np.argsort(~sub, axis=1, kind="stable")[:, :r_small]
        gathered = np.where(np.take_along_axis(sub, order, axis=1), order, pad_idx)
        stacks = rows_all[gathered]  # (chunk, r_small, dim)
        stacks = np.concatenate([np.ones((chunk.size, 1, dim)), stacks], axis=1)
        svals = np.linalg.svd(stacks, compute_uv=False)
        out[chunk] = (svals > 1e-8).sum(axis=1) >= dim
    return out


def _clip_vertices(vertices, prior_halfspaces, normal, offset):
    """Vertices of P cap {x : normal.x <= offset} given vert(P).

    `prior_halfspaces` are the cuts defining P (simplex implicit).  New
    vertices lie on edges straddling the cut plane; candidate crossing
    points come from (strictly-in, strictly-out) vertex pairs sharing at
    least dim-2 active constraints (necessary for adjacency), and survive a
    feasibility plus active-set rank test.
    """
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    dim = vertices.shape[1]
    vals = vertices @ normal - offset
    inside = vals <= ACTIVITY_TOL
    strict_in = vals < -ACTIVITY_TOL
    strict_out = vals > ACTIVITY_TOL
    if not strict_out.any():
        return vertices.copy()  # redundant cut, set unchanged

    kept = vertices[inside]
    if prior_halfspaces:
        A = np.array([a for a, _ in prior_halfspaces] + [normal])
        b = np.array([bb for _, bb in prior_halfspaces] + [offset])
    else:
        A = np.asarray(normal)[None, :]
        b = np.array([offset])
    Vi, di = vertices[strict_in], vals[strict_in]
    Vo, do = vertices[strict_out], vals[strict_out]
    if Vi.shape[0] and Vo.shape[0]:
        if dim > 3 and Vi.shape[0] * Vo.shape[0] > 512:
            # adjacency prefilter on shared active counts (prior constraints
            # and nonnegativity; the unit-sum equality is shared by all)
            A_pr = A[:-1]
            b_pr = b[:-1]
            act_i = np.hstack([
                np.abs(Vi @ A_pr.T - b_pr) <= ACTIVITY_TOL if A_pr.shape[0] else np.zeros((Vi.shape[0], 0), bool),
                Vi <= ACTIVITY_TOL,
            ]).astype(np.float32)
            act_o = np.hstack([
                np.abs(Vo @ A_pr.T - b_pr) <= ACTIVITY_TOL if A_pr.shape[0] else np.zeros((Vo.shape[0], 0), bool),
                Vo <= ACTIVITY_TOL,
            ]).astype(np.float32)
            shared = act_i @ act_o.T  # (I, O)
            pair_ok = shared >= dim - 2
        else:
            pair_ok = np.ones((Vi.shape[0], Vo.shape[0]), dtype=bool)
        ii, oo = np.nonzero(pair_ok)
        t = di[ii] / (di[ii] - do[oo])
        W = Vi[ii] + t[:, None] * (Vo[oo] - Vi[ii])
        W = _dedup_grid(W)
        feas = (
            (W.min(axis=1) >= -ACTIVITY_TOL)
            & (np.abs(W.sum(axis=1) - 1.0) <= 1e-8)
            & np.all(W @ A.T <= b + ACTIVITY_TOL, axis=1)
        )
        W = W[feas]
        W = W[_batch_vertex_filter(W, A, b, dim)]
        W = _cross_dedup(_dedup_rows(W), kept)
        if W.shape[0]:
            kept = np.vstack([kept, W]) if kept.shape[0] else W
    return kept


def _enumerate_from_halfspaces(dim, halfspaces, margin=0.0, return_applied=False):
    """Vertices of the simplex cut by `halfspaces`.

    Cuts are applied most-violated-first (the intersection is order
    independent), which keeps intermediate vertex counts small when many of
    the stored halfspaces are redundant.  A positive `margin` additionally
    skips cuts violated by at most that amount, yielding a slightly larger
    outer set with far fewer sliver vertices (used only for large product
    polytopes; default is exact).
    """
    verts = np.eye(dim)
    remaining = [(np.asarray(a, dtype=float), float(b)) for a, b in halfspaces]
    applied = []
    while remaining:
        A_rem = np.array([a for a, _ in remaining])
        b_rem = np.array([bb for _, bb in remaining])
        viols = (verts @ A_rem.T).max(axis=0) - b_rem
        k = int(np.argmax(viols))
        if viols[k] <= max(ACTIVITY_TOL, margin):
            break  # every remaining halfspace is redundant (within margin)
        a, b = remaining.pop(k)
        verts = _clip_vertices(verts, applied, a, b)
        applied.append((a, b))
        if verts.shape[0] == 0:
            return ([], applied) if return_applied else []
    out = [v for v in verts]
    if return_applied:
        # redundant-but-satisfied remaining cuts stay in the description
        if margin <= ACTIVITY_TOL:
            applied = applied + remaining
        return out, applied
    return out


# ---------------------------------------------------------------------------
# point-to-hull distance (FISTA on the convex-combination QP)
# ---------------------------------------------------------------------------


def project_to_simplex(v):
    """Euclidean projection of v onto the probability simplex (sort method)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, u.size + 1) > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def dist_point_to_hull(point, vertices, iters=1500):
    """Euclidean distance from a point to the convex hull of `vertices`."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    p = _as_vector(point)
    if V.shape[0] == 1:
        return float(np.linalg.norm(V[0] - p))
    G = V @ V.T
    b = V @ p
    step = 1.0 / (2.0 * max(np.linalg.eigvalsh(G)[-1], 1e-12))
    theta = np.full(V.shape[0], 1.0 / V.shape[0])
    y, t_acc = theta.copy(), 1.0
    for _ in range(iters):
        grad = 2.0 * (G @ y - b)
        theta_new = project_to_simplex(y - step * grad)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc**2))
        y = theta_new + ((t_acc - 1.0) / t_new) * (theta_new - theta)
        if np.max(np.abs(theta_new - theta)) < 1e-14:
            theta = theta_new
            break
        theta, t_acc = theta_new, t_new
    return float(np.linalg.norm(V.T @ theta - p))


# ---------------------------------------------------------------------------
# RiskEnvelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RiskEnvelope:
    """Polytopic subset of Delta^dim in halfspace form with cached vertices."""

    dim: int
    halfspaces: tuple = ()
    vertices: np.ndarray = field(default=None)

    def __post_init__(self):
        cleaned = []
        for normal, offset in self.halfspaces:
            a, b = _normalize_halfspace(normal, offset)
            if a is None:
                if b < -ACTIVITY_TOL:
                    raise EmptyEnvelopeError("zero-normal halfspace with negative offset")
                continue
            if a.size != self.dim:
                raise DimensionMismatchError("halfspace dimension != envelope dimension")
            cleaned.append((a, b))
        object.__setattr__(self, "halfspaces", tuple(cleaned))
        if self.vertices is None:
            verts = _enumerate_from_halfspaces(self.dim, list(self.halfspaces))
            if not verts:
                raise EmptyEnvelopeError("halfspaces cut the simplex to the empty set")
            object.__setattr__(self, "vertices", np.array(verts))
        else:
            object.__setattr__(self, "vertices", np.atleast_2d(np.asarray(self.vertices, dtype=float)))
        self.vertices.setflags(write=False)

    # -- constructors -------------------------------------------------------

    @classmethod
    def simplex(cls, dim):
        return cls(dim=dim, halfspaces=(), vertices=np.eye(dim))

    @classmethod
    def singleton(cls, p):
        probs = p.probs if isinstance(p, Pmf) else _as_vector(p, "pmf")
        hs = []
        for i in range(probs.size):
            e = np.zeros(probs.size)
            e[i] = 1.0
            hs.append((e.copy(), probs[i]))
            hs.append((-e, -probs[i]))
        return cls(dim=probs.size, halfspaces=tuple(hs), vertices=probs[None, :].copy())

    @classmethod
    def from_points(cls, points):
        """Convex hull of points in the simplex, with derived facet halfspaces."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dim = pts.shape[1]
        extremes = _extreme_points(pts)
        hs = _hull_halfspaces(extremes, dim)
        return cls(dim=dim, halfspaces=tuple(hs), vertices=np.array(extremes))

    # -- queries ------------------------------------------------------------

    def contains(self, point, tol=1e-8):
        q = _as_vector(point)
        if q.size != self.dim:
            raise DimensionMismatchError("point dimension != envelope dimension")
        if np.min(q) < -tol or abs(q.sum() - 1.0) > tol:
            return False
        return all(a @ q <= b + tol for a, b in self.halfspaces)

    def contains_all(self, points, tol=1e-8):
        return all(self.contains(p, tol=tol) for p in np.atleast_2d(points))

    def same_set(self, other, tol=1e-7):
        return hausdorff(self, other) <= tol

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "halfspaces": [
                {"normal": [float(x) for x in a], "offset": float(b)}
                for a, b in self.halfspaces
            ],
            "vertices": [[float(x) for x in v] for v in self.vertices],
        }

    @classmethod
    def from_dict(cls, d):
        hs = tuple((np.asarray(h["normal"], dtype=float), float(h["offset"])) for h in d["halfspaces"])
        verts = d.get("vertices")
        return cls(
            dim=int(d["dim"]),
            halfspaces=hs,
            vertices=np.asarray(verts, dtype=float) if verts else None,
        )


def _extreme_points(pts):
    """Filter a point cloud down to its extreme points.

    Large full-rank clouds go through a convex hull in affine-span
    coordinates; small or degenerate ones through the exact hull-distance
    filter.
    """
    pts = _dedup_grid(np.atleast_2d(np.asarray(pts, dtype=float)))
    if pts.shape[0] > 16:
        centroid = pts.mean(axis=0)
        centered = pts - centroid
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        rank = int(np.sum(s > 1e-10))
        if rank >= 2:
            from scipy.spatial import ConvexHull, QhullError

            coords = centered @ vt[:rank].T
            try:
                hull = ConvexHull(coords)
            except QhullError:
                hull = ConvexHull(coords, qhull_options="QJ")
            return [p for p in _dedup_rows(pts[np.sort(hull.vertices)])]
        elif rank == 1:
            t = centered @ vt[0]
            pts = pts[[int(np.argmin(t)), int(np.argmax(t))]]
        else:
            pts = pts[:1]
    pts = [np.asarray(p, dtype=float) for p in _dedup_points(list(pts))]
    if len(pts) <= 2:
        return pts
    extremes = []
    for i, p in enumerate(pts):
        others = np.array([q for j, q in enumerate(pts) if j != i])
        if dist_point_to_hull(p, others) > 1e-9:
            extremes.append(p)
    return extremes if extremes else [pts[0]]


def _hull_halfspaces(extremes, dim):
    """Facet halfspaces of conv(extremes), plus span-pinning pairs when degenerate."""
    verts = np.array(extremes)
    centroid = verts.mean(axis=0)
    centered = verts - centroid
    # orthonormal basis of the affine span (inside the simplex hyperplane)
    _, s, vt = np.linalg.svd(centered, full_matrices=True) if centered.size else (None, np.zeros(0), np.eye(dim))
    rank = int(np.sum(s > 1e-10))
    span = vt[:rank].T if rank else np.zeros((dim, 0))
    hs = []
    # pin directions orthogonal to both the span and the all-ones direction
    ones = np.ones(dim) / np.sqrt(dim)
    pin_basis = vt[rank:].T if rank < dim else np.zeros((dim, 0))
    for k in range(pin_basis.shape[1]):
        d = pin_basis[:, k]
        d = d - (d @ ones) * ones
        if np.linalg.norm(d) <= 1e-10:
            continue
        d = d / np.linalg.norm(d)
        off = d @ centroid
        hs.append((d.copy(), off))
        hs.append((-d, -off))
    if rank == 1:
        t = span[:, 0]
        proj = centered @ t
        hs.append((t.copy(), t @ centroid + proj.max()))
        hs.append((-t, -(t @ centroid + proj.min())))
    elif rank >= 2:
        from scipy.spatial import ConvexHull

        coords = centered @ span
        hull = ConvexHull(coords)
        for eq in hull.equations:  # a2 . y + b <= 0 over span coordinates
            a2, b = eq[:-1], eq[-1]
            normal = span @ a2
            hs.append((normal, normal @ centroid - b))
    return hs


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def evaluate_crm(env, z):
    """Worst-case expectation max_{q in env} q.z and its maximizing vertex."""
    zv = _cost_values(z)
    if zv.size != env.dim:
        raise DimensionMismatchError(f"cost has dim {zv.size}, envelope has dim {env.dim}")
    if env.vertices.size == 0:
        raise EmptyEnvelopeError("cannot evaluate a risk measure over an empty envelope")
    vals = env.vertices @ zv
    k = int(np.argmax(vals))
    return float(vals[k]), env.vertices[k].copy()


def cvar_envelope(p, alpha):
    """Dual envelope of CVaR_alpha under pmf p: {q in Delta : q_i <= p_i/alpha}."""
    probs = p.probs if isinstance(p, Pmf) else Pmf(p).probs
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    hs = []
    for i in range(probs.size):
        e = np.zeros(probs.size)
        e[i] = 1.0
        hs.append((e, min(probs[i] / alpha, 1.0)))
    return RiskEnvelope(dim=probs.size, halfspaces=tuple(hs))


def intersect_halfspace(env, normal, offset):
    """env cap {v : normal.v <= offset}; raises EmptyEnvelopeError if empty."""
    a, b = _normalize_halfspace(normal, offset)
    if a is None:
        if b < -ACTIVITY_TOL:
            raise EmptyEnvelopeError("zero-normal halfspace with negative offset")
        return env
    verts = _clip_vertices(env.vertices, list(env.halfspaces), a, b)
    if verts.shape[0] == 0:
        raise EmptyEnvelopeError("halfspace cut removed every vertex")
    return RiskEnvelope(dim=env.dim, halfspaces=env.halfspaces + ((a, b),), vertices=verts)


def enumerate_vertices(env):
    """All and only extreme points, deduplicated within 1e-9."""
    if env.vertices.size == 0:
        raise EmptyEnvelopeError("empty envelope")
    return [v.copy() for v in env.vertices]


def hausdorff(a, b):
    """Hausdorff distance between two envelopes, from their vertex sets."""
    if a.dim != b.dim:
        raise DimensionMismatchError("envelopes live in different dimensions")
    d_ab = max(dist_point_to_hull(v, a.vertices) for v in b.vertices)
    d_ba = max(dist_point_to_hull(v, b.vertices) for v in a.vertices)
    return max(d_ab, d_ba)


# ---------------------------------------------------------------------------
# semi-parametric CRM
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SemiParametricCrm:
    """Fixed halfspace normals with learnable offsets r: P_r = {v : a_j.v <= b_j - r_j}.

    The baseline b(j) is the simplex maximum of the linear form a_j . v,
    i.e. the largest component of a_j, so r = 0 always gives a superset of
    any envelope expressible with these normals.
    """

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.normals, dtype=float))
        r = _as_vector(self.offsets, "offsets")
        if r.size != A.shape[0]:
            raise DimensionMismatchError("one offset per normal required")
        object.__setattr__(self, "normals", A)
        object.__setattr__(self, "offsets", r)
        self.normals.setflags(write=False)
        self.offsets.setflags(write=False)
        self.envelope()  # raises EmptyEnvelopeError if r is infeasible

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def n_constraints(self):
        return self.normals.shape[0]

    @property
    def baselines(self):
        return self.normals.max(axis=1)

    def rhs(self):
        return self.baselines - self.offsets

    def envelope(self):
        hs = tuple((self.normals[j].copy(), float(self.rhs()[j])) for j in range(self.n_constraints))
        return RiskEnvelope(dim=self.dim, halfspaces=hs)

    def with_offsets(self, r):
        return SemiParametricCrm(normals=self.normals, offsets=np.asarray(r, dtype=float))

    @classmethod
    def basis_normals(cls, dim):
        """The 2*dim vectors (+e_i, -e_i): per-outcome upper and lower bounds."""
        return np.vstack([np.eye(dim), -np.eye(dim)])

    @classmethod
    def pinned(cls, p):
        """Offsets pinning P_r to the singleton {p} with the basis normals."""
        probs = p.probs if isinstance(p, Pmf) else _as_vector(p, "pmf")
        return cls(normals=cls.basis_normals(probs.size), offsets=np.concatenate([1.0 - probs, probs]))


def _offsets_feasible(normals, offsets, slack=0.0):
    A = np.atleast_2d(normals)
    b = A.max(axis=1) - np.asarray(offsets, dtype=float)
    try:
        verts = _enumerate_from_halfspaces(A.shape[1], [(A[j], b[j] - slack) for j in range(A.shape[0])])
    except EmptyEnvelopeError:
        return False
    return bool(verts)


def _constraint_redundant(normals, rhs, j):
    """Is constraint j implied by the simplex and the other constraints?"""
    A = np.atleast_2d(normals)
    others = [(A[k], rhs[k]) for k in range(A.shape[0]) if k != j]
    verts = _enumerate_from_halfspaces(A.shape[1], others)
    if not verts:
        return False
    worst = max(A[j] @ v for v in verts)
    return worst <= rhs[j] + 1e-9


def project_offsets(crm, r, bump=0.01):
    """Euclidean projection of r onto the feasible offset set, then the
    redundancy bump: any constraint that is redundant in P_r gets its offset
    raised by `bump` while the envelope stays nonempty."""
    from scipy.optimize import minimize

    A = np.atleast_2d(crm.normals)
    M, L = A.shape
    b = A.max(axis=1)
    r = _as_vector(r, "offsets")

    if not _offsets_feasible(A, r):
        # min ||r' - r||^2 over (v, r') with v in Delta^L, A v + r' <= b
        def objective(x):
            return float(np.sum((x[L:] - r) ** 2))

        def objective_grad(x):
            g = np.zeros(L + M)
            g[L:] = 2.0 * (x[L:] - r)
            return g

        cons = [
            {"type": "eq", "fun": lambda x: x[:L].sum() - 1.0, "jac": lambda x: np.concatenate([np.ones(L), np.zeros(M)])},
            {"type": "ineq", "fun": lambda x: b - A @ x[:L] - x[L:], "jac": lambda x: np.hstack([-A, -np.eye(M)])},
        ]
        x0 = np.concatenate([np.full(L, 1.0 / L), np.minimum(r, b - A @ np.full(L, 1.0 / L))])
        bounds = [(0.0, 1.0)] * L + [(None, None)] * M
        res = minimize(objective, x0, jac=objective_grad, method="SLSQP", bounds=bounds, constraints=cons, options={"maxiter": 300, "ftol": 1e-14})
        r = res.x[L:].copy()
        # relax all offsets by a hair if SLSQP stopped epsilon outside
        eps = 1e-9
        for _ in range(40):
            if _offsets_feasible(A, r):
                break
            r -= eps
            eps *= 2.0
        if not _offsets_feasible(A, r):
            raise EmptyEnvelopeError("offset projection failed to reach the feasible set")

    r = r.copy()
    for j in range(M):
        if _constraint_redundant(A, b - r, j):
            trial = r.copy()
            trial[j] += bump
            if _offsets_feasible(A, trial):
                r = trial
    return r
