"""B-spline / NURBS basis kernel built on Bezier extraction.

Every basis evaluation in the solver goes through the same path: Bernstein
polynomials on the unit interval, mapped to each nonzero knot span by a
per-span extraction operator, then rationalized with the local weights.
Values, first and second parametric derivatives are produced together.

All operations are pure functions of immutable inputs and can be called
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, ValidationError

_EPS = 1e-12


def gauss_rule(n):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Bernstein basis
# ---------------------------------------------------------------------------

def bernstein_eval(p, t):
    """Evaluate the degree-p Bernstein basis with 1st and 2nd derivatives.

    ``t`` may be a scalar or an array; results have shape ``t.shape + (p+1,)``.
    Values sum to one, derivative rows sum to zero.
    """
    if p < 0:
        raise ValidationError("Bernstein degree must be >= 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-14) or np.any(t > 1.0 + 1e-14):
        raise DomainError("Bernstein parameter outside [0, 1]")
    rows = _bernstein_rows(p, t)
    vals = rows[p]
    d1 = np.zeros_like(vals)
    d2 = np.zeros_like(vals)
    if p >= 1:
        a = _padded(rows[p - 1], 1)
        d1 = p * (a[..., :-1] - a[..., 1:])
    if p >= 2:
        b = _padded(rows[p - 2], 2)
        d2 = p * (p - 1) * (b[..., :-2] - 2.0 * b[..., 1:-1] + b[..., 2:])
    return vals, d1, d2


def _bernstein_rows(p, t):
    """Triangular Bernstein recurrence; returns rows for degrees 0..p."""
    rows = [np.ones(t.shape + (1,))]
    for k in range(1, p + 1):
        prev = rows[-1]
        cur = np.zeros(t.shape + (k + 1,))
        cur[..., 1:] = t[..., None] * prev
        cur[..., :-1] += (1.0 - t[..., None]) * prev
        rows.append(cur)
    return rows


def _padded(row, k):
    pad = np.zeros(row.shape[:-1] + (row.shape[-1] + 2 * k,))
    pad[..., k:-k] = row
    return pad


# ---------------------------------------------------------------------------
# Knot vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot vector with degree ``p >= 1``.

    Knots are normalized to [0, 1] on construction so tolerances are
    scale-free.
    """

    values: np.ndarray
    degree: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = self.degree
        if p < 1:
            raise ValidationError("degree must be >= 1")
        if v.ndim != 1 or v.size < 2 * (p + 1):
            raise ValidationError("knot vector too short for degree")
        if np.any(np.diff(v) < 0):
            raise ValidationError("knot vector must be nondecreasing")
        span = v[-1] - v[0]
        if span <= 0:
            raise ValidationError("knot vector has zero extent")
        v = (v - v[0]) / span
        if np.any(v[: p + 1] != 0.0) or np.any(v[-(p + 1):] != 1.0):
            raise ValidationError("knot vector must be open (end knots repeated p+1 times)")
        if v[p + 1] == 0.0 or v[-(p + 2)] == 1.0:
            raise ValidationError("end knot multiplicity exceeds p+1")
        for u, m in zip(*np.unique(v[p + 1:-(p + 1)], return_counts=True)):
            if m > p:
                raise ValidationError(f"interior knot {u} has multiplicity {m} > degree")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @property
    def n_funcs(self):
        return self.values.size - self.degree - 1

    @cached_property
    def spans(self):
        """Indices k of nonzero spans [values[k], values[k+1])."""
        v = self.values
        ks = [k for k in range(self.degree, v.size - self.degree - 1) if v[k + 1] > v[k]]
        return tuple(ks)

    @property
    def breakpoints(self):
        v = self.values
        return np.array([v[k] for k in self.spans] + [1.0])

    def find_span(self, x):
        """Nonzero-span element index containing parameter ``x``."""
        if x < -1e-12 or x > 1.0 + 1e-12:
            raise DomainError(f"parameter {x} outside [0, 1]")
        bp = self.breakpoints
        e = int(np.searchsorted(bp, min(max(x, 0.0), 1.0), side="right")) - 1
        return min(max(e, 0), len(self.spans) - 1)


def extraction_operators(kv: KnotVector):
    """Per-span Bezier extraction operators of an open knot vector.

    Returns an array of shape ``(n_spans, p+1, p+1)``; operator ``e`` maps
    Bernstein values on span ``e`` to the ``p+1`` B-splines supported there
    (rows = local B-splines ``spans[e]-p .. spans[e]``, columns = Bernstein).
    The operators depend only on the knot vector.
    """
    U = kv.values
    p = kv.degree
    m = U.size
    ops = []
    cur = np.eye(p + 1)
    a = p
    b = p + 1
    while b < m - 1:
        nxt = np.eye(p + 1)
        i = b
        while b < m - 1 and U[b + 1] == U[b]:
            b += 1
        mult = b - i + 1
        if mult < p:
            numer = U[b] - U[a]
            alphas = np.zeros(p - mult)
            for j in range(p, mult, -1):
                alphas[j - mult - 1] = numer / (U[a + j] - U[a])
            r = p - mult
            for j in range(1, r + 1):
                save = r - j
                s = mult + j
                for k in range(p, s - 1, -1):
                    alpha = alphas[k - s]
                    cur[:, k] = alpha * cur[:, k] + (1.0 - alpha) * cur[:, k - 1]
                if b < m - 1:
                    nxt[save: j + save + 1, save] = cur[p - j: p + 1, p]
        ops.append(cur)
        cur = nxt
        if b < m - 1:
            a = b
            b += 1
    if len(ops) != len(kv.spans):
        raise ValidationError("extraction produced inconsistent span count")
    return np.array(ops)


def refine_curve(kv: KnotVector, ctrl_h, new_knots):
    """Insert ``new_knots`` into a curve given homogeneous control points.

    ``ctrl_h`` has shape (n, c); rows are weighted control coordinates.
    Returns ``(KnotVector, refined ctrl_h)``. The represented curve is
    unchanged.
    """
    X = np.sort(np.asarray(new_knots, dtype=float))
    if X.size == 0:
        return kv, np.asarray(ctrl_h, dtype=float)
    if np.any(X <= 0.0) or np.any(X >= 1.0):
        raise DomainError("inserted knots must lie strictly inside (0, 1)")
    U = kv.values
    p = kv.degree
    n = kv.n_funcs - 1
    r = X.size - 1
    Pw = np.asarray(ctrl_h, dtype=float)
    a = _span_index(U, p, X[0])
    b = _span_index(U, p, X[r]) + 1
    Qw = np.zeros((n + r + 2, Pw.shape[1]))
    Ubar = np.zeros(U.size + r + 1)
    Qw[: a - p + 1] = Pw[: a - p + 1]
    Qw[b + r: n + r + 2] = Pw[b - 1: n + 1]
    Ubar[: a + 1] = U[: a + 1]
    Ubar[b + p + r + 1:] = U[b + p:]
    i = b + p - 1
    k = b + p + r
    for j in range(r, -1, -1):
        while X[j] <= U[i] and i > a:
            Qw[k - p - 1] = Pw[i - p - 1]
            Ubar[k] = U[i]
            k -= 1
            i -= 1
        Qw[k - p - 1] = Qw[k - p]
        for ell in range(1, p + 1):
            ind = k - p + ell
            alfa = Ubar[k + ell] - X[j]
            if abs(alfa) == 0.0:
                Qw[ind - 1] = Qw[ind]
            else:
                alfa /= Ubar[k + ell] - U[i - p + ell]
                Qw[ind - 1] = alfa * Qw[ind - 1] + (1.0 - alfa) * Qw[ind]
        Ubar[k] = X[j]
        k -= 1
    return KnotVector(Ubar, p), Qw


def _span_index(U, p, x):
    """Knot span index in the full vector (Piegl's FindSpan)."""
    n = U.size - p - 2
    if x >= U[n + 1]:
        return n
    lo, hi = p, n + 1
    mid = (lo + hi) // 2
    while x < U[mid] or x >= U[mid + 1]:
        if x < U[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def uniform_insertion_knots(kv: KnotVector, n_elements):
    """Knots to insert so the vector has ``n_elements`` uniform spans."""
    target = np.arange(1, n_elements) / n_elements
    have = np.unique(kv.values)
    new = [x for x in target if np.min(np.abs(have - x)) > 1e-12]
    return np.array(new)


# ---------------------------------------------------------------------------
# Surface patch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisEvaluation:
    """Nonzero rational basis values and parametric derivatives at a point.

    ``first`` has columns (d/dxi1, d/dxi2); ``second`` columns are ordered
    (11, 22, 12). ``support`` holds the flat control-point indices of the
    element, u-major.
    """

    values: np.ndarray
    first: np.ndarray
    second: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class NurbsPatch:
    """Tensor-product NURBS surface with thickness, the discretization carrier.

    ``ctrl`` has shape (n, m, 3) with the first index along direction u;
    ``weights`` has shape (n, m) and must be strictly positive.
    """

    kv_u: KnotVector
    kv_v: KnotVector
    ctrl: np.ndarray
    weights: np.ndarray
    thickness: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ctrl = np.asarray(self.ctrl, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        n, m = self.kv_u.n_funcs, self.kv_v.n_funcs
        if ctrl.shape != (n, m, 3):
            raise ValidationError(
                f"control net shape {ctrl.shape} does not match knot vectors ({n}, {m}, 3)")
        if w.shape != (n, m):
            raise ValidationError(f"weight array shape {w.shape} != ({n}, {m})")
        if np.any(w <= 0):
            raise ValidationError("all weights must be strictly positive")
        object.__setattr__(self, "ctrl", ctrl)
        object.__setattr__(self, "weights", w)
        ctrl.setflags(write=False)
        w.setflags(write=False)

    @property
    def degrees(self):
        return self.kv_u.degree, self.kv_v.degree

    @property
    def shape(self):
        return self.kv_u.n_funcs, self.kv_v.n_funcs

    @property
    def n_ctrl(self):
        return self.kv_u.n_funcs * self.kv_v.n_funcs

    @property
    def n_elements(self):
        return len(self.kv_u.spans) * len(self.kv_v.spans)

    @property
    def n_loc(self):
        p, q = self.degrees
        return (p + 1) * (q + 1)

    def homogeneous(self):
        h = np.empty(self.ctrl.shape[:-1] + (4,))
        h[..., :3] = self.ctrl * self.weights[..., None]
        h[..., 3] = self.weights
        return h

    @property
    def extraction(self):
        """Cached per-direction extraction operator stacks."""
        if "ext" not in self._cache:
            self._cache["ext"] = (extraction_operators(self.kv_u),
                                  extraction_operators(self.kv_v))
        return self._cache["ext"]

    def element_index(self, eu, ev):
        return eu * len(self.kv_v.spans) + ev

    def element_grid(self, eid):
        nv = len(self.kv_v.spans)
        return eid // nv, eid % nv

    def element_bounds(self, eid):
        eu, ev = self.element_grid(eid)
        bu, bv = self.kv_u.breakpoints, self.kv_v.breakpoints
        return (bu[eu], bu[eu + 1]), (bv[ev], bv[ev + 1])

    @property
    def connectivity(self):
        """Flat control-point indices per element, shape (nel, nloc), u-major."""
        if "conn" not in self._cache:
            p, q = self.degrees
            m = self.kv_v.n_funcs
            rows = []
            for ku in self.kv_u.spans:
                for kv_ in self.kv_v.spans:
                    iu = np.arange(ku - p, ku + 1)
                    iv = np.arange(kv_ - q, kv_ + 1)
                    rows.append((iu[:, None] * m + iv[None, :]).ravel())
            self._cache["conn"] = np.array(rows, dtype=int)
        return self._cache["conn"]

    def element_operator(self, eid):
        """Tensor-product extraction operator of one element (nloc x nloc)."""
        eu, ev = self.element_grid(eid)
        cu, cv = self.extraction
        return np.kron(cu[eu], cv[ev])

    def basis_eval(self, eid, xi):
        """Rational basis, 1st and 2nd parametric derivatives at one point."""
        xi = np.asarray(xi, dtype=float)
        (u0, u1), (v0, v1) = self.element_bounds(eid)
        if not (u0 - 1e-12 <= xi[0] <= u1 + 1e-12 and v0 - 1e-12 <= xi[1] <= v1 + 1e-12):
            raise DomainError(f"point {xi} outside element {eid} bounds")
        tu = np.clip((xi[0] - u0) / (u1 - u0), 0.0, 1.0)
        tv = np.clip((xi[1] - v0) / (v1 - v0), 0.0, 1.0)
        tab = _rational_tabulate(self, eid, np.array([tu]), np.array([tv]))
        return BasisEvaluation(values=tab["N"][0], first=tab["dN"][0],
                               second=tab["d2N"][0], support=self.connectivity[eid])

    def surface_point(self, xi1, xi2):
        """Map a parametric point to physical space."""
        eu = self.kv_u.find_span(float(xi1))
        ev = self.kv_v.find_span(float(xi2))
        eid = self.element_index(eu, ev)
        be = self.basis_eval(eid, (xi1, xi2))
        pts = self.ctrl.reshape(-1, 3)[be.support]
        return be.values @ pts

    def refined(self, knots_u=(), knots_v=()):
        """h-refine by knot insertion; the surface is unchanged."""
        n, m = self.shape
        Pw = self.homogeneous().reshape(n, m * 4)
        kvu, kvv = self.kv_u, self.kv_v
        if len(knots_u):
            kvu, Pw = refine_curve(kvu, Pw, knots_u)
            n = kvu.n_funcs
        Pw = Pw.reshape(n, m, 4).transpose(1, 0, 2).reshape(m, n * 4)
        if len(knots_v):
            kvv, Pw = refine_curve(kvv, Pw, knots_v)
            m = kvv.n_funcs
        Pw = Pw.reshape(m, n, 4).transpose(1, 0, 2)
        w = Pw[..., 3]
        ctrl = Pw[..., :3] / w[..., None]
        return NurbsPatch(kvu, kvv, ctrl, w, self.thickness)

    def refined_to(self, nel_u, nel_v):
        return self.refined(uniform_insertion_knots(self.kv_u, nel_u),
                            uniform_insertion_knots(self.kv_v, nel_v))


# ---------------------------------------------------------------------------
# Batched tabulation (assembly backbone)
# ---------------------------------------------------------------------------

def _rational_tabulate(patch, eid, tu, tv):
    """Rational basis and derivatives at the tensor grid ``tu x tv`` of one
    element, flattened point-major. Quotient-rule formulas on top of the
    extraction operator; weighting by W^b = C^T w keeps the denominator in
    Bernstein form."""
    p, q = patch.degrees
    eu, ev = patch.element_grid(eid)
    (u0, u1), (v0, v1) = patch.element_bounds(eid)
    hu, hv = u1 - u0, v1 - v0
    Bu, dBu, ddBu = bernstein_eval(p, tu)
    Bv, dBv, ddBv = bernstein_eval(q, tv)
    dBu, ddBu = dBu / hu, ddBu / hu ** 2
    dBv, ddBv = dBv / hv, ddBv / hv ** 2

    npt = tu.size * tv.size
    # tensor-product Bernstein arrays, point-major, function index u-major
    def tp(a, b):
        return (a[:, None, :, None] * b[None, :, None, :]).reshape(npt, -1)

    B = tp(Bu, Bv)
    B1 = tp(dBu, Bv)
    B2 = tp(Bu, dBv)
    B11 = tp(ddBu, Bv)
    B22 = tp(Bu, ddBv)
    B12 = tp(dBu, dBv)

    C = patch.element_operator(eid)
    wloc = patch.weights.reshape(-1)[patch.connectivity[eid]]
    Wb = C.T @ wloc

    den = B @ Wb
    d1 = B1 @ Wb
    d2 = B2 @ Wb
    d11 = B11 @ Wb
    d22 = B22 @ Wb
    d12 = B12 @ Wb

    def rat(Bnum):
        return Bnum / den[:, None]

    N = wloc[None, :] * (rat(B) @ C.T)
    R1 = wloc[None, :] * (((B1 - (d1 / den)[:, None] * B) / den[:, None]) @ C.T)
    R2 = wloc[None, :] * (((B2 - (d2 / den)[:, None] * B) / den[:, None]) @ C.T)
    R11 = wloc[None, :] * ((B11 / den[:, None]
                            - 2.0 * (d1 / den ** 2)[:, None] * B1
                            + 2.0 * (d1 ** 2 / den ** 3)[:, None] * B
                            - (d11 / den ** 2)[:, None] * B) @ C.T)
    R22 = wloc[None, :] * ((B22 / den[:, None]
                            - 2.0 * (d2 / den ** 2)[:, None] * B2
                            + 2.0 * (d2 ** 2 / den ** 3)[:, None] * B
                            - (d22 / den ** 2)[:, None] * B) @ C.T)
    R12 = wloc[None, :] * ((B12 / den[:, None]
                            - (d1 / den ** 2)[:, None] * B2
                            - (d2 / den ** 2)[:, None] * B1
                            + 2.0 * (d1 * d2 / den ** 3)[:, None] * B
                            - (d12 / den ** 2)[:, None] * B) @ C.T)
    return {
        "N": N,
        "dN": np.stack([R1, R2], axis=-1),
        "d2N": np.stack([R11, R22, R12], axis=-1),
    }


def tabulate_patch(patch, rule_u=None, rule_v=None):
    """Precompute basis data at Gauss points of every element.

    Returns a dict with arrays shaped (nel, ngp, nloc[, .]):
    ``N``, ``dN``, ``d2N`` plus combined parametric weights ``wq`` (ngp,)
    already scaled by each element's span measure, shape (nel, ngp).
    """
    p, q = patch.degrees
    if rule_u is None:
        rule_u = gauss_rule(p + 1)
    if rule_v is None:
        rule_v = gauss_rule(q + 1)
    xu, wu = rule_u
    xv, wv = rule_v
    ngp = xu.size * xv.size
    nel = patch.n_elements
    nloc = patch.n_loc
    N = np.empty((nel, ngp, nloc))
    dN = np.empty((nel, ngp, nloc, 2))
    d2N = np.empty((nel, ngp, nloc, 3))
    wq = np.empty((nel, ngp))
    wgrid = (wu[:, None] * wv[None, :]).reshape(-1)
    for eid in range(nel):
        tab = _rational_tabulate(patch, eid, xu, xv)
        N[eid] = tab["N"]
        dN[eid] = tab["dN"]
        d2N[eid] = tab["d2N"]
        (u0, u1), (v0, v1) = patch.element_bounds(eid)
        wq[eid] = wgrid * (u1 - u0) * (v1 - v0)
    return {"N": N, "dN": dN, "d2N": d2N, "wq": wq, "conn": patch.connectivity}


def evaluate_points(patch, pts):
    """Basis values/derivatives at arbitrary parametric points (npts, 2).

    Points are grouped by element; returns (N, dN, d2N, support) with
    support (npts, nloc) flat control indices.
    """
    pts = np.asarray(pts, dtype=float)
    npts = pts.shape[0]
    nloc = patch.n_loc
    N = np.empty((npts, nloc))
    dN = np.empty((npts, nloc, 2))
    d2N = np.empty((npts, nloc, 3))
    sup = np.empty((npts, nloc), dtype=int)
    eu = np.array([patch.kv_u.find_span(x) for x in pts[:, 0]])
    ev = np.array([patch.kv_v.find_span(x) for x in pts[:, 1]])
    eids = eu * len(patch.kv_v.spans) + ev
    conn = patch.connectivity
    for eid in np.unique(eids):
        idx = np.nonzero(eids == eid)[0]
        (u0, u1), (v0, v1) = patch.element_bounds(eid)
        tu = np.clip((pts[idx, 0] - u0) / (u1 - u0), 0.0, 1.0)
        tv = np.clip((pts[idx, 1] - v0) / (v1 - v0), 0.0, 1.0)
        # evaluate one point at a time within the element grid trick:
        # _rational_tabulate builds a tensor grid, so call per point pair
        for row, (a, b) in zip(idx, zip(tu, tv)):
            tab = _rational_tabulate(patch, eid, np.array([a]), np.array([b]))
            N[row] = tab["N"][0]
            dN[row] = tab["dN"][0]
            d2N[row] = tab["d2N"][0]
            sup[row] = conn[eid]
    return N, dN, d2N, sup


def edge_knot_data(patch, edge):
    """Univariate data of a boundary edge: (knot vector, ctrl rows idx).

    ``edge`` is one of "u0", "u1", "v0", "v1"; u0 means xi1 = 0 (the edge
    runs along direction v). Returns (kv, flat control indices along the
    edge, index of the adjacent row) for strip/load construction.
    """
    n, m = patch.shape
    if edge == "u0":
        ids = np.arange(m)
        adj = ids + m
        kv = patch.kv_v
    elif edge == "u1":
        ids = (n - 1) * m + np.arange(m)
        adj = ids - m
        kv = patch.kv_v
    elif edge == "v0":
        ids = np.arange(n) * m
        adj = ids + 1
        kv = patch.kv_u
    elif edge == "v1":
        ids = np.arange(n) * m + (m - 1)
        adj = ids - 1
        kv = patch.kv_u
    else:
        raise ValidationError(f"unknown edge '{edge}'")
    return kv, ids, adj


def tabulate_edge(patch, edge, n_gauss=None):
    """1D basis tabulation along a boundary edge for line loads.

    Returns dict with N (nel, ng, p+1), dN, wq (nel, ng) parametric weights,
    and conn (nel, p+1) indices into the edge row (not global).
    """
    kv, ids, _ = edge_knot_data(patch, edge)
    p = kv.degree
    if n_gauss is None:
        n_gauss = p + 1
    w_edge = patch.weights.reshape(-1)[ids]
    ops = extraction_operators(kv)
    xg, wg = gauss_rule(n_gauss)
    Bv, dBv, _ = bernstein_eval(p, xg)
    nel = len(kv.spans)
    N = np.empty((nel, n_gauss, p + 1))
    dN = np.empty((nel, n_gauss, p + 1))
    wq = np.empty((nel, n_gauss))
    conn = np.empty((nel, p + 1), dtype=int)
    bp = kv.breakpoints
    for e, k in enumerate(kv.spans):
        h = bp[e + 1] - bp[e]
        loc = np.arange(k - p, k + 1)
        conn[e] = loc
        C = ops[e]
        wloc = w_edge[loc]
        Wb = C.T @ wloc
        den = Bv @ Wb
        d1 = (dBv / h) @ Wb
        N[e] = wloc[None, :] * ((Bv / den[:, None]) @ C.T)
        dN[e] = wloc[None, :] * ((((dBv / h) - (d1 / den)[:, None] * Bv) / den[:, None]) @ C.T)
        wq[e] = wg * h
    return {"N": N, "dN": dN, "wq": wq, "conn": conn, "ids": ids}
