"""Analysis model: patches, coupling, constraints, loads, monitors.

``Model`` is the declarative description; :meth:`Model.build` merges
coincident control points into global degrees of freedom, detects patch
interfaces, constructs bending strips, assembles the reference load
vector, and returns an :class:`AssembledModel` ready for the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .element import (
    BendingStripSection,
    ShellKernel,
    ThicknessSection,
    external_load,
)
from .errors import ModelError
from .materials import ElasticParams
from .splines import KnotVector, NurbsPatch, evaluate_points, edge_knot_data, gauss_rule

_COMP = {"x": 0, "y": 1, "z": 2}
MERGE_TOL_REL = 1e-8


@dataclass
class NewtonSettings:
    """Load-stepping Newton options.

    ``residual_tol`` is relative to the first-iteration residual norm of
    each step; ``predictor`` is "previous" or "extrapolate".
    """

    increments: int = 10
    residual_tol: float = 1e-8
    displacement_tol: float = 1e-10
    max_iterations: int = 25
    predictor: str = "extrapolate"

    def __post_init__(self):
        if self.residual_tol <= 0 or self.displacement_tol <= 0:
            raise ModelError("tolerances must be positive")


@dataclass
class ArcLengthSettings:
    """Crisfield cylindrical arc-length options."""

    initial_radius: float
    max_steps: int = 100
    desired_iterations: int = 5
    radius_bounds: tuple = (0.0, np.inf)
    residual_tol: float = 1e-8
    displacement_tol: float = 1e-10
    max_iterations: int = 25
    max_retries: int = 8
    stop_lambda: float | None = None
    stop_displacement: tuple | None = None   # (monitor name, component, |limit|)

    def __post_init__(self):
        if self.initial_radius <= 0:
            raise ModelError("arc-length radius must be positive")


@dataclass
class Model:
    """Multi-patch shell analysis definition."""

    patches: list
    materials: list                      # material adapter per patch
    thickness_gauss: list | None = None  # per patch; default 3 elastic / 5 plastic
    strips: object = "auto"              # "auto" | None | list of explicit dicts
    strip_modulus_scale: float = 1e4
    constraints: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    monitors: list = field(default_factory=list)

    def build(self):
        return AssembledModel(self)


def merge_control_points(patches, tol=None):
    """Weld coincident control points across patches into global ids.

    Points closer than ``tol`` (default 1e-8 of the bounding-box diagonal)
    share an id.  A merged group whose diameter exceeds the tolerance is
    ambiguous chaining and raises :class:`ModelError`.
    Returns (global ids per patch-flattened point, merged coordinates).
    """
    pts = np.vstack([p.ctrl.reshape(-1, 3) for p in patches])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if tol is None:
        tol = MERGE_TOL_REL * max(diag, 1e-30)
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(pts.shape[0])

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(pts.shape[0])])
    # ambiguity check: every welded group must itself fit in the tolerance
    counts = np.bincount(roots, minlength=pts.shape[0])
    for r in np.nonzero(counts > 1)[0]:
        members = np.nonzero(roots == r)[0]
        sub = pts[members]
        dmax = np.max(np.linalg.norm(sub[:, None] - sub[None, :], axis=-1))
        if dmax > tol:
            raise ModelError(
                f"ambiguous control-point coincidence near {sub[0]}: "
                f"group diameter {dmax:.3e} exceeds tolerance {tol:.3e} "
                f"(flat indices {members.tolist()})")
    _, inverse = np.unique(roots, return_inverse=True)
    coords = np.zeros((inverse.max() + 1, 3))
    coords[inverse] = pts
    return inverse, coords


def _patch_offsets(patches):
    off = [0]
    for p in patches:
        off.append(off[-1] + p.n_ctrl)
    return off


def detect_interfaces(patches, gids):
    """Pairs of patch edges whose boundary control rows share global ids.

    Returns a list of dicts with (patch/edge indices, aligned rows of
    global ids for the two adjacent rows and the shared row, reversed flag).
    """
    off = _patch_offsets(patches)
    edges = []
    for ip, patch in enumerate(patches):
        for edge in ("u0", "u1", "v0", "v1"):
            kv, ids, adj = edge_knot_data(patch, edge)
            edges.append({
                "patch": ip, "edge": edge, "kv": kv,
                "shared": gids[off[ip] + ids], "adjacent": gids[off[ip] + adj],
                "weights": patch.weights.reshape(-1)[ids],
            })
    interfaces = []
    used = {}
    for i, ea in enumerate(edges):
        for eb in edges[i + 1:]:
            if ea["patch"] == eb["patch"]:
                continue
            if ea["shared"].size != eb["shared"].size:
                continue
            fwd = np.array_equal(ea["shared"], eb["shared"])
            rev = np.array_equal(ea["shared"], eb["shared"][::-1])
            if not (fwd or rev):
                continue
            key = tuple(sorted(ea["shared"].tolist()))
            if key in used:
                raise ModelError(
                    f"edge of patch {eb['patch']} coincides with more than one edge")
            used[key] = True
            if not np.allclose(ea["kv"].values, eb["kv"].values, atol=1e-12) \
                    or ea["kv"].degree != eb["kv"].degree:
                raise ModelError(
                    f"non-matching interface discretization between patch "
                    f"{ea['patch']}/{ea['edge']} and patch {eb['patch']}/{eb['edge']}")
            wb = eb["weights"][::-1] if rev else eb["weights"]
            if not np.allclose(ea["weights"], wb, atol=1e-12):
                raise ModelError("interface weight rows differ")
            adj_b = eb["adjacent"][::-1] if rev else eb["adjacent"]
            interfaces.append({
                "patch_a": ea["patch"], "edge_a": ea["edge"],
                "patch_b": eb["patch"], "edge_b": eb["edge"],
                "rows": np.stack([ea["adjacent"], ea["shared"], adj_b]),
            })
    return interfaces


def build_strip_patch(rows, coords, thickness):
    """Bending-strip patch from the three aligned control rows.

    Linear along the interface (direction u), one quadratic element across
    (direction v); all-unit weights.  ``rows`` is (3, n) global ids ordered
    (side A, shared, side B).
    """
    n = rows.shape[1]
    if n < 2:
        raise ModelError("strip interface needs at least 2 control points")
    kv_u = KnotVector(np.concatenate([[0.0, 0.0], np.arange(1, n - 1) / (n - 1),
                                      [1.0, 1.0]]), 1)
    kv_v = KnotVector(np.array([0.0, 0, 0, 1, 1, 1]), 2)
    ctrl = coords[rows].transpose(1, 0, 2)     # (n_along, 3, 3)
    patch = NurbsPatch(kv_u, kv_v, ctrl, np.ones((n, 3)), thickness=thickness)
    gids = rows.T.reshape(-1)                  # u-major flattening
    return patch, gids


def _material_young(mat):
    return mat.params.E


class AssembledModel:
    """Merged dof system with per-patch kernels, strips, loads, monitors."""

    def __init__(self, model: Model):
        self.model = model
        patches = model.patches
        self.gids, self.coords = merge_control_points(patches)
        self.off = _patch_offsets(patches)
        self.n_nodes = self.coords.shape[0]
        self.n_dof = 3 * self.n_nodes

        # shell kernels
        self.kernels = []
        tg = model.thickness_gauss or [None] * len(patches)
        for ip, (patch, mat) in enumerate(zip(patches, model.materials)):
            ng = tg[ip]
            if ng is None:
                ng = 5 if getattr(mat, "uses_history", False) else 3
            section = ThicknessSection(mat, patch.thickness, ng)
            kern = ShellKernel(patch, section)
            ids = self.gids[self.off[ip]: self.off[ip + 1]]
            self.kernels.append((kern, ids))

        # bending strips
        self.strips = []
        self.interfaces = []
        if model.strips == "auto":
            self.interfaces = detect_interfaces(patches, self.gids)
        elif isinstance(model.strips, (list, tuple)):
            self.interfaces = [self._explicit_interface(s) for s in model.strips]
        for itf in self.interfaces:
            pa, pb = itf["patch_a"], itf["patch_b"]
            tmean = 0.5 * (patches[pa].thickness + patches[pb].thickness)
            Emean = 0.5 * (_material_young(model.materials[pa])
                           + _material_young(model.materials[pb]))
            patch, ids = build_strip_patch(itf["rows"], self.coords, tmean)
            section = BendingStripSection(model.strip_modulus_scale * Emean, tmean)
            kern = ShellKernel(patch, section, rule=(gauss_rule(1), gauss_rule(3)))
            self.strips.append((kern, ids))

        # constraints
        self.fixed = np.zeros(self.n_dof, dtype=bool)
        for spec in model.constraints:
            for dof in self._constraint_dofs(spec):
                self.fixed[dof] = True
        self.free = np.nonzero(~self.fixed)[0]
        self.red = -np.ones(self.n_dof, dtype=int)
        self.red[self.free] = np.arange(self.free.size)

        # reference loads
        self.f_ext = np.zeros(self.n_dof)
        for spec in model.loads:
            self._add_load(spec)

        # monitors
        self.monitors = [self._monitor(spec) for spec in model.monitors]
        self._patterns = None

    # -- spec resolution ----------------------------------------------------
    def _explicit_interface(self, spec):
        patches = self.model.patches
        out = {"patch_a": spec["patch_a"], "edge_a": spec["edge_a"],
               "patch_b": spec["patch_b"], "edge_b": spec["edge_b"]}
        rows = []
        for side in ("a", "b"):
            ip = spec[f"patch_{side}"]
            _, ids, adj = edge_knot_data(patches[ip], spec[f"edge_{side}"])
            g = self.gids[self.off[ip] + ids]
            rows.append((g, self.gids[self.off[ip] + adj]))
        (ga, aa), (gb, ab) = rows
        if np.array_equal(ga, gb):
            pass
        elif np.array_equal(ga, gb[::-1]):
            ab = ab[::-1]
        else:
            raise ModelError("explicit strip edges are not a merged interface")
        out["rows"] = np.stack([aa, ga, ab])
        return out

    def _node_ids(self, ip, idx_pairs):
        patch = self.model.patches[ip]
        m = patch.shape[1]
        flat = [i * m + j for i, j in idx_pairs]
        return self.gids[self.off[ip] + np.asarray(flat, dtype=int)]

    def _constraint_dofs(self, spec):
        comps = [_COMP[c] for c in spec.get("components", "xyz")]
        ip = spec["patch"]
        patch = self.model.patches[ip]
        if "edge" in spec:
            depth = spec.get("depth", 1)
            nodes = []
            n, m = patch.shape
            for d in range(depth):
                if spec["edge"] == "u0":
                    nodes += [(d, j) for j in range(m)]
                elif spec["edge"] == "u1":
                    nodes += [(n - 1 - d, j) for j in range(m)]
                elif spec["edge"] == "v0":
                    nodes += [(i, d) for i in range(n)]
                elif spec["edge"] == "v1":
                    nodes += [(i, m - 1 - d) for i in range(n)]
                else:
                    raise ModelError(f"unknown edge '{spec['edge']}'")
            gnodes = self._node_ids(ip, nodes)
        elif "indices" in spec:
            gnodes = self._node_ids(ip, spec["indices"])
        else:
            raise ModelError("constraint needs 'edge' or 'indices'")
        return [3 * g + c for g in np.unique(gnodes) for c in comps]

    def _add_load(self, spec):
        kind = spec["type"]
        target = spec.get("patch", "all")
        patches = self.model.patches
        plist = range(len(patches)) if target == "all" else [target]
        if kind == "point_cp":
            g = self._node_ids(spec["patch"], [spec["index"]])[0]
            self.f_ext[3 * g: 3 * g + 3] += np.asarray(spec["force"], float)
            return
        for ip in plist:
            vec = external_load(patches[ip], spec)
            ids = self.gids[self.off[ip]: self.off[ip + 1]]
            np.add.at(self.f_ext.reshape(-1, 3), ids, vec)

    def _monitor(self, spec):
        name = spec.get("name", "monitor")
        ip = spec["patch"]
        if "xi" in spec:
            N, _, _, sup = evaluate_points(self.model.patches[ip],
                                           np.asarray(spec["xi"], float)[None, :])
            ids = self.gids[self.off[ip] + sup[0]]
            weights = N[0]

            def extract(u, ids=ids, weights=weights):
                return weights @ u.reshape(-1, 3)[ids]
        else:
            g = self._node_ids(ip, [spec["index"]])[0]

            def extract(u, g=g):
                return u.reshape(-1, 3)[g].copy()
        return name, extract

    def monitor_values(self, u):
        return {name: fn(u) for name, fn in self.monitors}

    # -- assembly -----------------------------------------------------------
    def _index_patterns(self):
        if self._patterns is None:
            pats = []
            for kern, ids in self.kernels + self.strips:
                gdof = (3 * ids[kern.conn][:, :, None]
                        + np.arange(3)[None, None, :]).reshape(kern.nel, kern.nd)
                red = self.red[gdof]
                rows = np.repeat(red, kern.nd, axis=1).ravel()
                cols = np.tile(red, (1, kern.nd)).ravel()
                keep = (rows >= 0) & (cols >= 0)
                pats.append((gdof, rows[keep], cols[keep], keep))
            self._patterns = pats
        return self._patterns

    def assemble(self, u, need_tangent=True):
        """Internal force vector and (optionally) reduced tangent matrix.

        Returns (K_ff or None, R_int (n_dof,), pendings, n_plastic); the
        residual of the equilibrium system is R_int - lambda * f_ext.
        """
        R = np.zeros(self.n_dof)
        pend = []
        n_plastic = 0
        vals = []
        pats = self._index_patterns()
        for (kern, ids), pat in zip(self.kernels + self.strips, pats):
            ue = u.reshape(-1, 3)[ids]
            Re, Ke, pending, npl = kern.residual_and_tangent(
                ue, need_tangent=need_tangent)
            pend.append(pending)
            n_plastic += npl
            gdof, rows, cols, keep = pat
            np.add.at(R, gdof.ravel(), Re.ravel())
            if need_tangent:
                vals.append(Ke.reshape(kern.nel, -1).ravel()[keep])
        K = None
        if need_tangent:
            nf = self.free.size
            rows = np.concatenate([p[1] for p in pats])
            cols = np.concatenate([p[2] for p in pats])
            K = sp.coo_matrix((np.concatenate(vals), (rows, cols)),
                              shape=(nf, nf)).tocsc()
        return K, R, pend, n_plastic

    def commit(self, pendings):
        for (kern, _), pending in zip(self.kernels + self.strips, pendings):
            kern.commit(pending)

    def section_states(self):
        return [kern.state.copy() for kern, _ in self.kernels + self.strips]

    def restore(self, states):
        for (kern, _), st in zip(self.kernels + self.strips, states):
            kern.state = st

    def reactions(self, u, lam):
        _, R, _, _ = self.assemble(u, need_tangent=False)
        out = R - lam * self.f_ext
        out[self.free] = 0.0
        return out
