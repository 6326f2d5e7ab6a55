"""Bezier shell-element kernels.

A :class:`ShellKernel` owns the precomputed basis tables and reference
geometry of one patch and evaluates internal forces and consistent
tangents for all of its elements at once.  The constitutive side is
abstracted as a *section*: either through-thickness Gauss integration of
a 3D material under plane-stress enforcement, or the single bending
penalty entry of a strip.

Nothing here mutates committed state: material history and thickness
warm starts advance only through :meth:`ShellKernel.commit`.
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .errors import MaterialFailureError, ValidationError
from .materials import PlasticHistory, plane_stress_enforce
from .splines import gauss_rule, tabulate_edge, tabulate_patch, evaluate_points


class SectionState:
    """Committed per-point constitutive state of a section (may be empty)."""

    def __init__(self, history=None, lam3=None):
        self.history = history
        self.lam3 = lam3

    def copy(self):
        return SectionState(
            None if self.history is None else [h.copy() for h in self.history],
            None if self.lam3 is None else self.lam3.copy())


class ThicknessSection:
    """Through-thickness Gauss integration of a 3D material law.

    Integrates the condensed in-plane stress weighted by (1, xi3, xi3^2)
    over xi3 in [-t/2, t/2] to produce membrane/bending resultants and the
    coupled moduli blocks.
    """

    def __init__(self, material, thickness, n_gauss=3):
        self.material = material
        self.thickness = float(thickness)
        x, w = np.polynomial.legendre.leggauss(n_gauss)
        self.z = 0.5 * self.thickness * x
        self.wz = 0.5 * self.thickness * w

    def initial_state(self, n_points):
        hist = None
        if self.material.uses_history:
            hist = [PlasticHistory.initial(n_points) for _ in self.z]
        return SectionState(history=hist, lam3=np.ones((self.z.size, n_points)))

    def respond(self, eps, kap, state):
        """Resultants, integrated moduli blocks and pending state.

        Returns (n, m, D0, D1, D2, pending, n_plastic); the eng triples are
        local-frame, stress-like for n/m.
        """
        npts = eps.shape[0]
        n = np.zeros((npts, 3))
        m = np.zeros((npts, 3))
        D0 = np.zeros((npts, 3, 3))
        D1 = np.zeros((npts, 3, 3))
        D2 = np.zeros((npts, 3, 3))
        pend_hist = [] if state.history is not None else None
        pend_lam3 = np.empty_like(state.lam3)
        n_plastic = 0
        for k, (z, wz) in enumerate(zip(self.z, self.wz)):
            hist_k = state.history[k] if state.history is not None else None
            out = plane_stress_enforce(self.material, eps + z * kap,
                                       history=hist_k, lam3_init=state.lam3[k])
            n += wz * out.S_eng
            m += wz * z * out.S_eng
            D0 += wz * out.D_eng
            D1 += wz * z * out.D_eng
            D2 += wz * z * z * out.D_eng
            pend_lam3[k] = out.lam3
            if pend_hist is not None:
                pend_hist.append(out.history)
                n_plastic += int(np.count_nonzero(out.history.alpha > hist_k.alpha))
        return n, m, D0, D1, D2, SectionState(pend_hist, pend_lam3), n_plastic

    def energy(self, eps, kap, state):
        """Strain energy density integral (elastic or frozen history).

        Uses the plane-stress converged transverse strain; valid as an
        energy whenever the stress is hyperelastic in the strain (StVK,
        Neo-Hookean, or plasticity at fixed history).
        """
        W = np.zeros(eps.shape[0])
        for k, (z, wz) in enumerate(zip(self.z, self.wz)):
            hist_k = state.history[k] if state.history is not None else None
            out = plane_stress_enforce(self.material, eps + z * kap,
                                       history=hist_k, lam3_init=state.lam3[k])
            W += wz * self.material_energy(eps + z * kap, out.lam3, hist_k)
        return W

    def material_energy(self, eps_eng, lam3, hist):
        mat = self.material
        E = np.zeros((eps_eng.shape[0], 3, 3))
        E[:, 0, 0] = eps_eng[:, 0]
        E[:, 1, 1] = eps_eng[:, 1]
        E[:, 0, 1] = E[:, 1, 0] = 0.5 * eps_eng[:, 2]
        E[:, 2, 2] = 0.5 * (lam3 ** 2 - 1.0)
        name = type(mat).__name__
        if name == "StVenantKirchhoff":
            lam, mu = mat.params.lame, mat.params.shear
            tr = np.trace(E, axis1=1, axis2=2)
            return 0.5 * lam * tr ** 2 + mu * np.einsum("nij,nij->n", E, E)
        C = 2.0 * E + np.eye(3)
        detC = np.linalg.det(C)
        J = np.sqrt(detC)
        if name == "NeoHookean":
            mu, lam = mat.params.shear, mat.params.lame
            return (0.5 * mu * (np.trace(C, axis1=1, axis2=2) - 3.0)
                    - mu * np.log(J) + 0.25 * lam * (detC - 1.0 - 2.0 * np.log(J)))
        # J2 with frozen history: volumetric/deviatoric split energy
        G, K = mat.params.shear, mat.params.bulk
        Fb = np.linalg.cholesky(C).transpose(0, 2, 1) * (J ** (-1.0 / 3.0))[:, None, None]
        bbar = np.einsum("nij,njk,nlk->nil", Fb, hist.cp_inv, Fb)
        return (0.5 * K * (0.5 * (J ** 2 - 1.0) - np.log(J))
                + 0.5 * G * (np.trace(bbar, axis1=1, axis2=2) - 3.0))


class BendingStripSection:
    """Fictitious penalty section: single bending stiffness entry, no
    membrane response and no state."""

    def __init__(self, modulus, thickness):
        self.modulus = float(modulus)
        self.thickness = float(thickness)

    def initial_state(self, n_points):
        return SectionState()

    def respond(self, eps, kap, state):
        npts = eps.shape[0]
        D2 = np.zeros((npts, 3, 3))
        D2[:, 1, 1] = self.thickness ** 3 / 12.0 * self.modulus
        m = np.zeros((npts, 3))
        m[:, 1] = D2[:, 1, 1] * kap[:, 1]
        zero = np.zeros((npts, 3, 3))
        return np.zeros((npts, 3)), m, zero, zero, D2, SectionState(), 0

    def energy(self, eps, kap, state):
        return 0.5 * self.thickness ** 3 / 12.0 * self.modulus * kap[:, 1] ** 2


class ShellKernel:
    """Vectorized residual/tangent evaluation for one patch.

    All elements share the basis tables precomputed here; the reference
    configuration is immutable.  ``rule`` overrides the default
    (p+1) x (q+1) in-plane Gauss rule.
    """

    def __init__(self, patch, section, rule=None):
        self.patch = patch
        self.section = section
        p, q = patch.degrees
        if rule is None:
            rule = (gauss_rule(p + 1), gauss_rule(q + 1))
        tab = tabulate_patch(patch, rule[0], rule[1])
        self.nel = patch.n_elements
        self.ngp = tab["N"].shape[1]
        self.nloc = patch.n_loc
        self.nd = 3 * self.nloc
        B = self.nel * self.ngp
        self.N = tab["N"].reshape(B, self.nloc)
        self.dN = tab["dN"].reshape(B, self.nloc, 2)
        self.d2N = tab["d2N"].reshape(B, self.nloc, 3)
        self.conn = tab["conn"]
        coords = patch.ctrl.reshape(-1, 3)[self.conn]          # (nel, L, 3)
        self.coords = coords
        self.coords_g = np.repeat(coords, self.ngp, axis=0)     # (B, L, 3)
        self.ref = geo.reference_arrays(
            geo.config_arrays(self.N, self.dN, self.d2N, self.coords_g))
        self.wj = tab["wq"].reshape(B) * self.ref["j"]
        self.state = section.initial_state(B)

    # -- state ------------------------------------------------------------
    def commit(self, pending: SectionState):
        self.state = pending

    @property
    def n_gauss_total(self):
        return self.nel * self.ngp

    # -- kinematics -------------------------------------------------------
    def _deformed(self, ue):
        coords_def = self.coords_g + np.repeat(ue, self.ngp, axis=0)
        return geo.config_arrays(self.N, self.dN, self.d2N, coords_def)

    def strains(self, ue):
        defo = self._deformed(ue)
        eps, kap = geo.strain_arrays(self.ref, defo)
        return eps, kap, defo

    # -- section sweep ----------------------------------------------------
    def _section(self, ue):
        eps, kap, defo = self.strains(ue)
        try:
            n, m, D0, D1, D2, pending, n_plastic = self.section.respond(
                eps, kap, self.state)
        except MaterialFailureError as exc:
            raise MaterialFailureError(
                str(exc), location=self._locate(exc)) from exc
        return defo, eps, kap, n, m, (D0, D1, D2), pending, n_plastic

    def _locate(self, exc):
        return f"patch with {self.nel} elements ({self.ngp} gp/element)"

    # -- element quantities -------------------------------------------------
    def residual_and_tangent(self, ue, need_tangent=True):
        """Per-element internal force vectors and stiffness matrices.

        ``ue`` is (n_ctrl_patch, 3) gathered to (nel, L, 3) internally.
        Returns (R (nel, nd), K (nel, nd, nd) or None, pending, n_plastic).
        """
        ue_el = ue.reshape(-1, 3)[self.conn]
        defo, eps, kap, n, m, Dblocks, pending, n_plastic = self._section(ue_el)
        Beps, Bkap, cache = geo.variation_arrays(self.dN, self.d2N, defo)
        Q = self.ref["Q"]
        ntil = np.einsum("bqp,bq->bp", Q, n) * self.wj[:, None]
        mtil = np.einsum("bqp,bq->bp", Q, m) * self.wj[:, None]

        nd = self.nd
        Rg = (np.einsum("bp,bpla->bla", ntil, Beps)
              + np.einsum("bp,bpla->bla", mtil, Bkap)).reshape(
                  self.nel, self.ngp, nd).sum(axis=1)
        if not need_tangent:
            return Rg, None, pending, n_plastic

        # local-frame strain operators, stacked membrane/bending
        Bl = np.empty((self.nel * self.ngp, 6, nd))
        Bl[:, :3] = np.einsum("bpq,bqla->bpla", Q, Beps).reshape(-1, 3, nd)
        Bl[:, 3:] = np.einsum("bpq,bqla->bpla", Q, Bkap).reshape(-1, 3, nd)
        D0, D1, D2 = Dblocks
        Dblk = np.empty((self.nel * self.ngp, 6, 6))
        Dblk[:, :3, :3] = D0
        Dblk[:, :3, 3:] = Dblk[:, 3:, :3] = D1
        Dblk[:, 3:, 3:] = D2
        Dblk *= self.wj[:, None, None]

        K = np.zeros((self.nel, nd, nd))
        Bl_v = Bl.reshape(self.nel, self.ngp, 6, nd)
        Db_v = Dblk.reshape(self.nel, self.ngp, 6, 6)
        for g in range(self.ngp):
            Bg = Bl_v[:, g]
            K += Bg.transpose(0, 2, 1) @ (Db_v[:, g] @ Bg)
        # geometric part, per gauss point to bound memory
        idx = np.arange(self.nel) * self.ngp
        for g in range(self.ngp):
            rows = idx + g
            defo_g = {k: v[rows] for k, v in defo.items()}
            cache_g = {k: v[rows] for k, v in cache.items()}
            K += geo.geometric_stiffness(self.dN[rows], self.d2N[rows], defo_g,
                                         cache_g, ntil[rows], mtil[rows])
        return Rg, K, pending, n_plastic

    def internal_force(self, ue):
        R, _, pending, n_plastic = self.residual_and_tangent(ue, need_tangent=False)
        return R, pending, n_plastic

    def energy(self, ue):
        """Total strain energy (meaningful for elastic/frozen sections)."""
        ue_el = ue.reshape(-1, 3)[self.conn]
        eps, kap, _ = self.strains(ue_el)
        return float(np.sum(self.wj * self.section.energy(eps, kap, self.state)))

    # -- single-element views (testing/diagnostics) ------------------------
    def element_slice(self, eid):
        return slice(eid * self.ngp, (eid + 1) * self.ngp)


def element_internal_force(kernel: ShellKernel, ue, eid):
    """Local residual vector of one element."""
    R, _, _, _ = kernel.residual_and_tangent(ue, need_tangent=False)
    return R[eid]


def element_tangent(kernel: ShellKernel, ue, eid):
    """Local consistent stiffness (material + geometric) of one element."""
    _, K, _, _ = kernel.residual_and_tangent(ue)
    return K[eid]


def thickness_integrate(section: ThicknessSection, eps, kap, state=None):
    """Stress resultants at a batch of mid-surface points.

    Spec-facing wrapper: returns dict with n, m and the three integrated
    moduli blocks plus the trial state.
    """
    if state is None:
        state = section.initial_state(eps.shape[0])
    n, m, D0, D1, D2, pending, n_plastic = section.respond(eps, kap, state)
    return {"n": n, "m": m, "D0": D0, "D1": D1, "D2": D2,
            "state": pending, "n_plastic": n_plastic}


# ---------------------------------------------------------------------------
# consistent external loads (dead; evaluated on the reference surface)
# ---------------------------------------------------------------------------

def load_point_xi(patch, xi, force):
    """Consistent nodal loads of a concentrated force at a parametric point."""
    N, _, _, sup = evaluate_points(patch, np.asarray(xi, float).reshape(1, 2))
    out = np.zeros((patch.n_ctrl, 3))
    out[sup[0]] += N[0, :, None] * np.asarray(force, float)[None, :]
    return out


def load_edge(patch, edge, force_per_length, n_gauss=None):
    """Uniform line load on a boundary edge (per unit reference arc length)."""
    tab = tabulate_edge(patch, edge, n_gauss)
    ids = tab["ids"]
    pts = patch.ctrl.reshape(-1, 3)[ids]
    f = np.asarray(force_per_length, float)
    out = np.zeros((patch.n_ctrl, 3))
    nel, ng, nl = tab["N"].shape
    for e in range(nel):
        loc = tab["conn"][e]
        dx = np.einsum("gl,lx->gx", tab["dN"][e], pts[loc])
        jac = np.linalg.norm(dx, axis=1)
        w = tab["wq"][e] * jac
        out[ids[loc]] += np.einsum("g,gl->l", w, tab["N"][e])[:, None] * f[None, :]
    return out


def load_body(patch, force_per_area, tab=None):
    """Distributed dead load per unit reference mid-surface area."""
    if tab is None:
        tab = tabulate_patch(patch)
    f = np.asarray(force_per_area, float)
    nel, ngp, nloc = tab["N"].shape
    coords = patch.ctrl.reshape(-1, 3)[tab["conn"]]
    cfg = geo.config_arrays(tab["N"].reshape(-1, nloc),
                            tab["dN"].reshape(-1, nloc, 2),
                            tab["d2N"].reshape(-1, nloc, 3),
                            np.repeat(coords, ngp, axis=0))
    wj = tab["wq"].reshape(-1) * cfg["j"]
    out = np.zeros((patch.n_ctrl, 3))
    contrib = np.einsum("b,bl->bl", wj, tab["N"].reshape(-1, nloc))
    np.add.at(out, tab["conn"].repeat(ngp, axis=0).reshape(-1, nloc),
              contrib[..., None] * f[None, None, :])
    return out


def load_pressure(patch, magnitude, tab=None):
    """Uniform dead pressure along the reference normal (positive = +G3)."""
    if tab is None:
        tab = tabulate_patch(patch)
    nel, ngp, nloc = tab["N"].shape
    coords = patch.ctrl.reshape(-1, 3)[tab["conn"]]
    cfg = geo.config_arrays(tab["N"].reshape(-1, nloc),
                            tab["dN"].reshape(-1, nloc, 2),
                            tab["d2N"].reshape(-1, nloc, 3),
                            np.repeat(coords, ngp, axis=0))
    wj = tab["wq"].reshape(-1) * cfg["j"]
    out = np.zeros((patch.n_ctrl, 3))
    contrib = (wj[:, None] * tab["N"].reshape(-1, nloc))[..., None] \
        * (magnitude * cfg["g3"])[:, None, :]
    np.add.at(out, tab["conn"].repeat(ngp, axis=0).reshape(-1, nloc), contrib)
    return out


def external_load(patch, spec):
    """Dispatch a declarative load spec to the consistent-load builders."""
    kind = spec["type"]
    if kind == "point_xi":
        return load_point_xi(patch, spec["xi"], spec["force"])
    if kind == "edge":
        return load_edge(patch, spec["edge"], spec["force_per_length"])
    if kind == "body":
        return load_body(patch, spec["force_per_area"])
    if kind == "pressure":
        return load_pressure(patch, spec["magnitude"])
    raise ValidationError(f"unknown load type '{kind}'")
