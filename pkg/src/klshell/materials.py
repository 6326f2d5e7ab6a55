"""3D constitutive models with nested zero-transverse-stress enforcement.

Three models are provided: St. Venant-Kirchhoff, a compressible
Neo-Hookean law, and multiplicative finite-strain J2 plasticity with
linear isotropic hardening integrated by a radial return on the inverse
plastic right Cauchy-Green tensor.

Everything is batched: material points are the leading array axis. All
strain/stress tensors live in the per-point local Cartesian frame where
index 2 (the third axis) is the thickness direction; the plane-stress
driver iterates C33 until S33 vanishes and statically condenses the
moduli to the in-plane block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MaterialFailureError, ValidationError

I3 = np.eye(3)
# fourth-order identities: II[i,j,k,l] = d_ik d_jl symmetrized, IxI = d_ij d_kl
II_SYM = 0.5 * (np.einsum("ik,jl->ijkl", I3, I3) + np.einsum("il,jk->ijkl", I3, I3))
IXI = np.einsum("ij,kl->ijkl", I3, I3)
SQ23 = np.sqrt(2.0 / 3.0)

_PAIRS = ((0, 0), (1, 1), (0, 1))


@dataclass(frozen=True)
class ElasticParams:
    """Isotropic elastic constants; derived moduli are computed once."""

    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0:
            raise ValidationError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValidationError("Poisson ratio must lie in (-1, 0.5)")

    @property
    def shear(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def bulk(self):
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def lame(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @classmethod
    def from_lame(cls, mu, lam):
        E = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
        nu = lam / (2.0 * (lam + mu))
        return cls(E, nu)


@dataclass(frozen=True)
class HardeningLaw:
    """Linear isotropic hardening k(a) = yield_stress + modulus * a."""

    yield_stress: float
    modulus: float = 0.0

    def __post_init__(self):
        if self.yield_stress <= 0:
            raise ValidationError("yield stress must be positive")
        if self.modulus < 0:
            raise ValidationError("hardening modulus must be nonnegative")

    def k(self, alpha):
        return self.yield_stress + self.modulus * np.asarray(alpha)

    def dk(self, alpha):
        return np.full_like(np.asarray(alpha, dtype=float), self.modulus)


class PlasticHistory:
    """Per-point inverse plastic right Cauchy-Green tensor and equivalent
    plastic strain. Initialized to the identity / zero (virgin state)."""

    __slots__ = ("cp_inv", "alpha")

    def __init__(self, cp_inv, alpha):
        self.cp_inv = cp_inv
        self.alpha = alpha

    @classmethod
    def initial(cls, n):
        return cls(np.tile(I3, (n, 1, 1)), np.zeros(n))

    def copy(self):
        return PlasticHistory(self.cp_inv.copy(), self.alpha.copy())

    def take(self, idx):
        return PlasticHistory(self.cp_inv[idx], self.alpha[idx])


# ---------------------------------------------------------------------------
# small batched tensor helpers
# ---------------------------------------------------------------------------

def _det3(A):
    return (A[:, 0, 0] * (A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 1])
            - A[:, 0, 1] * (A[:, 1, 0] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 0])
            + A[:, 0, 2] * (A[:, 1, 0] * A[:, 2, 1] - A[:, 1, 1] * A[:, 2, 0]))


def _inv3(A):
    return np.linalg.inv(A)


def _sym_dyad(A, B):
    """0.5 (A x B + B x A) on the outer (major) slots."""
    return 0.5 * (np.einsum("nij,nkl->nijkl", A, B) + np.einsum("nij,nkl->nijkl", B, A))


def _odot(A):
    """(A . A) fourth-order symmetric product: 1/2 (Aik Ajl + Ail Ajk)."""
    return 0.5 * (np.einsum("nik,njl->nijkl", A, A) + np.einsum("nil,njk->nijkl", A, A))


def _pull_back(c_spatial, Finv):
    """Material moduli from Kirchhoff spatial moduli: all four legs by F^-1."""
    c = np.einsum("nijkl,nLl->nijkL", c_spatial, Finv)
    c = np.einsum("nijkL,nKk->nijKL", c, Finv)
    c = np.einsum("nijKL,nJj->niJKL", c, Finv)
    return np.einsum("niJKL,nIi->nIJKL", c, Finv)


def sqrt_spd_inplane(C):
    """Symmetric square root of C with block structure (2x2 in-plane, C33).

    Returns (F, Finv, J) for F = sqrt(C); relies on C[:, :2, 2] = 0.
    """
    M = C[:, :2, :2]
    detM = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2
    if np.any(detM <= 0) or np.any(C[:, 2, 2] <= 0):
        raise DomainError("right Cauchy-Green tensor not positive definite")
    s = np.sqrt(detM)
    t = np.sqrt(M[:, 0, 0] + M[:, 1, 1] + 2.0 * s)
    F = np.zeros_like(C)
    F[:, :2, :2] = (M + s[:, None, None] * np.eye(2)) / t[:, None, None]
    lam3 = np.sqrt(C[:, 2, 2])
    F[:, 2, 2] = lam3
    Finv = np.zeros_like(C)
    Finv[:, 0, 0] = F[:, 1, 1]
    Finv[:, 1, 1] = F[:, 0, 0]
    Finv[:, 0, 1] = -F[:, 0, 1]
    Finv[:, 1, 0] = -F[:, 1, 0]
    Finv[:, :2, :2] /= (F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] ** 2)[:, None, None]
    Finv[:, 2, 2] = 1.0 / lam3
    J = s * lam3
    return F, Finv, J


# ---------------------------------------------------------------------------
# elastic models
# ---------------------------------------------------------------------------

def stvk_response(E_green, params: ElasticParams):
    """2nd Piola-Kirchhoff stress and constant isotropic moduli.

    ``E_green`` is (n, 3, 3) or (3, 3); S = lam tr(E) I + 2 mu E.
    """
    single = E_green.ndim == 2
    E = np.atleast_3d(E_green.reshape(-1, 3, 3))
    lam, mu = params.lame, params.shear
    tr = np.trace(E, axis1=1, axis2=2)
    S = lam * tr[:, None, None] * I3 + 2.0 * mu * E
    CC = np.broadcast_to(lam * IXI + 2.0 * mu * II_SYM, (E.shape[0], 3, 3, 3, 3))
    if single:
        return S[0], CC[0]
    return S, CC


def neo_hookean_response(C=None, params: ElasticParams = None, F=None):
    """Compressible Neo-Hookean law.

    Strain energy mu/2 (tr C - 3) - mu ln J + lam/4 (J^2 - 1 - 2 ln J);
    returns a dict with S, material moduli CC, J and (when F is given)
    Kirchhoff and Cauchy stresses.
    """
    if C is None:
        single = F.ndim == 2
        F = F.reshape(-1, 3, 3)
        C = np.einsum("nki,nkj->nij", F, F)
    else:
        single = C.ndim == 2
        C = C.reshape(-1, 3, 3)
    detC = _det3(C)
    if np.any(detC <= 0):
        raise DomainError("inverted state: det C <= 0")
    J = np.sqrt(detC)
    Cinv = _inv3(C)
    mu, lam = params.shear, params.lame
    J2m1 = detC - 1.0
    S = mu * (I3[None] - Cinv) + 0.5 * lam * J2m1[:, None, None] * Cinv
    CC = (lam * detC[:, None, None, None, None] * np.einsum("nij,nkl->nijkl", Cinv, Cinv)
          - (lam * J2m1 - 2.0 * mu)[:, None, None, None, None] * _odot(Cinv))
    out = {"S": S, "CC": CC, "J": J}
    if F is not None:
        F = F.reshape(-1, 3, 3)
        tau = np.einsum("nij,njk,nlk->nil", F, S, F)
        out["tau"] = tau
        out["sigma"] = tau / J[:, None, None]
    if single:
        out = {k: v[0] for k, v in out.items()}
    return out


# ---------------------------------------------------------------------------
# finite-strain J2 plasticity
# ---------------------------------------------------------------------------

@dataclass
class MaterialResponse:
    """Return-mapping output at a batch of material points."""

    tau_vol: np.ndarray
    tau_dev: np.ndarray
    sigma: np.ndarray
    S: np.ndarray                 # pulled-back 2nd Piola-Kirchhoff stress
    J: np.ndarray
    plastic: np.ndarray           # bool mask
    dgamma: np.ndarray
    tau_dev_trial: np.ndarray
    trial_norm: np.ndarray        # ||tau_dev_trial||
    trial_trace: np.ndarray       # tr(bbar_trial)
    n_trial: np.ndarray
    spatial_moduli: np.ndarray    # Kirchhoff-rate spatial tangent
    material_moduli: np.ndarray   # dS/dE consistent tangent

    @property
    def tau(self):
        return self.tau_vol + self.tau_dev


def _solve_return_scalar(phi_tr, trb, alpha_n, G, hardening, tol=1e-12, maxit=50):
    """Safeguarded Newton for the scalar return equation.

    g(x) = phi_tr - sqrt(2/3) [k(a + sqrt(2/3) x) - k(a)] - 2/3 x G trb,
    monotonically decreasing with g(0) = phi_tr > 0; the root is bracketed
    by [0, phi_tr / (2/3 G trb)].
    """
    hi = phi_tr / ((2.0 / 3.0) * G * trb)
    lo = np.zeros_like(phi_tr)
    x = np.zeros_like(phi_tr)
    scale = phi_tr + SQ23 * hardening.k(alpha_n)

    def g(x):
        return (phi_tr
                - SQ23 * (hardening.k(alpha_n + SQ23 * x) - hardening.k(alpha_n))
                - (2.0 / 3.0) * x * G * trb)

    for _ in range(maxit):
        gx = g(x)
        done = np.abs(gx) <= tol * scale
        if np.all(done):
            break
        lo = np.where(gx > 0, np.maximum(lo, x), lo)
        hi = np.where(gx < 0, np.minimum(hi, x), hi)
        dg = -(2.0 / 3.0) * (hardening.dk(alpha_n + SQ23 * x) + G * trb)
        xn = x - gx / dg
        outside = (xn <= lo) | (xn >= hi)
        x = np.where(done, x, np.where(outside, 0.5 * (lo + hi), xn))
    else:
        raise MaterialFailureError("return-mapping scalar equation did not converge")
    if np.any(x < 0):
        raise MaterialFailureError("negative plastic multiplier")
    return x


def j2_return_mapping(F, history: PlasticHistory, params: ElasticParams,
                      hardening: HardeningLaw, with_tangent=True):
    """Radial return for multiplicative J2 plasticity.

    Trial state from bbar = Fbar Cp^-1 Fbar^T with Fbar = J^(-1/3) F; on
    yielding the scalar equation fixes the plastic multiplier and the
    deviatoric Kirchhoff stress, inverse plastic tensor and equivalent
    plastic strain are updated along the trial flow direction.

    Returns (MaterialResponse, PlasticHistory). The input history is not
    modified (trial/commit is the caller's responsibility).
    """
    single = F.ndim == 2
    F = F.reshape(-1, 3, 3)
    G, K = params.shear, params.bulk
    J = _det3(F)
    if np.any(J <= 0):
        raise DomainError("det F <= 0")
    Fbar = F * (J ** (-1.0 / 3.0))[:, None, None]
    bbar = np.einsum("nij,njk,nlk->nil", Fbar, history.cp_inv, Fbar)
    trb = np.trace(bbar, axis1=1, axis2=2)
    tau_dev_tr = G * (bbar - (trb / 3.0)[:, None, None] * I3)
    norm_tr = np.linalg.norm(tau_dev_tr, axis=(1, 2))
    tau_vol = 0.5 * K * (J ** 2 - 1.0)[:, None, None] * I3

    phi_tr = norm_tr - SQ23 * hardening.k(history.alpha)
    plastic = phi_tr > 0.0

    dgamma = np.zeros_like(J)
    tau_dev = tau_dev_tr.copy()
    cp_inv = history.cp_inv.copy()
    alpha = history.alpha.copy()
    n_tr = np.zeros_like(tau_dev_tr)
    if np.any(plastic):
        idx = np.nonzero(plastic)[0]
        dg = _solve_return_scalar(phi_tr[idx], trb[idx], history.alpha[idx],
                                  G, hardening)
        dgamma[idx] = dg
        n_p = tau_dev_tr[idx] / norm_tr[idx, None, None]
        n_tr[idx] = n_p
        fac = (2.0 / 3.0) * dg * G * trb[idx]
        tau_dev[idx] = tau_dev_tr[idx] - fac[:, None, None] * n_p
        Finv_p = _inv3(F[idx])
        flow = np.einsum("nij,njk,nlk->nil", Finv_p, n_p, Finv_p)
        upd = history.cp_inv[idx] - \
            ((2.0 / 3.0) * dg * trb[idx])[:, None, None] * flow
        # the linearized flow update drifts det(Cp^-1) at O(dgamma); project
        # back onto the unimodular manifold the deviatoric flow lives on
        upd *= (_det3(upd) ** (-1.0 / 3.0))[:, None, None]
        cp_inv[idx] = upd
        alpha[idx] = history.alpha[idx] + SQ23 * dg

    tau = tau_vol + tau_dev
    Finv = _inv3(F)
    sigma = tau / J[:, None, None]
    S = np.einsum("nij,njk,nlk->nil", Finv, tau, Finv)

    spatial = material = None
    if with_tangent:
        spatial = _j2_spatial_tangent(J, trb, tau_dev_tr, norm_tr, n_tr, dgamma,
                                      plastic, alpha, G, K, hardening)
        material = _pull_back(spatial, Finv)

    resp = MaterialResponse(
        tau_vol=tau_vol, tau_dev=tau_dev, sigma=sigma, S=S, J=J,
        plastic=plastic, dgamma=dgamma, tau_dev_trial=tau_dev_tr,
        trial_norm=norm_tr, trial_trace=trb, n_trial=n_tr,
        spatial_moduli=spatial, material_moduli=material)
    return resp, PlasticHistory(cp_inv, alpha)


def _j2_spatial_tangent(J, trb, tau_dev_tr, norm_tr, n_tr, dgamma, plastic,
                        alpha_new, G, K, hardening):
    """Kirchhoff-rate consistent tangent: trial elasticity minus the
    scaling-factor corrections on plastic points."""
    N = J.size
    Gbar = G * trb / 3.0
    J2 = J ** 2
    c_vol = K * (J2[:, None, None, None, None] * IXI
                 - (J2 - 1.0)[:, None, None, None, None] * II_SYM)
    c_dev = (2.0 * Gbar[:, None, None, None, None] * (II_SYM - IXI / 3.0)
             - (2.0 / 3.0) * (np.einsum("nij,kl->nijkl", tau_dev_tr, I3)
                              + np.einsum("ij,nkl->nijkl", I3, tau_dev_tr)))
    c = c_vol + c_dev
    if np.any(plastic):
        idx = np.nonzero(plastic)[0]
        gb = Gbar[idx]
        nt = n_tr[idx]
        xi0 = 1.0 + hardening.dk(alpha_new[idx]) / (3.0 * gb)
        xi1 = (1.0 - 1.0 / xi0) * (2.0 / 3.0) * (norm_tr[idx] / gb) * dgamma[idx]
        xi2 = 2.0 * gb * dgamma[idx] / norm_tr[idx]
        xi3 = 1.0 / xi0 - xi2 + xi1
        # exact linearization of the radial return; verified against finite
        # differences of the full update (see tests)
        xi4 = (1.0 / xi0 - xi2) * norm_tr[idx] / gb
        n2 = np.einsum("nij,njk->nik", nt, nt)
        devn2 = n2 - (np.trace(n2, axis1=1, axis2=2) / 3.0)[:, None, None] * I3
        c[idx] = (c_vol[idx]
                  + c_dev[idx] * (1.0 - xi2)[:, None, None, None, None]
                  - (2.0 * gb * xi3)[:, None, None, None, None]
                  * np.einsum("nij,nkl->nijkl", nt, nt)
                  - (2.0 * gb * xi4)[:, None, None, None, None]
                  * np.einsum("nij,nkl->nijkl", nt, devn2))
    return c


def consistent_tangent(response: MaterialResponse, params: ElasticParams,
                       hardening: HardeningLaw, history_new: PlasticHistory):
    """Algorithmic Kirchhoff-rate moduli from a converged return-mapping call."""
    return _j2_spatial_tangent(
        response.J, response.trial_trace, response.tau_dev_trial,
        response.trial_norm, response.n_trial, response.dgamma,
        response.plastic, history_new.alpha, params.shear, params.bulk, hardening)


class StVenantKirchhoff:
    """Material adapter used by the plane-stress driver."""

    uses_history = False

    def __init__(self, params: ElasticParams):
        self.params = params

    def pk2_moduli(self, Ebar, history=None):
        S, CC = stvk_response(Ebar, self.params)
        return S, CC, None


class NeoHookean:
    uses_history = False

    def __init__(self, params: ElasticParams):
        self.params = params

    def pk2_moduli(self, Ebar, history=None):
        C = 2.0 * Ebar + I3[None]
        out = neo_hookean_response(C=C, params=self.params)
        return out["S"], out["CC"], None


class J2Plasticity:
    """Finite-strain J2 adapter; builds F = sqrt(C) from the layer strain.

    The symmetric square root fixes the rotation-free deformation gradient
    consistent with the local-frame strain; isotropy makes the response
    independent of that choice.
    """

    uses_history = True

    def __init__(self, params: ElasticParams, hardening: HardeningLaw):
        self.params = params
        self.hardening = hardening

    def pk2_moduli(self, Ebar, history: PlasticHistory):
        C = 2.0 * Ebar + I3[None]
        F, _, _ = sqrt_spd_inplane(C)
        resp, new_hist = j2_return_mapping(F, history, self.params, self.hardening)
        return resp.S, resp.material_moduli, new_hist


# ---------------------------------------------------------------------------
# plane-stress enforcement
# ---------------------------------------------------------------------------

@dataclass
class CondensedState:
    """Plane-stress converged output at a batch of material points."""

    S_eng: np.ndarray       # [S11, S22, S12]
    D_eng: np.ndarray       # condensed in-plane moduli, eng Voigt (3, 3)
    lam3: np.ndarray
    history: PlasticHistory | None
    iterations: int
    S_full: np.ndarray


def plane_stress_enforce(material, eps_eng, history=None, lam3_init=None,
                         tol_rel=1e-8, tol_abs=None, max_iter=30):
    """Iterate C33 until the transverse normal stress vanishes.

    ``eps_eng`` (n, 3) holds the in-plane Green-Lagrange strain in eng
    convention [E11, E22, 2 E12] in the local frame (membrane plus
    curvature contribution at the current thickness coordinate).  The
    Newton update is dC33 = -2 S33 / C3333; afterwards the moduli are
    statically condensed to the in-plane block.
    """
    n = eps_eng.shape[0]
    if lam3_init is None:
        lam3_init = np.ones(n)
    if tol_abs is None:
        tol_abs = 1e-12 * material.params.E
    C33 = np.clip(lam3_init, 1e-3, None) ** 2

    E = np.zeros((n, 3, 3))
    E[:, 0, 0] = eps_eng[:, 0]
    E[:, 1, 1] = eps_eng[:, 1]
    E[:, 0, 1] = E[:, 1, 0] = 0.5 * eps_eng[:, 2]

    clamped = np.zeros(n, dtype=bool)
    S = CC = hist = None
    for it in range(1, max_iter + 1):
        E[:, 2, 2] = 0.5 * (C33 - 1.0)
        S, CC, hist = material.pk2_moduli(E, history)
        S33 = S[:, 2, 2]
        norm = np.linalg.norm(S, axis=(1, 2))
        done = np.abs(S33) <= tol_abs + tol_rel * norm
        dC33 = -2.0 * S33 / CC[:, 2, 2, 2, 2]
        C33 = C33 + dC33
        bad = C33 <= 0
        if np.any(bad):
            if np.any(bad & clamped):
                raise MaterialFailureError("thickness iteration produced C33 <= 0 twice")
            clamped |= bad
            C33 = np.where(bad, 1e-6, C33)
        if np.all(done):
            # one extra evaluation at the corrected C33 keeps the returned
            # state consistent and half a Newton step tighter than the tol
            E[:, 2, 2] = 0.5 * (C33 - 1.0)
            S, CC, hist = material.pk2_moduli(E, history)
            break
    else:
        raise MaterialFailureError(
            f"plane-stress iteration did not converge in {max_iter} iterations")

    C3333 = CC[:, 2, 2, 2, 2]
    D = np.empty((n, 3, 3))
    Sv = np.empty((n, 3))
    for a, (i, j) in enumerate(_PAIRS):
        Sv[:, a] = S[:, i, j]
        for b, (k, l) in enumerate(_PAIRS):
            D[:, a, b] = CC[:, i, j, k, l] - CC[:, i, j, 2, 2] * CC[:, 2, 2, k, l] / C3333
    return CondensedState(S_eng=Sv, D_eng=D, lam3=np.sqrt(C33), history=hist,
                          iterations=it, S_full=S)
