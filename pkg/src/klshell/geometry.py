"""Mid-surface differential geometry and strain kinematics.

The assembly-facing entry points are batched: every function takes flat
arrays whose leading axis enumerates quadrature points (possibly across many
elements) and returns arrays with the same leading axis.  Thin dataclass
wrappers expose the same math for a single point, which is what the tests
and diagnostics use.

Conventions used throughout:

* symmetric in-plane pairs are ordered (11, 22, 12);
* "eng" triples are strain-like vectors [t11, t22, 2*t12] or stress-like
  vectors [s11, s22, s12] so that stress . strain is the full contraction;
* curvature follows b_ab = 1/2 (g_a . g3,b + g_b . g3,a), evaluated as
  -x,ab . g3 which is identical for a smooth surface patch;
* the local Cartesian frame is built from the reference configuration only
  and reused for deformed components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DomainError

PAIRS = ((0, 0), (1, 1), (0, 1))


# ---------------------------------------------------------------------------
# batched configuration
# ---------------------------------------------------------------------------

def config_arrays(N, dN, d2N, coords, check=True):
    """Surface quantities at a batch of points.

    Parameters: basis tables (B, L), (B, L, 2), (B, L, 3) and supported
    control coordinates (B, L, 3).  Returns a dict with tangents ``g``
    (B, 2, 3), second-derivative vectors ``xab`` (B, 3, 3), unit normal
    ``g3``, area jacobian ``j``, metric ``gab`` and curvature pairs ``b``.
    """
    g = np.einsum("bld,blx->bdx", dN, coords)
    xab = np.einsum("blp,blx->bpx", d2N, coords)
    ghat = np.cross(g[:, 0], g[:, 1])
    j = np.linalg.norm(ghat, axis=-1)
    if check:
        scale = np.linalg.norm(g[:, 0], axis=-1) * np.linalg.norm(g[:, 1], axis=-1)
        bad = j <= 1e-14 * scale
        if np.any(bad):
            raise DegenerateGeometryError(
                f"degenerate surface tangents at {int(np.count_nonzero(bad))} points")
    g3 = ghat / j[:, None]
    gab = np.einsum("bdx,bex->bde", g, g)
    b = -np.einsum("bpx,bx->bp", xab, g3)
    return {"g": g, "xab": xab, "ghat": ghat, "j": j, "g3": g3, "gab": gab, "b": b,
            "pos": np.einsum("bl,blx->bx", N, coords)}


def normal_derivatives(cfg):
    """d g3 / d xi^alpha, shape (B, 2, 3)."""
    g1, g2 = cfg["g"][:, 0], cfg["g"][:, 1]
    xab = cfg["xab"]
    dghat = np.stack([
        np.cross(xab[:, 0], g2) + np.cross(g1, xab[:, 2]),
        np.cross(xab[:, 2], g2) + np.cross(g1, xab[:, 1]),
    ], axis=1)
    g3 = cfg["g3"]
    proj = np.einsum("bax,bx->ba", dghat, g3)
    return (dghat - proj[..., None] * g3[:, None, :]) / cfg["j"][:, None, None]


def reference_arrays(cfg):
    """Extend a configuration with dual basis, local frame and transform.

    Adds ``Ginv``, ``Gdual`` (B, 2, 3), orthonormal ``frame`` rows
    (E1, E2, E3), and ``Q`` (B, 3, 3) mapping curvilinear eng triples to
    local-Cartesian eng triples.
    """
    gab = cfg["gab"]
    det = gab[:, 0, 0] * gab[:, 1, 1] - gab[:, 0, 1] ** 2
    Ginv = np.empty_like(gab)
    Ginv[:, 0, 0] = gab[:, 1, 1]
    Ginv[:, 1, 1] = gab[:, 0, 0]
    Ginv[:, 0, 1] = Ginv[:, 1, 0] = -gab[:, 0, 1]
    Ginv /= det[:, None, None]
    gdual = np.einsum("bde,bex->bdx", Ginv, cfg["g"])

    e1 = cfg["g"][:, 0] / np.linalg.norm(cfg["g"][:, 0], axis=-1)[:, None]
    raw = cfg["g"][:, 1] - np.einsum("bx,bx->b", cfg["g"][:, 1], e1)[:, None] * e1
    e2 = raw / np.linalg.norm(raw, axis=-1)[:, None]
    frame = np.stack([e1, e2, cfg["g3"]], axis=1)

    T = np.einsum("bgx,bax->bga", frame[:, :2], gdual)
    Q = np.empty((gab.shape[0], 3, 3))
    Q[:, 0, 0] = T[:, 0, 0] ** 2
    Q[:, 0, 1] = T[:, 0, 1] ** 2
    Q[:, 0, 2] = T[:, 0, 0] * T[:, 0, 1]
    Q[:, 1, 0] = T[:, 1, 0] ** 2
    Q[:, 1, 1] = T[:, 1, 1] ** 2
    Q[:, 1, 2] = T[:, 1, 0] * T[:, 1, 1]
    Q[:, 2, 0] = 2.0 * T[:, 0, 0] * T[:, 1, 0]
    Q[:, 2, 1] = 2.0 * T[:, 0, 1] * T[:, 1, 1]
    Q[:, 2, 2] = T[:, 0, 0] * T[:, 1, 1] + T[:, 0, 1] * T[:, 1, 0]

    out = dict(cfg)
    out.update({"Ginv": Ginv, "Gdual": gdual, "frame": frame, "T": T, "Q": Q})
    return out


def eng_pairs(pairs):
    """[t11, t22, t12] pair values -> strain-like eng triple."""
    out = pairs.copy()
    out[..., 2] *= 2.0
    return out


def strain_arrays(ref, defo):
    """Membrane and bending strain eng triples in the local frame."""
    eps_raw = 0.5 * eng_pairs(_gab_pairs(defo["gab"]) - _gab_pairs(ref["gab"]))
    kap_raw = eng_pairs(defo["b"] - ref["b"])
    Q = ref["Q"]
    return np.einsum("bpq,bq->bp", Q, eps_raw), np.einsum("bpq,bq->bp", Q, kap_raw)


def _gab_pairs(gab):
    return np.stack([gab[:, 0, 0], gab[:, 1, 1], gab[:, 0, 1]], axis=-1)


# ---------------------------------------------------------------------------
# batched variations
# ---------------------------------------------------------------------------

def variation_arrays(dN, d2N, defo):
    """First variations of strains w.r.t. nodal displacements.

    Returns raw (curvilinear) eng B-operators ``Beps``, ``Bkap`` of shape
    (B, 3, L, 3) plus a cache with the normal-vector variations reused by
    the second-variation kernel.
    """
    g1, g2 = defo["g"][:, 0], defo["g"][:, 1]
    g3, j, xab = defo["g3"], defo["j"], defo["xab"]
    B, L = dN.shape[:2]
    eye = np.eye(3)

    Beps = np.empty((B, 3, L, 3))
    Beps[:, 0] = dN[:, :, 0, None] * g1[:, None, :]
    Beps[:, 1] = dN[:, :, 1, None] * g2[:, None, :]
    Beps[:, 2] = dN[:, :, 0, None] * g2[:, None, :] + dN[:, :, 1, None] * g1[:, None, :]

    cross1 = np.cross(eye[None, :, :], g2[:, None, :])   # e_a x g2
    cross2 = np.cross(g1[:, None, :], eye[None, :, :])   # g1 x e_a
    dghat = (dN[:, :, 0, None, None] * cross1[:, None] +
             dN[:, :, 1, None, None] * cross2[:, None])  # (B, L, 3dof, 3vec)
    dj = np.einsum("blax,bx->bla", dghat, g3)
    dg3 = (dghat - dj[..., None] * g3[:, None, None, :]) / j[:, None, None, None]

    db = -(d2N[:, :, None, :].transpose(0, 3, 1, 2) * g3[:, None, None, :]
           + np.einsum("bpx,blax->bpla", xab, dg3))
    Bkap = db.copy()
    Bkap[:, 2] *= 2.0
    cache = {"dghat": dghat, "dj": dj, "dg3": dg3}
    return Beps, Bkap, cache


def geometric_stiffness(dN, d2N, defo, cache, ntil, mtil):
    """Resultant-contracted second variations: sum_ab (n d2eps + m d2kap).

    ``ntil``/``mtil`` are stress-like triples in the *curvilinear* basis
    (already pulled back through Q^T and scaled by the quadrature weight).
    Returns (B, 3L, 3L).
    """
    B, L = dN.shape[:2]
    g3, j, xab = defo["g3"], defo["j"], defo["xab"]
    dghat, dj, dg3 = cache["dghat"], cache["dj"], cache["dg3"]
    nd = 3 * L
    eye = np.eye(3)

    # membrane part: (dN . Nmat . dN) on the displacement-component diagonal
    Nmat = np.empty((B, 2, 2))
    Nmat[:, 0, 0] = ntil[:, 0]
    Nmat[:, 1, 1] = ntil[:, 1]
    Nmat[:, 0, 1] = Nmat[:, 1, 0] = ntil[:, 2]
    A = dN @ Nmat @ dN.transpose(0, 2, 1)
    K = A[:, :, None, :, None] * eye[None, None, :, None, :]

    # bending part, contracted against mp = [m11, m22, 2 m12]
    mp = mtil.copy()
    mp[:, 2] *= 2.0
    M2 = (d2N @ mp[:, :, None])[..., 0]            # (B, L)
    w = np.einsum("bp,bpx->bx", mp, xab)

    # dg3 arranged (B, comp a, ctrl m, dof c) for the outer products
    dg3_t = dg3.transpose(0, 3, 1, 2)
    term = M2[:, :, None, None, None] * dg3_t[:, None, :, :, :]
    K -= term
    K -= term.transpose(0, 3, 4, 1, 2)

    # w . d2(g3) expanded on the product structure of d2(ghat)
    wg = np.einsum("bx,bx->b", w, g3)
    v = w - wg[:, None] * g3
    S = (dN[:, :, None, 0] * dN[:, None, :, 1]
         - dN[:, None, :, 0] * dN[:, :, None, 1])      # (B, L, L) antisym
    Vv = _cross_contraction(v)
    wdg = (dghat @ w[:, None, :, None])[..., 0]        # (B, L, 3)

    K -= (S[:, :, None, :, None] * Vv[:, None, :, None, :]
          / j[:, None, None, None, None])
    K = K.reshape(B, nd, nd)

    # remaining terms are sums of outer products: one fused batched matmul
    dj_f = dj.reshape(B, nd, 1)
    wdg_f = wdg.reshape(B, nd, 1)
    dghat_f = dghat.reshape(B, nd, 3)
    j2 = (j * j)[:, None, None]
    wgj = (wg[:, None, None] / j2)
    U = np.concatenate([wdg_f / j2, dj_f / j2, wgj * dghat_f,
                        -3.0 * wgj * dj_f], axis=2)
    V = np.concatenate([dj_f, wdg_f, dghat_f, dj_f], axis=2)
    K += U @ V.transpose(0, 2, 1)
    return K


def _cross_contraction(v):
    """V[a, c] = v . (e_a x e_c) for each batch row."""
    B = v.shape[0]
    V = np.zeros((B, 3, 3))
    V[:, 0, 1] = v[:, 2]
    V[:, 1, 0] = -v[:, 2]
    V[:, 0, 2] = -v[:, 1]
    V[:, 2, 0] = v[:, 1]
    V[:, 1, 2] = v[:, 0]
    V[:, 2, 1] = -v[:, 0]
    return V


def second_variation_arrays(dN, d2N, defo, cache):
    """Full second variations of the curvilinear strain pairs.

    Returns (d2eps, d2b) with shapes (B, 3, 3L, 3L), eng convention on the
    pair axis.  Quadratically sized; meant for single points or small
    batches (the assembly uses :func:`geometric_stiffness` instead).
    """
    B, L = dN.shape[:2]
    nd = 3 * L
    eye = np.eye(3)
    g3, j, xab = defo["g3"], defo["j"], defo["xab"]
    dghat, dj, dg3 = cache["dghat"], cache["dj"], cache["dg3"]

    d2eps = np.zeros((B, 3, L, 3, L, 3))
    for p, (al, be) in enumerate(PAIRS):
        term = np.einsum("bl,bm,ac->blamc", dN[:, :, al], dN[:, :, be], eye)
        d2eps[:, p] = 0.5 * (term + term.transpose(0, 3, 4, 1, 2))
    d2eps[:, 2] *= 2.0

    S = (dN[:, :, None, 0] * dN[:, None, :, 1]
         - dN[:, None, :, 0] * dN[:, :, None, 1])
    epsten = np.zeros((3, 3, 3))
    for a in range(3):
        for b in range(3):
            epsten[a, b] = np.cross(eye[a], eye[b])
    jb = j[:, None, None, None, None]
    d2ghat = np.einsum("blm,acx->blamcx", S, epsten)
    d2j = (np.einsum("blax,bmcx->blamc", dghat, dghat)
           - np.einsum("bla,bmc->blamc", dj, dj)) / jb \
        + np.einsum("blamcx,bx->blamc", d2ghat, g3)
    mixed = (np.einsum("blax,bmc->blamcx", dghat, dj)
             + np.einsum("bmcx,bla->blamcx", dghat, dj))
    d2g3 = (d2ghat / jb[..., None]
            - mixed / (jb ** 2)[..., None]
            - np.einsum("blamc,bx->blamcx", d2j, g3) / jb[..., None]
            + 2.0 * np.einsum("bla,bmc,bx->blamcx", dj, dj, g3) / (jb ** 2)[..., None])

    d2b = np.empty((B, 3, L, 3, L, 3))
    for p in range(3):
        term = np.einsum("bl,bmca->blamc", d2N[:, :, p], dg3)
        term = term + term.transpose(0, 3, 4, 1, 2)
        term = term + np.einsum("bx,blamcx->blamc", xab[:, p], d2g3)
        d2b[:, p] = -term
    d2b[:, 2] *= 2.0
    return (d2eps.reshape(B, 3, nd, nd), d2b.reshape(B, 3, nd, nd))


# ---------------------------------------------------------------------------
# single-point wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MidsurfaceState:
    """Geometry of one configuration at a single parametric point."""

    tangents: np.ndarray        # (2, 3) covariant base vectors
    normal: np.ndarray          # unit normal
    metric: np.ndarray          # (2, 2) covariant metric
    metric_inv: np.ndarray
    curvature: np.ndarray       # (2, 2) second-fundamental-form coefficients
    second_derivs: np.ndarray   # (3, 3) x,{11 22 12}
    normal_derivs: np.ndarray   # (2, 3) d g3 / d xi^a
    jacobian: float
    position: np.ndarray


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal reference frame (rows E1, E2, E3 = G3)."""

    axes: np.ndarray

    def __post_init__(self):
        a = self.axes
        if not np.allclose(a @ a.T, np.eye(3), atol=1e-10):
            raise DegenerateGeometryError("local frame is not orthonormal")


@dataclass(frozen=True)
class StrainMeasures:
    membrane: np.ndarray   # (2, 2) local Cartesian
    bending: np.ndarray


@dataclass(frozen=True)
class LayerState:
    xi3: float
    F: np.ndarray          # (3, 3) local-frame deformation gradient
    C: np.ndarray
    thickness_stretch: float
    J: float


def _state_from(cfg, ref_extras=None, row=0):
    nd3 = normal_derivatives(cfg)
    gab = cfg["gab"][row]
    det = gab[0, 0] * gab[1, 1] - gab[0, 1] ** 2
    ginv = np.array([[gab[1, 1], -gab[0, 1]], [-gab[0, 1], gab[0, 0]]]) / det
    curv = np.array([[cfg["b"][row, 0], cfg["b"][row, 2]],
                     [cfg["b"][row, 2], cfg["b"][row, 1]]])
    return MidsurfaceState(
        tangents=cfg["g"][row], normal=cfg["g3"][row], metric=gab,
        metric_inv=ginv, curvature=curv, second_derivs=cfg["xab"][row],
        normal_derivs=nd3[row], jacobian=float(cfg["j"][row]),
        position=cfg["pos"][row])


def configure(basis, coords, displacements=None):
    """Reference and deformed mid-surface states at one point.

    ``basis`` is a :class:`~klshell.splines.BasisEvaluation`; ``coords`` are
    the supported control points (L, 3); ``displacements`` optional (L, 3).
    The curvature coefficients equal the symmetrized second-fundamental-form
    expression by construction.
    """
    N = basis.values[None]
    dN = basis.first[None]
    d2N = basis.second[None]
    ref = _state_from(config_arrays(N, dN, d2N, np.asarray(coords, float)[None]))
    if displacements is None:
        return ref, ref
    defo = _state_from(config_arrays(
        N, dN, d2N, (np.asarray(coords, float) + np.asarray(displacements, float))[None]))
    return ref, defo


def local_frame(ref: MidsurfaceState) -> LocalFrame:
    g1, g2 = ref.tangents
    e1 = g1 / np.linalg.norm(g1)
    raw = g2 - (g2 @ e1) * e1
    e2 = raw / np.linalg.norm(raw)
    return LocalFrame(np.stack([e1, e2, ref.normal]))


def _transform_matrix(ref: MidsurfaceState, frame: LocalFrame):
    gdual = ref.metric_inv @ ref.tangents
    return np.einsum("gx,ax->ga", frame.axes[:2], gdual)


def strains(ref: MidsurfaceState, defo: MidsurfaceState, frame: LocalFrame) -> StrainMeasures:
    """Green-Lagrange membrane/bending strains in local Cartesian components."""
    T = _transform_matrix(ref, frame)
    eps = 0.5 * (defo.metric - ref.metric)
    kap = defo.curvature - ref.curvature
    return StrainMeasures(membrane=T @ eps @ T.T, bending=T @ kap @ T.T)


def layer_deformation_gradient(ref: MidsurfaceState, defo: MidsurfaceState,
                               xi3: float, lam3: float) -> LayerState:
    """Deformation gradient of a through-thickness layer.

    Layer tangents are g_a + xi3 * g3,a (and the reference analogue); the
    normal leg carries the thickness stretch so that C33 = lam3^2 exactly.
    Reference legs are expressed in the local frame.
    """
    if lam3 <= 0.0:
        raise DomainError("thickness stretch must be positive")
    frame = local_frame(ref)
    Glay = ref.tangents + xi3 * ref.normal_derivs
    glay = defo.tangents + xi3 * defo.normal_derivs
    Gab = np.einsum("ax,bx->ab", Glay, Glay)
    Gdual = np.linalg.inv(Gab) @ Glay
    # both legs in local-frame components: undeformed state gives F = I
    Gdual_loc = np.einsum("ax,ix->ai", Gdual, frame.axes)
    glay_loc = np.einsum("ax,ix->ai", glay, frame.axes)
    F = np.einsum("ai,aj->ij", glay_loc, Gdual_loc)
    F[:, 2] += lam3 * (frame.axes @ defo.normal)
    C = F.T @ F
    J = float(np.linalg.det(F))
    if J <= 0.0:
        raise DomainError("inverted configuration: det F <= 0")
    return LayerState(xi3=xi3, F=F, C=C, thickness_stretch=lam3, J=J)


def strain_variations(basis, coords, displacements=None):
    """Exact first and second variations of local-frame strains.

    Returns ``(d_eps, d_kap, dd_eps, dd_kap)`` with shapes (3, nd) and
    (3, nd, nd); eng convention on the first axis; nd = 3 * len(basis).
    """
    coords = np.asarray(coords, float)
    u = np.zeros_like(coords) if displacements is None else np.asarray(displacements, float)
    N, dN, d2N = basis.values[None], basis.first[None], basis.second[None]
    ref = reference_arrays(config_arrays(N, dN, d2N, coords[None]))
    defo = config_arrays(N, dN, d2N, (coords + u)[None])
    Beps, Bkap, cache = variation_arrays(dN, d2N, defo)
    Q = ref["Q"][0]
    nd = 3 * coords.shape[0]
    d_eps = np.einsum("pq,qk->pk", Q, Beps[0].reshape(3, nd))
    d_kap = np.einsum("pq,qk->pk", Q, Bkap[0].reshape(3, nd))
    dd_eps, dd_b = second_variation_arrays(dN, d2N, defo, cache)
    dd_eps = np.einsum("pq,qkl->pkl", Q, dd_eps[0])
    dd_kap = np.einsum("pq,qkl->pkl", Q, dd_b[0])
    return d_eps, d_kap, dd_eps, dd_kap
