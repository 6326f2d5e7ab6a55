"""Constitutive model tests: StVK, Neo-Hookean, J2 return mapping,
consistent tangent, and plane-stress enforcement.

Oracles: direct index-form formulas, sympy differentiation of the stored
energy, bisection on scalar residuals, and finite differences through the
full return map.
"""

import numpy as np
import pytest
import sympy as sp
from numpy.testing import assert_allclose

from klshell.errors import DomainError, MaterialFailureError, ValidationError
from klshell.materials import (
    ElasticParams,
    HardeningLaw,
    J2Plasticity,
    NeoHookean,
    PlasticHistory,
    StVenantKirchhoff,
    consistent_tangent,
    j2_return_mapping,
    neo_hookean_response,
    plane_stress_enforce,
    stvk_response,
)

import oracles

I3 = np.eye(3)


def sqrtm(C):
    w, V = np.linalg.eigh(C)
    return (V * np.sqrt(w)) @ V.T


def rand_sym(rng, scale=0.05):
    A = scale * rng.standard_normal((3, 3))
    return 0.5 * (A + A.T)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def test_elastic_params_validation():
    with pytest.raises(ValidationError):
        ElasticParams(-1.0, 0.3)
    with pytest.raises(ValidationError):
        ElasticParams(10.0, 0.5)
    p = ElasticParams.from_lame(mu=60.0, lam=240.0)
    assert_allclose(p.shear, 60.0)
    assert_allclose(p.lame, 240.0)
    assert_allclose(p.nu, 0.4)


def test_hardening_law():
    with pytest.raises(ValidationError):
        HardeningLaw(-2.0)
    h = HardeningLaw(24.3, 300.0)
    assert_allclose(h.k(0.1), 24.3 + 30.0)


# ---------------------------------------------------------------------------
# St. Venant-Kirchhoff
# ---------------------------------------------------------------------------

def test_stvk_zero_strain():
    S, _ = stvk_response(np.zeros((3, 3)), ElasticParams(100.0, 0.25))
    assert_allclose(S, 0.0, atol=1e-15)


def test_stvk_uniaxial_nu_zero():
    e = 0.02
    E = np.diag([e, 0.0, 0.0])
    S, _ = stvk_response(E, ElasticParams(700.0, 0.0))
    assert_allclose(S[0, 0], 700.0 * e, rtol=1e-14)
    S_off = S.copy()
    S_off[0, 0] = 0.0
    assert_allclose(S_off, 0.0, atol=1e-14)


def test_stvk_matches_index_formula():
    rng = np.random.default_rng(0)
    params = ElasticParams(210.0, 0.29)
    lam, mu = params.lame, params.shear
    E = rand_sym(rng)
    S, CC = stvk_response(E, params)
    assert_allclose(S, lam * np.trace(E) * I3 + 2 * mu * E, rtol=1e-14)
    Sfd = oracles.fd_tensor_wrt_sym(lambda A: stvk_response(A, params)[0], E)
    assert_allclose(CC, Sfd, atol=1e-6 * np.abs(Sfd).max())


# ---------------------------------------------------------------------------
# Neo-Hookean
# ---------------------------------------------------------------------------

def test_neo_hookean_stress_free_reference():
    out = neo_hookean_response(F=np.eye(3), params=ElasticParams.from_lame(60.0, 240.0))
    assert_allclose(out["S"], 0.0, atol=1e-14)
    assert_allclose(out["tau"], 0.0, atol=1e-14)


def test_neo_hookean_moduli_vs_finite_differences():
    rng = np.random.default_rng(1)
    params = ElasticParams.from_lame(60.0, 240.0)
    for _ in range(4):
        E = rand_sym(rng, 0.08)
        C = 2 * E + I3

        def S_of(Em):
            return neo_hookean_response(C=2 * Em + I3, params=params)["S"]

        out = neo_hookean_response(C=C, params=params)
        fd = oracles.fd_tensor_wrt_sym(S_of, E, h=1e-7)
        assert np.abs(out["CC"] - fd).max() / np.abs(fd).max() < 1e-5


def test_neo_hookean_dilation_pressure_symbolic():
    # Kirchhoff pressure at F = theta I equals J dW/dJ, W from the stored
    # energy with C = J^(2/3) I on the dilation path
    mu_s, lam_s, Js = sp.symbols("mu lam J", positive=True)
    W = (mu_s / 2 * (3 * Js ** sp.Rational(2, 3) - 3) - mu_s * sp.log(Js)
         + lam_s / 4 * (Js ** 2 - 1 - 2 * sp.log(Js)))
    p_expr = sp.simplify(Js * sp.diff(W, Js))
    params = ElasticParams.from_lame(60.0, 240.0)
    theta = 1.13
    out = neo_hookean_response(F=theta * np.eye(3), params=params)
    p_num = float(p_expr.subs({mu_s: 60.0, lam_s: 240.0, Js: theta ** 3}))
    assert_allclose(np.trace(out["tau"]) / 3.0, p_num / 1.0, rtol=1e-12)


def test_neo_hookean_inverted_state():
    with pytest.raises(DomainError):
        neo_hookean_response(C=-np.eye(3), params=ElasticParams(10.0, 0.3))


# ---------------------------------------------------------------------------
# J2 return mapping
# ---------------------------------------------------------------------------

PARAMS = ElasticParams(200.0, 0.3)
HARD = HardeningLaw(0.45, 0.12)


def _run(E, hist, hard=HARD, params=PARAMS):
    F = sqrtm(2 * E + I3)[None]
    return j2_return_mapping(F, hist, params, hard)


def test_elastic_step_leaves_history():
    rng = np.random.default_rng(2)
    E = rand_sym(rng, 1e-4)
    hist = PlasticHistory.initial(1)
    resp, new = _run(E, hist)
    assert not resp.plastic[0]
    assert resp.dgamma[0] == 0.0
    assert np.array_equal(new.cp_inv, hist.cp_inv)
    assert np.array_equal(new.alpha, hist.alpha)


def test_elastic_round_trip_returns_to_zero():
    rng = np.random.default_rng(3)
    hist = PlasticHistory.initial(1)
    E = rand_sym(rng, 5e-4)
    _, h1 = _run(E, hist)
    resp0, h2 = _run(np.zeros((3, 3)), h1)
    assert np.abs(resp0.tau_vol + resp0.tau_dev).max() < 1e-10
    assert h2.cp_inv.tobytes() == hist.cp_inv.tobytes()
    assert h2.alpha.tobytes() == hist.alpha.tobytes()


def test_perfect_plasticity_yield_consistency():
    rng = np.random.default_rng(4)
    hard = HardeningLaw(0.45, 0.0)
    hist = PlasticHistory.initial(1)
    E = rand_sym(rng, 0.05)
    resp, new = _run(E, hist, hard=hard)
    assert resp.plastic[0]
    norm = np.linalg.norm(resp.tau_dev[0])
    target = np.sqrt(2.0 / 3.0) * 0.45
    assert abs(norm - target) / target < 1e-9


def test_hardening_yield_consistency():
    rng = np.random.default_rng(5)
    hist = PlasticHistory.initial(1)
    E = rand_sym(rng, 0.06)
    resp, new = _run(E, hist)
    assert resp.plastic[0]
    norm = np.linalg.norm(resp.tau_dev[0])
    target = np.sqrt(2.0 / 3.0) * HARD.k(new.alpha[0])
    assert abs(norm - target) / target < 1e-9
    assert new.alpha[0] > 0.0


def test_simple_shear_multiplier_vs_bisection():
    gam = 0.08
    F = np.array([[1.0, gam, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    hist = PlasticHistory.initial(1)
    resp, _ = j2_return_mapping(F[None], hist, PARAMS, HARD)
    assert resp.plastic[0]
    G = PARAMS.shear
    phi = resp.trial_norm[0] - np.sqrt(2 / 3) * HARD.k(0.0)
    trb = resp.trial_trace[0]

    def residual(x):
        return (resp.trial_norm[0]
                - np.sqrt(2 / 3) * HARD.k(np.sqrt(2 / 3) * x)
                - (2 / 3) * x * G * trb)

    hi = phi / ((2 / 3) * G * trb)
    root = oracles.bisect(residual, 0.0, hi * 1.0000001, tol=1e-15)
    assert abs(resp.dgamma[0] - root) < 1e-12


def test_isochoric_plastic_flow():
    rng = np.random.default_rng(6)
    hist = PlasticHistory.initial(1)
    for _ in range(5):
        E = rand_sym(rng, 0.04)
        resp, hist = _run(E, hist)
        drift = abs(np.linalg.det(hist.cp_inv[0]) - 1.0)
        assert drift < 1e-6


def test_alpha_monotone_and_kkt():
    rng = np.random.default_rng(7)
    hist = PlasticHistory.initial(1)
    alpha_prev = 0.0
    for _ in range(6):
        E = rand_sym(rng, 0.05)
        resp, hist = _run(E, hist)
        assert resp.dgamma[0] >= 0.0
        assert hist.alpha[0] >= alpha_prev
        if resp.plastic[0]:
            phi = np.linalg.norm(resp.tau_dev[0]) - np.sqrt(2 / 3) * HARD.k(hist.alpha[0])
            assert abs(phi) < 1e-9 * max(1.0, np.linalg.norm(resp.tau_dev[0]))
        alpha_prev = hist.alpha[0]


def test_cp_inv_stays_spd():
    rng = np.random.default_rng(8)
    hist = PlasticHistory.initial(1)
    for _ in range(8):
        E = rand_sym(rng, 0.04)
        resp, hist = _run(E, hist)
        w = np.linalg.eigvalsh(hist.cp_inv[0])
        assert np.all(w > 0)
        assert_allclose(hist.cp_inv[0], hist.cp_inv[0].T, atol=1e-14)


def test_consistent_tangent_elastic_equals_trial():
    rng = np.random.default_rng(9)
    E = rand_sym(rng, 1e-4)
    hist = PlasticHistory.initial(1)
    resp, new = _run(E, hist)
    assert not resp.plastic[0]
    again = consistent_tangent(resp, PARAMS, HARD, new)
    assert_allclose(again, resp.spatial_moduli, rtol=1e-14)


def _fd_material_tangent(E, hist, hard, params, h=1e-6):
    def S_of(Em):
        F = sqrtm(2 * Em + I3)[None]
        r, _ = j2_return_mapping(F, hist, params, hard, with_tangent=False)
        return r.S[0]

    return oracles.fd_tensor_wrt_sym(S_of, E, h=h)


def test_consistent_tangent_vs_finite_differences():
    rng = np.random.default_rng(10)
    hist = PlasticHistory.initial(1)
    # elastic state
    E = rand_sym(rng, 2e-4)
    resp, _ = _run(E, hist)
    fd = _fd_material_tangent(E, hist, HARD, PARAMS)
    assert np.abs(resp.material_moduli[0] - fd).max() / np.abs(fd).max() < 1e-5
    # plastic state, virgin history
    E = rand_sym(rng, 0.05)
    resp, _ = _run(E, hist)
    assert resp.plastic[0]
    fd = _fd_material_tangent(E, hist, HARD, PARAMS)
    assert np.abs(resp.material_moduli[0] - fd).max() / np.abs(fd).max() < 1e-4
    # plastic state with developed history
    _, hist = _run(E, hist)
    E2 = E + rand_sym(rng, 0.03)
    resp2, _ = _run(E2, hist)
    fd2 = _fd_material_tangent(E2, hist, HARD, PARAMS)
    assert np.abs(resp2.material_moduli[0] - fd2).max() / np.abs(fd2).max() < 1e-4


def test_consistent_tangent_minor_symmetry():
    rng = np.random.default_rng(11)
    hist = PlasticHistory.initial(1)
    resp, _ = _run(rand_sym(rng, 0.05), hist)
    c = resp.material_moduli[0]
    assert_allclose(c, c.transpose(1, 0, 2, 3), atol=1e-12 * np.abs(c).max())
    assert_allclose(c, c.transpose(0, 1, 3, 2), atol=1e-12 * np.abs(c).max())


def test_return_mapping_rejects_inverted():
    hist = PlasticHistory.initial(1)
    with pytest.raises(DomainError):
        j2_return_mapping(-np.eye(3)[None], hist, PARAMS, HARD)


# ---------------------------------------------------------------------------
# plane stress enforcement
# ---------------------------------------------------------------------------

def test_plane_stress_stvk_nu_zero_single_iteration():
    mat = StVenantKirchhoff(ElasticParams(500.0, 0.0))
    eps = np.array([[0.01, -0.004, 0.002]])
    out = plane_stress_enforce(mat, eps)
    assert out.iterations == 1
    assert_allclose(out.lam3, 1.0, atol=1e-14)


def test_plane_stress_stvk_condensation_analytic():
    E, nu = 70.0, 0.3
    mat = StVenantKirchhoff(ElasticParams(E, nu))
    eps = np.array([[0.013, 0.004, -0.006]])
    out = plane_stress_enforce(mat, eps)
    # transverse strain of the condensed linear solution
    E33 = 0.5 * (out.lam3[0] ** 2 - 1.0)
    assert_allclose(E33, -nu / (1 - nu) * (eps[0, 0] + eps[0, 1]), rtol=1e-10)
    D_exp = E / (1 - nu ** 2) * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1 - nu) / 2]])
    assert_allclose(out.D_eng[0], D_exp, atol=1e-12 * E)
    S_exp = D_exp @ eps[0]
    assert_allclose(out.S_eng[0], S_exp, atol=1e-12 * E)
    assert abs(out.S_full[0, 2, 2]) <= 1e-8 * np.linalg.norm(out.S_full[0])


def test_plane_stress_neo_hookean_equibiaxial_vs_bisection():
    params = ElasticParams.from_lame(60.0, 240.0)
    mat = NeoHookean(params)
    lam = 1.2
    e = 0.5 * (lam ** 2 - 1.0)
    eps = np.array([[e, e, 0.0]])
    out = plane_stress_enforce(mat, eps)
    assert abs(out.S_full[0, 2, 2]) <= 1e-8 * np.linalg.norm(out.S_full[0])

    def S33(l3):
        C = np.diag([lam ** 2, lam ** 2, l3 ** 2])
        return neo_hookean_response(C=C, params=params)["S"][2, 2]

    root = oracles.bisect(S33, 0.2, 1.2, tol=1e-14)
    assert abs(out.lam3[0] - root) < 1e-10


def test_plane_stress_j2_plastic_converges():
    mat = J2Plasticity(ElasticParams(200.0, 0.3), HardeningLaw(0.45, 0.12))
    hist = PlasticHistory.initial(2)
    eps = np.array([[0.02, -0.005, 0.004], [0.0005, 0.0002, 0.0]])
    out = plane_stress_enforce(mat, eps, history=hist)
    norm = np.linalg.norm(out.S_full, axis=(1, 2))
    assert np.all(np.abs(out.S_full[:, 2, 2]) <= 1e-12 * 200.0 + 1e-8 * norm)
    assert out.history.alpha[0] > 0.0     # first point yields
    assert out.history.alpha[1] == 0.0    # second stays elastic
    # input history untouched (trial/commit discipline)
    assert hist.alpha[0] == 0.0
    assert_allclose(hist.cp_inv[0], I3)


def test_plane_stress_warm_start_fewer_iterations():
    params = ElasticParams.from_lame(60.0, 240.0)
    mat = NeoHookean(params)
    eps = np.array([[0.15, 0.1, 0.02]])
    cold = plane_stress_enforce(mat, eps)
    warm = plane_stress_enforce(mat, eps, lam3_init=cold.lam3)
    assert warm.iterations <= cold.iterations


def test_plane_stress_elastic_plastic_flag_counts():
    mat = J2Plasticity(ElasticParams(200.0, 0.3), HardeningLaw(0.45, 0.0))
    hist = PlasticHistory.initial(1)
    out = plane_stress_enforce(mat, np.array([[0.03, 0.0, 0.0]]), history=hist)
    norm = np.linalg.norm(out.history.cp_inv[0] - I3)
    assert norm > 0.0
