"""Bundled benchmark cases: builders, reference data, and diagnostics.

Each builder returns a plain model-description mapping (the same schema the
YAML files carry), so the bundled files are generated from here and the
CLI can run either form. Geometry uses exact rational arcs: a quarter
circle as a degree-elevated quadratic, a half circle as the single cubic
segment with interior weights 1/3.
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .splines import evaluate_points

SQ2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# exact arcs (2D, embedded by the callers)
# ---------------------------------------------------------------------------

def arc_quadratic(radius, a0, a1):
    """Quadratic rational arc (< 180 deg): points (3, 2) and weights (3,)."""
    half = 0.5 * (a1 - a0)
    mid = 0.5 * (a0 + a1)
    P = np.array([
        [np.cos(a0), np.sin(a0)],
        [np.cos(mid) / np.cos(half), np.sin(mid) / np.cos(half)],
        [np.cos(a1), np.sin(a1)],
    ]) * radius
    w = np.array([1.0, np.cos(half), 1.0])
    return P, w


def arc_cubic(radius, a0, a1):
    """Cubic rational arc from degree elevation of the quadratic one."""
    P2, w2 = arc_quadratic(radius, a0, a1)
    H = np.concatenate([P2 * w2[:, None], w2[:, None]], axis=1)
    Q = np.array([H[0],
                  (H[0] + 2.0 * H[1]) / 3.0,
                  (2.0 * H[1] + H[2]) / 3.0,
                  H[2]])
    w = Q[:, 2]
    return Q[:, :2] / w[:, None], w


def arc_cubic_half(radius, a0):
    """Exact 180-degree arc as one cubic segment (interior weights 1/3)."""
    t0 = np.array([-np.sin(a0), np.cos(a0)])
    p0 = radius * np.array([np.cos(a0), np.sin(a0)])
    p3 = -p0
    P = np.array([p0, p0 + 2.0 * radius * t0, p3 + 2.0 * radius * t0, p3])
    return P, np.array([1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0])


def _extruded_patch(arc_pts, arc_w, plane, axis, length, degree_ax, offset=0.0,
                    thickness=1.0, material="mat", refine=None):
    """Patch dict: rational arc in a coordinate plane extruded along an axis.

    ``plane`` gives the two global indices of the arc coordinates, ``axis``
    the extrusion index. Axial control points sit at the Greville abscissae
    so the axial parameter is arc length (linear precision).
    """
    n = arc_pts.shape[0]
    p_arc = n - 1
    m = degree_ax + 1
    # Greville abscissae of a single-span open vector are uniform, which
    # makes the axial parameter exactly proportional to length
    grev = np.linspace(0.0, 1.0, m)
    ctrl = np.zeros((n, m, 3))
    ctrl[:, :, plane[0]] = arc_pts[:, 0][:, None]
    ctrl[:, :, plane[1]] = arc_pts[:, 1][:, None]
    ctrl[:, :, axis] = offset + grev[None, :] * length
    w = np.tile(arc_w[:, None], (1, m))
    rows = [[float(x), float(y), float(z), float(ww)]
            for (x, y, z), ww in zip(ctrl.reshape(-1, 3), w.reshape(-1))]
    spec = {
        "degrees": [p_arc, degree_ax],
        "knots_u": [0.0] * n + [1.0] * n,
        "knots_v": [0.0] * (degree_ax + 1) + [1.0] * (degree_ax + 1),
        "shape": [n, m],
        "control_points": rows,
        "thickness": float(thickness),
        "material": material,
    }
    if refine:
        spec["refine"] = {"u": int(refine[0]), "v": int(refine[1])}
    return spec


def _flat_strip_patch(p0, p1, height, thickness, material, refine):
    """Flat quadratic panel from segment p0-p1 (x, y) extruded in z."""
    pts = np.linspace(p0, p1, 3)
    ctrl_rows = []
    zs = np.array([0.0, 0.5, 1.0]) * height
    for a in pts:
        for z in zs:
            ctrl_rows.append([float(a[0]), float(a[1]), float(z), 1.0])
    return {
        "degrees": [2, 2],
        "knots_u": [0.0, 0, 0, 1, 1, 1],
        "knots_v": [0.0, 0, 0, 1, 1, 1],
        "shape": [3, 3],
        "control_points": ctrl_rows,
        "thickness": float(thickness),
        "material": material,
        "refine": {"u": int(refine[0]), "v": int(refine[1])},
    }


# ---------------------------------------------------------------------------
# case builders
# ---------------------------------------------------------------------------

def case1_semicylinder(nel=16, increments=80):
    """Point-pinched semi-cylindrical shell, St. Venant-Kirchhoff.

    One circumferential end clamped, concentrated load at the crown of the
    free end, cubic elements.
    """
    R, L, t = 1.016, 3.048, 0.03
    P, w = arc_cubic_half(R, 0.0)
    patch = _extruded_patch(P, w, plane=(0, 2), axis=1, length=L, degree_ax=3,
                            thickness=t, material="steel", refine=(nel, nel))
    return {
        "version": 1,
        "name": "semicylinder_point_load",
        "materials": {"steel": {"kind": "stvk", "E": 2.0685e7, "nu": 0.3}},
        "patches": [patch],
        "strips": "none",
        "constraints": [
            {"patch": 0, "edge": "v0", "components": "xyz", "depth": 2},
        ],
        "loads": [
            {"type": "point_xi", "patch": 0, "xi": [0.5, 1.0],
             "force": [0.0, 0.0, -2000.0]},
        ],
        "monitors": [{"name": "A", "patch": 0, "xi": [0.5, 1.0]}],
        "solver": {"type": "newton", "increments": increments, "lam_max": 1.0},
    }


def case2_pinched_cylinder(nel_circ=23, nel_ax=6, increments=8):
    """Hyperelastic tube squashed between a fixed bottom line and a top
    line load; four cubic patches coupled by bending strips."""
    R, L, t = 90.0, 300.0, 2.0
    patches = []
    for q in range(4):
        P, w = arc_cubic(R, q * np.pi / 2, (q + 1) * np.pi / 2)
        patches.append(_extruded_patch(
            P, w, plane=(0, 2), axis=1, length=L, degree_ax=3, thickness=t,
            material="rubber", refine=(nel_circ, nel_ax)))
    return {
        "version": 1,
        "name": "pinched_cylinder_neo_hookean",
        "materials": {"rubber": {"kind": "neo_hookean", "mu": 60000.0,
                                 "lam": 240000.0}},
        "patches": patches,
        "strips": "auto",
        "strip_modulus_scale": 1.0e4,
        "constraints": [
            # clamped bottom generator: boundary row of both lower patches
            # plus their neighbor rows (kills the hinge rotation)
            {"patch": 2, "edge": "u1", "components": "xyz", "depth": 2},
            {"patch": 3, "edge": "u0", "components": "xyz", "depth": 2},
        ],
        "loads": [
            {"type": "edge", "patch": 0, "edge": "u1",
             "force_per_length": [0.0, 0.0, -120.0]},
        ],
        "monitors": [{"name": "A", "patch": 0, "xi": [1.0, 0.5]}],
        "solver": {"type": "newton", "increments": increments, "lam_max": 1.0},
    }


def case3_scordelis_lo(nel_circ=16, nel_ax=32, max_steps=150,
                       initial_radius=None):
    """Elastic-perfectly-plastic Scordelis-Lo roof under gravity, arc length.

    Two quadratic patches joined at the ridge; rigid diaphragms at both
    ends; the load factor is the gravity multiplier f/f0 with
    f0 = 4e-3 force/area.
    """
    R, L, t = 7600.0, 15200.0, 76.0
    phi = np.deg2rad(40.0)
    base = np.pi / 2  # crown direction +z
    pa, wa = arc_quadratic(R, base + phi, base)
    pb, wb = arc_quadratic(R, base, base - phi)
    patches = [
        _extruded_patch(pa, wa, plane=(0, 2), axis=1, length=L, degree_ax=2,
                        thickness=t, material="metal", refine=(nel_circ, nel_ax)),
        _extruded_patch(pb, wb, plane=(0, 2), axis=1, length=L, degree_ax=2,
                        thickness=t, material="metal", refine=(nel_circ, nel_ax)),
    ]
    if initial_radius is None:
        initial_radius = 60.0
    return {
        "version": 1,
        "name": "scordelis_lo_plastic",
        "materials": {"metal": {"kind": "j2_plastic", "E": 21000.0, "nu": 0.0,
                                "yield_stress": 4.2, "hardening_modulus": 0.0,
                                "thickness_gauss": 5}},
        "patches": patches,
        "strips": "auto",
        "constraints": [
            {"patch": 0, "edge": "v0", "components": "xz"},
            {"patch": 0, "edge": "v1", "components": "xz"},
            {"patch": 1, "edge": "v0", "components": "xz"},
            {"patch": 1, "edge": "v1", "components": "xz"},
            {"patch": 0, "indices": [[0, 0]], "components": "y"},
        ],
        "loads": [{"type": "body", "force_per_area": [0.0, 0.0, -4.0e-3]}],
        "monitors": [{"name": "A", "patch": 0, "xi": [0.0, 0.5]}],
        "solver": {"type": "arc_length", "initial_radius": initial_radius,
                   "max_steps": max_steps, "desired_iterations": 5,
                   "stop_displacement": {"monitor": "A", "component": "z",
                                         "limit": 2050.0}},
    }


def case4_pinched_elastoplastic(nel_circ=12, nel_ax=12, max_steps=120,
                                initial_radius=None):
    """Diaphragm-supported cylinder pinched at mid-length, J2 hardening.

    Eight quadratic patches (four quadrants, two axial halves); the loads
    act at merged patch corners; reference load 1 kN per pinch point.
    """
    R, L, t = 300.0, 600.0, 3.0
    patches = []
    for q in range(4):
        P, w = arc_quadratic(R, q * np.pi / 2, (q + 1) * np.pi / 2)
        for h in range(2):
            patches.append(_extruded_patch(
                P, w, plane=(0, 2), axis=1, length=L / 2, degree_ax=2,
                offset=h * L / 2, thickness=t, material="metal",
                refine=(nel_circ, nel_ax)))
    n_u = 3  # quadratic arcs
    if initial_radius is None:
        initial_radius = 12.0
    return {
        "version": 1,
        "name": "pinched_cylinder_elastoplastic",
        "materials": {"metal": {"kind": "j2_plastic", "E": 3000.0, "nu": 0.3,
                                "yield_stress": 24.3, "hardening_modulus": 300.0,
                                "thickness_gauss": 5}},
        "patches": patches,
        "strips": "auto",
        "constraints": (
            [{"patch": 2 * q, "edge": "v0", "components": "xz"} for q in range(4)]
            + [{"patch": 2 * q + 1, "edge": "v1", "components": "xz"}
               for q in range(4)]
            + [{"patch": 0, "indices": [[0, n_u - 1]], "components": "y"}]
        ),
        "loads": [
            {"type": "point_cp", "patch": 0, "index": [n_u - 1, n_u - 1],
             "force": [0.0, 0.0, -1000.0]},
            {"type": "point_cp", "patch": 4, "index": [n_u - 1, n_u - 1],
             "force": [0.0, 0.0, 1000.0]},
        ],
        "monitors": [{"name": "A", "patch": 0, "xi": [1.0, 1.0]}],
        "solver": {"type": "arc_length", "initial_radius": initial_radius,
                   "max_steps": max_steps, "desired_iterations": 5,
                   "stop_displacement": {"monitor": "A", "component": "z",
                                         "limit": 260.0}},
    }


def hexcan(side=100.0, height=200.0, thickness=1.0, pressure=0.4,
           nel=(6, 8), with_strips=True, increments=4):
    """Hexagonal prism of six flat panels under internal pressure.

    The flat panels meet at 120-degree folds; without bending strips the
    folds behave as hinges and the inflated shape kinks there.
    """
    verts = [side * np.array([np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)])
             for k in range(7)]
    patches = [_flat_strip_patch(verts[k], verts[k + 1], height, thickness,
                                 "steel", nel) for k in range(6)]
    return {
        "version": 1,
        "name": "hexcan_pressure" + ("" if with_strips else "_nostrips"),
        "materials": {"steel": {"kind": "stvk", "E": 2.0e5, "nu": 0.3}},
        "patches": patches,
        "strips": "auto" if with_strips else "none",
        "constraints": [
            {"patch": 0, "indices": [[0, 0]], "components": "xyz"},
            {"patch": 3, "indices": [[0, 0]], "components": "yz"},
            {"patch": 1, "indices": [[0, 0]], "components": "z"},
        ],
        "loads": [{"type": "pressure", "magnitude": float(pressure)}],
        "monitors": [{"name": "center", "patch": 0, "xi": [0.5, 0.5]}],
        "solver": {"type": "newton", "increments": increments, "lam_max": 1.0},
    }


CASES = {
    "1": case1_semicylinder,
    "2": case2_pinched_cylinder,
    "3": case3_scordelis_lo,
    "4": case4_pinched_elastoplastic,
    "hexcan": hexcan,
}

# displacement magnitudes at point A reported for the hyperelastic pinched
# cylinder at the eight equal load steps up to 36 kN
CASE2_REFERENCE_U = np.array(
    [13.817, 30.872, 51.954, 76.473, 98.818, 121.337, 143.815, 164.83])
CASE2_LITERATURE_BAND_AT_160MM = (34.59, 35.47)  # kN


# ---------------------------------------------------------------------------
# interface diagnostics
# ---------------------------------------------------------------------------

def _edge_xi(edge, t):
    if edge == "u0":
        return np.stack([np.zeros_like(t), t], axis=1)
    if edge == "u1":
        return np.stack([np.ones_like(t), t], axis=1)
    if edge == "v0":
        return np.stack([t, np.zeros_like(t)], axis=1)
    return np.stack([t, np.ones_like(t)], axis=1)


def _edge_normals(am, ip, edge, t, u):
    patch = am.model.patches[ip]
    pts = _edge_xi(edge, t)
    N, dN, d2N, sup = evaluate_points(patch, pts)
    ids = am.gids[am.off[ip] + sup]
    coords = am.coords[ids] + u.reshape(-1, 3)[ids]
    cfg = geo.config_arrays(N, dN, d2N, coords)
    return cfg["g3"], cfg["pos"]


def _pair_angles(am, itf, t, u):
    na, pa = _edge_normals(am, itf["patch_a"], itf["edge_a"], t, u)
    nb, pb = _edge_normals(am, itf["patch_b"], itf["edge_b"], t, u)
    # align the parameterizations via physical positions
    if np.linalg.norm(pa[0] - pb[0]) > np.linalg.norm(pa[0] - pb[-1]):
        nb = nb[::-1]
    dots = np.einsum("px,px->p", na, nb)
    return np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))


def interface_normal_jump(am, u, n_samples=24):
    """Largest deformation-induced change (degrees) of the normal-angle
    jump across merged patch interfaces.

    The reference fold angle (nonzero for kinked geometry like the
    hex-can) is subtracted, so a smooth penalty-coupled deformation scores
    near zero and hinging scores large.
    """
    from .model import detect_interfaces

    interfaces = am.interfaces or detect_interfaces(am.model.patches, am.gids)
    worst = 0.0
    ts = np.linspace(0.02, 0.98, n_samples)
    zero = np.zeros_like(u)
    for itf in interfaces:
        ref = _pair_angles(am, itf, ts, zero)
        cur = _pair_angles(am, itf, ts, u)
        worst = max(worst, float(np.abs(cur - ref).max()))
    return worst
