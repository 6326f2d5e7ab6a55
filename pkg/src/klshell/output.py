"""Result emission: load-deflection CSV and deformed-surface meshes."""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .splines import evaluate_points


def write_history(history, monitor_names, path):
    """CSV with one row per converged step.

    Columns: step, lambda, three displacement components per monitor,
    iterations; 12 significant digits.
    """
    lines = ["step,lambda," + ",".join(
        f"{n}_u{c}" for n in monitor_names for c in "xyz") + ",iterations"]
    for rec in history.records:
        vals = [f"{rec.lam:.12g}"]
        for name in monitor_names:
            vals += [f"{v:.12g}" for v in rec.monitors[name]]
        lines.append(f"{rec.step}," + ",".join(vals) + f",{rec.iterations}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sample_surfaces(am, u, subdivision):
    """Sample every Bezier element on an (n+1)x(n+1) grid of each patch.

    Returns (vertices, quads, displacement magnitude) before welding.
    """
    if subdivision < 2:
        raise DomainError("surface subdivision must be at least 2")
    n = subdivision
    verts, cells, mags = [], [], []
    offset = 0
    for kern, ids in am.kernels:
        patch = kern.patch
        ue = u.reshape(-1, 3)[ids]
        bu = patch.kv_u.breakpoints
        bv = patch.kv_v.breakpoints
        for eid in range(patch.n_elements):
            eu, ev = patch.element_grid(eid)
            xs = np.linspace(bu[eu], bu[eu + 1], n + 1)
            ys = np.linspace(bv[ev], bv[ev + 1], n + 1)
            grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
            N, _, _, sup = evaluate_points(patch, grid)
            X = patch.ctrl.reshape(-1, 3)[sup]
            U = ue[sup]
            pos = np.einsum("pl,plx->px", N, X + U)
            disp = np.einsum("pl,plx->px", N, U)
            verts.append(pos)
            mags.append(np.linalg.norm(disp, axis=1))
            for i in range(n):
                for j in range(n):
                    a = offset + i * (n + 1) + j
                    cells.append((a, a + n + 1, a + n + 2, a + 1))
            offset += (n + 1) ** 2
    return np.vstack(verts), np.asarray(cells, dtype=int), np.concatenate(mags)


def weld_vertices(verts, cells, mags, tol):
    """Merge coincident vertices (viewer-friendly meshes, data unchanged)."""
    key = np.round(verts / tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return verts[first], inverse[cells], mags[first]


def write_surface(am, u, path, subdivision=4, title="klshell surface"):
    """Legacy-VTK ASCII unstructured grid of the deformed mid-surface.

    Quad cells from per-element sampling; one point scalar holds the
    displacement magnitude. Coincident vertices are welded at 1e-9 of the
    bounding-box diagonal.
    """
    verts, cells, mags = sample_surfaces(am, u, subdivision)
    diag = np.linalg.norm(verts.max(axis=0) - verts.min(axis=0))
    verts, cells, mags = weld_vertices(verts, cells, mags, 1e-9 * max(diag, 1e-30))
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(verts)} double\n")
        for p in verts:
            fh.write(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}\n")
        fh.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
        for c in cells:
            fh.write(f"4 {c[0]} {c[1]} {c[2]} {c[3]}\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        fh.write("\n".join(["9"] * len(cells)) + "\n")
        fh.write(f"POINT_DATA {len(verts)}\n")
        fh.write("SCALARS displacement_magnitude double 1\nLOOKUP_TABLE default\n")
        for v in mags:
            fh.write(f"{v:.12g}\n")
    return len(verts), len(cells)
