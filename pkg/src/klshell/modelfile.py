"""Declarative model files: schema validation, parsing, serialization.

The on-disk format is versioned YAML; the exact grammar is documented in
the repository README. ``parse_model`` returns a :class:`ParsedCase`
bundling the analysis :class:`~klshell.model.Model` with the solver block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ValidationError
from .materials import (
    ElasticParams,
    HardeningLaw,
    J2Plasticity,
    NeoHookean,
    StVenantKirchhoff,
)
from .model import ArcLengthSettings, Model, NewtonSettings
from .splines import KnotVector, NurbsPatch

FORMAT_VERSION = 1
_EDGES = ("u0", "u1", "v0", "v1")
_LOAD_TYPES = ("point_cp", "point_xi", "edge", "body", "pressure")


@dataclass
class ParsedCase:
    """A validated model plus its solver block and raw description."""

    model: Model
    solver: dict
    description: dict
    lam_max: float = 1.0

    def build(self):
        return self.model.build()

    def solver_settings(self):
        blk = dict(self.solver)
        kind = blk.pop("type")
        blk.pop("lam_max", None)
        if kind == "newton":
            return "newton", NewtonSettings(**blk)
        sd = blk.pop("stop_displacement", None)
        if sd is not None:
            blk["stop_displacement"] = (sd["monitor"], _comp_index(sd["component"]),
                                        float(sd["limit"]))
        if "radius_bounds" in blk:
            blk["radius_bounds"] = tuple(blk["radius_bounds"])
        return "arc_length", ArcLengthSettings(**blk)


def _comp_index(c):
    return {"x": 0, "y": 1, "z": 2}[c]


def _err(path, msg):
    raise ValidationError(msg, path=path)


def _need(d, key, path, types=None):
    if key not in d:
        _err(path, f"missing required field '{key}'")
    v = d[key]
    if types is not None and not isinstance(v, types):
        _err(f"{path}.{key}", f"expected {types}, got {type(v).__name__}")
    return v


def _material_from(name, spec, path):
    kind = _need(spec, "kind", path, str)
    try:
        if kind == "stvk":
            return StVenantKirchhoff(ElasticParams(float(spec["E"]), float(spec["nu"])))
        if kind == "neo_hookean":
            if "mu" in spec:
                params = ElasticParams.from_lame(float(spec["mu"]), float(spec["lam"]))
            else:
                params = ElasticParams(float(spec["E"]), float(spec["nu"]))
            return NeoHookean(params)
        if kind == "j2_plastic":
            return J2Plasticity(
                ElasticParams(float(spec["E"]), float(spec["nu"])),
                HardeningLaw(float(spec["yield_stress"]),
                             float(spec.get("hardening_modulus", 0.0))))
    except KeyError as exc:
        _err(path, f"material '{name}' missing parameter {exc}")
    except ValidationError as exc:
        _err(path, str(exc))
    _err(f"{path}.kind", f"unknown material kind '{kind}'")


def _patch_from(spec, materials, path):
    degrees = _need(spec, "degrees", path, list)
    if len(degrees) != 2:
        _err(f"{path}.degrees", "expected two entries")
    try:
        kv_u = KnotVector(np.asarray(_need(spec, "knots_u", path, list), float),
                          int(degrees[0]))
        kv_v = KnotVector(np.asarray(_need(spec, "knots_v", path, list), float),
                          int(degrees[1]))
    except ValidationError as exc:
        _err(path, str(exc))
    n, m = kv_u.n_funcs, kv_v.n_funcs
    shape = spec.get("shape")
    if shape is not None and (int(shape[0]) != n or int(shape[1]) != m):
        _err(f"{path}.shape", f"shape {shape} inconsistent with knot vectors ({n}, {m})")
    rows = _need(spec, "control_points", path, list)
    if len(rows) != n * m:
        _err(f"{path}.control_points", f"expected {n * m} rows, got {len(rows)}")
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (n * m, 4):
        _err(f"{path}.control_points", "each row must be [x, y, z, w]")
    w = arr[:, 3]
    bad = np.nonzero(w <= 0)[0]
    if bad.size:
        _err(f"{path}.control_points[{bad[0]}]",
             f"weight must be strictly positive, got {w[bad[0]]}")
    thickness = float(_need(spec, "thickness", path, (int, float)))
    if thickness <= 0:
        _err(f"{path}.thickness", "thickness must be positive")
    mat_name = _need(spec, "material", path, str)
    if mat_name not in materials:
        _err(f"{path}.material", f"undefined material '{mat_name}'")
    patch = NurbsPatch(kv_u, kv_v, arr[:, :3].reshape(n, m, 3),
                       w.reshape(n, m), thickness)
    refine = spec.get("refine")
    if refine:
        patch = patch.refined_to(int(refine.get("u", len(kv_u.spans))),
                                 int(refine.get("v", len(kv_v.spans))))
    return patch, mat_name


def _check_constraint(spec, n_patches, path):
    ip = _need(spec, "patch", path, int)
    if not 0 <= ip < n_patches:
        _err(f"{path}.patch", f"patch index {ip} out of range")
    if "edge" in spec and spec["edge"] not in _EDGES:
        _err(f"{path}.edge", f"edge must be one of {_EDGES}")
    if "edge" not in spec and "indices" not in spec:
        _err(path, "constraint needs 'edge' or 'indices'")
    comps = spec.get("components", "xyz")
    if any(c not in "xyz" for c in comps):
        _err(f"{path}.components", f"invalid components '{comps}'")


def _check_load(spec, n_patches, path):
    kind = _need(spec, "type", path, str)
    if kind not in _LOAD_TYPES:
        _err(f"{path}.type", f"unknown load type '{kind}' (expected {_LOAD_TYPES})")
    ip = spec.get("patch", "all")
    if ip != "all" and not 0 <= ip < n_patches:
        _err(f"{path}.patch", f"patch index {ip} out of range")
    if kind in ("point_cp", "point_xi", "edge") and ip == "all":
        _err(f"{path}.patch", f"load type '{kind}' needs an explicit patch")
    needed = {"point_cp": ("index", "force"), "point_xi": ("xi", "force"),
              "edge": ("edge", "force_per_length"), "body": ("force_per_area",),
              "pressure": ("magnitude",)}[kind]
    for key in needed:
        _need(spec, key, path)
    if kind == "edge" and spec["edge"] not in _EDGES:
        _err(f"{path}.edge", f"edge must be one of {_EDGES}")


def parse_model(source):
    """Parse and validate a model description (path or mapping).

    Returns a :class:`ParsedCase`; every violation raises
    :class:`ValidationError` carrying a path-to-field.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        _err("<root>", "model file must be a mapping")
    version = _need(doc, "version", "<root>", int)
    if version != FORMAT_VERSION:
        _err("version", f"unsupported format version {version}")

    mat_specs = _need(doc, "materials", "<root>", dict)
    materials = {name: _material_from(name, spec, f"materials.{name}")
                 for name, spec in mat_specs.items()}

    patch_specs = _need(doc, "patches", "<root>", list)
    if not patch_specs:
        _err("patches", "at least one patch required")
    patches, mats, tgauss = [], [], []
    for i, spec in enumerate(patch_specs):
        patch, mat_name = _patch_from(spec, materials, f"patches[{i}]")
        patches.append(patch)
        mats.append(materials[mat_name])
        tgauss.append(mat_specs[mat_name].get("thickness_gauss"))

    strips = doc.get("strips", "auto")
    if strips in ("none", None, False):
        strips = None
    elif strips != "auto":
        if not isinstance(strips, list):
            _err("strips", "expected 'auto', 'none' or a list")
        for i, s in enumerate(strips):
            for key in ("patch_a", "edge_a", "patch_b", "edge_b"):
                _need(s, key, f"strips[{i}]")

    constraints = doc.get("constraints", [])
    for i, c in enumerate(constraints):
        _check_constraint(c, len(patches), f"constraints[{i}]")
    loads = doc.get("loads", [])
    for i, l in enumerate(loads):
        _check_load(l, len(patches), f"loads[{i}]")
    monitors = doc.get("monitors", [])
    for i, mn in enumerate(monitors):
        _need(mn, "name", f"monitors[{i}]", str)
        _need(mn, "patch", f"monitors[{i}]", int)
        if "xi" not in mn and "index" not in mn:
            _err(f"monitors[{i}]", "monitor needs 'xi' or 'index'")
    # normalize index pair types (yaml lists -> tuples)
    constraints = [dict(c, indices=[tuple(ix) for ix in c["indices"]])
                   if "indices" in c else c for c in constraints]
    loads = [dict(l, index=tuple(l["index"])) if "index" in l else l for l in loads]
    monitors = [dict(mn, index=tuple(mn["index"])) if "index" in mn else mn
                for mn in monitors]

    solver = doc.get("solver", {"type": "newton"})
    if solver.get("type") not in ("newton", "arc_length"):
        _err("solver.type", "solver type must be 'newton' or 'arc_length'")
    lam_max = float(solver.get("lam_max", 1.0))

    model = Model(
        patches=patches,
        materials=mats,
        thickness_gauss=tgauss,
        strips=strips,
        strip_modulus_scale=float(doc.get("strip_modulus_scale", 1e4)),
        constraints=constraints,
        loads=loads,
        monitors=monitors,
    )
    return ParsedCase(model=model, solver=solver, description=doc, lam_max=lam_max)


def serialize_model(case: ParsedCase):
    """Dump a parsed case back to its canonical mapping form."""
    return case.description


def write_model(case_or_doc, path):
    doc = case_or_doc.description if isinstance(case_or_doc, ParsedCase) else case_or_doc
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)
