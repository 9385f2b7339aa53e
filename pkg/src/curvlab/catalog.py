"""The model catalog: declared data from the shipped JSON plus live derived facts."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from . import actions, algebra, lie, models
from .cheeger import cheeger_metric
from .errors import InputError


def _load():
    return json.loads(resources.files("curvlab").joinpath("data/catalog.json").read_text())


def entries():
    return {m["id"]: m for m in _load()["models"]}


def list_models():
    return sorted(entries())


def entry(model_id):
    table = entries()
    if model_id not in table:
        raise InputError(f"unknown model {model_id!r}; known: {', '.join(sorted(table))}")
    return table[model_id]


def build(model_id, **params):
    """The object behind a catalog id: a MetricModel, an action, a split Lie algebra or a bundle."""
    e = entry(model_id)
    p = dict(e.get("parameters", {}))
    p.update(params)
    if model_id == "flat-R3":
        return models.flat(3)
    if model_id == "round-S2":
        return models.round_sphere(2)
    if model_id == "round-S3":
        return models.round_sphere(3)
    if model_id == "berger-S3":
        act = actions.hopf_action()
        return cheeger_metric(act, act.base, float(p["l"]))
    if model_id == "hopf-S1-on-S3":
        return actions.hopf_action()
    if model_id == "torus-T2-on-S3":
        return actions.torus_action()
    if model_id == "davis-SO3-on-S7":
        return actions.davis_action()
    if model_id == "spin9xS8":
        return lie.spin9_split()
    if model_id == "milnor-E-m-n":
        return algebra.BundleChartPair(algebra.quaternions(), int(p["m"]), int(p["n"]))
    raise InputError(f"no builder for {model_id!r}")


def atlas(model_id):
    """The chart models of a catalog entry (two stereographic charts for spheres)."""
    if model_id in ("round-S2", "round-S3"):
        n = int(model_id[-1])
        north, south, _ = models.sphere_atlas(n)
        return [north, south]
    if model_id == "flat-R3":
        return [models.flat(3)]
    obj = build(model_id)
    base = getattr(obj, "base", None)
    if base is not None and getattr(base, "chart", None) is not None:
        ch = base.chart
        south = models.round_sphere(ch.n, ch.radius, ch.frame, flip=not ch.flip)
        return [base, south]
    return []


def _davis_isotropy_examples():
    H = algebra.quaternions()
    one, i, j = H.one(), H.basis(1), H.basis(2)
    ders = algebra.derivation_algebra(H)
    out = []
    for name, (u, v) in (("(1,1)", (one, one)), ("(i,i)", (i, i)), ("(i,j)", (i, j))):
        out.append({"point": name, "label": algebra.isotropy_classify(H, u, v),
                    "isotropy_dim": algebra.isotropy_dimension(H, u, v, ders)})
    return out


def describe(model_id):
    """Declared data plus facts computed from the model itself."""
    e = dict(entry(model_id))
    derived = {}
    if model_id == "spin9xS8":
        split = build(model_id)
        derived["dims"] = [split.dim, 8]
        dims = lie.split_dimensions(split)
        derived["splitting_dims"] = {"spin(7)": dims[2], "m_spin(8)": dims[3], "m_spin(9)": dims[4]}
    elif model_id in ("davis-SO3-on-S7", "milnor-E-m-n"):
        derived["isotropy_examples"] = _davis_isotropy_examples()
    obj = None if model_id == "spin9xS8" else build(model_id)
    if hasattr(obj, "lie_dim"):
        derived["group_dim"] = obj.lie_dim
        derived["declared_strata"] = [s.label for s in obj.declared_strata]
        derived["principal_orbit_pi1_finite"] = obj.pi1_finite
        derived["manifold_dim"] = obj.base.dim
    elif hasattr(obj, "dim") and not isinstance(obj, algebra.BundleChartPair):
        derived["manifold_dim"] = obj.dim
    if isinstance(obj, algebra.BundleChartPair):
        derived["homotopy_sphere"] = obj.is_homotopy_sphere
    derived["chart_count"] = len(e.get("charts", []))
    e["derived"] = derived
    return e


def describe_text(model_id):
    d = describe(model_id)
    lines = [f"{d['id']}: {d['description']}", f"  kind: {d['kind']}"]
    lines.append("  charts: " + "; ".join(d.get("charts", [])))
    strata = d.get("strata", [])
    lines.append("  strata: " + ("; ".join(f"{s['label']} ({s['isotropy']})" for s in strata) if strata else "none"))
    if "isotropy_types" in d:
        lines.append("  isotropy types: " + ", ".join(d["isotropy_types"]))
    hyp = d.get("hypotheses", {})
    lines.append("  hypotheses: " + (", ".join(f"{k}={v}" for k, v in sorted(hyp.items())) if hyp else "none"))
    for k, v in sorted(d["derived"].items()):
        lines.append(f"  {k}: {json.dumps(v, default=_plain)}")
    return "\n".join(lines)


def _plain(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    return str(o)
