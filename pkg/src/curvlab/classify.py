"""Residual-based membership tests for the canonical-structure classes.

Each class is decided from normalized residual norms sampled at seeded
points.  Where the theory provides several equivalent characterizations
(weighted harmonic curvature has three, the weighted Yamabe condition two),
every formulation is evaluated and the report flags any verdict
disagreement between them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curvature import curvature_pack, tensor_norm
from .geometry import GeometryError, conformal_rescale, sample_points
from .potentials import f_pack, x_pack

F_CLASSES = ("SFf", "LSf", "LSEf", "PRf", "Ef", "HCf", "HCfLambda", "Yf")
X_CLASSES = ("SFx", "LSx", "LSEx", "PRx", "Ex", "HCx", "Yx")
ALL_CLASSES = F_CLASSES + X_CLASSES

LAMBDA_CLASSES = {"SFf", "LSEf", "Ef", "HCfLambda", "SFx", "LSEx", "Ex"}

# inclusion arrows A -> B meaning membership in A implies membership in B
F_EDGES = (("SFf", "LSEf"), ("SFf", "LSf"), ("LSEf", "Ef"), ("LSEf", "LSf"),
           ("LSf", "PRf"), ("Ef", "PRf"), ("Ef", "HCfLambda"),
           ("PRf", "HCfLambda"), ("HCfLambda", "HCf"), ("HCf", "Yf"))
X_EDGES = (("SFx", "LSEx"), ("SFx", "LSx"), ("LSEx", "Ex"), ("LSEx", "LSx"),
           ("LSx", "PRx"), ("Ex", "PRx"), ("Ex", "HCx"), ("PRx", "HCx"),
           ("HCx", "Yx"))

DEFAULT_THRESHOLD = 1e-6
DEPTH3_THRESHOLD = 1e-5

REPORT_SCHEMA = {
    "type": "object",
    "required": ["geometry", "class", "seed", "count", "threshold",
                 "residuals", "max", "mean", "verdict", "formulations"],
    "properties": {
        "geometry": {"type": "string"},
        "class": {"type": "string"},
        "seed": {"type": "integer"},
        "count": {"type": "integer"},
        "threshold": {"type": "number"},
        "lambda_estimate": {"type": ["number", "null"]},
        "lambda_stddev": {"type": ["number", "null"]},
        "residuals": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["point", "value"],
                "properties": {
                    "point": {"type": "array", "items": {"type": "number"}},
                    "value": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
        "max": {"type": "number"},
        "mean": {"type": "number"},
        "verdict": {"enum": ["member", "non-member", "inconclusive"]},
        "formulations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "max", "verdict"],
                "properties": {
                    "name": {"type": "string"},
                    "max": {"type": "number"},
                    "verdict": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


@dataclass
class MembershipReport:
    geometry: str
    cls: str
    seed: int
    count: int
    threshold: float
    residuals: np.ndarray
    points: np.ndarray
    formulations: list
    lambda_estimate: float | None = None
    lambda_stddev: float | None = None
    disagreement: bool = False

    @property
    def max(self):
        return float(np.max(self.residuals))

    @property
    def mean(self):
        return float(np.mean(self.residuals))

    @property
    def verdict(self):
        worst = self.max
        if self.lambda_stddev is not None:
            worst = max(worst, self.lambda_stddev)
        if worst <= self.threshold:
            return "member"
        if worst >= 10.0 * self.threshold:
            return "non-member"
        return "inconclusive"

    def to_dict(self):
        return {
            "geometry": self.geometry,
            "class": self.cls,
            "seed": int(self.seed),
            "count": int(self.count),
            "threshold": float(self.threshold),
            "lambda_estimate": self.lambda_estimate,
            "lambda_stddev": self.lambda_stddev,
            "residuals": [
                {"point": [float(x) for x in p], "value": float(v)}
                for p, v in zip(self.points, self.residuals)
            ],
            "max": self.max,
            "mean": self.mean,
            "verdict": self.verdict,
            "formulations": [
                {"name": f["name"], "max": float(f["max"]),
                 "verdict": f["verdict"]}
                for f in self.formulations
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _verdict_of(value, threshold):
    if value <= threshold:
        return "member"
    if value >= 10.0 * threshold:
        return "non-member"
    return "inconclusive"


# ---------------------------------------------------------------------------
# per-formulation residuals (each returns a per-point array)

def _r_weyl(pack, _wp):
    gi = pack.g_inv
    return tensor_norm(gi, pack.weyl, 4) / (1.0 + tensor_norm(gi, pack.riem, 4))


def _r_einstein(pack, wp, ric_w, scal_w, lam_hat):
    gi = pack.g_inv
    dev = ric_w - lam_hat * pack.g
    return tensor_norm(gi, dev, 2) / (1.0 + tensor_norm(gi, ric_w, 2))


def _r_codazzi(pack, codazzi, dric_w):
    gi = pack.g_inv
    return tensor_norm(gi, codazzi, 3) / (1.0 + tensor_norm(gi, dric_w, 3))


def _r_weighted_div_riem(pack, fp):
    gi = pack.g_inv
    div_riem = np.einsum("...tm,...tijkm->...ijk", gi, pack.driem)
    pull = np.einsum("...t,...tijk->...ijk", fp.grad, pack.riem)
    scale = 1.0 + np.maximum(tensor_norm(gi, div_riem, 3),
                             tensor_norm(gi, pull, 3))
    return tensor_norm(gi, div_riem - pull, 3) / scale


def _r_integrability_f(pack, fp):
    gi = pack.g_inv
    ftw = np.einsum("...t,...tijk->...ijk", fp.grad, pack.weyl)
    lhs = pack.cotton + ftw - fp.d_tensor
    scale = 1.0 + np.max(np.stack([tensor_norm(gi, pack.cotton, 3),
                                   tensor_norm(gi, ftw, 3),
                                   tensor_norm(gi, fp.d_tensor, 3)]), axis=0)
    part1 = tensor_norm(gi, lhs, 3) / scale
    return np.maximum(part1, _r_scal_gradient_f(pack, fp))


def _r_scal_gradient_f(pack, fp):
    gi = pack.g_inv
    pull = 2.0 * np.einsum("...t,...tk->...k", fp.grad, pack.ric)
    scale = 1.0 + np.maximum(tensor_norm(gi, pack.dscal, 1),
                             tensor_norm(gi, pull, 1))
    return tensor_norm(gi, fp.yf_form, 1) / scale


def _r_div_einstein_f(pack, fp):
    gi = pack.g_inv
    dric_f = fp.require("dric_f")
    div_ric_f = np.einsum("...ij,...jki->...k", gi, dric_f)
    dscal_f = fp.dscal_f
    scale = 1.0 + np.maximum(tensor_norm(gi, div_ric_f, 1),
                             tensor_norm(gi, dscal_f, 1))
    return tensor_norm(gi, div_ric_f - dscal_f, 1) / scale


def _r_grad_riem_f(pack, fp):
    gi = pack.g_inv
    t = fp.require("driem_f")
    return tensor_norm(gi, t, 5) / (1.0 + tensor_norm(gi, pack.driem, 5)
                                    + tensor_norm(gi, t - pack.driem, 5))


def _r_rf_constancy(pack, fp, lam_hat, n):
    dev = np.abs(fp.scal_f / n - lam_hat)
    return dev / (1.0 + np.abs(fp.scal_f) / n)


# X-sector equivalents -------------------------------------------------------

def _r_scal_gradient_x(pack, xp):
    gi = pack.g_inv
    x_up = np.einsum("...ij,...j->...i", gi, xp.x_low)
    pull = 2.0 * np.einsum("...t,...tk->...k", x_up, pack.ric)
    scale = 1.0 + np.max(np.stack([tensor_norm(gi, pack.dscal, 1),
                                   tensor_norm(gi, pull, 1),
                                   tensor_norm(gi, xp.div_anti, 1)]), axis=0)
    return tensor_norm(gi, xp.yx_form, 1) / scale


def _r_integrability_x(pack, xp):
    gi = pack.g_inv
    x_up = np.einsum("...ij,...j->...i", gi, xp.x_low)
    xtw = np.einsum("...t,...tijk->...ijk", x_up, pack.weyl)
    lhs = pack.cotton + xtw - xp.d_tensor
    scale = 1.0 + np.max(np.stack([tensor_norm(gi, pack.cotton, 3),
                                   tensor_norm(gi, xtw, 3),
                                   tensor_norm(gi, xp.d_tensor, 3)]), axis=0)
    part1 = tensor_norm(gi, lhs, 3) / scale
    return np.maximum(part1, _r_scal_gradient_x(pack, xp))


def _r_div_kn_ex(pack, xp):
    """div(E_X ^ g) through the Kulkarni-Nomizu divergence rule."""
    from .curvature import covariant_derivative
    gi = pack.g_inv
    n = pack.dim
    order = pack.depth + 2
    de = covariant_derivative(n, order - 2, pack.jets["gamma"],
                              xp.jets["einstein_x"], 2)[..., 0]
    div_e = np.einsum("...tm,...tjm->...j", gi, de)
    g0 = pack.g
    t = (np.einsum("...j,...ik->...ijk", div_e, g0)
         - np.einsum("...k,...ij->...ijk", div_e, g0)
         + np.einsum("...ikj->...ijk", de) - de)
    return tensor_norm(gi, t, 3) / (1.0 + tensor_norm(gi, de, 3))


def _r_div_einstein_x(pack, xp):
    gi = pack.g_inv
    dric_x = xp.require("dric_x")
    div_ric_x = np.einsum("...ij,...jki->...k", gi, dric_x)
    dscal_x = xp.dscal_x
    scale = 1.0 + np.maximum(tensor_norm(gi, div_ric_x, 1),
                             tensor_norm(gi, dscal_x, 1))
    return tensor_norm(gi, div_ric_x - dscal_x, 1) / scale


def _r_grad_riem_x(pack, xp):
    gi = pack.g_inv
    t = xp.require("driem_x")
    return tensor_norm(gi, t, 5) / (1.0 + tensor_norm(gi, pack.driem, 5)
                                    + tensor_norm(gi, t - pack.driem, 5))


# ---------------------------------------------------------------------------

def _evaluate_f(cls, pack, fp, n):
    lam = float(np.mean(fp.scal_f / n)) if cls in LAMBDA_CLASSES else None
    forms = []
    if cls == "Ef":
        forms = [("einstein_f",
                  _r_einstein(pack, fp, fp.ric_f, fp.scal_f, lam))]
    elif cls == "SFf":
        forms = [("weyl_vanishing", _r_weyl(pack, fp)),
                 ("einstein_f",
                  _r_einstein(pack, fp, fp.ric_f, fp.scal_f, lam))]
    elif cls == "LSf":
        forms = [("grad_riem_f", _r_grad_riem_f(pack, fp))]
    elif cls == "LSEf":
        forms = [("grad_riem_f", _r_grad_riem_f(pack, fp)),
                 ("einstein_f",
                  _r_einstein(pack, fp, fp.ric_f, fp.scal_f, lam))]
    elif cls == "PRf":
        forms = [("grad_ric_f",
                  tensor_norm(pack.g_inv, fp.require("dric_f"), 3)
                  / (1.0 + tensor_norm(pack.g_inv, pack.dric, 3)))]
    elif cls == "HCf":
        forms = [("weighted_div_riem", _r_weighted_div_riem(pack, fp)),
                 ("codazzi_ric_f", _r_codazzi(pack, fp.require("codazzi_f"),
                                              fp.require("dric_f"))),
                 ("cotton_weyl_d", _r_integrability_f(pack, fp))]
    elif cls == "HCfLambda":
        forms = [("weighted_div_riem", _r_weighted_div_riem(pack, fp)),
                 ("codazzi_ric_f", _r_codazzi(pack, fp.require("codazzi_f"),
                                              fp.require("dric_f"))),
                 ("cotton_weyl_d", _r_integrability_f(pack, fp)),
                 ("rf_constancy", _r_rf_constancy(pack, fp, lam, n))]
    elif cls == "Yf":
        forms = [("scal_gradient", _r_scal_gradient_f(pack, fp)),
                 ("div_einstein_f", _r_div_einstein_f(pack, fp))]
    else:
        raise GeometryError(f"unknown class {cls}")
    lam_std = float(np.std(fp.scal_f / n)) if lam is not None else None
    return forms, lam, lam_std


def _evaluate_x(cls, pack, xp, n):
    lam = float(np.mean(xp.scal_x / n)) if cls in LAMBDA_CLASSES else None
    forms = []
    if cls == "Ex":
        forms = [("einstein_x",
                  _r_einstein(pack, xp, xp.ric_x, xp.scal_x, lam))]
    elif cls == "SFx":
        forms = [("weyl_vanishing", _r_weyl(pack, xp)),
                 ("einstein_x",
                  _r_einstein(pack, xp, xp.ric_x, xp.scal_x, lam))]
    elif cls == "LSx":
        forms = [("grad_riem_x", _r_grad_riem_x(pack, xp))]
    elif cls == "LSEx":
        forms = [("grad_riem_x", _r_grad_riem_x(pack, xp)),
                 ("einstein_x",
                  _r_einstein(pack, xp, xp.ric_x, xp.scal_x, lam))]
    elif cls == "PRx":
        forms = [("grad_ric_x",
                  tensor_norm(pack.g_inv, xp.require("dric_x"), 3)
                  / (1.0 + tensor_norm(pack.g_inv, pack.dric, 3)))]
    elif cls == "HCx":
        forms = [("div_kn_ex", _r_div_kn_ex(pack, xp)),
                 ("codazzi_ric_x", _r_codazzi(pack, xp.require("codazzi_x"),
                                              xp.require("dric_x"))),
                 ("cotton_weyl_dx", _r_integrability_x(pack, xp))]
    elif cls == "Yx":
        forms = [("scal_gradient_x", _r_scal_gradient_x(pack, xp)),
                 ("div_einstein_x", _r_div_einstein_x(pack, xp))]
    else:
        raise GeometryError(f"unknown class {cls}")
    lam_std = float(np.std(xp.scal_x / n)) if lam is not None else None
    return forms, lam, lam_std


def _class_depth(cls):
    return 1


def classify(entry, cls, seed=7, count=32, threshold=None, points=None):
    """Membership report for one class at seeded sample points."""
    if cls not in ALL_CLASSES:
        raise GeometryError(f"unknown class name {cls!r}; valid: "
                            f"{', '.join(ALL_CLASSES)}")
    metric = entry.metric
    n = metric.chart.dim
    threshold = DEFAULT_THRESHOLD if threshold is None else float(threshold)
    if points is None:
        points = sample_points(metric.chart, count, seed)
    points = np.asarray(points, dtype=float)
    count = points.shape[0]

    depth = _class_depth(cls)
    pack = curvature_pack(metric.jets(points, depth + 2), points, depth)

    if cls in F_CLASSES:
        if entry.potential is None:
            raise GeometryError(f"class {cls} needs a potential, and "
                                f"{entry.name} has none")
        fp = f_pack(pack, entry.potential)
        forms, lam, lam_std = _evaluate_f(cls, pack, fp, n)
    else:
        if entry.vector_field is None:
            raise GeometryError(f"class {cls} needs a vector field, and "
                                f"{entry.name} has none")
        xp = x_pack(pack, entry.vector_field)
        forms, lam, lam_std = _evaluate_x(cls, pack, xp, n)

    residuals = np.max(np.stack([np.broadcast_to(r, (count,)) for _, r in
                                 forms]), axis=0)
    form_list = []
    verdicts = set()
    for name, r in forms:
        m = float(np.max(r))
        v = _verdict_of(m, threshold)
        form_list.append({"name": name, "max": m, "verdict": v})
        verdicts.add(v)
    disagreement = "member" in verdicts and "non-member" in verdicts

    return MembershipReport(
        geometry=entry.name, cls=cls, seed=seed, count=count,
        threshold=threshold, residuals=residuals, points=points,
        formulations=form_list, lambda_estimate=lam, lambda_stddev=lam_std,
        disagreement=disagreement)


def lattice_check(entry, seed=7, count=16, threshold=None):
    """Classify against every applicable class; check upward closure."""
    rows = {}
    if entry.potential is not None:
        for cls in F_CLASSES:
            rows[cls] = classify(entry, cls, seed, count, threshold)
    if entry.vector_field is not None:
        for cls in X_CLASSES:
            rows[cls] = classify(entry, cls, seed, count, threshold)
    member = {cls: rows[cls].verdict == "member" for cls in rows}
    violations = []
    for edges in (F_EDGES, X_EDGES):
        for a, b in edges:
            if a in member and b in member and member[a] \
                    and rows[b].verdict == "non-member":
                violations.append((a, b))
    return {"geometry": entry.name, "member": member,
            "reports": rows, "violations": violations}


def warped_structure_diagnostic(entry, point, threshold=1e-6):
    """Ricci eigenstructure at a regular point of a conformally flat triple.

    Checks that grad f is a Ricci eigendirection and that the remaining
    n-1 eigenvalues coincide and satisfy mu_k = (R - mu_1)/(n - 1).
    """
    metric, potential = entry.metric, entry.potential
    if potential is None:
        raise GeometryError("diagnostic needs a potential")
    p = np.asarray(point, dtype=float)
    n = metric.chart.dim
    pack = curvature_pack(metric.jets(p, 2), p, 0)
    fp = f_pack(pack, potential)

    grad_norm = float(np.sqrt(np.einsum("...i,...i->...", fp.df, fp.grad)))
    if grad_norm <= threshold:
        raise GeometryError("critical point of the potential")
    wnorm = float(tensor_norm(pack.g_inv, pack.weyl, 4)) if n >= 3 else 0.0
    if wnorm > 10.0 * threshold:
        raise GeometryError("geometry is not locally conformally flat here")

    L = np.linalg.cholesky(pack.g)
    Li = np.linalg.inv(L)
    A = Li @ pack.ric @ Li.T
    A = 0.5 * (A + A.T)
    evals, evecs = np.linalg.eigh(A)

    v = L.T @ fp.grad
    v = v / np.linalg.norm(v)
    Av = A @ v
    mu1 = float(v @ Av)
    eig_res = float(np.linalg.norm(Av - mu1 * v) / (1.0 + abs(mu1)))

    overlap = np.abs(evecs.T @ v)
    k1 = int(np.argmax(overlap))
    others = np.delete(evals, k1)
    scal = float(pack.scal)
    mu_k = float(np.mean(others))
    spread = float(np.max(np.abs(others - mu_k))) if others.size else 0.0
    relation = abs(mu_k - (scal - mu1) / (n - 1.0)) / (1.0 + abs(mu_k))
    degenerate = bool(np.max(evals) - np.min(evals) <= threshold *
                      (1.0 + np.abs(evals).max()))
    return {
        "point": [float(x) for x in p],
        "eigenvector_residual": eig_res,
        "mu_1": mu1,
        "mu_fiber": mu_k,
        "fiber_spread": spread,
        "relation_residual": float(relation),
        "degenerate": degenerate,
        "eigenvalues": [float(e) for e in evals],
    }


def yf_conformal_check(entry, u, seed=7, count=16):
    """Compare rescale-and-recheck against the printed conformal PDE.

    Route (i) classifies (e^{2u} g, f) for the weighted Yamabe condition
    and is authoritative; route (ii) evaluates the printed second-order
    PDE for the conformal factor and is reported as a diagnostic only.
    """
    from .curvature import covariant_derivative
    from .jets import _table

    metric, potential = entry.metric, entry.potential
    if potential is None:
        raise GeometryError("the weighted Yamabe check needs a potential")
    n = metric.chart.dim
    points = sample_points(metric.chart, count, seed)

    rescaled = conformal_rescale(metric, u)
    entry2 = type(entry)(entry.name + "+conformal", rescaled, potential)
    report = classify(entry2, "Yf", seed=seed, count=count, points=points)

    # route (ii): printed PDE with respect to the base metric
    pack = curvature_pack(metric.jets(points, 3), points, 1)
    fp = f_pack(pack, potential)
    order = 3
    gamma = pack.jets["gamma"]
    tabs = {o: _table(n, o) for o in range(order + 1)}
    uj = u.jet(points, order)
    du = covariant_derivative(n, order, gamma, uj.c, 0)
    hess_u = covariant_derivative(n, order - 1, gamma, du, 1)
    gi_j = pack.jets["ginv"]
    from .curvature import _jeinsum, _trunc
    lap_u = _jeinsum(tabs[order - 2], "ij,ij->", _trunc(n, order - 2, gi_j),
                     hess_u)
    dlap_u = covariant_derivative(n, order - 2, gamma, lap_u, 0)[..., 0]

    gi = pack.g_inv
    du0 = du[..., 0]
    gu = np.einsum("...ij,...j->...i", gi, du0)
    hu = hess_u[..., 0]
    lu = lap_u[..., 0]
    du2 = np.einsum("...i,...i->...", du0, gu)
    hugu = np.einsum("...ij,...j->...i", hu, gu)
    hugf = np.einsum("...ij,...j->...i", hu, fp.grad)
    ricgf = np.einsum("...ij,...j->...i", pack.ric, fp.grad)
    udotf = np.einsum("...i,...i->...", du0, fp.grad)

    res = (dlap_u + (n - 2.0) * hugu
           - (2.0 * lu + (n - 2.0) * du2
              - pack.scal / (n - 1.0))[..., None] * du0
           - pack.dscal / (2.0 * (n - 1.0))
           + ricgf
           - (n - 2.0) / (n - 1.0) * hugf
           - ((lu + (n - 2.0) * du2) / (n - 1.0))[..., None] * fp.df
           + (n - 2.0) / (n - 1.0) * udotf[..., None] * du0)
    pde = tensor_norm(gi, res, 1) / (1.0 + tensor_norm(gi, dlap_u, 1)
                                     + tensor_norm(gi, ricgf, 1))
    tol = report.threshold
    return {
        "rescaled_yf": report,
        "pde_residuals": pde,
        "both_vanish": [bool(a <= tol and b <= tol)
                        for a, b in zip(report.residuals, pde)],
        "either_vanishes": [bool(a <= tol or b <= tol)
                            for a, b in zip(report.residuals, pde)],
    }
