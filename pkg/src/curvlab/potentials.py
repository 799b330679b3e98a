"""Potential-weighted curvature tensors: gradient (f) and vector-field (X).

FPack carries the Bakry-Emery machinery of a (metric, potential) pair:
Ric_f = Ric + Hess f, its scalar R_f, the trace-adjusted version A_f,
the full 4-tensor Riem_f, the integrability 3-tensor D, and the weighted
divergences.  XPack is the vector-field analogue built from the Lie
derivative and the antisymmetric part of grad X; it reduces to FPack
field-by-field when X = grad f.

Sign conventions are pinned by exact pointwise identities (see
tests): for every (g, f),

  (Ric_f)_{ij,k} - (Ric_f)_{ik,j}
      = C_ijk + f^t W_tijk - D_ijk
        + (Y_k g_ij - Y_j g_ik) / (2(n-1)),   Y_k = R_k - 2 f^t R_tk,

and the analogous X-identity with Y replaced by the vector-field scalar
gradient combination and D by its nongradient extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import (_jeinsum, _kn_jets, _trunc, covariant_derivative,
                        kulkarni_nomizu, raise_index, tensor_norm)
from .jets import JetError, _table


def _values(a):
    return a[..., 0]


@dataclass
class FPack:
    """Weighted tensors of a (metric, potential) pair at sample points."""

    dim: int
    depth: int
    f: np.ndarray
    df: np.ndarray          # f_i (covariant)
    grad: np.ndarray        # f^i
    hess: np.ndarray
    lap: np.ndarray
    ric_f: np.ndarray
    scal_f: np.ndarray
    schouten_f: np.ndarray
    einstein_f: np.ndarray
    riem_f: np.ndarray
    d_tensor: np.ndarray
    dric_f: np.ndarray | None = None
    driem_f: np.ndarray | None = None
    div_wriem: np.ndarray | None = None   # div(e^-f Riem)
    div_wric: np.ndarray | None = None    # div(e^-f Ric)
    dscal_f: np.ndarray | None = None     # grad R_f
    codazzi_f: np.ndarray | None = None   # Ric_f deficit
    yf_form: np.ndarray | None = None     # R_k - 2 f^t R_tk
    jets: dict = field(default_factory=dict)

    def require(self, name):
        value = getattr(self, name, None)
        if value is None:
            raise JetError(f"{name} needs a deeper pack (depth={self.depth})")
        return value


def d_tensor_values(pack, df, grad):
    """Soliton integrability tensor for a gradient direction (values)."""
    n = pack.dim
    g0, ric, scal = pack.g, pack.ric, pack.scal
    ric_grad = np.einsum("...t,...tk->...k", grad, ric)
    t1 = (np.einsum("...k,...ij->...ijk", df, ric)
          - np.einsum("...j,...ik->...ijk", df, ric)) / (n - 2.0)
    t2 = (np.einsum("...k,...ij->...ijk", ric_grad, g0)
          - np.einsum("...j,...ik->...ijk", ric_grad, g0)) / ((n - 1.0) * (n - 2.0))
    t3 = (np.einsum("...,...k,...ij->...ijk", scal, df, g0)
          - np.einsum("...,...j,...ik->...ijk", scal, df, g0)) / ((n - 1.0) * (n - 2.0))
    return t1 + t2 - t3


def f_pack(pack, potential, depth=None):
    """Populate the weighted tensors from a CurvaturePack and a potential."""
    n = pack.dim
    depth = pack.depth if depth is None else depth
    if depth > pack.depth:
        raise JetError("potential pack cannot exceed the curvature depth")
    order = pack.depth + 2
    fj = potential.jet(pack.point, order)

    tab = {o: _table(n, o) for o in range(order + 1)}
    gamma = pack.jets["gamma"]
    g_j = pack.jets["g"]
    ginv_j = pack.jets["ginv"]

    o1, o2 = order - 1, order - 2
    df = covariant_derivative(n, order, gamma, fj.c, 0)
    grad = _jeinsum(tab[o1], "ij,j->i", _trunc(n, o1, ginv_j), df)
    hess = covariant_derivative(n, o1, gamma, df, 1)
    lap = _jeinsum(tab[o2], "ij,ij->", _trunc(n, o2, ginv_j), hess)

    ric = pack.jets["ric"]
    scal = pack.jets["scal"]
    g2 = _trunc(n, o2, g_j)
    ric_f = ric + hess
    scal_f = scal + lap
    schouten_f = ric_f - _jeinsum(tab[o2], ",ij->ij",
                                  scal_f / (2.0 * (n - 1.0)), g2)
    einstein_f = ric_f - _jeinsum(tab[o2], ",ij->ij", scal_f / 2.0, g2)
    trace_part = hess - _jeinsum(tab[o2], ",ij->ij",
                                 lap / (2.0 * (n - 1.0)), g2)
    riem_f = pack.jets["riem"] + _kn_jets(tab[o2], trace_part, g2) / (n - 2.0)

    out = FPack(
        dim=n, depth=depth, f=fj.c[..., 0],
        df=_values(df), grad=_values(grad), hess=_values(hess),
        lap=_values(lap), ric_f=_values(ric_f), scal_f=_values(scal_f),
        schouten_f=_values(schouten_f), einstein_f=_values(einstein_f),
        riem_f=_values(riem_f),
        d_tensor=d_tensor_values(pack, _values(df), _values(grad)),
    )
    out.jets.update(f=fj.c, df=df, hess=hess, ric_f=ric_f, scal_f=scal_f,
                    riem_f=riem_f, einstein_f=einstein_f)

    if depth >= 1:
        o3 = order - 3
        dric_f = covariant_derivative(n, o2, gamma, ric_f, 2)
        out.dric_f = _values(dric_f)
        out.codazzi_f = out.dric_f - np.einsum("...ikj->...ijk", out.dric_f)
        out.jets["dric_f"] = dric_f

        driem = pack.driem
        ginv0 = pack.g_inv
        div_riem = np.einsum("...tm,...tijkm->...ijk", ginv0, driem)
        pull = np.einsum("...t,...tijk->...ijk", out.grad, pack.riem)
        ef = np.exp(-out.f)
        out.div_wriem = ef[..., None, None, None] * (div_riem - pull)

        div_ric = np.einsum("...tm,...tjm->...j", ginv0, pack.dric)
        pull_r = np.einsum("...t,...tj->...j", out.grad, pack.ric)
        out.div_wric = ef[..., None] * (div_ric - pull_r)
        out.yf_form = pack.dscal - 2.0 * np.einsum("...t,...tk->...k",
                                                   out.grad, pack.ric)

        dtrace = covariant_derivative(n, o2, gamma, trace_part, 2)
        dlap = covariant_derivative(n, o2, gamma, lap, 0)
        out.dscal_f = pack.dscal + _values(dlap)
        g3 = _values(_trunc(n, o3, g_j))
        # grad(alpha ^ g) = (grad alpha) ^ g, derivative slot kept last
        kn_d = (np.einsum("...ikm,...jt->...ijktm", _values(dtrace), g3)
                - np.einsum("...itm,...jk->...ijktm", _values(dtrace), g3)
                + np.einsum("...jtm,...ik->...ijktm", _values(dtrace), g3)
                - np.einsum("...jkm,...it->...ijktm", _values(dtrace), g3))
        out.driem_f = pack.driem + kn_d / (n - 2.0)
        out.jets["dlap"] = dlap

    return out


@dataclass
class XPack:
    """Vector-field analogue of FPack."""

    dim: int
    depth: int
    x_up: np.ndarray
    x_low: np.ndarray
    nabla_x: np.ndarray       # (grad X)_ij = X_{i;j}
    lie_g: np.ndarray         # L_X g
    anti: np.ndarray          # A^X_ij = X_{i;j} - X_{j;i}
    div_x: np.ndarray
    div_anti: np.ndarray
    ric_x: np.ndarray
    scal_x: np.ndarray
    schouten_x: np.ndarray
    einstein_x: np.ndarray
    riem_x: np.ndarray
    d_tensor: np.ndarray | None = None
    dric_x: np.ndarray | None = None
    driem_x: np.ndarray | None = None
    codazzi_x: np.ndarray | None = None
    dscal_x: np.ndarray | None = None     # grad R_X
    yx_form: np.ndarray | None = None     # R_k - 2 X^t R_tk - div(A^X)_k
    jets: dict = field(default_factory=dict)

    def require(self, name):
        value = getattr(self, name, None)
        if value is None:
            raise JetError(f"{name} needs a deeper pack (depth={self.depth})")
        return value


def x_pack(pack, vfield, depth=None):
    n = pack.dim
    depth = pack.depth if depth is None else depth
    if depth > pack.depth:
        raise JetError("vector pack cannot exceed the curvature depth")
    order = pack.depth + 2
    xu = vfield.jets(pack.point, order)

    tab = {o: _table(n, o) for o in range(order + 1)}
    gamma = pack.jets["gamma"]
    g_j = pack.jets["g"]
    ginv_j = pack.jets["ginv"]

    o1, o2, o3 = order - 1, order - 2, order - 3
    xl = _jeinsum(tab[order], "ij,j->i", g_j, xu)
    dx = covariant_derivative(n, order, gamma, xl, 1)   # X_{i;j}
    lie = dx + np.swapaxes(dx, -3, -2)
    anti = dx - np.swapaxes(dx, -3, -2)
    div_x = _jeinsum(tab[o1], "ij,ij->", _trunc(n, o1, ginv_j), dx)

    # curvature jets live at order-2; bring the X-jets down to match
    half_lie = 0.5 * _trunc(n, o2, lie)
    div_x2 = _trunc(n, o2, div_x)
    ric = pack.jets["ric"]
    scal = pack.jets["scal"]
    g2 = _trunc(n, o2, g_j)
    ric_x = ric + half_lie
    scal_x = scal + div_x2
    schouten_x = ric_x - _jeinsum(tab[o2], ",ij->ij",
                                  scal_x / (2.0 * (n - 1.0)), g2)
    einstein_x = ric_x - _jeinsum(tab[o2], ",ij->ij", scal_x / 2.0, g2)
    trace_part = half_lie - _jeinsum(tab[o2], ",ij->ij",
                                     div_x2 / (2.0 * (n - 1.0)), g2)
    if n >= 3:
        riem_x = pack.jets["riem"] + \
            _kn_jets(tab[o2], trace_part, g2) / (n - 2.0)
    else:
        riem_x = pack.jets["riem"]

    danti = covariant_derivative(n, o1, gamma, anti, 2)
    div_anti = _jeinsum(tab[o2], "jm,ijm->i", _trunc(n, o2, ginv_j), danti)

    ginv0 = pack.g_inv
    x_up0 = _values(xu)
    x_low0 = _values(xl)

    out = XPack(
        dim=n, depth=depth, x_up=x_up0, x_low=x_low0,
        nabla_x=_values(dx), lie_g=_values(lie), anti=_values(anti),
        div_x=_values(div_x), div_anti=_values(div_anti),
        ric_x=_values(ric_x), scal_x=_values(scal_x),
        schouten_x=_values(schouten_x), einstein_x=_values(einstein_x),
        riem_x=_values(riem_x),
    )
    out.jets.update(x_low=xl, dx=dx, lie=lie, anti=anti, ric_x=ric_x,
                    scal_x=scal_x, riem_x=riem_x, einstein_x=einstein_x,
                    danti=danti, div_x=div_x)
    if n >= 3:
        out.d_tensor = d_tensor_x_values(pack, out)

    if depth >= 1:
        dric_x = covariant_derivative(n, o2, gamma, ric_x, 2)
        out.dric_x = _values(dric_x)
        ddivx = covariant_derivative(n, o2, gamma, div_x2, 0)
        out.dscal_x = pack.dscal + _values(ddivx)
        out.codazzi_x = out.dric_x - np.einsum("...ikj->...ijk", out.dric_x)
        out.yx_form = (pack.dscal
                       - 2.0 * np.einsum("...t,...tk->...k",
                                         raise_index(ginv0, x_low0, 0, 1),
                                         pack.ric)
                       - out.div_anti)
        if n >= 3:
            dtrace = covariant_derivative(n, o2, gamma, trace_part, 2)
            g2v = pack.g
            kn_d = (np.einsum("...ikm,...jt->...ijktm", _values(dtrace), g2v)
                    - np.einsum("...itm,...jk->...ijktm", _values(dtrace), g2v)
                    + np.einsum("...jtm,...ik->...ijktm", _values(dtrace), g2v)
                    - np.einsum("...jkm,...it->...ijktm", _values(dtrace), g2v))
            out.driem_x = pack.driem + kn_d / (n - 2.0)

    return out


def d_tensor_x_values(pack, xp):
    """Nongradient integrability tensor, written with the antisymmetric part.

    D^X = (gradient-form terms with f -> X) + A-corrections:
      + 1/2 A_{kj;i} - (div(A)_k g_ij - div(A)_j g_ik) / (2(n-1)).
    """
    n = pack.dim
    g0, ric, scal, ginv0 = pack.g, pack.ric, pack.scal, pack.g_inv
    xl = xp.x_low
    x_up = raise_index(ginv0, xl, 0, 1)
    ric_x = np.einsum("...t,...tk->...k", x_up, ric)
    t1 = (np.einsum("...k,...ij->...ijk", xl, ric)
          - np.einsum("...j,...ik->...ijk", xl, ric)) / (n - 2.0)
    t2 = (np.einsum("...k,...ij->...ijk", ric_x, g0)
          - np.einsum("...j,...ik->...ijk", ric_x, g0)) / ((n - 1.0) * (n - 2.0))
    t3 = (np.einsum("...,...k,...ij->...ijk", scal, xl, g0)
          - np.einsum("...,...j,...ik->...ijk", scal, xl, g0)) / ((n - 1.0) * (n - 2.0))
    danti0 = _values(xp.jets["danti"])    # A_{kj;i} ordered (k, j, i)
    a_corr = 0.5 * np.einsum("...kji->...ijk", danti0)
    div_a = xp.div_anti
    a_tr = (np.einsum("...k,...ij->...ijk", div_a, g0)
            - np.einsum("...j,...ik->...ijk", div_a, g0)) / (2.0 * (n - 1.0))
    return t1 + t2 - t3 + a_corr - a_tr


def soliton_identity_report(pack, fp):
    """The four gradient-soliton identities, evaluated over the batch.

    Returns a dict with (i) the sample standard deviation of R_f/n,
    (ii) the max normalized residual of grad R = 2 Ric(grad f, .),
    (iii) the standard deviation of R + |grad f|^2 - 2 lambda f,
    (iv) the max normalized residual of Ric_ij,k - Ric_ik,j + f^t R_tijk.
    """
    n = pack.dim
    lam = fp.scal_f / n
    lam_hat = float(np.mean(lam))
    ginv0 = pack.g_inv
    y = fp.require("yf_form")
    ny = tensor_norm(ginv0, y, 1)
    scale_y = 1.0 + tensor_norm(ginv0, pack.dscal, 1) \
        + 2.0 * tensor_norm(ginv0,
                            np.einsum("...t,...tk->...k", fp.grad, pack.ric), 1)
    grad2 = np.einsum("...i,...i->...", fp.df, fp.grad)
    hamilton = pack.scal + grad2 - 2.0 * lam_hat * fp.f
    deficit = (pack.dric - np.einsum("...ikj->...ijk", pack.dric)
               + np.einsum("...t,...tijk->...ijk", fp.grad, pack.riem))
    scale_d = 1.0 + tensor_norm(ginv0, pack.dric, 3)
    return {
        "lambda": lam_hat,
        "lambda_stddev": float(np.std(lam)),
        "scal_gradient_max": float(np.max(ny / scale_y)),
        "hamilton_constant": float(np.mean(hamilton)),
        "hamilton_stddev": float(np.std(hamilton)),
        "codazzi_soliton_max": float(np.max(tensor_norm(ginv0, deficit, 3)
                                            / scale_d)),
    }


def bochner_pointwise(pack, xp):
    """Residual of the vector-field Bochner formula (normalized).

    div(L_X g)(X) - Delta|X|^2/2 + |grad X|^2 - Ric(X,X) - X(div X).
    """
    n = pack.dim
    order = pack.depth + 2
    o1, o2 = order - 1, order - 2
    gamma = pack.jets["gamma"]
    ginv_j = pack.jets["ginv"]
    tab = _table(n, o2)

    dlie = covariant_derivative(n, o1, gamma, xp.jets["lie"], 2)
    div_lie = np.einsum("...im,...ijm->...j", pack.g_inv, _values(dlie))
    lhs = np.einsum("...j,...j->...", div_lie,
                    raise_index(pack.g_inv, xp.x_low, 0, 1))

    x2 = _jeinsum(_table(n, o1), "ij,i->j",
                  _trunc(n, o1, ginv_j), xp.jets["x_low"])
    x2 = _jeinsum(_table(n, o1), "j,j->",
                  x2, _trunc(n, o1, xp.jets["x_low"]))
    dx2 = covariant_derivative(n, o1, gamma, x2, 0)
    hess_x2 = covariant_derivative(n, o2, gamma, dx2, 1)
    lap_x2 = np.einsum("...ij,...ij->...", pack.g_inv, _values(hess_x2))

    nabla2 = tensor_norm(pack.g_inv, xp.nabla_x, 2) ** 2
    x_up = xp.x_up
    ric_xx = np.einsum("...ij,...i,...j->...", pack.ric, x_up, x_up)
    ddiv = covariant_derivative(n, o1, gamma, xp.jets["div_x"], 0)
    x_div = np.einsum("...i,...i->...", x_up, _values(ddiv))

    res = lhs - 0.5 * lap_x2 + nabla2 - ric_xx - x_div
    scale = 1.0 + np.max(np.stack([np.abs(lhs), np.abs(0.5 * lap_x2),
                                   nabla2, np.abs(ric_xx), np.abs(x_div)]),
                         axis=0)
    return res / scale
