"""Classical curvature tensors at a point, in the coordinate frame.

Everything is computed from exact metric jets.  Tensors of jets are
stored as numpy arrays whose last axis is the Taylor-coefficient axis;
leading axes (before the tensor indices) are point batches.  Each
covariant differentiation consumes one jet order, so a metric seeded at
order depth+2 supports covariant derivatives down to plain values:

    depth 0: Riem, Ric, R, Weyl
    depth 1: + grad Ric, grad Riem, grad Weyl, div Weyl, Cotton
    depth 2: + grad Cotton, Bach (n >= 4)
    depth 3: + grad Bach, div Bach

Index conventions follow R(e_j, e_k)e_i = R^l_{ijk} e_l with
R_ijkl = g_im R^m_jkl, Ric_ik = g^jl R_ijkl, and the derivative index of
a covariant derivative appended last (T_ij,k means grad_k T_ij).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jets import JetError, _deriv_map, _table

_LETTERS = "abcdefgh"


def _jmul(tab, A, B):
    prod = A[..., tab.mul_ia] * B[..., tab.mul_ib]
    return np.add.reduceat(prod, tab.mul_segs, axis=-1)


def _jeinsum(tab, spec, A, B):
    """einsum over tensor axes combined with jet convolution on the last axis."""
    sa, rest = spec.split(",")
    sb, so = rest.split("->")
    P = np.einsum(f"...{sa}Z,...{sb}Z->...{so}Z",
                  A[..., tab.mul_ia], B[..., tab.mul_ib], optimize=True)
    return np.add.reduceat(P, tab.mul_segs, axis=-1)


def _jderiv(dims, order, A, axis):
    src, mult = _deriv_map(dims, order, axis)
    return A[..., src] * mult


def _trunc(dims, order, A):
    return A[..., :_table(dims, order).size]


def jet_inverse_matrix(dims, order, G):
    """Inverse of a matrix of jets by Newton iteration X -> X(2I - GX)."""
    tab = _table(dims, order)
    n = G.shape[-2]
    X = np.zeros_like(G)
    X[..., 0] = np.linalg.inv(G[..., 0])
    two_i = np.zeros_like(G)
    two_i[..., 0] = 2.0 * np.eye(n)
    o = 0
    while o < order:  # Newton: correct order goes 0 -> 1 -> 3 -> 7
        GX = _jeinsum(tab, "ij,jk->ik", G, X)
        X = _jeinsum(tab, "ij,jk->ik", X, two_i - GX)
        o = 2 * o + 1
    return X


def covariant_derivative(dims, order, gamma, T, width):
    """Covariant derivative of a (0,width) tensor of jets.

    T has `width` tensor axes then the coeff axis (order `order`); gamma
    is Gamma^p_{mi} at order >= order-1.  Returns order-1 jets with the
    derivative index appended after the existing tensor axes.
    """
    lo = _table(dims, order - 1)
    parts = np.stack([_jderiv(dims, order, T, v) for v in range(dims)],
                     axis=-2)
    if width == 0:
        return parts
    Tl = T[..., :lo.size]
    gl = gamma[..., :lo.size]
    letters = _LETTERS[:width]
    for s in range(width):
        ls = letters[s]
        tin = letters[:s] + "p" + letters[s + 1:]
        spec = f"pm{ls},{tin}->{letters}m"
        parts = parts - _jeinsum(lo, spec, gl, Tl)
    return parts


def raise_index(ginv0, T, slot, width):
    """Raise one slot of a value tensor with the inverse-metric values."""
    letters = _LETTERS[:width]
    ls = letters[slot]
    tin = letters[:slot] + "p" + letters[slot + 1:]
    return np.einsum(f"...{ls}p,...{tin}->...{letters}", ginv0, T,
                     optimize=True)


def tensor_norm2(ginv0, T, width):
    """|T|^2 with every index contracted against the inverse metric."""
    if width == 0:
        return T * T
    up = T
    for s in range(width):
        up = raise_index(ginv0, up, s, width)
    flat_t = T.reshape(T.shape[:-width] + (-1,))
    flat_u = up.reshape(up.shape[:-width] + (-1,))
    return np.einsum("...i,...i->...", flat_t, flat_u)


def tensor_norm(ginv0, T, width):
    return np.sqrt(np.maximum(tensor_norm2(ginv0, T, width), 0.0))


def kulkarni_nomizu(a, b):
    """(a ^ b)_ijkt = a_ik b_jt - a_it b_jk + a_jt b_ik - a_jk b_it (values)."""
    return (np.einsum("...ik,...jt->...ijkt", a, b)
            - np.einsum("...it,...jk->...ijkt", a, b)
            + np.einsum("...jt,...ik->...ijkt", a, b)
            - np.einsum("...jk,...it->...ijkt", a, b))


def _kn_jets(tab, a, b):
    return (_jeinsum(tab, "ik,jt->ijkt", a, b)
            - _jeinsum(tab, "it,jk->ijkt", a, b)
            + _jeinsum(tab, "jt,ik->ijkt", a, b)
            - _jeinsum(tab, "jk,it->ijkt", a, b))


@dataclass
class CurvaturePack:
    """All classical curvature data at one point (or a batch of points).

    Value arrays drop the coefficient axis; the `jets` dict retains the
    jet-valued tensors needed by downstream covariant differentiation,
    keyed by name, together with their orders in `jet_orders`.
    """

    dim: int
    depth: int
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray
    riem: np.ndarray
    ric: np.ndarray
    scal: np.ndarray
    weyl: np.ndarray | None = None
    driem: np.ndarray | None = None
    dric: np.ndarray | None = None
    dscal: np.ndarray | None = None
    dweyl: np.ndarray | None = None
    div_weyl: np.ndarray | None = None
    cotton: np.ndarray | None = None
    dcotton: np.ndarray | None = None
    bach: np.ndarray | None = None
    dbach: np.ndarray | None = None
    div_bach: np.ndarray | None = None
    jets: dict = field(default_factory=dict)
    jet_orders: dict = field(default_factory=dict)

    def require(self, name):
        value = getattr(self, name, None)
        if value is None:
            raise JetError(f"{name} not available: insufficient depth "
                           f"({self.depth}) or dimension ({self.dim})")
        return value


def curvature_pack(g_jets, point, depth):
    """Build a CurvaturePack from packed metric jets (..., n, n, ncoeff).

    The metric jets must be seeded at order depth+2.
    """
    n = g_jets.shape[-2]
    order = depth + 2
    tab = {o: _table(n, o) for o in range(order + 1)}
    if g_jets.shape[-1] != tab[order].size:
        raise JetError("metric jets have the wrong order for this depth")

    g0 = g_jets[..., 0]
    try:
        np.linalg.cholesky(g0)
    except np.linalg.LinAlgError:
        raise JetError("metric is not positive definite at a sample point")

    ginv = jet_inverse_matrix(n, order, g_jets)

    # Christoffel symbols Gamma^k_{ij}, order-1 jets
    og = order - 1
    dg = np.stack([_jderiv(n, order, g_jets, v) for v in range(n)], axis=0)
    # dg[l, i, j] = d_l g_ij; arrange sum d_i g_jl + d_j g_il - d_l g_ij
    sym = (np.einsum("i...jl c->...ijl c".replace(" ", ""), dg)
           + np.einsum("j...il c->...ijl c".replace(" ", ""), dg)
           - np.einsum("l...ij c->...ijl c".replace(" ", ""), dg))
    gamma = 0.5 * _jeinsum(tab[og], "kl,ijl->kij", _trunc(n, og, ginv), sym)

    # Riemann tensor, order-2 jets
    orr = order - 2
    dgam = np.stack([_jderiv(n, og, gamma, v) for v in range(n)], axis=-2)
    # dgam[l, k, i, m] = d_m Gamma^l_{ki}
    gl = gamma[..., :tab[orr].size]
    gg = _jeinsum(tab[orr], "mki,ljm->lijk", gl, gl)
    # R^l_{ijk} = d_j Gam^l_{ki} - d_k Gam^l_{ji} + Gam^m_{ki}Gam^l_{jm}
    #                                           - Gam^m_{ji}Gam^l_{km}
    rup = (np.einsum("...lkij c->...lijk c".replace(" ", ""), dgam)
           - np.einsum("...ljik c->...lijk c".replace(" ", ""), dgam)
           + gg - np.einsum("...likj c->...lijk c".replace(" ", ""), gg))
    riem = _jeinsum(tab[orr], "im,mjkl->ijkl", _trunc(n, orr, g_jets), rup)
    ric = _jeinsum(tab[orr], "jl,ijkl->ik", _trunc(n, orr, ginv), riem)
    scal = _jeinsum(tab[orr], "ik,ik->", _trunc(n, orr, ginv), ric)

    pack = CurvaturePack(
        dim=n, depth=depth, point=np.asarray(point),
        g=g0, g_inv=ginv[..., 0], gamma=gamma[..., 0],
        riem=riem[..., 0], ric=ric[..., 0], scal=scal[..., 0],
    )
    pack.jets.update(g=g_jets, ginv=ginv, gamma=gamma, riem=riem, ric=ric,
                     scal=scal)
    pack.jet_orders.update(g=order, ginv=order, gamma=og, riem=orr, ric=orr,
                           scal=orr)

    weyl = None
    if n >= 3:
        gt = _trunc(n, orr, g_jets)
        schouten = ric - _jeinsum(tab[orr], ",ij->ij",
                                  scal / (2.0 * (n - 1.0)), gt)
        weyl = riem - _kn_jets(tab[orr], schouten, gt) / (n - 2.0)
        pack.weyl = weyl[..., 0]
        pack.jets["weyl"] = weyl
        pack.jet_orders["weyl"] = orr

    if depth >= 1:
        o1 = orr - 1
        driem = covariant_derivative(n, orr, gamma, riem, 4)
        dric = covariant_derivative(n, orr, gamma, ric, 2)
        dscal = covariant_derivative(n, orr, gamma, scal, 0)
        pack.driem = driem[..., 0]
        pack.dric = dric[..., 0]
        pack.dscal = dscal[..., 0]
        pack.jets.update(driem=driem, dric=dric, dscal=dscal)
        pack.jet_orders.update(driem=o1, dric=o1, dscal=o1)
        if n >= 3:
            dweyl = covariant_derivative(n, orr, gamma, weyl, 4)
            div_weyl = _jeinsum(tab[o1], "tm,tijkm->ijk",
                                _trunc(n, o1, ginv), dweyl)
            pack.dweyl = dweyl[..., 0]
            pack.div_weyl = div_weyl[..., 0]
            pack.jets.update(dweyl=dweyl, div_weyl=div_weyl)
            pack.jet_orders.update(dweyl=o1, div_weyl=o1)
        # Cotton C_ijk = Ric_ij,k - Ric_ik,j - (R_k g_ij - R_j g_ik)/(2(n-1))
        gt = _trunc(n, o1, g_jets)
        cot = (dric - np.einsum("...ikj c->...ijk c".replace(" ", ""), dric)
               - (_jeinsum(tab[o1], "k,ij->ijk", dscal, gt)
                  - _jeinsum(tab[o1], "j,ik->ijk", dscal, gt))
               / (2.0 * (n - 1.0)))
        pack.cotton = cot[..., 0]
        pack.jets["cotton"] = cot
        pack.jet_orders["cotton"] = o1

    if depth >= 2:
        o1 = orr - 1
        o2 = orr - 2
        dcot = covariant_derivative(n, o1, gamma, pack.jets["cotton"], 3)
        pack.dcotton = dcot[..., 0]
        pack.jets["dcotton"] = dcot
        pack.jet_orders["dcotton"] = o2
        if n >= 4:
            # B_ij = (C_jik,k + R_kl W_ikjl) / (n-2), indices raised with g^-1
            div_c = _jeinsum(tab[o2], "km,jikm->ij", _trunc(n, o2, ginv), dcot)
            ric_up = _jeinsum(tab[o2], "ka,ab->kb", _trunc(n, o2, ginv),
                              _trunc(n, o2, pack.jets["ric"]))
            ric_up = _jeinsum(tab[o2], "lb,kb->kl", _trunc(n, o2, ginv), ric_up)
            wr = _jeinsum(tab[o2], "kl,ikjl->ij", ric_up,
                          _trunc(n, o2, pack.jets["weyl"]))
            bach = (div_c + wr) / (n - 2.0)
            pack.bach = bach[..., 0]
            pack.jets["bach"] = bach
            pack.jet_orders["bach"] = o2

    if depth >= 3 and n >= 4:
        o2 = orr - 2
        o3 = orr - 3
        dbach = covariant_derivative(n, o2, gamma, pack.jets["bach"], 2)
        div_bach = _jeinsum(tab[o3], "jm,ijm->i", _trunc(n, o3, ginv), dbach)
        pack.dbach = dbach[..., 0]
        pack.div_bach = div_bach[..., 0]

    return pack


def cotton_via_weyl(pack):
    """Cotton from the Weyl divergence: C_ijk = (n-2)/(n-3) W_tikj,^t."""
    n = pack.dim
    if n < 4:
        raise JetError("the Weyl route to Cotton needs n >= 4")
    div_w = pack.require("div_weyl")
    return (n - 2.0) / (n - 3.0) * np.einsum(
        "...ikj->...ijk", div_w)


def bach_divergence_rhs(pack):
    """(n-4)/(n-2)^2 R_kt C_kti, the stated divergence of the Bach tensor."""
    n = pack.dim
    ric_up = raise_index(pack.g_inv, raise_index(pack.g_inv, pack.ric, 0, 2),
                         1, 2)
    c = pack.require("cotton")
    return (n - 4.0) / (n - 2.0) ** 2 * np.einsum("...kt,...kti->...i",
                                                  ric_up, c)


def kn_divergence_sides(pack, alpha_jets, alpha_order):
    """Both sides of the divergence rule for alpha ^ g.

    Left: covariant divergence (first slot) of the 4-tensor alpha ^ g.
    Right: alpha_tj,^t g_ik - alpha_tk,^t g_ij + alpha_ik,j - alpha_ij,k.
    Returns value arrays (lhs, rhs).
    """
    n = pack.dim
    tab = _table(n, alpha_order)
    gt = _trunc(n, alpha_order, pack.jets["g"])
    kn = _kn_jets(tab, alpha_jets, gt)
    dkn = covariant_derivative(n, alpha_order, pack.jets["gamma"], kn, 4)
    ginv0 = pack.g_inv
    lhs = np.einsum("...tm,...tijkm->...ijk", ginv0, dkn[..., 0])

    dalpha = covariant_derivative(n, alpha_order, pack.jets["gamma"],
                                  alpha_jets, 2)[..., 0]
    div_a = np.einsum("...tm,...tjm->...j", ginv0, dalpha)
    g0 = pack.g
    rhs = (np.einsum("...j,...ik->...ijk", div_a, g0)
           - np.einsum("...k,...ij->...ijk", div_a, g0)
           + np.einsum("...ikj->...ijk", dalpha)
           - dalpha)
    return lhs, rhs


def codazzi_residual(pack, t_jets, t_order):
    """T_ij,k - T_ik,j for a symmetric 2-tensor of jets (values returned)."""
    dt = covariant_derivative(pack.dim, t_order, pack.jets["gamma"],
                              t_jets, 2)[..., 0]
    return dt - np.einsum("...ikj->...ijk", dt)


_LAMBDA2_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def weyl_pm(pack):
    """Self-dual / anti-self-dual Weyl blocks at n = 4.

    Returns (w_plus, w_minus, spec_plus, spec_minus, integrand) where the
    blocks are 3x3 symmetric matrices in an orthonormal frame built by
    Cholesky factorization, spectra are sorted, and the integrand is
    |W+|^2 - |W-|^2 in the tensor normalization.
    """
    if pack.dim != 4:
        raise JetError("the two-form splitting needs n = 4")
    g = pack.g
    L = np.linalg.cholesky(g)
    E = np.linalg.inv(np.swapaxes(L, -1, -2))  # frame: E^T g E = I
    w = np.einsum("...ijkl,...ia,...jb,...kc,...ld->...abcd",
                  pack.weyl, E, E, E, E, optimize=True)
    pairs = _LAMBDA2_PAIRS
    M = np.empty(w.shape[:-4] + (6, 6))
    for p, (a, b) in enumerate(pairs):
        for q, (c, d) in enumerate(pairs):
            M[..., p, q] = w[..., a, b, c, d]
    s = 1.0 / np.sqrt(2.0)
    # orthonormal self-dual / anti-self-dual bases of Lambda^2
    vp = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1],
                   [0, 0, 1], [0, -1, 0], [1, 0, 0]]) * s
    vm = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1],
                   [0, 0, -1], [0, 1, 0], [-1, 0, 0]]) * s
    wp = np.einsum("...pq,pa,qb->...ab", M, vp, vp)
    wm = np.einsum("...pq,pa,qb->...ab", M, vm, vm)
    sp = np.sort(np.linalg.eigvalsh(wp), axis=-1)
    sm = np.sort(np.linalg.eigvalsh(wm), axis=-1)
    np_ = 4.0 * np.einsum("...ab,...ab->...", wp, wp)
    nm_ = 4.0 * np.einsum("...ab,...ab->...", wm, wm)
    return wp, wm, sp, sm, np_ - nm_
