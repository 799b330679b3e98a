"""Warped-product constructions: the ODE reduction, explicit solutions,
and the periodic compact-quotient pipeline.

For g = dt^2 + F(t) h with q = log F and an Einstein fiber of scalar
curvature k, the weighted harmonic-curvature condition reduces to

    q''' + (n/2) q' q'' + k/(n-1) e^{-q} q' = (2q'' + (q')^2) f' / 2,

and the same third-order equation characterizes the weighted Yamabe
condition when the fiber is merely scalar-flat.  Splitting off a share
eps of the fiber curvature into the potential turns the remaining
second-order equation, via phi = e^{n q / 4}, into the autonomous ODE

    phi'' - a phi^{1 - 4/n} = C phi,    a = n (k - eps) / (4 (n - 1)),

whose positive periodic orbits circle the equilibrium phi* = (a/-C)^{n/4}.

A structural caveat, recorded here because the recovery step checks it:
over one period of a nonconstant orbit the integral of 2q'' + (q')^2
equals the integral of (q')^2 > 0, so the recovery denominator cannot be
negative on a full period.  The recovery therefore succeeds only on
trajectory pieces where the denominator keeps one sign (for instance
unbounded orbits with nonnegative energy), and raises otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Chart, GeometryError, MetricField, ScalarPotential
from .jets import Jet


class WarpedError(ValueError):
    pass


FACT = np.array([math.factorial(k) for k in range(6)], dtype=float)


@dataclass
class WarpedSolution:
    n: int
    k: float
    eps: float
    C: float | None
    t: np.ndarray
    q_derivs: np.ndarray            # (N, 6): q, q', ..., q4, q5
    f_derivs: np.ndarray | None = None  # (N, 6): f, f', ...
    phi: np.ndarray | None = None
    dphi: np.ndarray | None = None
    period: float | None = None
    residuals: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n": self.n, "k": self.k, "eps": self.eps, "C": self.C,
            "t": self.t.tolist(),
            "q_taylor": (self.q_derivs / FACT).tolist(),
            "f_taylor": (None if self.f_derivs is None
                         else (self.f_derivs / FACT).tolist()),
            "period": self.period,
            "residuals": {key: float(val)
                          for key, val in self.residuals.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def hcf_ode_residual(q_derivs, fprime, n, k):
    """Residual (right minus left) of the third-order warped reduction."""
    q_derivs = np.asarray(q_derivs, dtype=float)
    q, q1, q2, q3 = (q_derivs[..., i] for i in range(4))
    lhs = q3 + 0.5 * n * q1 * q2 + k / (n - 1.0) * np.exp(-q) * q1
    rhs = 0.5 * (2.0 * q2 + q1 * q1) * np.asarray(fprime, dtype=float)
    return rhs - lhs


def _phi_accel(phi, n, a, C):
    return a * phi ** (1.0 - 4.0 / n) + C * phi


def phi_energy(phi, dphi, n, a, C):
    """Conserved energy of the phi-equation (kinetic plus potential)."""
    expo = 2.0 - 4.0 / n
    V = -(a / expo) * phi ** expo - 0.5 * C * phi * phi
    return 0.5 * dphi * dphi + V


def integrate_phi(n, k, eps, C, phi0, dphi0, t_end, step):
    """Classical fixed-step RK4 for the phi-equation; returns (t, phi, dphi)."""
    a = n * (k - eps) / (4.0 * (n - 1.0))
    steps = int(math.ceil(t_end / step))
    t = np.empty(steps + 1)
    phi = np.empty(steps + 1)
    dphi = np.empty(steps + 1)
    t[0], phi[0], dphi[0] = 0.0, phi0, dphi0
    h = t_end / steps
    y, v = phi0, dphi0
    for i in range(steps):
        if y <= 0.0:
            raise WarpedError("phi reached zero during integration")
        k1v = _phi_accel(y, n, a, C)
        k1y = v
        k2v = _phi_accel(y + 0.5 * h * k1y, n, a, C)
        k2y = v + 0.5 * h * k1v
        k3v = _phi_accel(y + 0.5 * h * k2y, n, a, C)
        k3y = v + 0.5 * h * k2v
        k4v = _phi_accel(y + h * k3y, n, a, C)
        k4y = v + h * k3v
        y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t[i + 1], phi[i + 1], dphi[i + 1] = (i + 1) * h, y, v
    return t, phi, dphi


def equilibrium_phi(n, k, eps, C):
    a = n * (k - eps) / (4.0 * (n - 1.0))
    return (a / (-C)) ** (n / 4.0)


def linearized_period(n, C):
    """Small-oscillation period around the center equilibrium."""
    omega2 = -4.0 * C / n
    return 2.0 * math.pi / math.sqrt(omega2)


def solve_phi(n, k, eps, C, amplitude, step=1e-3, max_periods=4,
              refine_tol=1e-8):
    """Integrate from the top of an orbit and detect the first full period.

    The Poincare section is dphi = 0 with phi above the equilibrium
    (orbit maxima); the crossing is located by quadratic interpolation.
    The step is halved until the period estimate moves less than
    `refine_tol`.  Returns (t, phi, dphi, period, energy_drift).
    """
    if not k > eps > 0.0:
        raise WarpedError("need fiber curvature k > eps > 0")
    if not C < -2.0 * (k - eps) / (n - 1.0):
        raise WarpedError("constant C violates the admissibility bound")
    a = n * (k - eps) / (4.0 * (n - 1.0))
    phi_star = equilibrium_phi(n, k, eps, C)
    phi0 = phi_star + amplitude
    if phi0 <= 0.0:
        raise WarpedError("amplitude drives phi below zero")

    t_budget = max_periods * linearized_period(n, C)
    period_prev = None
    while True:
        t, phi, dphi = integrate_phi(n, k, eps, C, phi0, 0.0, t_budget, step)
        period = _first_return(t, phi, dphi, phi_star)
        if period is None:
            raise WarpedError("no return to the section within the budget")
        if period_prev is not None and abs(period - period_prev) < refine_tol:
            break
        if step < 1e-6:
            break
        period_prev = period
        step *= 0.5

    keep = t <= period * (1.0 + 1e-9)
    e = phi_energy(phi[keep], dphi[keep], n, a, C)
    drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    return t[keep], phi[keep], dphi[keep], float(period), drift


def _first_return(t, phi, dphi, phi_star):
    for i in range(1, len(t) - 1):
        if dphi[i] > 0.0 >= dphi[i + 1] and phi[i] > phi_star:
            # quadratic interpolation of dphi through three samples
            t0, t1, t2 = t[i - 1], t[i], t[i + 1]
            y0, y1, y2 = dphi[i - 1], dphi[i], dphi[i + 1]
            denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
            aq = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
            bq = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0)
                  + t0 * t0 * (y1 - y2)) / denom
            cq = (t1 * t2 * (t1 - t2) * y0 + t2 * t0 * (t2 - t0) * y1
                  + t0 * t1 * (t0 - t1) * y2) / denom
            if abs(aq) < 1e-300:
                return -cq / bq
            disc = bq * bq - 4 * aq * cq
            root = (-bq + math.copysign(math.sqrt(max(disc, 0.0)), -bq)) \
                / (2 * aq)
            lo, hi = sorted((-bq / aq - root, root))
            for cand in (root, -bq / aq - root):
                if t0 - 1e-12 <= cand <= t2 + 1e-12:
                    return cand
            return t1
    return None


def q_jets_from_phi(t, phi, dphi, n, k, eps, C):
    """Order-5 derivative stack of q = (4/n) log phi at the given nodes.

    q'' and beyond come from Taylor recurrences of the second-order
    equation, an independent derivative source from the third-order
    reduction, so downstream curvature checks are non-circular.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0.0):
        raise WarpedError("phi must stay positive")
    b = (k - eps) / (n - 1.0)
    q = (4.0 / n) * np.log(phi)
    q1 = (4.0 / n) * np.asarray(dphi, dtype=float) / phi
    e = np.exp(-q)
    q2 = 4.0 * C / n - 0.25 * n * q1 * q1 + b * e
    q3 = -0.5 * n * q1 * q2 - b * e * q1
    q4 = -0.5 * n * (q2 * q2 + q1 * q3) - b * e * (q2 - q1 * q1)
    q5 = (-0.5 * n * (3.0 * q2 * q3 + q1 * q4)
          - b * e * (q3 - 3.0 * q1 * q2 + q1 ** 3))
    return np.stack([q, q1, q2, q3, q4, q5], axis=-1)


def _node_jets(derivs, order=5):
    """Per-node 1-d jets from a derivative stack (batched coefficients)."""
    coeffs = np.asarray(derivs, dtype=float)[..., :order + 1] / FACT[:order + 1]
    return Jet(1, order, coeffs)


def recover_f(q_derivs, t, n, k, eps):
    """Reconstruct the potential from the curvature-share equation.

    f' = 2 eps/(n-1) q' e^{-q} / (2q'' + (q')^2), integrated with the
    f(t_0) = 0 gauge by the trapezoid rule.  Constant q gives f = 0;
    otherwise the denominator must keep a strict sign on the grid.
    """
    q_derivs = np.asarray(q_derivs, dtype=float)
    t = np.asarray(t, dtype=float)
    q1 = q_derivs[..., 1]
    if np.max(np.abs(q1)) < 1e-13:
        zeros = np.zeros(q_derivs.shape[:-1] + (6,))
        return zeros[..., 0], zeros
    denom = 2.0 * q_derivs[..., 2] + q1 * q1
    if np.max(denom) >= 0.0 and np.min(denom) <= 0.0 or np.any(denom == 0.0):
        raise WarpedError("recovery denominator 2q'' + (q')^2 changes sign "
                          "or vanishes on the grid")
    qj = _node_jets(q_derivs)
    q1j = _shift(qj)
    q2j = _shift(q1j)
    dj = 2.0 * q2j + q1j * q1j
    fpj = (2.0 * eps / (n - 1.0)) * q1j * (-qj).exp() / dj
    fprime = fpj.c * FACT[:5]           # derivatives of f' (order 4)
    f_vals = np.concatenate(
        [[0.0], np.cumsum(0.5 * (fprime[1:, 0] + fprime[:-1, 0])
                          * np.diff(t))])
    f_derivs = np.concatenate([f_vals[..., None], fprime], axis=-1)
    return f_vals, f_derivs


def _shift(jet1d):
    """Derivative of a 1-d jet, promoted back to the original order."""
    d = jet1d.derivative(0)
    pad = np.zeros(d.c.shape[:-1] + (1,))
    return Jet(1, jet1d.order, np.concatenate([d.c, pad], axis=-1))


def gaussian_warped_solution(n, grid):
    """The explicit solution q = t^2, f = (n/2) log(1 + t^2), k = 0."""
    t = np.asarray(grid, dtype=float)
    tj = Jet.variable(0, t, 1, 5)
    qj = tj * tj
    fj = (n / 2.0) * (1.0 + tj * tj).log()
    sol = WarpedSolution(
        n=n, k=0.0, eps=0.0, C=None, t=t,
        q_derivs=qj.c * FACT, f_derivs=fj.c * FACT)
    res = hcf_ode_residual(sol.q_derivs, sol.f_derivs[..., 1], n, 0.0)
    sol.residuals["ode_max"] = float(np.max(np.abs(res)))
    return sol


def grid_warped_entry(solution, fiber, name="warped_grid", margin=0.01):
    """Metric dt^2 + e^{q(t)} h and its potential from per-node jets.

    The resulting fields evaluate only at t-coordinates equal to grid
    nodes; the stored Taylor data supplies all t-derivatives there.
    """
    from .geometry import CatalogEntry

    t = solution.t
    n = fiber.chart.dim + 1
    chart = Chart(n, ((float(t[0]) - 0.05, float(t[-1]) + 0.05),)
                  + tuple(fiber.chart.ranges), margin)
    q_coeff = solution.q_derivs / FACT
    f_coeff = None if solution.f_derivs is None else solution.f_derivs / FACT

    def node_poly(tjet, coeff):
        idx = np.searchsorted(t, np.atleast_1d(tjet.value))
        idx = np.clip(idx, 0, len(t) - 1)
        left = np.clip(idx - 1, 0, len(t) - 1)
        idx = np.where(np.abs(t[left] - np.atleast_1d(tjet.value))
                       < np.abs(t[idx] - np.atleast_1d(tjet.value)),
                       left, idx)
        idx = idx.reshape(np.shape(tjet.value))
        if np.max(np.abs(t[idx] - tjet.value)) > 1e-8:
            raise GeometryError("grid-warped fields evaluate at grid "
                                "nodes only")
        dt = tjet - t[idx]
        acc = Jet.constant(coeff[idx, 5], 1, tjet.order) * 0.0
        for kk in range(5, -1, -1):
            acc = acc * dt + coeff[idx, kk]
        return acc

    def comps(xs):
        tjet = xs[0]
        qjet = node_poly(tjet, q_coeff)
        F = qjet.exp()
        rows = fiber.components(xs[1:])
        out = [[0.0] * n for _ in range(n)]
        out[0][0] = 1.0
        for i in range(1, n):
            for j in range(1, n):
                hij = rows[i - 1][j - 1]
                if isinstance(hij, Jet) or hij:
                    out[i][j] = F * hij
        return out

    metric = MetricField(chart, comps, name=name)
    potential = None
    if f_coeff is not None:
        potential = ScalarPotential(
            chart, lambda xs: node_poly(xs[0], f_coeff), name=name + "_f")
    return CatalogEntry(name, metric, potential)


def node_sample_points(solution, fiber, count, seed, node_stride=None):
    """Sample points whose t-coordinates sit exactly on grid nodes."""
    rng = np.random.default_rng(seed)
    t = solution.t
    interior = np.arange(1, len(t) - 1)
    if node_stride:
        interior = interior[::node_stride]
    idx = interior[rng.integers(0, len(interior), size=count)]
    fib = np.array(Chart(fiber.chart.dim, fiber.chart.ranges,
                         max(fiber.chart.margin, 0.12)).shrunk())
    u = rng.random((count, fiber.chart.dim))
    fpts = fib[:, 0] + u * (fib[:, 1] - fib[:, 0])
    return np.concatenate([t[idx][:, None], fpts], axis=1)


def assemble_and_verify(solution, fiber, seed=7, count=24, threshold=None,
                        fiber_tol=1e-8):
    """Build the warped triple from grid jets and run the HCf check.

    The fiber must be Einstein with constant scalar curvature k (checked
    numerically at seeded fiber samples).
    """
    from .classify import classify
    from .curvature import curvature_pack
    from .geometry import sample_points as sample

    fpts = sample(fiber.chart, 8, seed)
    fpack = curvature_pack(fiber.jets(fpts, 2), fpts, 0)
    k_err = float(np.max(np.abs(fpack.scal - solution.k)))
    if k_err > max(fiber_tol, 1e-8 * (1.0 + abs(solution.k))):
        raise WarpedError(f"fiber scalar curvature deviates from "
                          f"k={solution.k} by {k_err:.2e}")

    entry = grid_warped_entry(solution, fiber)
    pts = node_sample_points(solution, fiber, count, seed)
    return classify(entry, "HCf", seed=seed, count=count,
                    threshold=threshold, points=pts)
