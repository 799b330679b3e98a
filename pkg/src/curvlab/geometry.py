"""Chart-based metrics, potentials and vector fields, plus the example catalog.

A geometry lives on a single coordinate chart (an axis-aligned box with a
safety margin).  Metric components, the potential and vector fields are
functions from seeded coordinate jets to jets, so every derivative used
downstream is exact.  Compact examples (spheres, products of spheres) are
represented chart-wise, with margins keeping sample points away from the
coordinate singularities at the poles.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .jets import Jet, JetError, seed_point


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    dim: int
    ranges: tuple
    margin: float = 0.05

    def __post_init__(self):
        if self.dim < 1 or len(self.ranges) != self.dim:
            raise GeometryError("chart ranges must match dim")
        if not 0.0 < self.margin < 0.5:
            raise GeometryError("margin must lie in (0, 0.5)")
        for lo, hi in self.ranges:
            if not hi > lo:
                raise GeometryError("empty chart interval")

    def shrunk(self):
        out = []
        for lo, hi in self.ranges:
            pad = self.margin * (hi - lo)
            out.append((lo + pad, hi - pad))
        return out

    def contains(self, point):
        p = np.asarray(point, dtype=float)
        box = self.shrunk()
        tol = 1e-12
        for a, (lo, hi) in zip(np.moveaxis(p, -1, 0), box):
            if np.any(a < lo - tol) or np.any(a > hi + tol):
                return False
        return True


def sample_points(chart, count, seed):
    """Deterministic pseudo-random points in the margin-shrunk box."""
    if count < 1:
        raise GeometryError("count must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((count, chart.dim))
    box = np.array(chart.shrunk())
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


@dataclass
class MetricField:
    chart: Chart
    components: object  # callable: list of seeded jets -> n x n nested list
    name: str = "metric"

    def jets(self, point, order):
        """Packed symmetric metric jets (..., n, n, ncoeff) at `point`."""
        p = np.asarray(point, dtype=float)
        if not self.chart.contains(p):
            raise GeometryError(f"point outside margin-shrunk chart "
                                f"of {self.name}")
        xs = seed_point(p, order)
        rows = self.components(xs)
        n = self.chart.dim
        out = np.empty(p.shape[:-1] + (n, n, xs[0].c.shape[-1]))
        for i in range(n):
            for j in range(n):
                cij = rows[i][j]
                if not isinstance(cij, Jet):
                    cij = Jet.constant(np.broadcast_to(float(cij),
                                                       p.shape[:-1]),
                                       n, order)
                out[..., i, j, :] = cij.c
        if np.max(np.abs(out - np.swapaxes(out, -3, -2))) > 1e-12:
            raise GeometryError(f"metric {self.name} is not symmetric")
        out = 0.5 * (out + np.swapaxes(out, -3, -2))
        return out


@dataclass
class ScalarPotential:
    chart: Chart
    func: object  # callable: list of seeded jets -> jet
    name: str = "potential"

    def jet(self, point, order):
        p = np.asarray(point, dtype=float)
        xs = seed_point(p, order)
        out = self.func(xs)
        if not isinstance(out, Jet):
            out = Jet.constant(np.broadcast_to(float(out), p.shape[:-1]),
                               self.chart.dim, order)
        return out


@dataclass
class VectorFieldSpec:
    chart: Chart
    components: object  # callable: list of seeded jets -> n jets (X^i)
    name: str = "vector_field"

    def jets(self, point, order):
        p = np.asarray(point, dtype=float)
        xs = seed_point(p, order)
        comps = self.components(xs)
        n = self.chart.dim
        out = np.empty(p.shape[:-1] + (n, xs[0].c.shape[-1]))
        for i in range(n):
            ci = comps[i]
            if not isinstance(ci, Jet):
                ci = Jet.constant(np.broadcast_to(float(ci), p.shape[:-1]),
                                  n, order)
            out[..., i, :] = ci.c
        return out


@dataclass
class CatalogEntry:
    name: str
    metric: MetricField
    potential: ScalarPotential | None = None
    vector_field: VectorFieldSpec | None = None
    expected_memberships: frozenset = frozenset()
    known_scalars: dict = field(default_factory=dict)

    @property
    def chart(self):
        return self.metric.chart


# ---------------------------------------------------------------------------
# constructors

def conformal_rescale(metric, u):
    """e^{2u} g, with all derivatives carried by jet composition."""
    if metric.chart != u.chart:
        raise GeometryError("conformal factor lives on a different chart")

    def comps(xs):
        factor = (2.0 * u.func(xs)).exp()
        rows = metric.components(xs)
        return [[factor * rows[i][j] for j in range(metric.chart.dim)]
                for i in range(metric.chart.dim)]

    return MetricField(metric.chart, comps, name=f"conformal({metric.name})")


def warped_product(warp, fiber, t_range=(-1.5, 1.5), margin=0.05,
                   name="warped"):
    """dt^2 + F(t) h on an interval times the fiber chart.

    `warp` maps the 1-d jet t to the jet of F(t); F must stay positive on
    the margin-shrunk interval (checked at evaluation).
    """
    n = fiber.chart.dim + 1
    chart = Chart(n, ((tuple(t_range),) + tuple(fiber.chart.ranges)), margin)

    def comps(xs):
        t = xs[0]
        F = warp(t)
        if np.any(F.value <= 0.0):
            raise GeometryError("warping function is not positive")
        rows = fiber.components(xs[1:])
        out = [[0.0] * n for _ in range(n)]
        out[0][0] = Jet.constant(np.broadcast_to(1.0, t.value.shape),
                                 n, t.order)
        for i in range(1, n):
            for j in range(1, n):
                hij = rows[i - 1][j - 1]
                out[i][j] = F * hij if isinstance(hij, Jet) else F * float(hij)
        return out

    return MetricField(chart, comps, name=name)


def _fiber_on_product(fiber_components, offset, n):
    """Reinterpret fiber components as functions of a product chart slice."""
    def comps(xs):
        return fiber_components(xs[offset:])
    return comps


# ---------------------------------------------------------------------------
# expression grammar: +, -, *, /, ^, exp, log, sin, cos, sqrt, x1..xn

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?)|(x\d+)|"
                    r"(exp|log|sin|cos|sqrt|tanh)|([()+\-*/^]))")

_FUNCS = {"exp", "log", "sin", "cos", "sqrt", "tanh"}


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise GeometryError(f"bad expression near {text[pos:pos+12]!r}")
        num, var, fn, op = m.groups()
        if num:
            out.append(("num", float(num)))
        elif var:
            out.append(("var", int(var[1:]) - 1))
        elif fn:
            out.append(("fn", fn))
        else:
            out.append(("op", op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def eat(self, kind=None, val=None):
        tok = self.peek()
        if tok is None or (kind and tok[0] != kind) or (val and tok[1] != val):
            raise GeometryError(f"unexpected token {tok!r}")
        self.pos += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.eat("op")[1]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.eat("op")[1]
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.eat()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek() == ("op", "^"):
            self.eat()
            rhs = self.unary()  # right associative
            node = ("pow", node, rhs)
        return node

    def atom(self):
        tok = self.peek()
        if tok is None:
            raise GeometryError("unexpected end of expression")
        if tok[0] == "num":
            self.eat()
            return ("num", tok[1])
        if tok[0] == "var":
            self.eat()
            return ("var", tok[1])
        if tok[0] == "fn":
            self.eat()
            self.eat("op", "(")
            inner = self.expr()
            self.eat("op", ")")
            return ("call", tok[1], inner)
        if tok == ("op", "("):
            self.eat()
            inner = self.expr()
            self.eat("op", ")")
            return inner
        raise GeometryError(f"unexpected token {tok!r}")


def parse_expression(text, dim):
    """Compile an expression string to a callable on seeded jets."""
    tree = _Parser(_tokenize(text)).expr()

    def check(node):
        if node[0] == "var" and not 0 <= node[1] < dim:
            raise GeometryError(f"variable x{node[1]+1} out of range "
                                f"for dim {dim}")
        for child in node[1:]:
            if isinstance(child, tuple):
                check(child)
    check(tree)

    def ev(node, xs):
        kind = node[0]
        if kind == "num":
            return node[1]
        if kind == "var":
            return xs[node[1]]
        if kind == "neg":
            return -ev(node[1], xs)
        if kind == "call":
            arg = ev(node[2], xs)
            if not isinstance(arg, Jet):
                arg = Jet.constant(arg, xs[0].dims, xs[0].order)
            return getattr(arg, node[1])()
        a, b = ev(node[1], xs), ev(node[2], xs)
        if kind == "add":
            return a + b
        if kind == "sub":
            return a - b
        if kind == "mul":
            return a * b
        if kind == "div":
            return a / b
        if kind == "pow":
            if isinstance(b, Jet):
                raise GeometryError("exponent must be a constant")
            return a.pow(b) if isinstance(a, Jet) else a ** b
        raise GeometryError(f"bad node {kind}")

    return lambda xs: ev(tree, xs)


# ---------------------------------------------------------------------------
# catalog

def _flat_components(n):
    def comps(xs):
        return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    return comps


def _sphere_components(n, radius=1.0):
    """Unit-speed hyperspherical angles: g_ii = r^2 prod_{j<i} sin^2 t_j."""
    def comps(xs):
        rows = [[0.0] * n for _ in range(n)]
        acc = None
        for i in range(n):
            if acc is None:
                rows[i][i] = radius * radius
            else:
                rows[i][i] = (radius * radius) * acc
            s = xs[i].sin()
            acc = s * s if acc is None else acc * (s * s)
        return rows
    return comps


def _sphere_chart(n, margin=0.12):
    ranges = tuple((0.0, math.pi) for _ in range(n - 1)) + ((0.0, 2 * math.pi),)
    return Chart(n, ranges, margin)


def _hyperbolic_components(n):
    def comps(xs):
        w = 1.0 / (xs[n - 1] * xs[n - 1])
        return [[w if i == j else 0.0 for j in range(n)] for i in range(n)]
    return comps


def _stack_diag(blocks, dims):
    """Direct sum of diagonal-block component functions."""
    n = sum(dims)

    def comps(xs):
        rows = [[0.0] * n for _ in range(n)]
        off = 0
        for block, d in zip(blocks, dims):
            sub = block(xs[off:off + d])
            for i in range(d):
                for j in range(d):
                    rows[off + i][off + j] = sub[i][j]
            off += d
        return rows
    return comps


def catalog_names():
    return ["euclidean", "gaussian_shrinker", "sphere", "hyperbolic",
            "round_cylinder", "product_lsef", "warped_gaussian",
            "warped_yf", "s2xs2"]


_ALL_F = frozenset({"SFf", "LSf", "LSEf", "PRf", "Ef", "HCf", "HCfLambda",
                    "Yf"})


def catalog_lookup(name, n=None, lam=1.0):
    """Fully populated example geometry by name."""
    if name == "euclidean":
        n = n or 3
        chart = Chart(n, tuple((-1.5, 1.5) for _ in range(n)))
        metric = MetricField(chart, _flat_components(n), name="euclidean")
        pot = ScalarPotential(chart, lambda xs: 0.0, name="zero")
        return CatalogEntry("euclidean", metric, pot,
                            expected_memberships=_ALL_F,
                            known_scalars={"R": 0.0, "lambda": 0.0})

    if name == "gaussian_shrinker":
        n = n or 3
        chart = Chart(n, tuple((-2.0, 2.0) for _ in range(n)))
        metric = MetricField(chart, _flat_components(n),
                             name="gaussian_shrinker")

        def pot(xs):
            s = xs[0] * xs[0]
            for x in xs[1:]:
                s = s + x * x
            return (lam / 2.0) * s

        return CatalogEntry(
            "gaussian_shrinker", metric,
            ScalarPotential(chart, pot, name="gaussian"),
            expected_memberships=_ALL_F,
            known_scalars={"R": 0.0, "lambda": lam})

    if name == "sphere":
        n = n or 3
        chart = _sphere_chart(n)
        metric = MetricField(chart, _sphere_components(n), name="sphere")
        pot = ScalarPotential(chart, lambda xs: 0.0, name="zero")
        return CatalogEntry("sphere", metric, pot,
                            expected_memberships=_ALL_F,
                            known_scalars={"R": float(n * (n - 1)),
                                           "lambda": float(n - 1)})

    if name == "hyperbolic":
        n = n or 3
        ranges = tuple((-1.0, 1.0) for _ in range(n - 1)) + ((0.6, 2.0),)
        chart = Chart(n, ranges)
        metric = MetricField(chart, _hyperbolic_components(n),
                             name="hyperbolic")
        pot = ScalarPotential(chart, lambda xs: 0.0, name="zero")
        return CatalogEntry("hyperbolic", metric, pot,
                            expected_memberships=_ALL_F,
                            known_scalars={"R": float(-n * (n - 1)),
                                           "lambda": float(-(n - 1))})

    if name == "round_cylinder":
        n = n or 4
        fiber = _sphere_components(n - 1)
        chart = Chart(n, ((-1.5, 1.5),) + _sphere_chart(n - 1).ranges,
                      margin=0.12)
        comps = _stack_diag([lambda xs: [[1.0]], fiber], [1, n - 1])
        metric = MetricField(chart, comps, name="round_cylinder")
        pot = ScalarPotential(chart,
                              lambda xs: ((n - 2) / 2.0) * xs[0] * xs[0],
                              name="radial_quadratic")
        return CatalogEntry("round_cylinder", metric, pot,
                            expected_memberships=_ALL_F,
                            known_scalars={"R": float((n - 1) * (n - 2)),
                                           "lambda": float(n - 2)})

    if name == "product_lsef":
        # R^2 x S^2(1) with f = |x|^2/2: locally symmetric Einstein with
        # potential, but W != 0
        chart = Chart(4, ((-1.5, 1.5), (-1.5, 1.5)) +
                      _sphere_chart(2).ranges, margin=0.12)
        comps = _stack_diag([_flat_components(2), _sphere_components(2)],
                            [2, 2])
        metric = MetricField(chart, comps, name="product_lsef")
        pot = ScalarPotential(
            chart, lambda xs: 0.5 * (xs[0] * xs[0] + xs[1] * xs[1]),
            name="gaussian_2d")
        return CatalogEntry("product_lsef", metric, pot,
                            expected_memberships=_ALL_F - {"SFf"},
                            known_scalars={"R": 2.0, "lambda": 1.0})

    if name == "warped_gaussian":
        n = n or 4
        fiber_chart = Chart(n - 1, tuple((-1.0, 1.0) for _ in range(n - 1)))
        fiber = MetricField(fiber_chart, _flat_components(n - 1))
        metric = warped_product(lambda t: (t * t).exp(), fiber,
                                name="warped_gaussian")

        def pot(xs):
            return (n / 2.0) * (1.0 + xs[0] * xs[0]).log()

        return CatalogEntry(
            "warped_gaussian", metric,
            ScalarPotential(metric.chart, pot, name="warped_log"),
            expected_memberships=frozenset({"HCf", "Yf"}))

    if name == "warped_yf":
        # fiber S^2(1) x H^2(-1): scalar-flat but not Ricci-flat
        n = 5
        fib_ranges = _sphere_chart(2).ranges + ((-1.0, 1.0), (0.6, 2.0))
        fiber_chart = Chart(4, fib_ranges, margin=0.12)
        comps = _stack_diag([_sphere_components(2), _hyperbolic_components(2)],
                            [2, 2])
        fiber = MetricField(fiber_chart, comps)
        metric = warped_product(lambda t: (t * t).exp(), fiber,
                                margin=0.12, name="warped_yf")

        def pot(xs):
            return (n / 2.0) * (1.0 + xs[0] * xs[0]).log()

        return CatalogEntry(
            "warped_yf", metric,
            ScalarPotential(metric.chart, pot, name="warped_log"),
            expected_memberships=frozenset({"Yf"}))

    if name == "s2xs2":
        chart = Chart(4, _sphere_chart(2).ranges + _sphere_chart(2).ranges,
                      margin=0.12)
        comps = _stack_diag([_sphere_components(2), _sphere_components(2)],
                            [2, 2])
        metric = MetricField(chart, comps, name="s2xs2")
        pot = ScalarPotential(chart, lambda xs: 0.0, name="zero")
        return CatalogEntry("s2xs2", metric, pot,
                            expected_memberships=_ALL_F - {"SFf"},
                            known_scalars={"R": 4.0, "lambda": 1.0})

    raise GeometryError(f"unknown catalog geometry {name!r}")


# ---------------------------------------------------------------------------
# geometry-spec files (JSON)

_SPEC_KEYS = {"name", "dim", "metric", "potential", "vector_field", "chart"}


def load_geometry_spec(source):
    """Build a CatalogEntry from a JSON document (path, text or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if "\n" not in str(source) and str(source).endswith(".json"):
            with open(source) as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GeometryError(f"malformed geometry spec: {exc}") from exc
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise GeometryError(f"unknown geometry-spec fields: {sorted(unknown)}")

    mspec = doc.get("metric")
    if not isinstance(mspec, dict) or "kind" not in mspec:
        raise GeometryError("geometry spec needs metric.kind")
    kind = mspec["kind"]
    params = mspec.get("params", {})

    if kind in catalog_names():
        entry = catalog_lookup(kind, n=doc.get("dim"), **params)
        return CatalogEntry(doc.get("name", kind), entry.metric,
                            entry.potential, entry.vector_field,
                            entry.expected_memberships, entry.known_scalars)

    if kind != "expression":
        raise GeometryError(f"unknown metric kind {kind!r}")

    dim = doc.get("dim")
    cspec = doc.get("chart")
    if not dim or not cspec:
        raise GeometryError("expression geometries need dim and chart")
    chart = Chart(dim, tuple(tuple(r) for r in cspec["ranges"]),
                  cspec.get("margin", 0.05))
    comp_text = params.get("components")
    if (not isinstance(comp_text, list) or len(comp_text) != dim
            or any(len(row) != dim for row in comp_text)):
        raise GeometryError("expression metric needs a dim x dim component "
                            "matrix")
    compiled = [[parse_expression(comp_text[i][j], dim) for j in range(dim)]
                for i in range(dim)]
    for i in range(dim):
        for j in range(i):
            if comp_text[i][j] != comp_text[j][i]:
                raise GeometryError("metric component expressions must be "
                                    "symmetric")

    def comps(xs):
        return [[compiled[i][j](xs) for j in range(dim)] for i in range(dim)]

    metric = MetricField(chart, comps, name=doc.get("name", "custom"))

    potential = None
    pspec = doc.get("potential")
    if pspec:
        if pspec.get("kind") != "expression":
            raise GeometryError("potential kind must be 'expression'")
        pf = parse_expression(pspec["params"]["expr"], dim)
        potential = ScalarPotential(chart, pf, name="custom_potential")

    vfield = None
    vspec = doc.get("vector_field")
    if vspec:
        if vspec.get("kind") != "expression":
            raise GeometryError("vector_field kind must be 'expression'")
        vf = [parse_expression(e, dim) for e in vspec["params"]["components"]]
        if len(vf) != dim:
            raise GeometryError("vector field needs dim components")
        vfield = VectorFieldSpec(chart,
                                 lambda xs: [f(xs) for f in vf],
                                 name="custom_field")

    return CatalogEntry(doc.get("name", "custom"), metric, potential, vfield)
