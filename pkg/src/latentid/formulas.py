"""Symbolic rational identification formulas.

Expressions are immutable trees over covariance symbols, previously
derived coefficient handles, determinants, and linear-solve coordinates.
They can be rendered to LaTeX and evaluated numerically against a
covariance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .criteria import (
    CertRecord,
    DetCertificate,
    HtcCertificate,
    IdentificationState,
    allowed_update,
    cov_pair,
)
from .graph import Edge, GraphError, LatentFactorGraph, htr, parents_obs

SINGULARITY_TOL = 1e-12


class DependencyError(ValueError):
    """A formula needs the coefficient of an edge that has no formula yet."""

    def __init__(self, edge: Edge):
        self.edge = edge
        super().__init__(f"no formula available for edge {edge[0]} -> {edge[1]}")


class DegenerateInputError(ValueError):
    """The supplied covariance matrix lies in the singular exception set."""


class RationalExpr:
    """Base class; all nodes are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class Cov(RationalExpr):
    """Covariance symbol, normalized so that x <= y."""

    x: str
    y: str


def cov(x: str, y: str) -> Cov:
    a, b = cov_pair(x, y)
    return Cov(a, b)


@dataclass(frozen=True)
class Const(RationalExpr):
    value: float


@dataclass(frozen=True)
class Lam(RationalExpr):
    """Handle referencing the formula of a previously derived edge."""

    edge: Edge


@dataclass(frozen=True)
class Sum(RationalExpr):
    terms: tuple[RationalExpr, ...]


@dataclass(frozen=True)
class Prod(RationalExpr):
    factors: tuple[RationalExpr, ...]


@dataclass(frozen=True)
class Neg(RationalExpr):
    term: RationalExpr


@dataclass(frozen=True)
class Quot(RationalExpr):
    num: RationalExpr
    den: RationalExpr


@dataclass(frozen=True)
class Det(RationalExpr):
    matrix: tuple[tuple[RationalExpr, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.matrix)
        if any(len(row) != n for row in self.matrix):
            raise ValueError("determinant of a non-square matrix")


@dataclass(frozen=True)
class SolveCoord(RationalExpr):
    """One coordinate of the solution of a square linear system."""

    matrix: tuple[tuple[RationalExpr, ...], ...]
    rhs: tuple[RationalExpr, ...]
    index: int

    def __post_init__(self) -> None:
        n = len(self.matrix)
        if any(len(row) != n for row in self.matrix) or len(self.rhs) != n:
            raise ValueError("linear system is not square")
        if not 0 <= self.index < max(n, 1):
            raise ValueError("solution index out of range")


def _sub_chain(base: RationalExpr, terms: Iterable[RationalExpr]) -> RationalExpr:
    """base - t1 - t2 - ... collapsed into a single sum node."""
    negs = tuple(Neg(t) for t in terms)
    if not negs:
        return base
    return Sum((base,) + negs)


def _lam_times(lam: Lam, other: RationalExpr) -> RationalExpr:
    # Mirror the conventional typesetting: a bare coefficient precedes a
    # bare covariance; a composite factor keeps the coefficient trailing.
    if isinstance(other, Cov):
        return Prod((lam, other))
    return Prod((other, lam))


# -- formula maps and deletion contexts -----------------------------------


@dataclass
class FormulaMap:
    """Formulas per solved edge; closed under coefficient handles."""

    formulas: dict[Edge, RationalExpr] = field(default_factory=dict)

    def __contains__(self, edge: Edge) -> bool:
        return edge in self.formulas

    def get(self, edge: Edge) -> RationalExpr:
        if edge not in self.formulas:
            raise DependencyError(edge)
        return self.formulas[edge]

    def add(self, edge: Edge, expr: RationalExpr) -> None:
        for ref in _lam_refs(expr):
            if ref not in self.formulas:
                raise DependencyError(ref)
        self.formulas[edge] = expr

    def items(self):
        return self.formulas.items()


def _lam_refs(expr: RationalExpr) -> set[Edge]:
    out: set[Edge] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Lam):
            out.add(e.edge)
        elif isinstance(e, Sum):
            stack.extend(e.terms)
        elif isinstance(e, Prod):
            stack.extend(e.factors)
        elif isinstance(e, Neg):
            stack.append(e.term)
        elif isinstance(e, Quot):
            stack.extend((e.num, e.den))
        elif isinstance(e, Det):
            for row in e.matrix:
                stack.extend(row)
        elif isinstance(e, SolveCoord):
            for row in e.matrix:
                stack.extend(row)
            stack.extend(e.rhs)
    return out


class DeletionContext:
    """An ordered sequence of single-edge deletions from a base graph,
    together with the covariance pairs still computable at each level."""

    def __init__(self, graph: LatentFactorGraph, deleted: Iterable[Edge] = ()):
        self.graph = graph
        self.deleted = tuple(tuple(e) for e in deleted)
        self._levels = [graph]
        self._allowed = [
            frozenset(
                cov_pair(x, y)
                for i, x in enumerate(sorted(graph.observed))
                for y in sorted(graph.observed)[i:]
            )
        ]
        for w, v in self.deleted:
            g_prev = self._levels[-1]
            # Descendants are taken in the base graph so the allowed set
            # only depends on the union of deleted edges (order-free).
            self._allowed.append(
                allowed_update(graph, self._allowed[-1], v, {w})
            )
            self._levels.append(g_prev.without_obs_edges({(w, v)}))

    @property
    def subgraph(self) -> LatentFactorGraph:
        return self._levels[-1]

    @property
    def allowed(self) -> frozenset[tuple[str, str]]:
        return self._allowed[-1]

    def is_allowed(self, x: str, y: str) -> bool:
        return cov_pair(x, y) in self.allowed

    def extend(self, edge: Edge) -> "DeletionContext":
        return DeletionContext(self.graph, self.deleted + (tuple(edge),))


def adjusted_cov(x: str, y: str, ctx: DeletionContext) -> RationalExpr:
    """The subgraph covariance (x, y) as an expression in the base
    graph's covariances and the deleted edges' coefficients."""
    if not ctx.is_allowed(x, y):
        raise GraphError(
            f"covariance ({x}, {y}) is not computable after deleting "
            f"{list(ctx.deleted)}"
        )
    return _adjusted(x, y, ctx.deleted)


def _adjusted(x: str, y: str, deleted: tuple[Edge, ...]) -> RationalExpr:
    if not deleted:
        return cov(x, y)
    head, (w, v) = deleted[:-1], deleted[-1]
    base = _adjusted(x, y, head)
    if x != v and y != v:
        return base
    other = y if x == v else x
    correction = _lam_times(Lam((w, v)), _adjusted(other, w, head))
    return _sub_chain(base, [correction])


# -- linear system construction -------------------------------------------


@dataclass(frozen=True)
class LinearSystem:
    """The square system whose leading solution coordinates are the
    coefficients of the edges in `alpha_edges`."""

    matrix: tuple[tuple[RationalExpr, ...], ...]
    rhs: tuple[RationalExpr, ...]
    columns: tuple[str, ...]
    rows: tuple[str, ...]
    alpha_edges: tuple[Edge, ...]


def build_elf_system(
    g: LatentFactorGraph,
    cert: HtcCertificate,
    fmap: FormulaMap,
    ctx: Optional[DeletionContext] = None,
) -> LinearSystem:
    """Linear system determined by an extended-criterion witness.

    Rows are indexed by the sorted source set Y; columns by the target
    coefficients first, then the partially-conditioned sinks, then the
    fully-conditioned sinks and remaining conditioning nodes. Covariance
    entries are drawn through the deletion context.
    """
    if ctx is None:
        ctx = DeletionContext(g)
    gs = ctx.subgraph
    v = cert.v
    w_z = cert.w_z()
    w_big = cert.w_z_union
    z1 = frozenset(z for z in cert.z if w_z[z] < parents_obs(gs, z))
    z2 = cert.z - z1
    pa_v = parents_obs(gs, v)
    reachable = htr(gs, cert.z | {v}, cert.h)

    alpha_nodes = sorted(cert.w_v - (z2 | w_big))
    columns = (
        alpha_nodes + sorted(z1) + sorted(z2) + sorted(w_big - z2)
    )

    def lam(p: str, t: str) -> Lam:
        if (p, t) not in fmap:
            raise DependencyError((p, t))
        return Lam((p, t))

    def sig(a: str, b: str) -> RationalExpr:
        return adjusted_cov(a, b, ctx)

    def corrected(y: str, t: str) -> RationalExpr:
        # [(I - Lambda)^T Sigma]_{yt} with the y-column coefficients
        # pulled from previously derived formulas.
        return _sub_chain(
            sig(y, t),
            [
                _lam_times(lam(p, y), sig(p, t))
                for p in sorted(parents_obs(gs, y))
            ],
        )

    matrix: list[tuple[RationalExpr, ...]] = []
    rhs: list[RationalExpr] = []
    rows = sorted(cert.y)
    for y in rows:
        case2 = y in reachable
        entry = (lambda t: corrected(y, t)) if case2 else (
            lambda t: sig(y, t)
        )
        row: list[RationalExpr] = []
        for p in alpha_nodes:
            row.append(entry(p))
        for z in sorted(z1):
            row.append(
                _sub_chain(
                    entry(z),
                    [
                        Prod((entry(p), lam(p, z)))
                        if case2
                        else _lam_times(lam(p, z), sig(y, p))
                        for p in sorted(parents_obs(gs, z) - w_z[z])
                    ],
                )
            )
        for w in sorted(z2) + sorted(w_big - z2):
            row.append(entry(w))
        matrix.append(tuple(row))
        rhs.append(
            _sub_chain(
                entry(v),
                [
                    Prod((entry(p), lam(p, v)))
                    if case2
                    else _lam_times(lam(p, v), sig(y, p))
                    for p in sorted(pa_v - cert.w_v)
                ],
            )
        )

    return LinearSystem(
        matrix=tuple(matrix),
        rhs=tuple(rhs),
        columns=tuple(columns),
        rows=tuple(rows),
        alpha_edges=tuple((p, v) for p in alpha_nodes),
    )


def solve_alpha(system: LinearSystem) -> list[tuple[Edge, RationalExpr]]:
    """Expressions for the leading solution coordinates of the system.

    A 1x1 system collapses to a plain quotient.
    """
    if len(system.matrix) == 1 and system.alpha_edges:
        return [
            (system.alpha_edges[0], Quot(system.rhs[0], system.matrix[0][0]))
        ]
    return [
        (edge, SolveCoord(system.matrix, system.rhs, i))
        for i, edge in enumerate(system.alpha_edges)
    ]


def build_det_formula(
    cert: DetCertificate,
    fmap: FormulaMap,
    ctx: DeletionContext,
) -> RationalExpr:
    """Determinant-ratio formula determined by a determinantal witness."""
    rows = sorted(cert.s)
    t_cols = sorted(cert.t)

    def mat(target: str) -> RationalExpr:
        if len(rows) == 1:
            return adjusted_cov(rows[0], target, ctx)
        return Det(
            tuple(
                tuple(adjusted_cov(s, t, ctx) for t in t_cols + [target])
                for s in rows
            )
        )

    correction = []
    for w in sorted(cert.deleted_parents):
        if (w, cert.v) not in fmap:
            raise DependencyError((w, cert.v))
        correction.append(_lam_times(Lam((w, cert.v)), mat(w)))
    numerator = _sub_chain(mat(cert.v), correction)
    return Quot(numerator, mat(cert.w0))


def formula_map_from_state(
    g: LatentFactorGraph, state: IdentificationState
) -> FormulaMap:
    """Formulas for every solved edge, built from the recorded
    certificates in discovery order (first witness per edge wins)."""
    fmap = FormulaMap()
    for record in state.certificates:
        if all(e in fmap for e in record.edges):
            continue
        ctx = DeletionContext(g, record.deleted)
        if isinstance(record.cert, HtcCertificate):
            system = build_elf_system(g, record.cert, fmap, ctx)
            for edge, expr in solve_alpha(system):
                if edge not in fmap and edge in set(record.edges):
                    fmap.add(edge, expr)
        else:
            edge = (record.cert.w0, record.cert.v)
            if edge not in fmap:
                fmap.add(edge, build_det_formula(record.cert, fmap, ctx))
    return fmap


# -- export ----------------------------------------------------------------


def expr_to_dict(expr: RationalExpr) -> dict:
    """JSON-serializable tree form of an expression."""
    if isinstance(expr, Cov):
        return {"op": "cov", "x": expr.x, "y": expr.y}
    if isinstance(expr, Const):
        return {"op": "const", "value": expr.value}
    if isinstance(expr, Lam):
        return {"op": "coeff", "edge": list(expr.edge)}
    if isinstance(expr, Sum):
        return {"op": "sum", "terms": [expr_to_dict(t) for t in expr.terms]}
    if isinstance(expr, Prod):
        return {
            "op": "prod",
            "factors": [expr_to_dict(f) for f in expr.factors],
        }
    if isinstance(expr, Neg):
        return {"op": "neg", "term": expr_to_dict(expr.term)}
    if isinstance(expr, Quot):
        return {
            "op": "quot",
            "num": expr_to_dict(expr.num),
            "den": expr_to_dict(expr.den),
        }
    if isinstance(expr, Det):
        return {
            "op": "det",
            "matrix": [[expr_to_dict(e) for e in row] for row in expr.matrix],
        }
    if isinstance(expr, SolveCoord):
        return {
            "op": "solve-coord",
            "matrix": [[expr_to_dict(e) for e in row] for row in expr.matrix],
            "rhs": [expr_to_dict(t) for t in expr.rhs],
            "index": expr.index,
        }
    raise TypeError(f"unknown expression node: {expr!r}")


# -- rendering -------------------------------------------------------------


def _subscript(a: str, b: str) -> str:
    if len(a) == 1 and len(b) == 1:
        return a + b
    return f"{a},{b}"


def _needs_parens(expr: RationalExpr) -> bool:
    return isinstance(expr, (Sum, Neg))


def render_latex(expr: RationalExpr) -> str:
    """Deterministic LaTeX form of an expression."""
    if isinstance(expr, Cov):
        return rf"\Sigma_{{{_subscript(expr.x, expr.y)}}}"
    if isinstance(expr, Lam):
        return rf"\lambda_{{{_subscript(expr.edge[0], expr.edge[1])}}}"
    if isinstance(expr, Const):
        return format(expr.value, "g")
    if isinstance(expr, Neg):
        inner = render_latex(expr.term)
        if _needs_parens(expr.term):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Sum):
        parts = []
        for i, t in enumerate(expr.terms):
            if isinstance(t, Neg):
                inner = render_latex(t.term)
                if _needs_parens(t.term):
                    inner = f"({inner})"
                parts.append(("-" if i == 0 else " - ") + inner)
            else:
                parts.append(("" if i == 0 else " + ") + render_latex(t))
        return "".join(parts)
    if isinstance(expr, Prod):
        parts = []
        for f in expr.factors:
            s = render_latex(f)
            if _needs_parens(f) or isinstance(f, Quot):
                s = f"({s})"
            parts.append(s)
        return "".join(parts)
    if isinstance(expr, Quot):
        return rf"\frac{{{render_latex(expr.num)}}}{{{render_latex(expr.den)}}}"
    if isinstance(expr, Det):
        return rf"\det{_pmatrix(expr.matrix)}"
    if isinstance(expr, SolveCoord):
        body = (
            rf"{_pmatrix(expr.matrix)}^{{-1}} \cdot "
            rf"{_pmatrix(tuple((r,) for r in expr.rhs))}"
        )
        return rf"\left[{body}\right]_{{{expr.index + 1}}}"
    raise TypeError(f"unknown expression node: {expr!r}")


def _pmatrix(rows: tuple[tuple[RationalExpr, ...], ...]) -> str:
    body = r" \\ ".join(
        " & ".join(render_latex(e) for e in row) for row in rows
    )
    return rf"\begin{{pmatrix}} {body} \end{{pmatrix}}"


# -- evaluation ------------------------------------------------------------


def eval_expr(
    expr: RationalExpr,
    sigma,
    fmap: Optional[FormulaMap] = None,
    _cache: Optional[dict[Edge, float]] = None,
) -> float:
    """Numeric value of an expression at a covariance matrix.

    `sigma` must support `sigma[x, y]` lookups by node id. Coefficient
    handles are resolved through `fmap` and memoized.
    """
    if _cache is None:
        _cache = {}
    return _eval(expr, sigma, fmap, _cache)


def _eval(expr, sigma, fmap, cache) -> float:
    if isinstance(expr, Cov):
        return float(sigma[expr.x, expr.y])
    if isinstance(expr, Const):
        return float(expr.value)
    if isinstance(expr, Lam):
        if expr.edge not in cache:
            if fmap is None or expr.edge not in fmap:
                raise DependencyError(expr.edge)
            cache[expr.edge] = _eval(fmap.get(expr.edge), sigma, fmap, cache)
        return cache[expr.edge]
    if isinstance(expr, Sum):
        return sum(_eval(t, sigma, fmap, cache) for t in expr.terms)
    if isinstance(expr, Prod):
        out = 1.0
        for f in expr.factors:
            out *= _eval(f, sigma, fmap, cache)
        return out
    if isinstance(expr, Neg):
        return -_eval(expr.term, sigma, fmap, cache)
    if isinstance(expr, Quot):
        num = _eval(expr.num, sigma, fmap, cache)
        den = _eval(expr.den, sigma, fmap, cache)
        if abs(den) <= SINGULARITY_TOL * max(1.0, abs(num)):
            raise DegenerateInputError(
                "denominator vanishes at this covariance matrix"
            )
        return num / den
    if isinstance(expr, Det):
        return float(np.linalg.det(_eval_matrix(expr.matrix, sigma, fmap, cache)))
    if isinstance(expr, SolveCoord):
        a = _eval_matrix(expr.matrix, sigma, fmap, cache)
        b = np.array([_eval(t, sigma, fmap, cache) for t in expr.rhs])
        scale = float(np.prod(np.linalg.norm(a, axis=1))) if a.size else 0.0
        det = float(np.linalg.det(a)) if a.size else 0.0
        if a.size == 0:
            raise DegenerateInputError("empty linear system")
        if abs(det) <= SINGULARITY_TOL * max(scale, 1e-300):
            raise DegenerateInputError(
                "near-singular linear system at this covariance matrix"
            )
        return float(np.linalg.solve(a, b)[expr.index])
    raise TypeError(f"unknown expression node: {expr!r}")


def _eval_matrix(matrix, sigma, fmap, cache) -> np.ndarray:
    return np.array(
        [[_eval(e, sigma, fmap, cache) for e in row] for row in matrix],
        dtype=float,
    )
