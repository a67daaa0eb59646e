"""Numeric oracle: random model parameters, implied covariance matrices,
effect estimation, and round-trip verification of derived formulas."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .criteria import IdentificationState
from .formulas import (
    DegenerateInputError,
    FormulaMap,
    eval_expr,
    formula_map_from_state,
)
from .graph import Edge, LatentFactorGraph

_NEAR_SINGULAR = 1e-9
_MAX_RESAMPLE = 100


class SamplingError(RuntimeError):
    """Could not draw non-singular parameters within the retry budget."""


@dataclass(frozen=True)
class SamplingSpec:
    """Ranges for random parameter draws; coefficients are drawn from
    +/- [coeff_low, coeff_high] to stay bounded away from zero."""

    coeff_low: float = 0.3
    coeff_high: float = 1.0
    var_low: float = 0.5
    var_high: float = 1.5


@dataclass
class ModelParameters:
    """(Lambda, Gamma, Omega_diag, V_L) with supports matching the graph."""

    graph: LatentFactorGraph
    lam: np.ndarray
    gamma: np.ndarray
    omega_diag: np.ndarray
    v_l: np.ndarray

    def coefficient(self, edge: Edge) -> float:
        i = self.graph.observed.index(edge[0])
        j = self.graph.observed.index(edge[1])
        return float(self.lam[i, j])


class CovarianceMatrix:
    """Symmetric positive-definite matrix indexed by observed node ids."""

    def __init__(self, nodes, values: np.ndarray):
        self.nodes = tuple(nodes)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.nodes), len(self.nodes)):
            raise ValueError("covariance shape does not match node list")
        if not np.allclose(values, values.T, atol=1e-12):
            raise ValueError("covariance matrix is not symmetric")
        self.values = (values + values.T) / 2.0
        self._index = {n: i for i, n in enumerate(self.nodes)}

    def __getitem__(self, key) -> float:
        x, y = key
        return float(self.values[self._index[x], self._index[y]])

    def check_positive_definite(self) -> None:
        np.linalg.cholesky(self.values)


def sample_parameters(
    g: LatentFactorGraph,
    seed,
    spec: SamplingSpec = SamplingSpec(),
) -> ModelParameters:
    """Random parameters with exact structural zeros; redraws when
    I - Lambda comes out near-singular."""
    rng = np.random.default_rng(seed)
    d = len(g.observed)
    ell = len(g.latent)
    obs_idx = {n: i for i, n in enumerate(g.observed)}
    lat_idx = {n: i for i, n in enumerate(g.latent)}

    def draw_coeff() -> float:
        mag = rng.uniform(spec.coeff_low, spec.coeff_high)
        return mag if rng.random() < 0.5 else -mag

    for _ in range(_MAX_RESAMPLE):
        lam = np.zeros((d, d))
        for a, b in sorted(g.edges_obs):
            lam[obs_idx[a], obs_idx[b]] = draw_coeff()
        if abs(np.linalg.det(np.eye(d) - lam)) > _NEAR_SINGULAR:
            break
    else:
        raise SamplingError("I - Lambda kept coming out near-singular")

    gamma = np.zeros((ell, d))
    for a, b in sorted(g.edges_lat):
        gamma[lat_idx[a], obs_idx[b]] = draw_coeff()
    omega_diag = rng.uniform(spec.var_low, spec.var_high, size=d)
    v_l = rng.uniform(spec.var_low, spec.var_high, size=ell)
    return ModelParameters(g, lam, gamma, omega_diag, v_l)


def covariance(params: ModelParameters) -> CovarianceMatrix:
    """Implied covariance (I-Lambda)^-T (Omega + Gamma^T V_L Gamma) (I-Lambda)^-1."""
    d = len(params.graph.observed)
    i_minus = np.eye(d) - params.lam
    if abs(np.linalg.det(i_minus)) <= _NEAR_SINGULAR:
        raise ValueError("I - Lambda is singular for these parameters")
    omega = np.diag(params.omega_diag) + params.gamma.T @ np.diag(
        params.v_l
    ) @ params.gamma
    inv = np.linalg.inv(i_minus)
    sigma = inv.T @ omega @ inv
    return CovarianceMatrix(params.graph.observed, (sigma + sigma.T) / 2.0)


@dataclass
class EdgeEstimate:
    value: Optional[float]
    degenerate: bool = False


def estimate(
    g: LatentFactorGraph, sigma: CovarianceMatrix, fmap: FormulaMap
) -> dict[Edge, EdgeEstimate]:
    """Evaluate every available formula at the given covariance matrix."""
    out: dict[Edge, EdgeEstimate] = {}
    cache: dict[Edge, float] = {}
    for edge, expr in sorted(fmap.items()):
        try:
            out[edge] = EdgeEstimate(
                eval_expr(expr, sigma, fmap, _cache=cache)
            )
        except DegenerateInputError:
            out[edge] = EdgeEstimate(None, degenerate=True)
    return out


@dataclass
class VerificationReport:
    trials: int
    tol: float
    max_rel_error: float
    failures: list[tuple[int, Edge, float]]
    degenerate_trials: int
    unverified_edges: list[Edge]

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "tol": self.tol,
            "max_rel_error": self.max_rel_error,
            "failures": [
                {"trial": t, "edge": list(e), "rel_error": r}
                for t, e, r in self.failures
            ],
            "degenerate_trials": self.degenerate_trials,
            "unverified_edges": [list(e) for e in self.unverified_edges],
        }


def verify_identification(
    g: LatentFactorGraph,
    state: IdentificationState,
    trials: int = 100,
    tol: float = 1e-8,
    seed: int = 0,
    spec: SamplingSpec = SamplingSpec(),
    fmap: Optional[FormulaMap] = None,
) -> VerificationReport:
    """Sample parameters, synthesize the covariance, re-estimate each
    solved coefficient from it, and compare against the truth."""
    if fmap is None:
        fmap = formula_map_from_state(g, state)
    unverified = sorted(g.edges_obs - set(fmap.formulas))
    root = np.random.SeedSequence(seed)
    trial_seeds = root.spawn(trials)
    max_err = 0.0
    failures: list[tuple[int, Edge, float]] = []
    degenerate = 0
    for i in range(trials):
        params = sample_parameters(g, trial_seeds[i], spec)
        sigma = covariance(params)
        results = estimate(g, sigma, fmap)
        trial_degenerate = False
        for edge, res in results.items():
            if res.degenerate:
                trial_degenerate = True
                continue
            truth = params.coefficient(edge)
            err = abs(res.value - truth) / max(abs(truth), 1e-12)
            max_err = max(max_err, err)
            if err > tol:
                failures.append((i, edge, err))
        if trial_degenerate:
            degenerate += 1
    return VerificationReport(
        trials=trials,
        tol=tol,
        max_rel_error=max_err,
        failures=failures,
        degenerate_trials=degenerate,
        unverified_edges=unverified,
    )


def covariance_to_csv(sigma: CovarianceMatrix) -> str:
    lines = [",".join(sigma.nodes)]
    for row in sigma.values:
        lines.append(",".join(format(x, ".17g") for x in row))
    return "\n".join(lines)


def covariance_from_csv(text: str) -> CovarianceMatrix:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    nodes = [n.strip() for n in lines[0].split(",")]
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return CovarianceMatrix(nodes, np.array(rows))
