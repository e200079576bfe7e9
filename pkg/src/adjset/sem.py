"""Random tiered DAGs and linear-Gaussian structural equation models."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .citest import Dataset
from .errors import InputError, NumericError
from .graph import Dag, TierKnowledge, as_nodeset, descendants
from .graphio import GraphFile, format_graph, load_graph, parse_graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenConfig:
    n_covariates: int = 10
    n_latents: int = 5
    n_treatments: int = 2
    edge_prob: float = 0.3
    weight_low: float = 0.1
    weight_high: float = 1.0
    noise_variance: float = 1.0
    seed: int = 0
    max_redraws: int = 10_000

    def __post_init__(self):
        if min(self.n_covariates, self.n_latents) < 0 or self.n_treatments < 1:
            raise InputError("counts must be non-negative and at least one treatment is required")
        if not 0 <= self.edge_prob <= 1:
            raise InputError("edge_prob must be a probability")
        if not 0 < self.weight_low <= self.weight_high:
            raise InputError("weights need 0 < weight_low <= weight_high")
        if not self.noise_variance > 0:
            raise InputError("noise_variance must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Roles:
    covariates: tuple
    treatments: tuple
    outcome: str
    latents: tuple


@dataclass(frozen=True)
class SemModel:
    dag: Dag
    weights: dict
    variances: dict

    def __post_init__(self):
        if set(self.weights) != set(self.dag.edges):
            raise InputError("weights must be keyed exactly by the DAG's edges")
        missing = set(self.dag.nodes) - set(self.variances)
        if missing:
            raise InputError(f"missing noise variance for {sorted(missing)}")
        if any(not v > 0 for v in self.variances.values()):
            raise InputError("noise variances must be positive")

    def coefficient_matrix(self) -> np.ndarray:
        """``B[i, j]`` is the weight of edge ``i -> j`` (node order of the DAG)."""
        idx = {n: i for i, n in enumerate(self.dag.nodes)}
        b = np.zeros((len(idx), len(idx)))
        for (a, c), w in self.weights.items():
            b[idx[a], idx[c]] = w
        return b

    def covariance(self) -> np.ndarray:
        """Population covariance of all nodes (latents included)."""
        b = self.coefficient_matrix()
        inv = np.linalg.inv(np.eye(len(b)) - b)
        omega = np.diag([self.variances[n] for n in self.dag.nodes])
        return inv.T @ omega @ inv


def roles(n_covariates: int, n_treatments: int, n_latents: int) -> Roles:
    return Roles(
        tuple(f"W{i}" for i in range(1, n_covariates + 1)),
        tuple(f"X{i}" for i in range(1, n_treatments + 1)),
        "Y",
        tuple(f"U{i}" for i in range(1, n_latents + 1)),
    )


def _has_directed_path(dag: Dag, a: str, b: str) -> bool:
    return b in descendants(dag, {a})


def random_tiered_dag(cfg: GenConfig, rng: np.random.Generator) -> tuple:
    """Draw a DAG over covariates < treatments < outcome plus latent roots.

    Observed nodes are ordered ``W1..Wn, X1..Xk, Y``; each forward pair is an
    edge with probability ``cfg.edge_prob``.  Each latent points at the
    observed nodes independently with the same probability and is redrawn
    until it has at least two children.  Whole DAGs are redrawn until every
    treatment has a directed path to the outcome.  With ``edge_prob == 0``
    neither requirement can be met and the edgeless DAG is returned.

    Returns ``(dag, tiers)``.
    """
    r = roles(cfg.n_covariates, cfg.n_treatments, cfg.n_latents)
    observed = [*r.covariates, *r.treatments, r.outcome]
    tiers = TierKnowledge([r.covariates, r.treatments, [r.outcome]])
    p = len(observed)
    if cfg.edge_prob == 0:
        log.warning("edge_prob is 0: returning the edgeless DAG")
        return Dag([*observed, *r.latents], (), r.latents), tiers
    for attempt in range(cfg.max_redraws):
        upper = rng.random((p, p)) < cfg.edge_prob
        edges = [(observed[i], observed[j]) for i in range(p) for j in range(i + 1, p) if upper[i, j]]
        for u in r.latents:
            while True:
                hits = rng.random(p) < cfg.edge_prob
                if hits.sum() >= 2 or p < 2:
                    break
            edges.extend((u, observed[j]) for j in np.flatnonzero(hits))
        dag = Dag([*observed, *r.latents], edges, r.latents)
        if all(_has_directed_path(dag, x, r.outcome) for x in r.treatments):
            if attempt:
                log.debug("redrew DAG %d time(s) to give every treatment a causal path", attempt)
            return dag, tiers
    raise RuntimeError(f"no valid DAG after {cfg.max_redraws} draws")  # pragma: no cover


def draw_weight(cfg: GenConfig, rng: np.random.Generator, size=None):
    mag = rng.uniform(cfg.weight_low, cfg.weight_high, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def random_sem(dag: Dag, cfg: GenConfig, rng: np.random.Generator) -> SemModel:
    """Edge weights uniform on ``[-high, -low] U [low, high]``; equal noise variances."""
    edges = dag.edges
    w = draw_weight(cfg, rng, len(edges)) if edges else []
    weights = {e: float(v) for e, v in zip(edges, w)}
    return SemModel(dag, weights, {n: cfg.noise_variance for n in dag.nodes})


def uniform_model(dag: Dag, weight: float = 0.5, variance: float = 1.0, weights: Optional[dict] = None) -> SemModel:
    """Every edge gets ``weight`` unless overridden in ``weights``."""
    ws = {e: weight for e in dag.edges}
    if weights:
        ws.update(weights)
    return SemModel(dag, ws, {n: variance for n in dag.nodes})


def sample(model: SemModel, n: int, rng: np.random.Generator) -> Dataset:
    """``n`` i.i.d. rows; only observed columns are returned (in DAG order)."""
    if n < 1:
        raise InputError("sample size must be at least 1")
    dag = model.dag
    idx = {v: i for i, v in enumerate(dag.nodes)}
    values = np.empty((n, len(idx)))
    noise = rng.standard_normal((n, len(idx)))
    for v in dag.topological_order():
        col = noise[:, idx[v]] * np.sqrt(model.variances[v])
        for p in dag.parents(v):
            col = col + model.weights[p, v] * values[:, idx[p]]
        values[:, idx[v]] = col
    keep = dag.ordered_observed()
    return Dataset(keep, values[:, [idx[v] for v in keep]])


def true_total_effect(model: SemModel, x: str, y: str) -> float:
    """Sum over directed paths from ``x`` to ``y`` of the product of edge weights."""
    if x == y:
        raise InputError("total effect of a variable on itself is undefined")
    dag = model.dag
    dag.index(x)
    dag.index(y)
    flow = {x: 1.0}
    for v in dag.topological_order():
        if v == x:
            continue
        total = sum(flow[p] * model.weights[p, v] for p in dag.parents(v) if p in flow)
        if any(p in flow for p in dag.parents(v)):
            flow[v] = total
    return float(flow.get(y, 0.0))


def estimate_effect(data: Dataset, x: str, y: str, z=()) -> tuple:
    """OLS coefficient of ``x`` (with intercept) regressing ``y`` on ``x`` and ``z``; returns ``(estimate, se)``."""
    z = sorted(as_nodeset(z), key=data.index)
    if x == y or y in z or x in z:
        raise InputError("x, y and z must be disjoint")
    cols = [x, *z]
    design = np.column_stack([np.ones(data.n)] + [data.column(c) for c in cols])
    target = data.column(y)
    n, k = design.shape
    if n <= k:
        raise InputError(f"need more than {k} rows to estimate with {len(z)} covariates")
    if np.linalg.matrix_rank(design) < k:
        raise NumericError("rank-deficient design", cols)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    sigma2 = resid @ resid / (n - k)
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return float(coef[1]), float(np.sqrt(cov[1, 1]))


def format_model(model: SemModel, tiers: Optional[TierKnowledge] = None) -> str:
    return format_graph(model.dag, tiers, model.weights, model.variances)


def parse_model(text: str, path=None) -> tuple:
    """Parse a model file; returns ``(SemModel, tiers or None)``."""
    gf: GraphFile = parse_graph(text, path)
    missing = set(gf.dag.edges) - set(gf.weights)
    if missing:
        raise InputError(f"edges without weight: {sorted(missing)}")
    variances = {n: gf.variances.get(n, 1.0) for n in gf.dag.nodes}
    return SemModel(gf.dag, dict(gf.weights), variances), gf.tiers


def load_model(path) -> tuple:
    """Load a model file; a plain graph file (no weights) gets ``uniform_model`` weights."""
    gf = load_graph(path)
    if not gf.weights:
        return uniform_model(gf.dag), gf.tiers
    return parse_model(Path(path).read_text(), str(path))
