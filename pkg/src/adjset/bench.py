"""Simulation benchmark: generate, sample, discover, verify, report precision."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .citest import CachedCI, FisherZCI, OracleCI, ThresholdPolicy
from .errors import AdjsetError, InputError
from .graph import is_adjustment_set
from .rules import BUILD, COMBINE, ENTNER, AdjustmentCertificate, SearchConfig, r1_build, r1_combine, r1_entner
from .sem import GenConfig, random_sem, random_tiered_dag, roles, sample

log = logging.getLogger(__name__)

ORACLE = "oracle"
METHODS = {ENTNER: r1_entner, BUILD: r1_build, COMBINE: r1_combine}


@dataclass(frozen=True)
class ExperimentConfig:
    gen: GenConfig = GenConfig()
    trials: int = 40
    sizes: tuple = (500, 1000, 5000)
    policies: tuple = (ThresholdPolicy.single(0.05), ThresholdPolicy.mixed(0.01, 0.1))
    methods: tuple = (BUILD, COMBINE)
    oracle: bool = False
    workers: int = 1
    search: SearchConfig = SearchConfig()

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trial count must be at least 1")
        if not self.oracle and (not self.sizes or min(self.sizes) < 1):
            raise InputError("sample sizes must be positive")
        if not self.oracle and not self.policies:
            raise InputError("at least one threshold policy is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise InputError(f"methods must be drawn from {sorted(METHODS)}, got {list(self.methods)}")
        if ENTNER in self.methods and self.gen.n_treatments != 1:
            raise InputError("the entner method needs exactly one treatment")
        if self.workers < 1:
            raise InputError("workers must be at least 1")


@dataclass
class TrialRecord:
    trial: int
    method: str
    policy: str
    size: int
    found: Optional[frozenset] = None
    verified: Optional[bool] = None
    queries: int = 0
    seconds: float = 0.0
    error: Optional[str] = None
    certificate: Optional[AdjustmentCertificate] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if (self.found is None) != (self.verified is None):
            raise InputError("verified must be present exactly when a set was found")

    @property
    def key(self) -> tuple:
        return self.trial, self.size, self.policy, self.method


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, trial])


def trial_model(cfg: ExperimentConfig, trial: int):
    """The DAG, tiers, SEM and the rng positioned for sampling, for one trial."""
    rng = trial_rng(cfg.gen.seed, trial)
    dag, tiers = random_tiered_dag(cfg.gen, rng)
    model = random_sem(dag, cfg.gen, rng)
    return dag, tiers, model, rng


def _attempt(ci, method, pool, xs, y, tiers, cfg, dag, trial, policy, size) -> TrialRecord:
    start = time.perf_counter()
    try:
        cert = METHODS[method](ci, pool, xs[0] if method == ENTNER else xs, y, cfg.search, tiers=tiers)
    except AdjsetError as e:
        return TrialRecord(trial, method, policy, size, queries=ci.queries,
                           seconds=time.perf_counter() - start, error=f"{type(e).__name__}: {e}")
    seconds = time.perf_counter() - start
    if cert is None:
        return TrialRecord(trial, method, policy, size, queries=ci.queries, seconds=seconds)
    ok = is_adjustment_set(dag, xs, y, cert.adjustment_set)
    return TrialRecord(trial, method, policy, size, cert.adjustment_set, ok, ci.queries, seconds, certificate=cert)


def run_trial(cfg: ExperimentConfig, trial: int) -> list:
    r = roles(cfg.gen.n_covariates, cfg.gen.n_treatments, cfg.gen.n_latents)
    xs, y, pool = list(r.treatments), r.outcome, list(r.covariates)
    try:
        dag, tiers, model, rng = trial_model(cfg, trial)
    except Exception as e:  # generation failures are recorded, not raised
        log.warning("trial %d: generation failed: %s", trial, e)
        sizes = [0] if cfg.oracle else cfg.sizes
        labels = [ORACLE] if cfg.oracle else [p.label for p in cfg.policies]
        return [TrialRecord(trial, m, p, s, error=f"{type(e).__name__}: {e}")
                for s in sizes for p in labels for m in cfg.methods]
    out = []
    if cfg.oracle:
        for m in cfg.methods:
            out.append(_attempt(CachedCI(OracleCI(dag)), m, pool, xs, y, tiers, cfg, dag, trial, ORACLE, 0))
        return out
    for size in cfg.sizes:
        data = sample(model, size, rng)
        pvalues: dict = {}
        for policy in cfg.policies:
            for m in cfg.methods:
                ci = CachedCI(FisherZCI(data, policy, pvalues))
                out.append(_attempt(ci, m, pool, xs, y, tiers, cfg, dag, trial, policy.label, size))
    return out


def _run_chunk(args) -> list:
    cfg, trials = args
    return [rec for t in trials for rec in run_trial(cfg, t)]


def run_experiment(cfg: ExperimentConfig) -> list:
    """All trial records, ordered by (trial, size, policy, method) as configured.

    Trials are independent and seeded from ``(master seed, trial id)``, so the
    output does not depend on ``cfg.workers``.
    """
    ids = list(range(cfg.trials))
    if cfg.workers == 1:
        return _run_chunk((cfg, ids))
    chunks = [ids[i::cfg.workers] for i in range(cfg.workers)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        parts = list(ex.map(_run_chunk, [(cfg, c) for c in chunks if c]))
    records = [r for part in parts for r in part]
    records.sort(key=lambda r: r.trial)  # stable: keeps per-trial order
    return records


@dataclass(frozen=True)
class GroupStats:
    method: str
    policy: str
    size: int
    attempts: int
    tp: int
    fp: int
    errors: int

    @property
    def discoveries(self) -> int:
        return self.tp + self.fp

    @property
    def precision(self) -> Optional[float]:
        return self.tp / self.discoveries if self.discoveries else None


@dataclass(frozen=True)
class PrecisionReport:
    groups: tuple

    def get(self, method: str, policy: str, size: int) -> GroupStats:
        for g in self.groups:
            if (g.method, g.policy, g.size) == (method, policy, size):
                return g
        raise KeyError((method, policy, size))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "policy", "size", "attempts", "discoveries", "tp", "fp", "errors", "precision"])
        for g in self.groups:
            p = "" if g.precision is None else f"{g.precision:.6f}"
            w.writerow([g.method, g.policy, g.size, g.attempts, g.discoveries, g.tp, g.fp, g.errors, p])
        return buf.getvalue()

    def summary(self) -> str:
        """Plain-text table: one row per (method, policy), one column per sample size."""
        sizes = sorted({g.size for g in self.groups})
        rows = sorted({(g.method, g.policy) for g in self.groups})
        head = ["method", "policy"] + [f"n={s}" for s in sizes]
        body = []
        for m, p in rows:
            cells = [m, p]
            for s in sizes:
                try:
                    g = self.get(m, p, s)
                except KeyError:
                    cells.append("")
                    continue
                prec = "NA" if g.precision is None else f"{g.precision:.3f}"
                cells.append(f"{prec} ({g.tp}/{g.discoveries})")
            body.append(cells)
        widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
        lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]
        return "precision (true positives / discoveries)\n" + "\n".join(lines) + "\n"


def precision(records: Iterable[TrialRecord]) -> PrecisionReport:
    """Group by (method, policy, size); TP = found and verified, FP = found and not verified."""
    acc: dict = {}
    for r in records:
        k = (r.method, r.policy, r.size)
        a = acc.setdefault(k, [0, 0, 0, 0])
        a[0] += 1
        if r.found is not None:
            a[1 if r.verified else 2] += 1
        if r.error is not None:
            a[3] += 1
    groups = tuple(GroupStats(m, p, s, *v) for (m, p, s), v in sorted(acc.items()))
    return PrecisionReport(groups)


RECORD_FIELDS = ["trial", "method", "policy", "size", "found", "verified", "queries", "seconds", "error"]


def _fmt_set(s: Optional[frozenset]) -> str:
    return "" if s is None else "{" + " ".join(sorted(s)) + "}"


def records_to_csv(records: Sequence[TrialRecord], timings: bool = True) -> str:
    """One row per attempt.  ``timings=False`` blanks wall time for byte-stable output."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        verified = "" if r.verified is None else str(r.verified).lower()
        secs = f"{r.seconds:.6f}" if timings else ""
        w.writerow([r.trial, r.method, r.policy, r.size, _fmt_set(r.found), verified, r.queries, secs, r.error or ""])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        found = None
        if row["found"]:
            found = frozenset(row["found"].strip("{}").split())
        verified = None if row["verified"] == "" else row["verified"] == "true"
        out.append(TrialRecord(int(row["trial"]), row["method"], row["policy"], int(row["size"]), found, verified,
                               int(row["queries"]), float(row["seconds"] or 0.0), row["error"] or None))
    return out
