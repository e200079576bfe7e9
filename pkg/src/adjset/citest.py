"""Conditional in/dependence queries: d-separation oracle and Fisher-z test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InputError, NumericError, ParseError
from .graph import Dag, as_nodeset, d_separated

MIN_EIGENVALUE = 1e-12
P_FLOOR = 1e-300


class Decision(str, Enum):
    DEPENDENT = "dependent"
    INDEPENDENT = "independent"
    INCONCLUSIVE = "inconclusive"

    @property
    def short(self) -> str:
        return {"dependent": "d", "independent": "i", "inconclusive": "inc"}[self.value]


@dataclass(frozen=True)
class CiQuery:
    a: str
    b: str
    cond: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "cond", as_nodeset(self.cond))
        if self.a == self.b:
            raise InputError(f"query endpoints must differ, got {self.a!r} twice")
        if self.a in self.cond or self.b in self.cond:
            raise InputError(f"query endpoint in conditioning set: {self}")

    def key(self) -> tuple:
        """Canonical memo key: endpoints sorted, conditioning set sorted."""
        a, b = sorted((self.a, self.b))
        return a, b, tuple(sorted(self.cond))

    def __str__(self) -> str:
        return f"{self.a} ⫫? {self.b} | {{{', '.join(sorted(self.cond))}}}"


@dataclass(frozen=True)
class CiVerdict:
    decision: Decision
    p_value: Optional[float] = None

    @property
    def dependent(self) -> bool:
        return self.decision is Decision.DEPENDENT

    @property
    def independent(self) -> bool:
        return self.decision is Decision.INDEPENDENT


@dataclass(frozen=True)
class ThresholdPolicy:
    """Maps p-values to verdicts.

    ``single(a)``: dependent iff p < a, otherwise independent.
    ``mixed(d, i)``: dependent iff p < d, independent iff p > i, else inconclusive.
    """

    alpha_dep: float
    alpha_indep: float

    def __post_init__(self):
        if not 0 < self.alpha_dep < 1 or not 0 < self.alpha_indep < 1:
            raise InputError("thresholds must lie strictly between 0 and 1")
        if self.alpha_dep > self.alpha_indep:
            raise InputError("dependence threshold must not exceed independence threshold")

    @classmethod
    def single(cls, alpha: float = 0.05) -> "ThresholdPolicy":
        return cls(alpha, alpha)

    @classmethod
    def mixed(cls, alpha_dep: float = 0.01, alpha_indep: float = 0.1) -> "ThresholdPolicy":
        if not alpha_dep < alpha_indep:
            raise InputError("mixed policy needs alpha_dep < alpha_indep")
        return cls(alpha_dep, alpha_indep)

    @property
    def kind(self) -> str:
        return "single" if self.alpha_dep == self.alpha_indep else "mixed"

    @property
    def label(self) -> str:
        if self.kind == "single":
            return f"single({self.alpha_dep:g})"
        return f"mixed({self.alpha_dep:g},{self.alpha_indep:g})"

    def decide(self, p: float) -> CiVerdict:
        return decide(self, p)


def decide(policy: ThresholdPolicy, p: float) -> CiVerdict:
    if p < policy.alpha_dep:
        return CiVerdict(Decision.DEPENDENT, p)
    if policy.kind == "single" or p > policy.alpha_indep:
        return CiVerdict(Decision.INDEPENDENT, p)
    return CiVerdict(Decision.INCONCLUSIVE, p)


class Dataset:
    """Named columns of real-valued samples (rows are samples)."""

    def __init__(self, columns: Iterable[str], values):
        columns = tuple(columns)
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(columns):
            raise InputError(f"values must be n x {len(columns)}, got shape {values.shape}")
        if len(set(columns)) != len(columns):
            raise InputError("column names must be unique")
        if not np.all(np.isfinite(values)):
            raise InputError("dataset contains missing or non-finite values")
        self.columns = columns
        self.values = values
        self._index = {c: i for i, c in enumerate(columns)}
        self._corr = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown column {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._index

    @property
    def corr(self) -> np.ndarray:
        if self._corr is None:
            sd = self.values.std(axis=0)
            flat = [self.columns[i] for i in np.flatnonzero(sd == 0)]
            if flat:
                raise NumericError("constant column", flat)
            self._corr = np.corrcoef(self.values, rowvar=False)
        return self._corr

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ParseError("empty file", str(path), 1) from None
            rows = []
            for lineno, row in enumerate(reader, 2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(row)}", str(path), lineno)
                try:
                    rows.append([float(c) for c in row])
                except ValueError as e:
                    raise ParseError(str(e), str(path), lineno) from None
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", str(path), 1)
        return cls(header, np.array(rows, dtype=float).reshape(len(rows), len(header)))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])


def oracle_ci(dag: Dag, q: CiQuery) -> CiVerdict:
    indep = d_separated(dag, {q.a}, {q.b}, q.cond)
    return CiVerdict(Decision.INDEPENDENT if indep else Decision.DEPENDENT)


def partial_correlation(data: Dataset, q: CiQuery) -> float:
    a, b = sorted((q.a, q.b), key=data.index)
    cond = sorted(q.cond, key=data.index)
    idx = [data.index(a), data.index(b)] + [data.index(c) for c in cond]
    sub = data.corr[np.ix_(idx, idx)]
    if not cond:
        return float(sub[0, 1])
    if np.linalg.eigvalsh(sub)[0] < MIN_EIGENVALUE:
        raise NumericError("singular correlation submatrix", [a, b, *cond])
    try:
        prec = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        prec = np.linalg.pinv(sub)
    return float(-prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1]))


def fisher_z_statistic(data: Dataset, q: CiQuery) -> float:
    dof = data.n - len(q.cond) - 3
    if dof <= 0:
        raise InputError(f"need more than {len(q.cond) + 3} samples for {q}, have {data.n}")
    r = partial_correlation(data, q)
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    return math.sqrt(dof) * abs(math.atanh(r))


def fisher_z(data: Dataset, q: CiQuery) -> float:
    """Two-sided p-value for zero partial correlation via Fisher's z-transform."""
    return math.erfc(fisher_z_statistic(data, q) / math.sqrt(2))


class OracleCI:
    """Exact answers from d-separation in a known DAG."""

    def __init__(self, dag: Dag):
        self.dag = dag
        self.variables = tuple(dag.nodes)

    def test(self, q: CiQuery) -> CiVerdict:
        return oracle_ci(self.dag, q)

    def describe(self) -> str:
        return "oracle"


class FisherZCI:
    """Fisher-z test on a dataset, decided by a threshold policy.

    ``pvalues`` may be a dict shared between backends over the same data
    (e.g. two policies), so each test statistic is computed once.
    """

    def __init__(self, data: Dataset, policy: ThresholdPolicy, pvalues: Optional[dict] = None):
        self.data = data
        self.policy = policy
        self.variables = tuple(data.columns)
        self.pvalues = {} if pvalues is None else pvalues

    def pvalue(self, q: CiQuery) -> float:
        key = q.key()
        p = self.pvalues.get(key)
        if p is None:
            p = max(fisher_z(self.data, q), P_FLOOR)
            self.pvalues[key] = p
        return p

    def test(self, q: CiQuery) -> CiVerdict:
        return decide(self.policy, self.pvalue(q))

    def describe(self) -> str:
        return f"fisher-z {self.policy.label}"


class CachedCI:
    """Memoising wrapper over any backend, keyed on the canonical query form.

    Counts hits and misses; writes one trace line per executed query when
    ``trace`` (a text stream) is given.
    """

    def __init__(self, backend, trace=None):
        self.backend = backend
        self.variables = backend.variables
        self.trace = trace
        self._memo: dict = {}
        self.hits = 0
        self.misses = 0

    def test(self, q: CiQuery) -> CiVerdict:
        key = q.key()
        verdict = self._memo.get(key)
        if verdict is not None:
            self.hits += 1
            return verdict
        verdict = self.backend.test(q)
        self._memo[key] = verdict
        self.misses += 1
        if self.trace is not None:
            p = "NA" if verdict.p_value is None else f"{verdict.p_value:.6g}"
            self.trace.write(f"{q} p={p} verdict={verdict.decision.short}\n")
        return verdict

    def describe(self) -> str:
        return self.backend.describe()

    @property
    def queries(self) -> int:
        return self.hits + self.misses


def cached_ci(source, q: CiQuery) -> CiVerdict:
    """Answer ``q`` through ``source``'s cache (``source`` must be a ``CachedCI``)."""
    return source.test(q)
