"""Discovery of adjustment sets from conditional in/dependence statements.

Every rule is written purely against a CI backend: any object with a
``variables`` sequence (fixing canonical order) and a ``test(CiQuery)``
method returning a ``CiVerdict``.  An inconclusive verdict satisfies
neither a dependence nor an independence requirement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .citest import CiQuery, CiVerdict, Decision
from .errors import InputError, ResourceError
from .graph import TierKnowledge, as_nodeset
from .subsets import canonical_subsets

ENTNER = "entner"
BUILD = "build"
COMBINE = "combine"
C_EQUIVALENCE = "c_equivalence"

PRECISION = "precision"
OVERADJUSTMENT = "overadjustment"
UNCLASSIFIED = "unclassified"

DEFAULT_EXPANSION_CAP = 20


@dataclass(frozen=True)
class Witness:
    treatment: str
    node: str
    conditioning: frozenset


@dataclass(frozen=True)
class AdjustmentCertificate:
    treatments: tuple
    outcome: str
    adjustment_set: frozenset
    rule: str
    witnesses: tuple = ()
    evidence: tuple = ()
    # per-treatment minimal sets, only for the combining rule
    components: tuple = ()
    source: Optional[frozenset] = None

    def __post_init__(self):
        if self.adjustment_set & (set(self.treatments) | {self.outcome}):
            raise InputError("adjustment set overlaps treatments or outcome")
        # a witness may end up in the combined set via another treatment's component
        if any(w.node in w.conditioning for w in self.witnesses):
            raise InputError("a witness lies inside its own conditioning set")
        if not self.evidence:
            raise InputError("certificate without evidence")

    def to_dict(self) -> dict:
        d = {
            "rule": self.rule,
            "treatments": list(self.treatments),
            "outcome": self.outcome,
            "adjustment_set": sorted(self.adjustment_set),
            "witnesses": [
                {"treatment": w.treatment, "witness": w.node, "conditioning": sorted(w.conditioning)}
                for w in self.witnesses
            ],
            "evidence": [
                {
                    "a": q.a,
                    "b": q.b,
                    "cond": sorted(q.cond),
                    "decision": v.decision.value,
                    "p_value": v.p_value,
                }
                for q, v in self.evidence
            ],
        }
        if self.components:
            d["components"] = [sorted(c) for c in self.components]
        if self.source is not None:
            d["equivalent_to"] = sorted(self.source)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdjustmentCertificate":
        return cls(
            treatments=tuple(d["treatments"]),
            outcome=d["outcome"],
            adjustment_set=frozenset(d["adjustment_set"]),
            rule=d["rule"],
            witnesses=tuple(
                Witness(w["treatment"], w["witness"], frozenset(w["conditioning"])) for w in d["witnesses"]
            ),
            evidence=tuple(
                (CiQuery(e["a"], e["b"], frozenset(e["cond"])), CiVerdict(Decision(e["decision"]), e["p_value"]))
                for e in d["evidence"]
            ),
            components=tuple(frozenset(c) for c in d.get("components", ())),
            source=frozenset(d["equivalent_to"]) if "equivalent_to" in d else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class SearchConfig:
    """Search bounds.  ``max_cond_size=None`` means exhaustive."""

    max_cond_size: Optional[int] = None
    stop_at_first: bool = True
    expansion_cap: int = DEFAULT_EXPANSION_CAP

    def __post_init__(self):
        if self.max_cond_size is not None and self.max_cond_size < 0:
            raise InputError("max_cond_size must be non-negative")


DEFAULT_CONFIG = SearchConfig()


# -- CI helpers ----------------------------------------------------------------


class _Log(list):
    """Evidence collected while checking one candidate."""


def _ask(ci, a, b, cond, want: Decision, log: Optional[list]) -> bool:
    q = CiQuery(a, b, frozenset(cond))
    v = ci.test(q)
    if log is not None:
        log.append((q, v))
    return v.decision is want


def _dep(ci, a, b, cond, log=None) -> bool:
    return _ask(ci, a, b, cond, Decision.DEPENDENT, log)


def _indep(ci, a, b, cond, log=None) -> bool:
    return _ask(ci, a, b, cond, Decision.INDEPENDENT, log)


def _indep_sets(ci, left, right, cond, log=None) -> bool:
    """Set independence, decomposed into pairwise queries (vacuous when a side is empty)."""
    cond = frozenset(cond)
    for a in _ordered(ci, left):
        for b in _ordered(ci, right):
            if not _indep(ci, a, b, cond, log):
                return False
    return True


def _ordered(ci, nodes) -> list:
    order = {v: i for i, v in enumerate(ci.variables)}
    try:
        return sorted(nodes, key=order.__getitem__)
    except KeyError as e:
        raise InputError(f"unknown variable {e.args[0]!r}") from None


def _check_roles(ci, pool, xs, y, tiers: Optional[TierKnowledge]):
    known = set(ci.variables)
    for n in [*pool, *xs, y]:
        if n not in known:
            raise InputError(f"unknown variable {n!r}")
    if len(set(xs)) != len(xs):
        raise InputError("treatments must be distinct")
    if not xs:
        raise InputError("at least one treatment is required")
    if set(pool) & set(xs) or y in pool or y in xs:
        raise InputError("pool, treatments and outcome must be pairwise disjoint")
    if tiers is not None:
        if not tiers.precedes(pool, xs):
            raise InputError("tier knowledge does not place the pool before the treatments")
        if not tiers.precedes(xs, {y}):
            raise InputError("tier knowledge does not place the treatments before the outcome")
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if not tiers.precedes({xs[i]}, {xs[j]}, strict=False):
                    raise InputError(f"treatment order {xs[i]} < {xs[j]} contradicts the tiers")


# -- R1 (single treatment) -----------------------------------------------------


def iter_entner(ci, pool, x: str, y: str, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Iterator[AdjustmentCertificate]:
    """All certificates from the single-treatment rule, witness-major canonical order.

    For a witness ``W`` and ``Z`` drawn from the rest of the pool, the pair
    ``W dep Y | Z`` and ``W indep Y | Z + X`` certifies ``Z``.
    """
    pool = as_nodeset(pool)
    _check_roles(ci, pool, [x], y, tiers)
    ordered = _ordered(ci, pool)
    for w in ordered:
        rest = [v for v in ordered if v != w]
        for z in canonical_subsets(rest, cfg.max_cond_size):
            z = frozenset(z)
            log = _Log()
            if _dep(ci, w, y, z, log) and _indep(ci, w, y, z | {x}, log):
                yield AdjustmentCertificate((x,), y, z, ENTNER, (Witness(x, w, z),), tuple(log))


def r1_entner(ci, pool, x: str, y: str, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Optional[AdjustmentCertificate]:
    return next(iter_entner(ci, pool, x, y, cfg, tiers), None)


# -- building up over ordered treatments ---------------------------------------


def _assign_distinct(candidates: Sequence[list], used=()) -> Optional[list]:
    """First (canonical) choice of pairwise-distinct witnesses, one per treatment."""
    if not candidates:
        return []
    for w in candidates[0]:
        if w in used:
            continue
        rest = _assign_distinct(candidates[1:], (*used, w))
        if rest is not None:
            return [w, *rest]
    return None


def _all_distinct(candidates: Sequence[list], used=()) -> Iterator[list]:
    if not candidates:
        yield []
        return
    for w in candidates[0]:
        if w not in used:
            for rest in _all_distinct(candidates[1:], (*used, w)):
                yield [w, *rest]


def iter_build(ci, pool, xs: Sequence[str], y: str, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Iterator[AdjustmentCertificate]:
    """Certificates for ordered treatments ``xs`` sharing one adjustment set.

    For each ``Z`` (canonical order) the i-th treatment needs a witness
    ``W_i`` outside ``Z`` with ``W_i dep Y | Z + X_1..X_{i-1}`` and
    ``W_i indep Y | Z + X_1..X_i``; witnesses are pairwise distinct.
    """
    pool = as_nodeset(pool)
    xs = list(xs)
    _check_roles(ci, pool, xs, y, tiers)
    ordered = _ordered(ci, pool)
    for z in canonical_subsets(ordered, cfg.max_cond_size):
        z = frozenset(z)
        rest = [v for v in ordered if v not in z]
        if len(rest) < len(xs):
            continue
        candidates = []
        for i, x in enumerate(xs):
            before = z | set(xs[:i])
            ok = [w for w in rest if _dep(ci, w, y, before) and _indep(ci, w, y, before | {x})]
            if not ok:
                break
            candidates.append(ok)
        else:
            assignments = _all_distinct(candidates)
            if cfg.stop_at_first:
                first = _assign_distinct(candidates)
                assignments = iter([first] if first is not None else [])
            for chosen in assignments:
                log = _Log()
                witnesses = []
                for i, (x, w) in enumerate(zip(xs, chosen)):
                    before = z | set(xs[:i])
                    _dep(ci, w, y, before, log)
                    _indep(ci, w, y, before | {x}, log)
                    witnesses.append(Witness(x, w, frozenset(before)))
                yield AdjustmentCertificate(tuple(xs), y, z, BUILD, tuple(witnesses), tuple(log))


def r1_build(ci, pool, xs, y, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Optional[AdjustmentCertificate]:
    return next(iter_build(ci, pool, xs, y, cfg, tiers), None)


# -- minimality ----------------------------------------------------------------


def _elementwise(ci, z: frozenset, x: str, y: str, log=None) -> bool:
    for v in _ordered(ci, z):
        others = z - {v}
        if not _dep(ci, x, v, others, log):
            return False
        if not _dep(ci, y, v, others | {x}, log):
            return False
    return True


def is_minimal(ci, t, x: str, y: str, log=None) -> bool:
    """Elementwise minimality of the adjustment set ``t`` relative to ``(x, y)``.

    True iff every ``T`` in ``t`` satisfies ``X dep T | t - T`` and
    ``Y dep T | (t - T) + X``.  Assumes ``t`` is an adjustment set whose
    members precede ``x``.
    """
    return _elementwise(ci, as_nodeset(t), x, y, log)


def reduce_to_minimal(ci, t, x: str, y: str, cfg: SearchConfig = DEFAULT_CONFIG, log=None) -> Optional[frozenset]:
    """A minimal adjustment set inside the adjustment set ``t``.

    Returns ``t`` when it is already minimal, otherwise the first proper
    subset (canonical order) that is elementwise minimal and makes the rest
    of ``t`` ignorable (``Y indep t | Z + X`` or ``X indep t | Z``).
    Returns ``None`` when no subset qualifies.
    """
    t = as_nodeset(t)
    trial = _Log()
    if is_minimal(ci, t, x, y, trial):
        if log is not None:
            log.extend(trial)
        return t
    ordered = _ordered(ci, t)
    top = len(t) - 1
    if cfg.max_cond_size is not None:
        top = min(top, cfg.max_cond_size)
    for z in canonical_subsets(ordered, top):
        z = frozenset(z)
        trial = _Log()
        if not _elementwise(ci, z, x, y, trial):
            continue
        drop = t - z
        if _indep_sets(ci, {y}, drop, z | {x}, trial) or _indep_sets(ci, {x}, drop, z, trial):
            if log is not None:
                log.extend(trial)
            return z
    return None


# -- combining per-treatment sets ----------------------------------------------


def _combine_step(ci, ordered_pool, xs, y, i, used, cfg):
    """Yield (witness, T_i, Z_i, evidence) for treatment i in canonical order."""
    x = xs[i]
    earlier = list(xs[:i])
    for w in ordered_pool:
        if w in used:
            continue
        items = _ordered(ci, [v for v in ordered_pool if v != w] + earlier)
        for t in canonical_subsets(items, cfg.max_cond_size):
            t = frozenset(t)
            log = _Log()
            if not (_dep(ci, w, y, t, log) and _indep(ci, w, y, t | {x}, log)):
                continue
            z = reduce_to_minimal(ci, t, x, y, cfg, log)
            if z is None:
                continue
            yield w, t, z, log
            break  # later T for the same witness cannot help later treatments


def _combine_search(ci, ordered_pool, xs, y, i, used, cfg):
    if i == len(xs):
        yield []
        return
    for w, t, z, log in _combine_step(ci, ordered_pool, xs, y, i, used, cfg):
        for rest in _combine_search(ci, ordered_pool, xs, y, i + 1, used | {w}, cfg):
            yield [(w, t, z, log), *rest]


def iter_combine(ci, pool, xs: Sequence[str], y: str, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Iterator[AdjustmentCertificate]:
    """Certificates from combining minimal per-treatment adjustment sets.

    Treatment ``X_i`` gets a witness ``W_i`` (pairwise distinct) and a set
    ``T_i`` drawn from the pool minus ``W_i`` plus the treatments listed
    before ``X_i``, with ``W_i dep Y | T_i`` and ``W_i indep Y | T_i + X_i``.
    Each ``T_i`` is reduced to a minimal ``Z_i``; the certified set is the
    union of the ``Z_i`` minus the treatments.
    """
    pool = as_nodeset(pool)
    xs = list(xs)
    _check_roles(ci, pool, xs, y, tiers)
    ordered = _ordered(ci, pool)
    for parts in _combine_search(ci, ordered, xs, y, 0, frozenset(), cfg):
        adjustment = frozenset().union(*(z for _, _, z, _ in parts)) - set(xs)
        witnesses = tuple(Witness(x, w, t) for x, (w, t, _, _) in zip(xs, parts))
        evidence = tuple(e for *_, log in parts for e in log)
        components = tuple(z for _, _, z, _ in parts)
        yield AdjustmentCertificate(tuple(xs), y, adjustment, COMBINE, witnesses, evidence, components)


def r1_combine(ci, pool, xs, y, cfg: SearchConfig = DEFAULT_CONFIG, tiers=None) -> Optional[AdjustmentCertificate]:
    return next(iter_combine(ci, pool, xs, y, cfg, tiers), None)


# -- c-equivalence and efficiency ----------------------------------------------


def c_equivalent(ci, x, y: str, z, t, log=None) -> bool:
    """Sufficient test that ``z`` and ``t`` give the same adjustment formula.

    Either ``X indep (Z-T) | T`` and ``Y indep (T-Z) | Z + X``, or
    ``X indep (T-Z) | Z`` and ``Y indep (Z-T) | T + X``.
    """
    x, z, t = as_nodeset(x), as_nodeset(z), as_nodeset(t)
    if x & (z | t) or y in x or y in z | t:
        raise InputError("treatments, outcome and candidate sets must be disjoint")
    only_z, only_t = z - t, t - z
    trial = _Log()
    if _indep_sets(ci, x, only_z, t, trial) and _indep_sets(ci, {y}, only_t, z | x, trial):
        if log is not None:
            log.extend(trial)
        return True
    trial = _Log()
    if _indep_sets(ci, x, only_t, z, trial) and _indep_sets(ci, {y}, only_z, t | x, trial):
        if log is not None:
            log.extend(trial)
        return True
    return False


def expand_c_equivalents(ci, x, y: str, z, pool, cfg: SearchConfig = DEFAULT_CONFIG) -> list:
    """Every subset of ``pool`` c-equivalent to the adjustment set ``z``, canonical order (``z`` included)."""
    return [s for s, _ in _expand(ci, x, y, z, pool, cfg)]


def _expand(ci, x, y, z, pool, cfg):
    z, pool = as_nodeset(z), as_nodeset(pool)
    if len(pool) > cfg.expansion_cap:
        raise ResourceError(f"pool of {len(pool)} variables exceeds expansion cap {cfg.expansion_cap}")
    ordered = _ordered(ci, pool)
    found = []
    seen_z = False
    for t in canonical_subsets(ordered, cfg.max_cond_size):
        t = frozenset(t)
        log = _Log()
        if t == z or c_equivalent(ci, x, y, z, t, log):
            found.append((t, tuple(log)))
            seen_z |= t == z
    if not seen_z:
        found.append((z, ()))
        rank = {v: i for i, v in enumerate(ci.variables)}
        found.sort(key=lambda item: (len(item[0]), sorted(rank[v] for v in item[0])))
    return found


def expand_certificate(ci, cert: AdjustmentCertificate, pool, cfg: SearchConfig = DEFAULT_CONFIG) -> list:
    """Certificates for all sets c-equivalent to ``cert.adjustment_set`` (excluding itself)."""
    out = []
    for t, log in _expand(ci, cert.treatments, cert.outcome, cert.adjustment_set, pool, cfg):
        if t == cert.adjustment_set:
            continue
        out.append(
            AdjustmentCertificate(
                cert.treatments, cert.outcome, t, C_EQUIVALENCE, (), log + cert.evidence, source=cert.adjustment_set
            )
        )
    return out


def classify_details(ci, x, y: str, z, t, log=None) -> tuple:
    """``(label, both)`` where ``both`` flags that both criteria held."""
    x, z, t = as_nodeset(x), as_nodeset(z), as_nodeset(t)
    if z & t:
        raise InputError("z and t must be disjoint")
    precision = _indep_sets(ci, x, t, z, log)
    over = _indep_sets(ci, {y}, t, z | x, log)
    if precision:
        return PRECISION, over
    if over:
        return OVERADJUSTMENT, False
    return UNCLASSIFIED, False


def classify_variable(ci, x, y: str, z, t) -> str:
    """Label ``t`` relative to the adjustment set ``z``.

    ``precision`` if ``X indep T | Z``, ``overadjustment`` if
    ``Y indep T | Z + X``; precision wins when both hold.
    """
    return classify_details(ci, x, y, z, t)[0]


def replay(ci, cert: AdjustmentCertificate) -> list:
    """Evidence entries whose verdict differs from ``ci``'s answer."""
    wrong = []
    for q, v in cert.evidence:
        got = ci.test(q)
        if got.decision is not v.decision:
            wrong.append((q, v, got))
    return wrong
