"""Edge-list text format.

::

    # nodes: W Z X Y U        (optional; fixes canonical order, declares isolated nodes)
    # latent: U
    # tiers: [W Z] [X] [Y]
    U -> X
    X -> Y weight=0.5         (weights only in model files)
    # variance: X=1.0 Y=1.0   (model files only)

Any other ``#`` line is a comment.  A line holding a single identifier
declares an isolated node.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import CycleError, InputError, ParseError
from .graph import Dag, TierKnowledge

_EDGE = re.compile(r"^(\S+)\s*->\s*(\S+)(?:\s+weight\s*=\s*(\S+))?$")
_DIRECTIVE = re.compile(r"^#\s*(nodes|latent|tiers|variance)\s*:(.*)$")
_TIERS = re.compile(r"\[([^\[\]]*)\]")
_NAME = re.compile(r"^[^\s\[\]#=]+$")


@dataclass
class GraphFile:
    dag: Dag
    tiers: Optional[TierKnowledge] = None
    weights: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)


def _parse_tiers(body: str, path, lineno) -> TierKnowledge:
    groups = _TIERS.findall(body)
    rest = _TIERS.sub("", body).strip()
    if rest or not groups:
        raise ParseError("tiers must look like '[A B] [C] [D]'", path, lineno)
    try:
        return TierKnowledge(g.split() for g in groups)
    except InputError as e:
        raise ParseError(str(e), path, lineno) from None


def _float(text, what, path, lineno) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", path, lineno) from None


def parse_graph(text: str, path=None) -> GraphFile:
    order: dict = {}
    latent: list = []
    tiers = None
    edges: list = []
    edge_lines: dict = {}
    weights: dict = {}
    variances: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        directive = _DIRECTIVE.match(line)
        if directive:
            key, body = directive.group(1), directive.group(2).strip()
            if key == "nodes":
                for n in body.split():
                    order.setdefault(n)
            elif key == "latent":
                latent.extend(body.split())
            elif key == "tiers":
                if tiers is not None:
                    raise ParseError("tiers declared twice", path, lineno)
                tiers = _parse_tiers(body, path, lineno)
            else:
                for item in body.split():
                    name, eq, value = item.partition("=")
                    if not eq:
                        raise ParseError(f"variance entry {item!r} must be NAME=VALUE", path, lineno)
                    v = _float(value, "variance", path, lineno)
                    if not v > 0:
                        raise ParseError(f"variance of {name} must be positive", path, lineno)
                    variances[name] = v
            continue
        if line.startswith("#"):
            continue
        edge = _EDGE.match(line)
        if edge:
            a, b, w = edge.groups()
            if (a, b) in edge_lines:
                raise ParseError(f"duplicate edge {a} -> {b} (first on line {edge_lines[a, b]})", path, lineno)
            order.setdefault(a)
            order.setdefault(b)
            edges.append((a, b))
            edge_lines[a, b] = lineno
            if w is not None:
                weights[a, b] = _float(w, "weight", path, lineno)
            continue
        if _NAME.match(line):
            order.setdefault(line)
            continue
        raise ParseError(f"cannot parse {line!r}", path, lineno)
    for n in latent:
        if n not in order:
            raise ParseError(f"latent node {n!r} does not appear in the graph", path)
    try:
        dag = Dag(order, edges, latent)
    except CycleError as e:
        closing = max(edge_lines[a, b] for a, b in zip(e.cycle, e.cycle[1:]))
        raise ParseError(str(e), path, closing) from None
    except InputError as e:
        raise ParseError(str(e), path) from None
    if tiers is not None:
        unknown = tiers.nodes - set(dag.nodes)
        if unknown:
            raise ParseError(f"tiers mention unknown node(s) {sorted(unknown)}", path)
    for name in variances:
        if name not in dag:
            raise ParseError(f"variance given for unknown node {name!r}", path)
    return GraphFile(dag, tiers, weights, variances)


def load_graph(path) -> GraphFile:
    path = Path(path)
    return parse_graph(path.read_text(), path=str(path))


def parse_tiers_document(text: str, path=None) -> TierKnowledge:
    """Read tier knowledge from a standalone ``tiers: [...] [...]`` document or a graph file."""
    found = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^#?\s*tiers\s*:(.*)$", line)
        if m:
            if found is not None:
                raise ParseError("tiers declared twice", path, lineno)
            found = _parse_tiers(m.group(1).strip(), path, lineno)
    if found is None:
        raise ParseError("no tiers declaration found", path)
    return found


def load_tiers(path) -> TierKnowledge:
    path = Path(path)
    return parse_tiers_document(path.read_text(), path=str(path))


def _fmt_float(v: float) -> str:
    return repr(float(v))


def format_graph(dag: Dag, tiers: Optional[TierKnowledge] = None, weights=None, variances=None) -> str:
    lines = ["# nodes: " + " ".join(dag.nodes)]
    if dag.latent:
        lines.append("# latent: " + " ".join(dag.ordered(dag.latent)))
    if tiers is not None:
        lines.append("# tiers: " + " ".join("[" + " ".join(dag.ordered(t)) + "]" for t in tiers.tiers))
    for a, b in dag.edges:
        if weights:
            lines.append(f"{a} -> {b} weight={_fmt_float(weights[a, b])}")
        else:
            lines.append(f"{a} -> {b}")
    if variances:
        lines.append("# variance: " + " ".join(f"{n}={_fmt_float(variances[n])}" for n in dag.nodes if n in variances))
    return "\n".join(lines) + "\n"
