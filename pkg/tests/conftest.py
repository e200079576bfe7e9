import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from adjset.fixtures import FIXTURES, load_fixture  # noqa: E402
from adjset.graph import Dag  # noqa: E402


@pytest.fixture(scope="session")
def graphs():
    return {name: load_fixture(name) for name in FIXTURES}


@st.composite
def small_dags(draw, min_nodes=2, max_nodes=7, allow_latent=True):
    """Random DAG: nodes in topological order, each forward edge included at random."""
    n = draw(st.integers(min_nodes, max_nodes))
    names = [f"V{i}" for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [(names[i], names[j]) for (i, j), keep in zip(pairs, chosen) if keep]
    perm = draw(st.permutations(names))
    latent = []
    if allow_latent:
        latent = [v for v in names if draw(st.booleans()) and draw(st.booleans())]
    return Dag(perm, edges, latent)


@st.composite
def dsep_queries(draw, dag):
    nodes = list(dag.nodes)
    x = draw(st.sampled_from(nodes))
    y = draw(st.sampled_from([n for n in nodes if n != x]))
    rest = [n for n in nodes if n not in (x, y)]
    z = draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    return {x}, {y}, set(z)
