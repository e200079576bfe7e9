"""The worked example graphs shipped with the package."""

from importlib import resources

from .graphio import GraphFile, parse_graph

FIXTURES = ("latent_witness", "precision_pair", "build_chain", "combine_only", "nonminimal_z1")


def fixture_path(name: str):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return resources.files("adjset") / "data" / f"{name}.txt"


def load_fixture(name: str) -> GraphFile:
    path = fixture_path(name)
    return parse_graph(path.read_text(), path=name)
