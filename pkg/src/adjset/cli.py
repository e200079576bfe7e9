"""Command-line front end: ``adjset discover | simulate | oracle``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import ExperimentConfig, precision, records_to_csv, run_experiment
from .citest import CachedCI, Dataset, FisherZCI, ThresholdPolicy
from .errors import AdjsetError, InputError, ParseError
from .graph import d_separated, enumerate_adjustment_sets, find_open_path, is_adjustment_set
from .graphio import load_graph, load_tiers
from .rules import (
    BUILD,
    COMBINE,
    ENTNER,
    SearchConfig,
    classify_details,
    expand_certificate,
    r1_build,
    r1_combine,
    r1_entner,
)
from .sem import GenConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("adjset")

OUT_ENV = "ADJSET_OUT_DIR"
EXIT_INPUT = 2
EXIT_RUNTIME = 3


# -- manifests -----------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: Sequence[str], config: dict, inputs: Sequence, seed, outputs: Sequence[str]):
    manifest = {
        "tool": "adjset",
        "version": __version__,
        "command": list(command),
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {name: sha256(out / name) for name in outputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _out_dir(arg: Optional[str], default: str) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(nodes) -> str:
    return "{" + ", ".join(sorted(nodes)) + "}"


def _policy(args) -> ThresholdPolicy:
    if args.alpha_dep is not None or args.alpha_indep is not None:
        if args.alpha_dep is None or args.alpha_indep is None:
            raise InputError("--alpha-dep and --alpha-indep must be given together")
        return ThresholdPolicy.mixed(args.alpha_dep, args.alpha_indep)
    return ThresholdPolicy.single(0.05 if args.alpha is None else args.alpha)


# -- discover ------------------------------------------------------------------


def cmd_discover(args) -> int:
    data = Dataset.from_csv(args.data)
    tiers = load_tiers(args.knowledge)
    xs, y = list(args.x), args.y
    for v in [*xs, y]:
        if v not in data:
            raise ParseError(f"column {v!r} not found in header", args.data, 1)
        if v not in tiers.nodes:
            raise ParseError(f"variable {v!r} is not placed in any tier", args.knowledge)
    if args.method == ENTNER and len(xs) != 1:
        raise InputError("--method entner takes exactly one treatment")
    if args.pool:
        pool = set(args.pool)
        missing = sorted(v for v in pool if v not in data)
        if missing:
            raise ParseError(f"pool column(s) {missing} not found in header", args.data, 1)
    else:
        # every measured variable placed strictly before all treatments
        pool = {v for v in data.columns if v in tiers.nodes and all(tiers.precedes(v, x) for x in xs)}
    policy = _policy(args)
    cfg = SearchConfig(max_cond_size=args.max_cond_size)
    out = _out_dir(args.out, "adjset-discover")
    trace = (out / "trace.log").open("w") if args.trace else None
    try:
        ci = CachedCI(FisherZCI(data, policy), trace=trace)
        if args.method == ENTNER:
            cert = r1_entner(ci, pool, xs[0], y, cfg, tiers=tiers)
        else:
            cert = {BUILD: r1_build, COMBINE: r1_combine}[args.method](ci, pool, xs, y, cfg, tiers=tiers)
        certs = [] if cert is None else [cert]
        if cert is not None and (args.expand or args.classify):
            extra = expand_certificate(ci, cert, pool, cfg)
            if args.expand:
                certs.extend(extra)
        else:
            extra = []
    finally:
        if trace is not None:
            trace.close()
    records = [c.to_dict() for c in certs]
    if args.classify and cert is not None:
        base = cert.adjustment_set
        for rec in records:
            rec.setdefault("annotations", [])
        labels = []
        for other in extra:
            added = other.adjustment_set - base
            if not added or not base <= other.adjustment_set:
                continue
            label, both = classify_details(ci, set(xs), y, base, added)
            labels.append({"base": sorted(base), "added": sorted(added), "label": label, "both_criteria": both})
        records[0]["annotations"] = labels
    (out / "certificates.json").write_text(json.dumps(records, indent=2) + "\n")
    lines = [
        f"method: {args.method}",
        f"policy: {policy.label}",
        f"treatments: {', '.join(xs)}; outcome: {y}",
        f"pool: {_fmt(pool)}",
        f"ci queries: {ci.queries} ({ci.misses} tests, {ci.hits} cache hits)",
    ]
    if cert is None:
        lines.append("result: no adjustment set found")
    else:
        lines.append(f"result: adjustment set {_fmt(cert.adjustment_set)}")
        for w in cert.witnesses:
            lines.append(f"  witness for {w.treatment}: {w.node} given {_fmt(w.conditioning)}")
        for c in certs[1:]:
            lines.append(f"  c-equivalent: {_fmt(c.adjustment_set)}")
        if args.classify and cert is not None:
            for a in records[0]["annotations"]:
                lines.append(f"  adding {_fmt(a['added'])}: {a['label']}")
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    outputs = ["certificates.json", "summary.txt"] + (["trace.log"] if args.trace else [])
    config = {
        "method": args.method,
        "treatments": xs,
        "outcome": y,
        "pool": sorted(pool),
        "policy": asdict(policy),
        "search": asdict(cfg),
        "expand": args.expand,
        "classify": args.classify,
    }
    write_manifest(out, _argv(args), config, [args.data, args.knowledge], args.seed, outputs)
    sys.stdout.write(summary)
    return 0


# -- simulate ------------------------------------------------------------------

_EXPERIMENT_KEYS = {"trials", "sizes", "methods", "workers", "oracle"}
_SEARCH_KEYS = {"max_cond_size", "expansion_cap"}


def _config_error(path, msg):
    return ParseError(msg, str(path))


def load_experiment_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read a TOML experiment document with [experiment], [generator], [search] and [[policies]]."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise _config_error(path, f"invalid TOML: {e}") from None
    unknown = set(doc) - {"experiment", "generator", "search", "policies"}
    if unknown:
        raise _config_error(path, f"unknown section(s) {sorted(unknown)}")
    exp = doc.get("experiment", {})
    gen = dict(doc.get("generator", {}))
    search = doc.get("search", {})
    for name, table, allowed in (
        ("experiment", exp, _EXPERIMENT_KEYS),
        ("generator", gen, set(GenConfig.__dataclass_fields__)),
        ("search", search, _SEARCH_KEYS),
    ):
        bad = set(table) - allowed
        if bad:
            raise _config_error(path, f"unknown key(s) {sorted(bad)} in [{name}]")
    if seed is not None:
        gen["seed"] = seed
    policies = []
    for i, p in enumerate(doc.get("policies", [{"alpha": 0.05}, {"alpha_dep": 0.01, "alpha_indep": 0.1}])):
        if set(p) == {"alpha"}:
            policies.append(ThresholdPolicy.single(p["alpha"]))
        elif set(p) == {"alpha_dep", "alpha_indep"}:
            policies.append(ThresholdPolicy.mixed(p["alpha_dep"], p["alpha_indep"]))
        else:
            raise _config_error(path, f"policy #{i + 1} needs either alpha or alpha_dep + alpha_indep")
    if "trials" in exp and (not isinstance(exp["trials"], int) or exp["trials"] < 1):
        raise _config_error(path, f"[experiment] trials must be a positive integer, got {exp['trials']!r}")
    try:
        return ExperimentConfig(
            gen=GenConfig(**gen),
            trials=exp.get("trials", 40),
            sizes=tuple(exp.get("sizes", (500, 1000, 5000))),
            policies=tuple(policies),
            methods=tuple(exp.get("methods", (BUILD, COMBINE))),
            oracle=bool(exp.get("oracle", False)),
            workers=exp.get("workers", 1),
            search=SearchConfig(**search),
        )
    except (InputError, TypeError) as e:
        raise _config_error(path, str(e)) from None


def experiment_snapshot(cfg: ExperimentConfig) -> dict:
    return {
        "trials": cfg.trials,
        "sizes": list(cfg.sizes),
        "methods": list(cfg.methods),
        "oracle": cfg.oracle,
        "workers": cfg.workers,
        "generator": cfg.gen.to_dict(),
        "search": asdict(cfg.search),
        "policies": [asdict(p) for p in cfg.policies],
    }


def cmd_simulate(args) -> int:
    cfg = load_experiment_config(args.config, args.seed)
    if args.workers is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "workers": args.workers})
    out = _out_dir(args.out, "adjset-simulate")
    records = run_experiment(cfg)
    report = precision(records)
    (out / "records.csv").write_text(records_to_csv(records, timings=False))
    timing = ["trial,method,policy,size,queries,seconds"]
    timing += [f"{r.trial},{r.method},{r.policy},{r.size},{r.queries},{r.seconds:.6f}" for r in records]
    (out / "timings.csv").write_text("\n".join(timing) + "\n")
    (out / "report.csv").write_text(report.to_csv())
    (out / "summary.txt").write_text(report.summary())
    errors = sum(r.error is not None for r in records)
    write_manifest(out, _argv(args), experiment_snapshot(cfg), [args.config], cfg.gen.seed,
                   ["records.csv", "report.csv", "summary.txt"])
    sys.stdout.write(report.summary())
    if errors:
        sys.stdout.write(f"{errors} attempt(s) failed; see the error column of records.csv\n")
    return 0


# -- oracle --------------------------------------------------------------------


def cmd_oracle(args) -> int:
    gf = load_graph(args.graph)
    dag = gf.dag
    for v in _mentioned(args):
        if v not in dag:
            raise ParseError(f"unknown node {v!r}", args.graph)
    if args.query == "dsep":
        sep = d_separated(dag, {args.a}, {args.b}, set(args.cond))
        print(f"{args.a} and {args.b} are {'separated' if sep else 'connected'} given {_fmt(args.cond)}")
        if not sep:
            w = find_open_path(dag, {args.a}, {args.b}, set(args.cond))
            print(f"open path: {w}")
    elif args.query == "adjust":
        ok = is_adjustment_set(dag, args.x, args.y, args.z or ())
        print("true" if ok else "false")
    else:
        for s in enumerate_adjustment_sets(dag, args.x, args.y):
            print(_fmt(s))
    return 0


def _mentioned(args):
    if args.query == "dsep":
        return [args.a, args.b, *args.cond]
    return [*args.x, *args.y, *(getattr(args, "z", None) or [])]


# -- entry point ---------------------------------------------------------------


def _argv(args) -> list:
    return getattr(args, "_argv", [])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adjset", description="Find covariate adjustment sets from data and tier knowledge.")
    p.add_argument("--version", action="version", version=f"adjset {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("discover", help="search a CSV dataset for certified adjustment sets")
    d.add_argument("--data", required=True, help="CSV file with a header row")
    d.add_argument("--knowledge", required=True, help="tiers document or graph file with a '# tiers:' line")
    d.add_argument("--x", nargs="+", required=True, help="treatments, in causal order")
    d.add_argument("--y", required=True, help="outcome")
    d.add_argument("--method", choices=[ENTNER, BUILD, COMBINE], default=COMBINE)
    d.add_argument("--pool", nargs="+", help="covariates to search (default: all variables tiered before the treatments)")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="single threshold (default 0.05)")
    g.add_argument("--alpha-dep", type=float, help="mixed policy: dependence when p < ALPHA_DEP")
    d.add_argument("--alpha-indep", type=float, help="mixed policy: independence when p > ALPHA_INDEP")
    d.add_argument("--max-cond-size", type=int, help="cap on conditioning-set size (default: exhaustive)")
    d.add_argument("--expand", action="store_true", help="add every c-equivalent set")
    d.add_argument("--classify", action="store_true", help="label c-equivalent supersets as precision or overadjustment")
    d.add_argument("--trace", action="store_true", help="write one line per executed test to trace.log")
    d.add_argument("--seed", type=int, default=0, help="recorded in the manifest; the search itself is deterministic")
    d.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./adjset-discover)")
    d.set_defaults(func=cmd_discover)

    s = sub.add_parser("simulate", help="run the simulation benchmark from a TOML config")
    s.add_argument("config")
    s.add_argument("--seed", type=int, help="override the generator master seed")
    s.add_argument("--workers", type=int, help="override the worker count")
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./adjset-simulate)")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle", help="exact graph queries on an edge-list file")
    o.add_argument("graph")
    oq = o.add_subparsers(dest="query", required=True)
    ds = oq.add_parser("dsep", help="d-separation: dsep A B -- COND...")
    ds.add_argument("a")
    ds.add_argument("b")
    ds.add_argument("cond", nargs="*")
    ad = oq.add_parser("adjust", help="check the adjustment criterion")
    ad.add_argument("--x", nargs="+", required=True)
    ad.add_argument("--y", nargs="+", required=True)
    ad.add_argument("--z", nargs="*")
    en = oq.add_parser("enumerate", help="list every observed adjustment set")
    en.add_argument("--x", nargs="+", required=True)
    en.add_argument("--y", nargs="+", required=True)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = ["adjset", *argv]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as e:
        print(f"adjset: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as e:
        print(f"adjset: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except AdjsetError as e:
        print(f"adjset: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
