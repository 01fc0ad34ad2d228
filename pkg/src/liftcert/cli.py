"""Command-line surface: certify, dist, experiment, gen.

Exit codes: 0 on success (all checks/bounds pass), 1 when a check fails or a
certified bound is violated, 2 on invalid input.  All file outputs are
written atomically; stderr carries diagnostics only.
"""

from __future__ import annotations

import argparse
import json
import sys
from math import inf, isinf
from pathlib import Path

from . import __version__
from . import io as lio
from .equivalence import class_distance, network_class_distance
from .certify import certify_network
from .lifting import ENTRY_TOL, RANK_RTOL
from .network import TopologyError, haar_topology, single_path_topology
from .recovery import run_experiment

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def _err(msg: str) -> None:
    print(f"liftcert: {msg}", file=sys.stderr)


def _load_json_or_exit(loader, path, kind):
    try:
        return loader(path)
    except FileNotFoundError:
        _err(f"{kind} file not found: {path}")
        raise SystemExit(EXIT_INPUT)
    except json.JSONDecodeError as exc:
        _err(f"{kind} file {path}: invalid JSON at line {exc.lineno}, column {exc.colno}")
        raise SystemExit(EXIT_INPUT)
    except (TopologyError, ValueError, KeyError, TypeError) as exc:
        _err(f"{kind} file {path}: {exc}")
        raise SystemExit(EXIT_INPUT)


def cmd_certify(args) -> int:
    topology = _load_json_or_exit(lio.load_topology, args.topology, "topology")
    inputs = {"topology": {"path": str(args.topology), "sha256": lio.file_sha256(args.topology)}}
    if args.family:
        family = _load_json_or_exit(lio.load_family, args.family, "family")
        inputs["family"] = {"path": str(args.family), "sha256": lio.file_sha256(args.family)}
        if (family.K, family.S) != (topology.K, topology.S):
            _err(f"family is for (K={family.K}, S={family.S}); topology has (K={topology.K}, S={topology.S})")
            return EXIT_INPUT
    elif args.all_supports_size is not None:
        try:
            family = lio.generate_family(topology.K, topology.S, args.all_supports_size)
        except ValueError as exc:
            _err(str(exc))
            return EXIT_INPUT
        inputs["family"] = {"generator": "all_supports", "maxSize": args.all_supports_size}
    else:
        from .tensor import SupportFamily, full_support

        family = SupportFamily((full_support(topology.K, topology.S),))
        inputs["family"] = {"generator": "full"}

    try:
        report = certify_network(
            topology,
            family,
            jobs=args.jobs,
            entry_tol=args.entry_tol,
            rank_rtol=args.rank_tol,
        )
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT

    out_dir = Path(args.out_dir)
    tolerances = {"entryTol": args.entry_tol, "rankRtol": args.rank_tol}
    payload = lio.certificate_to_dict(report, __version__, inputs, tolerances)
    lio.atomic_write_text(out_dir / "certificate.json", lio.canonical_json(payload))
    lio.atomic_write_text(out_dir / "pairs.csv", lio.pairs_csv_text(report))
    if not args.no_plots:
        from .plots import certificate_figure

        certificate_figure(report, out_dir / "certificate.png")
    print(lio.canonical_json(payload), end="")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_dist(args) -> int:
    a = _load_json_or_exit(lio.load_params, args.params_a, "params")
    b = _load_json_or_exit(lio.load_params, args.params_b, "params")
    p = _parse_p_or_exit(args.p)
    try:
        out = {"p": "inf" if isinf(p) else p, "class_distance": class_distance(a, b, p)}
        if args.topology:
            topology = _load_json_or_exit(lio.load_topology, args.topology, "topology")
            out["network_distance"] = network_class_distance(a, b, p, topology)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(lio.canonical_json(out), end="")
    return EXIT_OK


def _parse_p_or_exit(text):
    try:
        return lio._parse_p(text)
    except ValueError as exc:
        _err(str(exc))
        raise SystemExit(EXIT_INPUT)


def cmd_experiment(args) -> int:
    cfg = _load_json_or_exit(lio.load_experiment_config, args.config, "config")
    result = run_experiment(cfg, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    lio.atomic_write_text(out_dir / "results.csv", lio.experiment_csv_text(result))
    summary = dict(result.summary)
    summary["version"] = __version__
    summary["inputs"] = cfg.echo
    lio.atomic_write_text(out_dir / "summary.json", lio.canonical_json(summary))
    if not args.no_plots:
        from .plots import experiment_figures

        experiment_figures(result, out_dir / "figures")
    print(lio.canonical_json(summary), end="")
    return EXIT_OK if result.all_satisfied else EXIT_FAIL


def cmd_gen(args) -> int:
    try:
        if args.kind == "haar":
            topology = haar_topology(args.K, args.N)
        else:
            supports = []
            for chunk in args.supports.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    raise ValueError("empty layer in supports")
                supports.append([int(x) for x in chunk.split(",")])
            topology = single_path_topology(supports, args.N)
    except (TopologyError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    text = lio.dumps_topology(topology)
    if args.output:
        lio.atomic_write_text(args.output, text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liftcert",
        description=(
            "Certify stable parameter recovery of sparse convolutional linear "
            "networks and validate the recovery bounds empirically."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="certify a topology against a support family")
    c.add_argument("topology", help="topology JSON file")
    group = c.add_mutually_exclusive_group()
    group.add_argument("--family", help="support family JSON file")
    group.add_argument(
        "--all-supports-size",
        type=int,
        metavar="SIZE",
        help="generate all per-layer supports of size 1..SIZE (capped)",
    )
    c.add_argument("--out-dir", default="certify-out", help="output directory")
    c.add_argument("--jobs", type=int, default=1, help="parallel workers over support pairs")
    c.add_argument("--entry-tol", type=float, default=ENTRY_TOL,
                   help="tolerance for the 0/1 indicator-product entries")
    c.add_argument("--rank-tol", type=float, default=RANK_RTOL,
                   help="relative singular-value threshold for numerical rank")
    c.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    c.set_defaults(func=cmd_certify)

    d = sub.add_parser("dist", help="distance between two parameter files")
    d.add_argument("params_a", help="first params JSON file")
    d.add_argument("params_b", help="second params JSON file")
    d.add_argument("--p", default="2", help="norm order (>= 1 or 'inf')")
    d.add_argument("--topology", help="topology JSON for the per-path network metric")
    d.set_defaults(func=cmd_dist)

    e = sub.add_parser("experiment", help="run a seeded recovery sweep from a config")
    e.add_argument("config", help="experiment config JSON file")
    e.add_argument("--out-dir", default="experiment-out", help="output directory")
    e.add_argument("--jobs", type=int, default=1, help="parallel workers over trials")
    e.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("gen", help="generate a canonical topology file")
    gsub = g.add_subparsers(dest="kind", required=True)
    gh = gsub.add_parser("haar", help="dilated-pair tree (2**K chains)")
    gh.add_argument("K", type=int, help="depth")
    gh.add_argument("N", type=int, help="signal length (>= 2**(K+1))")
    gh.add_argument("-o", "--output", help="write to file as well as stdout")
    gh.set_defaults(func=cmd_gen, kind="haar")
    gs = gsub.add_parser("single-path", help="one chain; per-layer kernel supports")
    gs.add_argument("N", type=int, help="signal length")
    gs.add_argument(
        "--supports",
        required=True,
        help="semicolon-separated layers of comma-separated 0-based positions, e.g. '0,2;0,1'",
    )
    gs.add_argument("-o", "--output", help="write to file as well as stdout")
    gs.set_defaults(func=cmd_gen, kind="single-path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_INPUT
        return code


if __name__ == "__main__":
    sys.exit(main())
