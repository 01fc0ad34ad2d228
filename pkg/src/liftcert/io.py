"""File formats: topology / family / params / config JSON, CSV tables.

All emitters are canonical (fixed key order, two-space indent, trailing
newline) so parse -> emit round-trips byte-identically, and all writes are
atomic (temp file in the target directory, then rename).  Infinite values
are serialized as the string ``"inf"`` to stay inside strict JSON.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from itertools import combinations, product as iter_product
from math import inf, isinf
from pathlib import Path

import numpy as np

from .certify import CertificationReport
from .network import NetworkTopology, validate_topology
from .recovery import ExperimentConfig, ExperimentResult, TrialRow
from .tensor import ParamTuple, Support, SupportFamily, full_support

__all__ = [
    "load_topology",
    "parse_topology",
    "topology_to_dict",
    "dumps_topology",
    "load_family",
    "parse_family",
    "family_to_dict",
    "generate_family",
    "load_params",
    "load_experiment_config",
    "atomic_write_text",
    "canonical_json",
    "file_sha256",
    "certificate_to_dict",
    "pairs_csv_text",
    "experiment_csv_text",
    "EXPERIMENT_CSV_COLUMNS",
]

FAMILY_GENERATOR_CAP = 10_000

EXPERIMENT_CSV_COLUMNS = [
    "trial",
    "delta",
    "eta",
    "eps",
    "lhs_t3_tensor",
    "rhs_t3_tensor",
    "lhs_t3_dp",
    "rhs_t3_dp",
    "lhs_t7",
    "rhs_t7",
    "precond_t3",
    "precond_t7",
    "satisfied_all",
    "error",
]


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def parse_topology(raw: dict) -> NetworkTopology:
    return validate_topology(raw)


def load_topology(path) -> NetworkTopology:
    return parse_topology(_load_json(path))


def topology_to_dict(t: NetworkTopology) -> dict:
    return {
        "N": t.N,
        "nodes": list(t.nodes),
        "root": t.root,
        "leaves": list(t.leaves),
        "edges": [
            {"from": e.src, "to": e.dst, "support": list(e.support)} for e in t.edges
        ],
    }


def dumps_topology(t: NetworkTopology) -> str:
    return canonical_json(topology_to_dict(t))


def load_family(path) -> SupportFamily:
    return parse_family(_load_json(path))


def parse_family(raw: dict) -> SupportFamily:
    K, S = int(raw["K"]), int(raw["S"])
    members = []
    for sup in raw["supports"]:
        if len(sup) != K:
            raise ValueError(f"support {sup} does not have {K} layers")
        members.append(Support(tuple(tuple(int(i) for i in layer) for layer in sup), S))
    return SupportFamily(tuple(members))


def family_to_dict(family: SupportFamily) -> dict:
    return {
        "K": family.K,
        "S": family.S,
        "supports": [[list(layer) for layer in m.layers] for m in family.members],
    }


def generate_family(K: int, S: int, max_size: int, cap: int = FAMILY_GENERATOR_CAP) -> SupportFamily:
    """All supports whose per-layer slot sets have size 1..max_size.

    Layers vary independently; empty layers are excluded since they make the
    restricted operator degenerate.  Refuses to build more than ``cap``
    members.
    """
    if not 1 <= max_size <= S:
        raise ValueError(f"max support size must be in 1..{S}")
    per_layer = []
    for size in range(1, max_size + 1):
        per_layer.extend(combinations(range(1, S + 1), size))
    total = len(per_layer) ** K
    if total > cap:
        raise ValueError(f"generator would emit {total} supports, above the cap {cap}")
    members = tuple(
        Support(tuple(layers), S) for layers in iter_product(per_layer, repeat=K)
    )
    return SupportFamily(members)


def load_params(path) -> ParamTuple:
    raw = _load_json(path)
    K, S = int(raw["K"]), int(raw["S"])
    factors = [np.asarray(f, dtype=float) for f in raw["factors"]]
    if len(factors) != K or any(f.shape != (S,) for f in factors):
        raise ValueError(f"params file must hold {K} factors of length {S}")
    return ParamTuple(tuple(factors))


def _parse_p(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return inf
        raise ValueError(f"invalid norm order {value!r}")
    p = float(value)
    if not (p >= 1.0 or isinf(p)):
        raise ValueError(f"norm order must be >= 1 or 'inf', got {p}")
    return p


def _resolve_family(spec, base: Path, topology: NetworkTopology) -> tuple[SupportFamily, dict]:
    """Family from a path string or a generator spec object."""
    if isinstance(spec, str):
        path = base / spec if not os.path.isabs(spec) else Path(spec)
        return load_family(path), {"path": str(spec), "sha256": file_sha256(path)}
    if isinstance(spec, dict):
        kind = spec.get("generator")
        if kind == "full":
            fam = SupportFamily((full_support(topology.K, topology.S),))
            return fam, {"generator": "full"}
        if kind == "all_supports":
            max_size = int(spec["maxSize"])
            fam = generate_family(topology.K, topology.S, max_size)
            return fam, {"generator": "all_supports", "maxSize": max_size}
        raise ValueError(f"unknown family generator {kind!r}")
    raise ValueError("family must be a file path or a generator object")


def load_experiment_config(path) -> ExperimentConfig:
    """Parse a sweep configuration, resolving sibling file references."""
    path = Path(path)
    raw = _load_json(path)
    base = path.parent
    topo_ref = raw["topology"]
    topo_path = base / topo_ref if not os.path.isabs(topo_ref) else Path(topo_ref)
    topology = load_topology(topo_path)
    family, family_meta = _resolve_family(raw["family"], base, topology)
    solver = raw.get("solver", {})
    return ExperimentConfig(
        topology=topology,
        family=family,
        delta_grid=tuple(float(d) for d in raw["deltaGrid"]),
        trials=int(raw["trials"]),
        p=_parse_p(raw.get("p", 2)),
        max_iters=int(solver.get("maxIters", 300)),
        tol=float(solver.get("tol", 1e-12)),
        restarts=int(solver.get("restarts", 8)),
        seed=int(raw.get("seed", 0)),
        corrupt=bool(raw.get("corrupt", False)),
        search_support=bool(raw.get("supportSearch", False)),
        echo={
            "topology": {"path": str(topo_ref), "sha256": file_sha256(topo_path)},
            "family": family_meta,
        },
    )


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    if isinf(x):
        return "inf" if x > 0 else "-inf"
    if x != x:
        return "nan"
    return x


def certificate_to_dict(
    report: CertificationReport, version: str, inputs: dict, tolerances: dict
) -> dict:
    """Certificate JSON payload mirroring the certification report."""
    witness = None
    if report.identifiable.witness is not None:
        pair, leaf, position, value = report.identifiable.witness
        witness = {"pair": list(pair), "leaf": leaf, "position": position, "value": value}
    return {
        "version": version,
        "inputs": inputs,
        "tolerances": tolerances,
        "identifiable": {
            "passed": report.identifiable.passed,
            "witness": witness,
            "note": (
                "failure exhibits indistinguishable parameter tuples; "
                "passing is necessary for identifiability, not sufficient"
            ),
        },
        "nsp": {
            "allPass": report.nsp.all_pass,
            "pairPass": list(report.nsp.pair_pass),
            "pairIndeterminate": list(report.nsp.pair_indeterminate),
        },
        "gamma": _json_num(report.gamma),
        "rho": _json_num(report.rho),
        "sigmaFamily": _json_num(report.sigma_family),
        "sigmaMax": _json_num(report.sigma_max),
        "singlePath": {
            "applicable": report.single_path.applicable,
            "sigma": _json_num(report.single_path.sigma),
            "reason": report.single_path.reason,
        },
        "perPair": [
            {
                "pair": list(ps.pair),
                "sigmaMinNonzero": _json_num(ps.sigma_min_nonzero),
                "rank": ps.rank,
                "indeterminate": ps.indeterminate,
            }
            for ps in report.per_pair
        ],
        "passed": report.passed,
    }


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def pairs_csv_text(report: CertificationReport) -> str:
    lines = ["pair_index,sigma_min_nonzero,rank,indeterminate"]
    for idx, ps in enumerate(report.per_pair):
        lines.append(
            ",".join(
                [str(idx), repr(float(ps.sigma_min_nonzero)), str(ps.rank), _csv_cell(ps.indeterminate)]
            )
        )
    return "\n".join(lines) + "\n"


def experiment_csv_text(result: ExperimentResult) -> str:
    lines = [",".join(EXPERIMENT_CSV_COLUMNS)]
    for r in result.rows:
        cells = [
            str(r.trial),
            repr(float(r.delta)),
            repr(float(r.eta)),
            repr(float(r.eps)),
            repr(float(r.lhs_t3_tensor)),
            repr(float(r.rhs_t3_tensor)),
            repr(float(r.lhs_t3_dp)),
            repr(float(r.rhs_t3_dp)),
            repr(float(r.lhs_t7)),
            repr(float(r.rhs_t7)),
            _csv_cell(r.precond_t3),
            _csv_cell(r.precond_t7),
            _csv_cell(r.satisfied_all),
            '"' + r.error.replace('"', "'") + '"' if r.error else "",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
