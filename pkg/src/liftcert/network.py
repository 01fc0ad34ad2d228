"""Convolutional linear networks on layered rooted DAGs.

A topology is a rooted DAG whose edges each carry a convolution kernel with a
fixed support inside ``{0..N-1}``.  Signals enter at the leaves, each layer
convolves along its edges and sums arriving contributions at every node, and
the output lives at the root.  All convolutions are circular modulo ``N``:
the sources leave boundary handling open, and the circular choice keeps every
output column an exact translate of a path kernel, which the closed-form
lower bound ``sqrt(N)`` relies on.

Layer ``k`` (depth ``k``; depth-1 edges touch the root) reads a slot vector
of length ``S``; the slot map assigns slots to edges in declaration order,
kernel positions ascending, and the per-layer totals ``sum |support_e|`` must
agree across layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ParamTuple

__all__ = [
    "TopologyError",
    "Edge",
    "EdgeSlotMap",
    "PathIndex",
    "NetworkTopology",
    "FactorMaps",
    "validate_topology",
    "place_kernel",
    "circular_convolve",
    "build_factor_maps",
    "path_convolution",
    "apply_network",
    "path_restriction",
    "haar_topology",
    "single_path_topology",
]


class TopologyError(ValueError):
    """Raised when a raw topology description violates the structural rules."""


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    support: tuple[int, ...]


@dataclass(frozen=True)
class EdgeSlotMap:
    """Layerwise bijection between slots and (edge, kernel position) pairs.

    ``layers[k-1][i-1]`` is the ``(edge_index, position)`` driven by slot
    ``i`` of layer ``k``; ``edge_slots[e]`` lists the 1-based slots of edge
    ``e`` in ascending kernel-position order.
    """

    layers: tuple[tuple[tuple[int, int], ...], ...]
    edge_slots: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class PathIndex:
    """Leaf-to-root paths as edge-index tuples, deepest edge first.

    ``by_leaf[j]`` lists the path ids starting at leaf ``j`` (in the
    topology's leaf order); path ids partition by leaf.
    """

    paths: tuple[tuple[int, ...], ...]
    by_leaf: tuple[tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Validated network structure plus derived bookkeeping.

    Build instances through :func:`validate_topology` (or the generators);
    the constructor performs no checking.  Node blocks at depth ``K`` follow
    the declared leaf order; other depths follow node declaration order.
    """

    N: int
    K: int
    S: int
    nodes: tuple[str, ...]
    root: str
    leaves: tuple[str, ...]
    edges: tuple[Edge, ...]
    edge_depth: tuple[int, ...]
    nodes_by_depth: tuple[tuple[str, ...], ...]
    slot_map: EdgeSlotMap
    paths: PathIndex

    @property
    def num_leaves(self) -> int:
        return len(self.leaves)

    def edges_at(self, k: int) -> list[int]:
        """Edge indices of depth ``k``, in declaration order."""
        return [e for e, d in enumerate(self.edge_depth) if d == k]


def validate_topology(raw: dict) -> NetworkTopology:
    """Check a raw topology description and derive all structural metadata.

    Verifies: acyclicity, a single root reached by every node, leaves exactly
    the source-only nodes, unambiguous node/edge depths, equal leaf-to-root
    path lengths, kernel supports inside ``{0..N-1}``, and equal per-layer
    slot totals (which define ``S``).

    Raises
    ------
    TopologyError
        With a message naming the violated rule.
    """
    try:
        N = int(raw["N"])
        nodes = [str(v) for v in raw["nodes"]]
        root = str(raw["root"])
        leaves = [str(v) for v in raw["leaves"]]
        raw_edges = list(raw["edges"])
    except (KeyError, TypeError) as exc:
        raise TopologyError(f"malformed topology description: {exc}") from exc
    if N < 1:
        raise TopologyError("signal length N must be >= 1")
    if len(set(nodes)) != len(nodes):
        raise TopologyError("duplicate node names")
    node_set = set(nodes)
    if root not in node_set:
        raise TopologyError(f"root {root!r} is not a declared node")
    if not leaves:
        raise TopologyError("at least one leaf is required")
    if len(set(leaves)) != len(leaves):
        raise TopologyError("duplicate leaf names")

    edges = []
    for j, e in enumerate(raw_edges):
        try:
            src, dst = str(e["from"]), str(e["to"])
            support = tuple(sorted({int(x) for x in e["support"]}))
        except (KeyError, TypeError) as exc:
            raise TopologyError(f"malformed edge {j}: {exc}") from exc
        if src not in node_set or dst not in node_set:
            raise TopologyError(f"edge {j} references unknown node")
        if not support:
            raise TopologyError(f"edge {j} has an empty kernel support")
        if support[0] < 0 or support[-1] >= N:
            raise TopologyError(f"edge {j} support {support} outside 0..{N - 1}")
        edges.append(Edge(src, dst, support))
    if not edges:
        raise TopologyError("at least one edge is required")
    if any(e.src == root for e in edges):
        raise TopologyError("root cannot be the source of an edge")

    # Node depths via DP toward the root; a node with two distinct
    # root-distances (or on a cycle) has no well-defined depth.
    out_edges: dict[str, list[int]] = {v: [] for v in nodes}
    in_edges: dict[str, list[int]] = {v: [] for v in nodes}
    for j, e in enumerate(edges):
        out_edges[e.src].append(j)
        in_edges[e.dst].append(j)

    depth: dict[str, int] = {root: 0}
    state: dict[str, int] = {}

    def node_depth(v: str) -> int:
        if v in depth:
            return depth[v]
        if state.get(v) == 1:
            raise TopologyError(f"cycle detected through node {v!r}")
        state[v] = 1
        ds = {node_depth(edges[j].dst) + 1 for j in out_edges[v]}
        state[v] = 2
        if not ds:
            raise TopologyError(f"node {v!r} is not connected to the root")
        if len(ds) > 1:
            raise TopologyError(f"ambiguous depth for node {v!r}: distances {sorted(ds)}")
        depth[v] = ds.pop()
        return depth[v]

    for v in nodes:
        node_depth(v)

    source_only = {v for v in nodes if not in_edges[v]}
    if source_only != set(leaves):
        raise TopologyError(
            f"declared leaves {sorted(leaves)} differ from source-only nodes {sorted(source_only)}"
        )
    leaf_depths = {depth[f] for f in leaves}
    if len(leaf_depths) != 1:
        raise TopologyError(f"unequal leaf-to-root path lengths: {sorted(leaf_depths)}")
    K = leaf_depths.pop()
    if K < 1:
        raise TopologyError("network must have at least one layer")

    edge_depth = tuple(depth[e.src] for e in edges)
    for j, e in enumerate(edges):
        if depth[e.src] != depth[e.dst] + 1:
            raise TopologyError(f"edge {j} skips levels ({depth[e.src]} -> {depth[e.dst]})")

    totals = {}
    for k in range(1, K + 1):
        totals[k] = sum(len(edges[j].support) for j in range(len(edges)) if edge_depth[j] == k)
    S = totals[1]
    for k, tot in totals.items():
        if tot != S:
            raise TopologyError(
                f"inconsistent per-layer slot totals: layer {k} has {tot}, layer 1 has {S}"
            )

    nodes_by_depth = []
    for d in range(K + 1):
        if d == K:
            nodes_by_depth.append(tuple(leaves))
        else:
            nodes_by_depth.append(tuple(v for v in nodes if depth[v] == d))

    # Slot map: edges in declaration order, kernel positions ascending.
    layer_maps = []
    edge_slots: list[tuple[int, ...]] = [() for _ in edges]
    for k in range(1, K + 1):
        assignment = []
        for j in range(len(edges)):
            if edge_depth[j] != k:
                continue
            start = len(assignment)
            assignment.extend((j, pos) for pos in edges[j].support)
            edge_slots[j] = tuple(range(start + 1, len(assignment) + 1))
        layer_maps.append(tuple(assignment))
    slot_map = EdgeSlotMap(tuple(layer_maps), tuple(edge_slots))

    # Enumerate leaf-to-root paths (deepest edge first), grouped by leaf.
    paths: list[tuple[int, ...]] = []
    by_leaf = []
    for f in leaves:
        mine = []

        def walk(v: str, acc: list[int]):
            if v == root:
                mine.append(tuple(acc))
                return
            for j in out_edges[v]:
                acc.append(j)
                walk(edges[j].dst, acc)
                acc.pop()

        walk(f, [])
        ids = tuple(range(len(paths), len(paths) + len(mine)))
        paths.extend(mine)
        by_leaf.append(ids)

    return NetworkTopology(
        N=N,
        K=K,
        S=S,
        nodes=tuple(nodes),
        root=root,
        leaves=tuple(leaves),
        edges=tuple(edges),
        edge_depth=edge_depth,
        nodes_by_depth=tuple(nodes_by_depth),
        slot_map=slot_map,
        paths=PathIndex(tuple(paths), tuple(by_leaf)),
    )


def place_kernel(topology: NetworkTopology, values, edge_index: int, layer: int | None = None) -> np.ndarray:
    """Scatter one layer's slot vector into the length-N kernel of an edge.

    ``values`` is the full layer vector (length ``S``); the slots mapped to
    the edge fill its support positions in ascending order, everything else
    is zero.
    """
    if not 0 <= edge_index < len(topology.edges):
        raise ValueError(f"edge index {edge_index} out of range")
    k = topology.edge_depth[edge_index]
    if layer is not None and layer != k:
        raise ValueError(f"edge {edge_index} has depth {k}, not layer {layer}")
    values = np.asarray(values, dtype=float)
    if values.shape != (topology.S,):
        raise ValueError(f"layer vector must have length {topology.S}")
    kernel = np.zeros(topology.N)
    edge = topology.edges[edge_index]
    for slot, pos in zip(topology.slot_map.edge_slots[edge_index], edge.support):
        kernel[pos] = values[slot - 1]
    return kernel


def circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular convolution of two equal-length vectors (direct, exact)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("kernels must share a length")
    n = a.size
    full = np.convolve(a, b)
    out = full[:n].copy()
    out[: n - 1] += full[n:]
    return out


@dataclass(frozen=True, eq=False)
class FactorMaps:
    """Per-layer linear maps from slot vectors to block convolution matrices.

    ``slices[k-1]`` has shape ``(S, m_k, m_{k+1})``; contracting with a layer
    vector yields that layer's matrix.  ``dims`` collects
    ``(m_1, ..., m_{K+1})`` with ``m_1 = N`` and ``m_{K+1} = N * num_leaves``.
    """

    slices: tuple[np.ndarray, ...]
    dims: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.slices)

    @property
    def S(self) -> int:
        return self.slices[0].shape[0]

    def matrix(self, k: int, values) -> np.ndarray:
        """Layer-k matrix for a slot vector (k is 1-based)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.S,):
            raise ValueError(f"layer vector must have length {self.S}")
        return np.tensordot(values, self.slices[k - 1], axes=1)

    def product(self, h: ParamTuple) -> np.ndarray:
        """Full network matrix ``M_1(h_1) @ ... @ M_K(h_K)``."""
        if h.K != self.K:
            raise ValueError("tuple layer count does not match")
        out = self.matrix(1, h.factors[0])
        for k in range(2, self.K + 1):
            out = out @ self.matrix(k, h.factors[k - 1])
        return out


def build_factor_maps(topology: NetworkTopology) -> FactorMaps:
    """Assemble the layer maps as stacks of block circulant slices.

    Signals at depth ``d`` are the concatenation of one length-N signal per
    depth-d node; the slice of slot ``i`` places a circular shift by its
    kernel position into the block addressed by its edge.
    """
    N, K, S = topology.N, topology.K, topology.S
    dims = tuple(N * len(topology.nodes_by_depth[d]) for d in range(K + 1))
    block_pos = [
        {v: j for j, v in enumerate(topology.nodes_by_depth[d])} for d in range(K + 1)
    ]
    shift_rows = np.arange(N)
    slices = []
    for k in range(1, K + 1):
        sl = np.zeros((S, dims[k - 1], dims[k]))
        for slot_1b, (edge_idx, pos) in enumerate(topology.slot_map.layers[k - 1], start=1):
            e = topology.edges[edge_idx]
            r0 = block_pos[k - 1][e.dst] * N
            c0 = block_pos[k][e.src] * N
            sl[slot_1b - 1, r0 + (shift_rows + pos) % N, c0 + shift_rows] = 1.0
        sl.flags.writeable = False
        slices.append(sl)
    return FactorMaps(tuple(slices), dims)


def path_convolution(topology: NetworkTopology, path_id: int, h: ParamTuple) -> np.ndarray:
    """Convolve the placed kernels of one leaf-to-root path.

    The result is the length-N kernel whose translates form the output
    columns contributed by that path.
    """
    paths = topology.paths.paths
    if not 0 <= path_id < len(paths):
        raise ValueError(f"path id {path_id} out of range")
    if h.K != topology.K:
        raise ValueError("tuple layer count does not match topology")
    out = None
    for edge_idx in paths[path_id]:
        k = topology.edge_depth[edge_idx]
        kernel = place_kernel(topology, h.factors[k - 1], edge_idx)
        out = kernel if out is None else circular_convolve(out, kernel)
    return out


def apply_network(topology: NetworkTopology, h: ParamTuple, x: np.ndarray) -> np.ndarray:
    """Apply the network to concatenated leaf signals; returns the root signal."""
    x = np.asarray(x, dtype=float)
    n = topology.N * topology.num_leaves
    if x.shape != (n,):
        raise ValueError(f"input must have length {n} (N per leaf, leaf order)")
    fm = build_factor_maps(topology)
    return fm.product(h) @ x


def path_restriction(h: ParamTuple, path_id: int, topology: NetworkTopology) -> ParamTuple:
    """Restrict a tuple to the slots feeding one path's kernels.

    Factor ``k`` of the result keeps only the slots mapped to the path's
    depth-k edge, in ascending kernel-position order, so its length is that
    edge's support size.
    """
    paths = topology.paths.paths
    if not 0 <= path_id < len(paths):
        raise ValueError(f"path id {path_id} out of range")
    if h.K != topology.K:
        raise ValueError("tuple layer count does not match topology")
    by_depth = {topology.edge_depth[j]: j for j in paths[path_id]}
    factors = []
    for k in range(1, topology.K + 1):
        slots = topology.slot_map.edge_slots[by_depth[k]]
        factors.append(h.factors[k - 1][[s - 1 for s in slots]])
    return ParamTuple(tuple(factors))


def haar_topology(K: int, N: int) -> NetworkTopology:
    """Dilated-pair tree: 2**K leaves, each on its own chain to the root.

    The depth-k edge of every chain carries the kernel support ``{0, 2**k}``,
    the convention used for the undecimated Haar filter bank in the sources
    (note: the classical a-trous dilation at depth ``k`` would be
    ``2**(k-1)``; the ``2**k`` convention is kept verbatim).  Chains are kept
    disjoint so every layer reads the same slot total and every leaf has
    exactly one path.  Requires ``N >= 2**(K+1)`` so the K-fold convolution
    of the pair kernels does not wrap around, which keeps all-ones products
    0/1-valued.
    """
    if K < 1:
        raise TopologyError("depth K must be >= 1")
    if N < 2 ** (K + 1):
        raise TopologyError(f"N too small: need N >= {2 ** (K + 1)} for depth {K}")
    chains = 2**K
    nodes = ["r"]
    for c in range(chains):
        nodes.extend(f"p{c}n{d}" for d in range(1, K + 1))
    leaves = [f"p{c}n{K}" for c in range(chains)]
    edges = []
    for d in range(1, K + 1):
        for c in range(chains):
            dst = "r" if d == 1 else f"p{c}n{d - 1}"
            edges.append({"from": f"p{c}n{d}", "to": dst, "support": [0, 2**d]})
    return validate_topology(
        {"N": N, "nodes": nodes, "root": "r", "leaves": leaves, "edges": edges}
    )


def single_path_topology(supports, N: int) -> NetworkTopology:
    """Chain network with one edge per layer; ``supports[k-1]`` is layer k's kernel support."""
    supports = [tuple(sorted({int(x) for x in s})) for s in supports]
    K = len(supports)
    if K < 1:
        raise TopologyError("need at least one layer support")
    nodes = ["r"] + [f"v{d}" for d in range(1, K + 1)]
    edges = []
    for d in range(1, K + 1):
        dst = "r" if d == 1 else f"v{d - 1}"
        edges.append({"from": f"v{d}", "to": dst, "support": list(supports[d - 1])})
    return validate_topology(
        {"N": N, "nodes": nodes, "root": "r", "leaves": [f"v{K}"], "edges": edges}
    )
