"""Assembly of the lifting operator and the structural identifiability checks.

The product of the per-layer matrices is linear in the rank-one tensor of the
parameters: stacking the flattened products over all basis parameter tuples
yields a single matrix (the lifting operator) whose action on the embedded
tensor reproduces every network product.  Restrictions to support cubes,
numerical kernel computations, and the 0/1-valued indicator-product test all
live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    NetworkTopology,
    FactorMaps,
    build_factor_maps,
    circular_convolve,
    path_convolution,
)
from .tensor import (
    Support,
    SupportFamily,
    support_indicator_tuple,
    support_union,
)

__all__ = [
    "LiftingOperator",
    "IdentifiabilityResult",
    "DisjointnessResult",
    "KernelCheckResult",
    "ENTRY_TOL",
    "RANK_RTOL",
    "build_lifting",
    "lift_restricted",
    "identifiability_test",
    "valid_path_indices",
    "path_support_disjointness",
    "kernel_characterization_check",
]

# An indicator-product entry counts integer path contributions; anything
# farther than this from {0, 1} is a witness.
ENTRY_TOL = 1e-9

# Singular values <= RANK_RTOL * sigma_1 * max(shape) count as zero.
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LiftingOperator:
    """Dense matrix of the map from parameter tensors to flattened products.

    Column layout is row-major over 1-based multi-indices, so applying the
    matrix to ``segre(h).ravel()`` gives the flattened (C-order) product
    matrix.  ``m`` and ``n`` are the product's row and column counts.
    """

    matrix: np.ndarray
    K: int
    S: int
    m: int
    n: int

    def column_of(self, index) -> int:
        """Flat column index of a 1-based multi-index."""
        zero_based = tuple(int(i) - 1 for i in index)
        return int(np.ravel_multi_index(zero_based, (self.S,) * self.K))

    def index_of(self, column: int):
        """1-based multi-index of a flat column."""
        return tuple(int(i) + 1 for i in np.unravel_index(column, (self.S,) * self.K))

    def apply(self, T: np.ndarray) -> np.ndarray:
        """Product matrix (m x n) for a parameter tensor."""
        T = np.asarray(T, dtype=float)
        if T.shape != (self.S,) * self.K:
            raise ValueError(f"tensor shape {T.shape} does not match operator")
        return (self.matrix @ T.ravel()).reshape(self.m, self.n)


def build_lifting(fm: FactorMaps) -> LiftingOperator:
    """Stack the flattened products of all basis tuples into one matrix.

    The column at multi-index ``i`` is the flattened product of the layer
    slices picked by ``i``; prefix contraction keeps the assembly at the cost
    of the output size.
    """
    S, K = fm.S, fm.K
    acc = fm.slices[0]
    for k in range(1, K):
        acc = np.einsum("...ab,jbc->...jac", acc, fm.slices[k])
    m, n = fm.dims[0], fm.dims[-1]
    matrix = np.ascontiguousarray(acc.reshape(S**K, m * n).T)
    return LiftingOperator(matrix=matrix, K=K, S=S, m=m, n=n)


def _cube_columns(support: Support, S: int, K: int) -> np.ndarray:
    """Flat column indices of the support cube, ascending."""
    grids = np.meshgrid(
        *[np.asarray(layer, dtype=int) - 1 for layer in support.layers], indexing="ij"
    )
    if not grids:
        return np.zeros(0, dtype=int)
    flat = np.ravel_multi_index([g.ravel() for g in grids], (S,) * K)
    return np.sort(flat)


def lift_restricted(A: LiftingOperator, support: Support) -> LiftingOperator:
    """Operator composed with the support-cube projection: outside columns zeroed."""
    if (support.K, support.S) != (A.K, A.S):
        raise ValueError("support shape does not match operator")
    matrix = np.zeros_like(A.matrix)
    cols = _cube_columns(support, A.S, A.K)
    matrix[:, cols] = A.matrix[:, cols]
    return LiftingOperator(matrix=matrix, K=A.K, S=A.S, m=A.m, n=A.n)


@dataclass(frozen=True)
class IdentifiabilityResult:
    """Outcome of the 0/1 indicator-product test.

    A failure exhibits two parameter tuples the network cannot distinguish,
    so failing proves non-identifiability; passing is necessary but does not
    by itself prove identifiability.  The witness is
    ``(pair, leaf, position, value)`` for the first offending output entry.
    """

    passed: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.passed


def identifiability_test(
    topology: NetworkTopology, family: SupportFamily, entry_tol: float = ENTRY_TOL
) -> IdentifiabilityResult:
    """Check that all-ones indicator products are 0/1-valued on every support pair.

    For each unordered pair (including equal pairs) the network runs once per
    leaf on the union's indicator tuple; since output columns are circular
    translates of the per-leaf path-kernel sums, checking those sums covers
    every entry of the product matrix.
    """
    if (family.K, family.S) != (topology.K, topology.S):
        raise ValueError("family shape does not match topology")
    for a, b in family.pairs():
        union = support_union(family.members[a], family.members[b])
        ones = support_indicator_tuple(union)
        for leaf_id, leaf in enumerate(topology.leaves):
            total = np.zeros(topology.N)
            for pid in topology.paths.by_leaf[leaf_id]:
                total += path_convolution(topology, pid, ones)
            off = np.minimum(np.abs(total), np.abs(total - 1.0))
            bad = np.nonzero(off > entry_tol)[0]
            if bad.size:
                pos = int(bad[0])
                return IdentifiabilityResult(
                    passed=False, witness=((a, b), leaf, pos, float(total[pos]))
                )
    return IdentifiabilityResult(passed=True)


def valid_path_indices(support: Support, topology: NetworkTopology) -> frozenset:
    """Multi-indices of the support cube whose layerwise edges form a path.

    Slot ``i_k`` picks the depth-k edge it feeds; the multi-index is valid
    when those edges chain into a leaf-to-root path.  Returned as 1-based
    tuples.
    """
    if (support.K, support.S) != (topology.K, topology.S):
        raise ValueError("support shape does not match topology")
    valid_paths = set()
    for path in topology.paths.paths:
        by_depth = tuple(sorted(path, key=lambda j: topology.edge_depth[j]))
        valid_paths.add(by_depth)
    slot_edge = [
        [pair[0] for pair in topology.slot_map.layers[k]] for k in range(topology.K)
    ]
    out = []
    for index in support.cube():
        edges = tuple(slot_edge[k][i - 1] for k, i in enumerate(index))
        if edges in valid_paths:
            out.append(tuple(index))
    return frozenset(out)


@dataclass(frozen=True)
class DisjointnessResult:
    """Pairwise output-support disjointness of distinct paths.

    Paths ending at different leaves write to different column blocks, so
    only paths sharing a leaf can collide; the witness is
    ``(path_a, path_b, leaf, position)``.
    """

    passed: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.passed


def path_support_disjointness(topology: NetworkTopology) -> DisjointnessResult:
    """Check that distinct paths have disjoint output supports (all-ones kernels)."""
    for leaf_id, leaf in enumerate(topology.leaves):
        ids = topology.paths.by_leaf[leaf_id]
        kernels = []
        for pid in ids:
            kernel = None
            for edge_idx in topology.paths.paths[pid]:
                ones = np.zeros(topology.N)
                ones[list(topology.edges[edge_idx].support)] = 1.0
                kernel = ones if kernel is None else circular_convolve(kernel, ones)
            kernels.append(kernel != 0.0)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                overlap = np.nonzero(kernels[i] & kernels[j])[0]
                if overlap.size:
                    return DisjointnessResult(
                        passed=False, witness=(ids[i], ids[j], leaf, int(overlap[0]))
                    )
    return DisjointnessResult(passed=True)


def singular_values(matrix: np.ndarray) -> np.ndarray:
    return np.linalg.svd(matrix, compute_uv=False)


def rank_split(s: np.ndarray, shape, rank_rtol: float = RANK_RTOL):
    """Split a singular spectrum at the numerical-rank threshold.

    Returns ``(rank, threshold, indeterminate)``.  The indeterminate flag
    fires when the gap between the smallest kept and largest dropped value is
    thin: ratio under two orders of magnitude, or an absolute gap under
    ``100 * threshold``.
    """
    if s.size == 0 or s[0] == 0.0:
        return 0, 0.0, False
    threshold = rank_rtol * float(s[0]) * max(shape)
    rank = int(np.sum(s > threshold))
    indeterminate = False
    if 0 < rank:
        smallest_kept = float(s[rank - 1])
        largest_dropped = float(s[rank]) if rank < s.size else 0.0
        if largest_dropped > 0.0 and smallest_kept / largest_dropped < 1e2:
            indeterminate = True
        if smallest_kept - largest_dropped < 100.0 * threshold:
            indeterminate = True
    return rank, threshold, indeterminate


@dataclass(frozen=True)
class KernelCheckResult:
    """Numerical check of the kernel characterization on one support.

    Passing means the computed null space has dimension ``S**K - |valid|``
    and every null basis tensor vanishes on the valid path indices.
    """

    passed: bool
    indeterminate: bool
    kernel_dim: int
    expected_dim: int
    max_on_valid: float


def kernel_characterization_check(
    A: LiftingOperator,
    support: Support,
    topology: NetworkTopology,
    vanish_tol: float = 1e-8,
    rank_rtol: float = RANK_RTOL,
) -> KernelCheckResult:
    """Verify that the restricted operator's kernel is exactly the non-valid slice.

    Computes an SVD null-space basis of the support-restricted operator and
    checks (a) its dimension equals the cube size minus the number of valid
    path indices and (b) each basis tensor vanishes on those indices.  A thin
    spectral gap at the rank threshold is flagged indeterminate rather than
    trusted.
    """
    restricted = lift_restricted(A, support)
    mat = restricted.matrix
    u, s, vt = np.linalg.svd(mat, full_matrices=True)
    rank, _, indeterminate = rank_split(s, mat.shape, rank_rtol)
    kernel_dim = A.S**A.K - rank
    valid = valid_path_indices(support, topology)
    expected_dim = A.S**A.K - len(valid)
    basis = vt[rank:]
    max_on_valid = 0.0
    if valid and basis.shape[0]:
        cols = [A.column_of(i) for i in sorted(valid)]
        max_on_valid = float(np.max(np.abs(basis[:, cols]))) if cols else 0.0
    passed = (kernel_dim == expected_dim) and (max_on_valid <= vanish_tol)
    return KernelCheckResult(
        passed=bool(passed),
        indeterminate=indeterminate,
        kernel_dim=int(kernel_dim),
        expected_dim=int(expected_dim),
        max_on_valid=max_on_valid,
    )


def lifting_for(topology: NetworkTopology) -> LiftingOperator:
    """Convenience: factor maps then lifting for a topology."""
    return build_lifting(build_factor_maps(topology))
