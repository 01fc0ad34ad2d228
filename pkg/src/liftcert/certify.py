"""Stability constants and certification of the recovery bounds.

Certification of a (topology, support family) pair runs three structural
checks — the 0/1 indicator-product test, per-pair kernel triviality on the
union cubes, and the family lower singular bound — and, when they pass,
issues the null-space-property constants ``(gamma, rho) = (1, inf)``.  The
per-instance certificates then compare measured recovery errors against the
closed-form bounds.  No constants are estimated for networks failing the
sufficient condition: the report simply carries no certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf, isinf, sqrt

import numpy as np

from .equivalence import (
    BoundReport,
    _verdict,
    class_distance,
    network_class_distance,
    _inv_power,
    _require_nonzero_class,
)
from .lifting import (
    LiftingOperator,
    IdentifiabilityResult,
    _cube_columns,
    identifiability_test,
    rank_split,
    singular_values,
)
from .network import NetworkTopology, place_kernel
from .tensor import ParamTuple, SupportFamily, segre, support_union, tensor_norm
from ._util import pmap

__all__ = [
    "PairSpectrum",
    "NspCheck",
    "SinglePathSigma",
    "CertificationReport",
    "sufficient_nsp_check",
    "deep_lower_rip",
    "single_path_lower_rip",
    "spectral_norm",
    "converse_gamma",
    "recovery_stability_certificate",
    "network_stability_certificate",
    "edge_kernel_floor",
    "certify_network",
]


@dataclass(frozen=True)
class PairSpectrum:
    """Spectral summary of the operator restricted to one support-pair union."""

    pair: tuple[int, int]
    sigma_min_nonzero: float
    rank: int
    indeterminate: bool


@dataclass(frozen=True)
class NspCheck:
    """Per-pair kernel-triviality verdicts and the resulting constants.

    A pair passes when the operator has full column rank on the union cube
    (no parameter tensor supported there is annihilated); indeterminate ranks
    count as failures for safety.  On an all-pass the null space property
    holds with ``(gamma, rho) = (1, inf)``.
    """

    pair_pass: tuple[bool, ...]
    pair_indeterminate: tuple[bool, ...]
    all_pass: bool
    gamma: float | None
    rho: float | None


def _pair_unions(family: SupportFamily):
    return [
        ((a, b), support_union(family.members[a], family.members[b]))
        for a, b in family.pairs()
    ]


def sufficient_nsp_check(
    A: LiftingOperator, family: SupportFamily, jobs: int = 1, rank_rtol: float | None = None
) -> NspCheck:
    """Check kernel triviality of the operator on every union cube."""
    from .lifting import RANK_RTOL

    rank_rtol = RANK_RTOL if rank_rtol is None else rank_rtol
    if (family.K, family.S) != (A.K, A.S):
        raise ValueError("family shape does not match operator")

    def one(item):
        _, union = item
        cols = _cube_columns(union, A.S, A.K)
        sub = A.matrix[:, cols]
        if sub.size == 0:
            return True, False
        s = singular_values(sub)
        rank, _, indeterminate = rank_split(s, sub.shape, rank_rtol)
        return (rank == sub.shape[1]) and not indeterminate, indeterminate

    results = pmap(one, _pair_unions(family), jobs)
    passes = tuple(r[0] for r in results)
    indet = tuple(r[1] for r in results)
    all_pass = all(passes)
    return NspCheck(
        pair_pass=passes,
        pair_indeterminate=indet,
        all_pass=all_pass,
        gamma=1.0 if all_pass else None,
        rho=inf if all_pass else None,
    )


def deep_lower_rip(
    A: LiftingOperator, family: SupportFamily, jobs: int = 1, rank_rtol: float | None = None
) -> tuple[float, tuple[PairSpectrum, ...]]:
    """Family lower singular bound: min over pairs of the smallest nonzero singular value.

    Each support pair contributes the smallest nonzero singular value of the
    operator restricted to the pair's union cube; the family constant is the
    minimum over all pairs.
    """
    from .lifting import RANK_RTOL

    rank_rtol = RANK_RTOL if rank_rtol is None else rank_rtol
    if (family.K, family.S) != (A.K, A.S):
        raise ValueError("family shape does not match operator")

    def one(item):
        pair, union = item
        cols = _cube_columns(union, A.S, A.K)
        sub = A.matrix[:, cols]
        if sub.size == 0 or not np.any(sub):
            raise ValueError(f"empty operator for pair {pair}: degenerate support union")
        s = singular_values(sub)
        rank, _, indeterminate = rank_split(s, sub.shape, rank_rtol)
        if rank == 0:
            raise ValueError(f"empty operator for pair {pair}: no nonzero singular values")
        return PairSpectrum(
            pair=pair,
            sigma_min_nonzero=float(s[rank - 1]),
            rank=rank,
            indeterminate=indeterminate,
        )

    spectra = tuple(pmap(one, _pair_unions(family), jobs))
    sigma = min(ps.sigma_min_nonzero for ps in spectra)
    return sigma, spectra


@dataclass(frozen=True)
class SinglePathSigma:
    """Closed-form lower bound for single-path identifiable networks.

    When the network has exactly one leaf-to-root path and its all-ones
    product is 0/1-valued, the restricted kernels are the orthogonal
    complements of the support cubes, the null-space property holds with
    ``(1, inf)``, and the lower singular bound is exactly ``sqrt(N)``.
    """

    applicable: bool
    sigma: float | None
    gamma: float | None
    rho: float | None
    reason: str = ""


def single_path_lower_rip(topology: NetworkTopology) -> SinglePathSigma:
    """Return ``sqrt(N)`` with constants ``(1, inf)`` when the closed form applies."""
    from .tensor import full_support

    if len(topology.paths.paths) != 1:
        return SinglePathSigma(False, None, None, None, "network has more than one path")
    fam = SupportFamily((full_support(topology.K, topology.S),))
    ident = identifiability_test(topology, fam)
    if not ident.passed:
        return SinglePathSigma(
            False, None, None, None, "all-ones product is not 0/1-valued"
        )
    return SinglePathSigma(True, sqrt(topology.N), 1.0, inf, "")


def spectral_norm(A: LiftingOperator) -> float:
    """Largest singular value of the operator matrix."""
    if not np.any(A.matrix):
        return 0.0
    return float(singular_values(A.matrix)[0])


def converse_gamma(C: float, S: int, K: int, sigma_max: float) -> float:
    """Constant transferred from a stable-recovery assumption to the null space property.

    ``gamma = C * S**((K-1)/2) * sqrt(K) * sigma_max``; the matching radius
    is the noise level the recovery assumption tolerates, passed through
    unchanged by the caller.
    """
    if C <= 0:
        raise ValueError("stability constant C must be positive")
    if S < 1 or K < 1:
        raise ValueError("S and K must be positive integers")
    if sigma_max <= 0:
        raise ValueError("sigma_max must be positive")
    return float(C) * float(S) ** ((K - 1) / 2.0) * sqrt(K) * float(sigma_max)


def recovery_stability_certificate(
    hbar: ParamTuple,
    hstar: ParamTuple,
    delta: float,
    eta: float,
    gamma: float,
    rho: float,
    sigma: float,
    p,
) -> tuple[BoundReport, BoundReport]:
    """Evaluate the two recovery bounds for one solved instance.

    Report 1 compares the Frobenius gap of the embedded tensors against
    ``(gamma / sigma) (delta + eta)``, gated on ``delta + eta <= rho``.
    Report 2 compares the class distance against the same quantity scaled by
    ``7 (K S)^{1/p} max(||P||_inf)^{1/K-1}``, gated additionally on the gap
    bound being at most half the larger max-abs tensor entry.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be positive")
    _require_nonzero_class(hbar, "reference tuple")
    _require_nonzero_class(hstar, "solved tuple")
    K, S = hbar.K, hbar.S
    bound = gamma / sigma * (delta + eta)
    Pb, Ps = segre(hbar), segre(hstar)
    pre1 = (delta + eta) <= rho
    report1 = _verdict(tensor_norm(Ps - Pb, 2), bound, pre1, "tensor recovery bound")
    inf_b = tensor_norm(Pb, inf)
    inf_s = tensor_norm(Ps, inf)
    pre2 = pre1 and bound <= 0.5 * max(inf_b, inf_s)
    expo = 1.0 / K - 1.0
    rhs2 = 7.0 * _inv_power(K * S, p) * min(inf_b**expo, inf_s**expo) * bound
    report2 = _verdict(class_distance(hstar, hbar, p), rhs2, pre2, "class recovery bound")
    return report1, report2


def edge_kernel_floor(topology: NetworkTopology, h: ParamTuple) -> float:
    """Smallest max-abs norm over the placed edge kernels of a tuple."""
    floor = inf
    for edge_idx in range(len(topology.edges)):
        k = topology.edge_depth[edge_idx]
        kernel = place_kernel(topology, h.factors[k - 1], edge_idx)
        floor = min(floor, float(np.max(np.abs(kernel))))
    return floor


def network_stability_certificate(
    hbar: ParamTuple,
    hstar: ParamTuple,
    delta: float,
    eta: float,
    topology: NetworkTopology,
    p,
    family: SupportFamily | None = None,
) -> BoundReport:
    """Evaluate the network recovery bound for one solved instance.

    The left side is the per-path class metric between the two tuples; the
    right side is ``7 (K S)^{1/p} / (sqrt(N) eps^{K-1}) (delta + eta)`` with
    ``eps`` the smallest max-abs norm among the reference tuple's edge
    kernels.  The precondition is the 0/1 indicator-product test (pairwise
    over ``family`` when given, otherwise on the full slot cube, which
    dominates every union).  A zero edge kernel makes the bound inapplicable.
    """
    from .tensor import full_support

    eps = edge_kernel_floor(topology, hbar)
    if eps <= 0.0:
        raise ValueError("an edge kernel of the reference tuple is zero; bound inapplicable")
    if family is None:
        family = SupportFamily((full_support(topology.K, topology.S),))
    pre = identifiability_test(topology, family).passed
    K, S, N = topology.K, topology.S, topology.N
    lhs = network_class_distance(hstar, hbar, p, topology)
    rhs = 7.0 * _inv_power(K * S, p) / (sqrt(N) * eps ** (K - 1)) * (delta + eta)
    return _verdict(lhs, rhs, pre, "network recovery bound")


@dataclass(frozen=True)
class CertificationReport:
    """Full certification outcome for a (topology, family) pair.

    ``gamma``/``rho`` are ``(1, inf)`` exactly when every pair passes the
    kernel-triviality check, and ``None`` otherwise (no certificate is
    estimated in that case).  ``sigma_family`` is the minimum of the per-pair
    smallest nonzero singular values and never exceeds ``sigma_max``.
    """

    identifiable: IdentifiabilityResult
    nsp: NspCheck
    gamma: float | None
    rho: float | None
    sigma_family: float
    sigma_max: float
    per_pair: tuple[PairSpectrum, ...]
    single_path: SinglePathSigma
    pair_labels: tuple[tuple[int, int], ...]

    @property
    def passed(self) -> bool:
        return self.identifiable.passed and self.nsp.all_pass


def certify_network(
    topology: NetworkTopology,
    family: SupportFamily,
    jobs: int = 1,
    entry_tol: float | None = None,
    rank_rtol: float | None = None,
) -> CertificationReport:
    """Run the full certification pipeline on a topology and support family."""
    from .lifting import ENTRY_TOL, RANK_RTOL, build_lifting
    from .network import build_factor_maps

    entry_tol = ENTRY_TOL if entry_tol is None else entry_tol
    rank_rtol = RANK_RTOL if rank_rtol is None else rank_rtol
    A = build_lifting(build_factor_maps(topology))
    ident = identifiability_test(topology, family, entry_tol=entry_tol)
    nsp = sufficient_nsp_check(A, family, jobs=jobs, rank_rtol=rank_rtol)
    sigma_family, per_pair = deep_lower_rip(A, family, jobs=jobs, rank_rtol=rank_rtol)
    sigma_max = spectral_norm(A)
    sp = single_path_lower_rip(topology)
    return CertificationReport(
        identifiable=ident,
        nsp=nsp,
        gamma=nsp.gamma,
        rho=nsp.rho,
        sigma_family=sigma_family,
        sigma_max=sigma_max,
        per_pair=per_pair,
        single_path=sp,
        pair_labels=tuple(pair for pair, _ in _pair_unions(family)),
    )
