"""Scale-invariant metrics between parameter classes and distortion checks.

Two tuples are equivalent when they differ by per-factor rescalings whose
product is 1; the network they define is then identical.  The class metric
used throughout is the smallest p-norm gap between *balanced* representatives
(all factors sharing one max-abs norm).  Within a class such representatives
are unique up to per-factor signs with product +1, which reduces the infimum
to an exact minimum over ``2**(K-1)`` sign patterns.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product
from math import inf, isinf, prod, sqrt

import numpy as np

from .tensor import ParamTuple, segre, tensor_norm, tuple_norm

__all__ = [
    "BalancedTuple",
    "BoundReport",
    "BOUND_RTOL",
    "BOUND_ATOL",
    "balanced_representative",
    "class_distance",
    "same_class",
    "network_class_distance",
    "inverse_stability_check",
    "forward_lipschitz_check",
]

# Floating-point slack granted to analytically true inequalities.
BOUND_RTOL = 1e-9
BOUND_ATOL = 1e-12

# Scale-relative threshold for declaring two classes equal.
CLASS_EQ_RTOL = 1e-10


@dataclass(frozen=True)
class BalancedTuple:
    """Class representative whose factors all share one max-abs norm."""

    params: ParamTuple
    common_inf_norm: float


@dataclass(frozen=True)
class BoundReport:
    """Outcome of one inequality evaluation.

    ``satisfied`` is asserted only when the inequality's precondition holds;
    otherwise it is ``None`` and the report only records the two sides.
    """

    lhs: float
    rhs: float
    precondition_met: bool
    satisfied: bool | None
    slack: float
    label: str = ""


def _verdict(lhs: float, rhs: float, precondition_met: bool, label: str) -> BoundReport:
    sat = bool(lhs <= rhs * (1.0 + BOUND_RTOL) + BOUND_ATOL) if precondition_met else None
    return BoundReport(float(lhs), float(rhs), precondition_met, sat, float(rhs - lhs), label)


def _require_nonzero_class(h: ParamTuple, name: str) -> None:
    if not h.nonzero_class:
        raise ValueError(f"{name} has an all-zero factor; class operations undefined")


def _leading_sign(v: np.ndarray) -> float:
    nz = np.nonzero(v)[0]
    return float(np.sign(v[nz[0]]))


def balanced_representative(h: ParamTuple) -> BalancedTuple:
    """Rescale a tuple (scale product 1) so all factors share one max-abs norm.

    The common norm is the geometric mean of the factor max-abs norms.  Sign
    convention: factors 2..K lead with a positive entry and factor 1 absorbs
    the compensating signs, which makes the representative canonical.  Tuples
    already in this form are returned unchanged.
    """
    _require_nonzero_class(h, "tuple")
    inf_norms = [float(np.max(np.abs(f))) for f in h.factors]
    if max(inf_norms) == min(inf_norms):
        mu = inf_norms[0]
    else:
        mu = float(np.exp(np.mean(np.log(inf_norms))))
    scales = [0.0] * h.K
    sign_first = 1.0
    for k in range(1, h.K):
        eps = _leading_sign(h.factors[k])
        scales[k] = eps * mu / inf_norms[k]
        sign_first *= eps
    scales[0] = sign_first * mu / inf_norms[0]
    if all(s == 1.0 for s in scales):
        return BalancedTuple(h, mu)
    return BalancedTuple(h.scale(scales), mu)


def _sign_patterns(K: int):
    """All sign vectors in {-1,+1}^K with product +1 (2**(K-1) of them)."""
    for head in iter_product((1.0, -1.0), repeat=K - 1):
        yield head + (prod(head),)


def class_distance(h: ParamTuple, g: ParamTuple, p) -> float:
    """Distance between the scaling classes of two tuples.

    Exact minimum of ``||h' - g'||_p`` over balanced representatives of the
    two classes; since balanced representatives differ only by sign patterns
    with product +1, only the relative signs matter and the minimum runs over
    ``2**(K-1)`` patterns.  Symmetric, and zero exactly when the classes
    coincide.
    """
    if h.shape != g.shape:
        raise ValueError("tuples have different factor shapes")
    hb = balanced_representative(h).params
    gb = balanced_representative(g).params
    best = inf
    for signs in _sign_patterns(h.K):
        diff = [hf - s * gf for s, hf, gf in zip(signs, hb.factors, gb.factors)]
        best = min(best, tuple_norm(diff, p))
    return best


def same_class(h: ParamTuple, g: ParamTuple, p=2) -> bool:
    """Scale-relative zero test on the class distance."""
    scale = tuple_norm(h.factors, p) + tuple_norm(g.factors, p)
    return class_distance(h, g, p) < CLASS_EQ_RTOL * scale


def network_class_distance(h: ParamTuple, g: ParamTuple, p, topology) -> float:
    """Metric between network classes: p-aggregation of per-path class distances.

    Networks allow an independent scale rearrangement on every leaf-to-root
    path, so the tuple-level class metric is applied to each path restriction
    and the per-path values are combined in p-norm.
    """
    from .network import path_restriction

    n_paths = len(topology.paths.paths)
    if n_paths == 0:
        raise ValueError("topology has no leaf-to-root paths")
    dists = []
    for pid in range(n_paths):
        hp = path_restriction(h, pid, topology)
        gp = path_restriction(g, pid, topology)
        dists.append(class_distance(hp, gp, p))
    q = float(p)
    if isinf(q):
        return max(dists)
    return float(np.sum(np.asarray(dists) ** q) ** (1.0 / q))


def _inv_power(x: float, p) -> float:
    """x**(1/p), with the p = inf convention x**0 = 1."""
    p = float(p)
    return 1.0 if isinf(p) else float(x) ** (1.0 / p)


def inverse_stability_check(h: ParamTuple, g: ParamTuple, p, q) -> BoundReport:
    """Check that the class distance is controlled by the embedded-tensor gap.

    The inequality compares ``class_distance(h, g, p)`` against
    ``7 (K S)^{1/p} max(||P(h)||_inf, ||P(g)||_inf)^{1/K - 1} ||P(h)-P(g)||_q``
    and only applies when the tensors are close relative to their max entry
    (gap at most half the larger max-abs norm); the report flags whether that
    precondition held.
    """
    _require_nonzero_class(h, "first tuple")
    _require_nonzero_class(g, "second tuple")
    K, S = h.K, h.S
    Ph, Pg = segre(h), segre(g)
    inf_h = tensor_norm(Ph, inf)
    inf_g = tensor_norm(Pg, inf)
    gap_inf = tensor_norm(Ph - Pg, inf)
    pre = gap_inf <= 0.5 * max(inf_h, inf_g)
    lhs = class_distance(h, g, p)
    expo = 1.0 / K - 1.0
    rhs = 7.0 * _inv_power(K * S, p) * min(inf_h**expo, inf_g**expo) * tensor_norm(Ph - Pg, q)
    return _verdict(lhs, rhs, pre, "class distance from tensor gap")


def forward_lipschitz_check(h: ParamTuple, g: ParamTuple, q) -> BoundReport:
    """Check the Lipschitz bound of the rank-one embedding (unconditional).

    Compares ``||P(h)-P(g)||_q`` against
    ``S^{(K-1)/q} K^{1-1/q} max(||P(h)||_inf, ||P(g)||_inf)^{1-1/K} d_q``.
    """
    _require_nonzero_class(h, "first tuple")
    _require_nonzero_class(g, "second tuple")
    K, S = h.K, h.S
    Ph, Pg = segre(h), segre(g)
    lhs = tensor_norm(Ph - Pg, q)
    qf = float(q)
    s_pow = 1.0 if isinf(qf) else float(S) ** ((K - 1) / qf)
    k_pow = float(K) if isinf(qf) else float(K) ** (1.0 - 1.0 / qf)
    expo = 1.0 - 1.0 / K
    inf_h = tensor_norm(Ph, inf)
    inf_g = tensor_norm(Pg, inf)
    rhs = s_pow * k_pow * max(inf_h**expo, inf_g**expo) * class_distance(h, g, q)
    return _verdict(lhs, rhs, True, "embedding Lipschitz bound")


def sampled_class_distance(h: ParamTuple, g: ParamTuple, p, samples: int, rng) -> float:
    """Randomized upper bound on the class distance, for cross-checking.

    Draws random balanced representatives of both classes (independent sign
    patterns with product +1) and returns the smallest p-norm gap seen.  The
    enumerated :func:`class_distance` can never exceed this.
    """
    hb = balanced_representative(h).params
    gb = balanced_representative(g).params
    K = h.K
    best = tuple_norm([hf - gf for hf, gf in zip(hb.factors, gb.factors)], p)
    if K == 1:
        return best
    eps = np.where(rng.random((samples, K - 1)) < 0.5, -1.0, 1.0)
    eta = np.where(rng.random((samples, K - 1)) < 0.5, -1.0, 1.0)
    eps = np.hstack([eps, np.prod(eps, axis=1, keepdims=True)])
    eta = np.hstack([eta, np.prod(eta, axis=1, keepdims=True)])
    for e_row, n_row in zip(eps, eta):
        diff = [e * hf - n * gf for e, n, hf, gf in zip(e_row, n_row, hb.factors, gb.factors)]
        best = min(best, tuple_norm(diff, p))
    return best
