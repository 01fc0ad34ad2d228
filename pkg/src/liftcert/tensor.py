"""Dense order-K tensors, rank-one embeddings, and per-layer support algebra.

Parameter tuples carry one coefficient vector per layer.  Tensors are plain
:class:`numpy.ndarray` values with one axis per layer; slot and multi-index
arguments are 1-based at the API boundary, matching the serialized file
formats.  Everything here is a pure function of its inputs, and constructed
values are frozen (arrays are made read-only), so they can be shared freely
across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from itertools import product as iter_product
from math import isinf

import numpy as np

__all__ = [
    "ParamTuple",
    "Support",
    "SupportFamily",
    "full_support",
    "segre",
    "project_support",
    "tensor_norm",
    "support_union",
    "indicator_tuple",
    "support_indicator_tuple",
    "tuple_norm",
]


@dataclass(frozen=True, eq=False)
class ParamTuple:
    """Per-layer coefficient vectors ``(h_1, ..., h_K)``.

    Factors normally share a common length ``S``.  Restrictions of a tuple to
    a network path keep one kernel block per layer, so unequal factor lengths
    are permitted; operations that need the common cube (``segre`` on a square
    tensor, the lifted bound checks) require ``S`` and raise otherwise.

    Parameters
    ----------
    factors : sequence of 1-D array_like
        One real vector per layer, all entries finite.
    """

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = tuple(np.asarray(f, dtype=float).copy() for f in self.factors)
        if not factors:
            raise ValueError("parameter tuple needs at least one factor")
        for k, f in enumerate(factors, start=1):
            if f.ndim != 1 or f.size == 0:
                raise ValueError(f"factor {k} must be a nonempty 1-D vector")
            if not np.all(np.isfinite(f)):
                raise ValueError(f"factor {k} has non-finite entries")
            f.flags.writeable = False
        object.__setattr__(self, "factors", factors)

    @property
    def K(self) -> int:
        return len(self.factors)

    @property
    def S(self) -> int:
        sizes = {f.size for f in self.factors}
        if len(sizes) != 1:
            raise ValueError("factors have unequal lengths; no common slot count")
        return self.factors[0].size

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def nonzero_class(self) -> bool:
        """True when every factor has at least one nonzero entry."""
        return all(np.any(f != 0.0) for f in self.factors)

    def concat(self) -> np.ndarray:
        return np.concatenate(self.factors)

    def scale(self, scales) -> "ParamTuple":
        """New tuple with factor ``k`` multiplied by ``scales[k]``."""
        if len(scales) != self.K:
            raise ValueError("need one scale per factor")
        return ParamTuple(tuple(s * f for s, f in zip(scales, self.factors)))


@dataclass(frozen=True)
class Support:
    """Per-layer sets of admissible slots, 1-based within ``{1..S}``."""

    layers: tuple[tuple[int, ...], ...]
    S: int

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("slot count S must be >= 1")
        if not self.layers:
            raise ValueError("support needs at least one layer")
        layers = []
        for k, layer in enumerate(self.layers, start=1):
            slots = tuple(sorted({int(i) for i in layer}))
            for i in slots:
                if not 1 <= i <= self.S:
                    raise ValueError(f"layer {k} slot {i} outside 1..{self.S}")
            layers.append(slots)
        object.__setattr__(self, "layers", tuple(layers))

    @property
    def K(self) -> int:
        return len(self.layers)

    def masks(self) -> list[np.ndarray]:
        """Per-layer boolean masks of length ``S``."""
        out = []
        for layer in self.layers:
            m = np.zeros(self.S, dtype=bool)
            m[[i - 1 for i in layer]] = True
            out.append(m)
        return out

    def cube(self):
        """Iterate the 1-based multi-indices of the support cube."""
        return iter_product(*self.layers)

    def cube_size(self) -> int:
        out = 1
        for layer in self.layers:
            out *= len(layer)
        return out

    def is_full(self) -> bool:
        return all(len(layer) == self.S for layer in self.layers)


def full_support(K: int, S: int) -> Support:
    """Support admitting every slot in every layer."""
    return Support(tuple(tuple(range(1, S + 1)) for _ in range(K)), S)


@dataclass(frozen=True)
class SupportFamily:
    """Nonempty collection of admissible supports sharing ``(K, S)``."""

    members: tuple[Support, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("support family must be nonempty")
        K, S = members[0].K, members[0].S
        seen = set()
        for m in members:
            if (m.K, m.S) != (K, S):
                raise ValueError("family members disagree on (K, S)")
            if m.layers in seen:
                raise ValueError("duplicate support in family")
            seen.add(m.layers)
        object.__setattr__(self, "members", members)

    @property
    def K(self) -> int:
        return self.members[0].K

    @property
    def S(self) -> int:
        return self.members[0].S

    def __len__(self) -> int:
        return len(self.members)

    def pairs(self):
        """Unordered member index pairs ``(a, b)`` with ``a <= b``.

        Equal pairs are included: the certification conditions quantify over
        all couples, and the union of a support with itself is needed when the
        solver support coincides with the true one.
        """
        n = len(self.members)
        return [(a, b) for a in range(n) for b in range(a, n)]


def _check_square(T: np.ndarray, K: int, S: int, what: str) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.ndim != K or any(s != S for s in T.shape):
        raise ValueError(f"{what}: tensor shape {T.shape} does not match K={K}, S={S}")
    return T


def segre(h: ParamTuple) -> np.ndarray:
    """Rank-one tensor of all entry products across layers.

    Entry ``(i_1, ..., i_K)`` of the result is ``h_1[i_1] * ... * h_K[i_K]``,
    so the output has one axis per factor.

    Examples
    --------
    >>> segre(ParamTuple(((1.0, 2.0), (3.0, 4.0))))
    array([[3., 4.],
           [6., 8.]])
    """
    return reduce(np.multiply.outer, h.factors)


def project_support(T: np.ndarray, support: Support) -> np.ndarray:
    """Orthogonal projection onto tensors supported on the support cube.

    Keeps entry ``i`` iff ``i_k`` is admissible at every layer ``k``; all
    other entries are zeroed.  Idempotent and norm non-increasing.
    """
    T = _check_square(T, support.K, support.S, "project_support")
    out = T.copy()
    for axis, mask in enumerate(support.masks()):
        idx = [slice(None)] * out.ndim
        idx[axis] = ~mask
        out[tuple(idx)] = 0.0
    return out


def tensor_norm(T: np.ndarray, q) -> float:
    """Entrywise q-norm of a tensor, ``q`` in ``[1, inf]``."""
    q = float(q)
    if not (q >= 1.0 or isinf(q)):
        raise ValueError(f"norm order must be >= 1 or inf, got {q}")
    flat = np.asarray(T, dtype=float).ravel()
    if flat.size == 0:
        return 0.0
    return float(np.linalg.norm(flat, ord=q))


def tuple_norm(factors, q) -> float:
    """q-norm of the concatenation of a list of vectors."""
    return tensor_norm(np.concatenate([np.asarray(f, float).ravel() for f in factors]), q)


def support_union(a: Support, b: Support) -> Support:
    """Layerwise union of two supports on the same (K, S)."""
    if (a.K, a.S) != (b.K, b.S):
        raise ValueError("support shapes disagree")
    return Support(
        tuple(tuple(sorted(set(la) | set(lb))) for la, lb in zip(a.layers, b.layers)),
        a.S,
    )


def indicator_tuple(index, S: int) -> ParamTuple:
    """Parameter tuple whose factor ``k`` is the basis vector at ``index[k]``.

    The rank-one embedding of the result is the basis tensor with a single 1
    at the given 1-based multi-index.
    """
    factors = []
    for k, i in enumerate(index, start=1):
        i = int(i)
        if not 1 <= i <= S:
            raise ValueError(f"index {i} at layer {k} outside 1..{S}")
        f = np.zeros(S)
        f[i - 1] = 1.0
        factors.append(f)
    return ParamTuple(tuple(factors))


def support_indicator_tuple(support: Support) -> ParamTuple:
    """All-ones tuple masked to a support: factor ``k`` indicates layer ``k``'s slots."""
    return ParamTuple(tuple(m.astype(float) for m in support.masks()))
