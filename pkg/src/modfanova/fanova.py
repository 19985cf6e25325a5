"""Functional ANOVA of fitted trees and the summaries built on it.

A tree is piecewise constant on products of option subsets, so its average
over all completions of a partial assignment ``theta_U`` is a weighted sum of
leaf values with weights ``prod_{j not in U} |P_lj| / k_j`` (zero if a fixed
option falls outside the leaf). Component functions follow from the usual
recursion over the subset lattice and ``V_U`` is the mean square of the
component over the (uniform) grid of ``theta_U``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, InvariantViolation
from .forest import Forest, Tree
from .space import ConfigSpace

SubsetKey = tuple[int, ...]

CLOSURE_RTOL = 1e-9


def subset_keys(n: int, max_order: int) -> list[SubsetKey]:
    """Canonical order: by size, then lexicographic."""
    return [k for r in range(1, max_order + 1) for k in itertools.combinations(range(n), r)]


def canonical(key: Iterable[int]) -> SubsetKey:
    key = tuple(sorted(int(j) for j in key))
    if len(set(key)) != len(key):
        raise DataError(f"repeated module in subset {key}")
    return key


def marginal_table(tree: Tree, U: SubsetKey) -> np.ndarray:
    """Marginal of ``tree`` for every ``theta_U`` at once, shaped ``(k_j for j in U)``."""
    values, masks, fractions = tree.arrays
    shape = tree.space.shape
    others = [j for j in range(tree.space.n) if j not in U]
    table = values * np.prod(fractions[:, others], axis=1)
    for j in U:
        table = table[..., None] * masks[:, j, : shape[j]].reshape((-1,) + (1,) * (table.ndim - 1) + (shape[j],))
    return table.sum(axis=0)


def tree_marginal(tree: Tree, U: Sequence[int], theta: Sequence[int]) -> float:
    """Uniform average of the tree over all variants agreeing with ``theta`` on ``U``."""
    U = tuple(U)
    if len(U) != len(theta):
        raise DataError("theta must give one option per module in U")
    shape = tree.space.shape
    for j, o in zip(U, theta):
        if not 0 <= o < shape[j]:
            raise DataError(f"option {o} out of range for module {j}")
    total = 0.0
    for leaf in tree.leaves:
        if any(o not in leaf.partition[j] for j, o in zip(U, theta)):
            continue
        w = 1.0
        for j in range(tree.space.n):
            if j not in U:
                w *= len(leaf.partition[j]) / shape[j]
        total += leaf.value * w
    return total


def _broadcast(table: np.ndarray, sub: SubsetKey, U: SubsetKey) -> np.ndarray:
    """View a table over ``sub`` as broadcastable against a table over ``U``."""
    shape = [1] * len(U)
    for pos, j in enumerate(U):
        if j in sub:
            shape[pos] = table.shape[sub.index(j)]
    return table.reshape(shape)


def component_tables(marginal: Callable[[SubsetKey], np.ndarray],
                     keys: Iterable[SubsetKey]) -> dict[SubsetKey, np.ndarray]:
    """Components ``f_U`` for ``keys`` and every subset below them.

    ``marginal(U)`` returns the marginal table over ``U``; ``marginal(())``
    the global mean as a 0-d array.
    """
    needed = set()
    for U in keys:
        for r in range(len(U) + 1):
            needed.update(itertools.combinations(U, r))
    comps: dict[SubsetKey, np.ndarray] = {}
    for U in sorted(needed, key=lambda k: (len(k), k)):
        f = np.asarray(marginal(U), dtype=float)
        for W in itertools.chain.from_iterable(itertools.combinations(U, r) for r in range(len(U))):
            f = f - _broadcast(comps[W], W, U)
        comps[U] = f
    return comps


def component_value(tree: Tree, U: Sequence[int], theta: Sequence[int],
                    memo: dict | None = None) -> float:
    """``f_U(theta)``: marginal minus all lower-order components and the mean."""
    U = canonical(U)
    if memo is None:
        memo = {}
    if U not in memo:
        memo.update(component_tables(lambda W: marginal_table(tree, W), [U]))
    return float(memo[U][tuple(theta)])


def subset_variance(tree: Tree, U: Sequence[int], memo: dict | None = None) -> float:
    U = canonical(U)
    if memo is None:
        memo = {}
    if U not in memo:
        memo.update(component_tables(lambda W: marginal_table(tree, W), [U]))
    return float(np.mean(memo[U] ** 2))


def _mean_square(tree: Tree) -> float:
    values, _, fractions = tree.arrays
    return float(np.prod(fractions, axis=1) @ values ** 2)


def total_variance(tree: Tree) -> float:
    values, _, fractions = tree.arrays
    vol = np.prod(fractions, axis=1)
    mean = float(vol @ values)
    return max(float(vol @ (values - mean) ** 2), 0.0)


@dataclass
class EffectDecomposition:
    """Per-tree subset variances and their aggregation into fractions.

    ``variances[t, i]`` is ``V_U`` of tree ``t`` for ``keys[i]``; ``totals[t]``
    is the tree's total variance. ``mode`` selects how fractions combine
    trees: ``ratio`` averages per-tree ``V_U / V``, ``pooled`` divides the
    mean ``V_U`` by the mean ``V``.
    """

    space: ConfigSpace
    max_order: int
    keys: list[SubsetKey]
    variances: np.ndarray
    totals: np.ndarray
    mode: str = "ratio"
    zero_variance_trees: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("ratio", "pooled"):
            raise DataError(f"unknown fraction mode {self.mode!r}")
        self._index = {k: i for i, k in enumerate(self.keys)}

    @property
    def fraction_array(self) -> np.ndarray:
        V, T = self.variances, self.totals
        if self.mode == "pooled":
            total = T.mean()
            return V.mean(axis=0) / total if total > 0 else np.zeros(len(self.keys))
        ratios = np.zeros_like(V)
        live = T > 0
        ratios[live] = V[live] / T[live, None]
        return ratios.mean(axis=0)

    @property
    def fractions(self) -> dict[SubsetKey, float]:
        return dict(zip(self.keys, self.fraction_array.tolist()))

    def fraction(self, U: Iterable[int]) -> float:
        return float(self.fraction_array[self._index[canonical(U)]])

    def names(self, U: SubsetKey) -> list[str]:
        return self.space.subspace_names(U)

    def with_mode(self, mode: str) -> "EffectDecomposition":
        return EffectDecomposition(self.space, self.max_order, self.keys, self.variances,
                                   self.totals, mode, self.zero_variance_trees)

    def order_sums(self) -> dict[int, float]:
        out = {r: 0.0 for r in range(1, self.max_order + 1)}
        for k, f in zip(self.keys, self.fraction_array):
            out[len(k)] += float(f)
        return out


def decompose_tables(space: ConfigSpace, marginals: Sequence[Callable[[SubsetKey], np.ndarray]],
                     totals: Sequence[float], mean_squares: Sequence[float], max_order: int,
                     mode: str = "ratio") -> EffectDecomposition:
    """Shared back end: one marginal provider, total variance and E[y^2] per tree."""
    if not 1 <= max_order <= space.n:
        raise DataError(f"max_order must be in 1..{space.n}, got {max_order}")
    keys = subset_keys(space.n, max_order)
    variances = np.zeros((len(marginals), len(keys)))
    for t, marginal in enumerate(marginals):
        comps = component_tables(marginal, keys)
        variances[t] = [np.mean(comps[k] ** 2) for k in keys]
    totals = np.asarray(totals, dtype=float)
    zero = [int(t) for t in np.flatnonzero(totals <= 0)]
    if zero:
        warnings.warn(f"{len(zero)} of {len(totals)} tree(s) have zero variance; they contribute fraction 0",
                      stacklevel=2)
    d = EffectDecomposition(space, max_order, keys, variances, totals, mode, zero)
    if max_order == space.n:
        _check_closure(d, mean_squares)
    return d


def _check_closure(d: EffectDecomposition, mean_squares: Sequence[float]) -> None:
    """Raise unless sum_U V_U == V per tree; ``mean_squares`` bounds the rounding error."""
    err = np.abs(d.variances.sum(axis=1) - d.totals)
    bad = err > CLOSURE_RTOL * d.totals + 64 * np.finfo(float).eps * np.asarray(mean_squares)
    if bad.any():
        raise InvariantViolation(f"subset variances do not sum to the total variance for trees "
                                 f"{np.flatnonzero(bad).tolist()}")


def decompose(forest: Forest, max_order: int = 3, mode: str = "ratio") -> EffectDecomposition:
    """Subset variances ``V_U`` for every ``|U| <= max_order`` of every tree."""
    marginals = [(lambda U, tree=tree: marginal_table(tree, U)) for tree in forest.trees]
    return decompose_tables(forest.space, marginals, [total_variance(t) for t in forest.trees],
                            [_mean_square(t) for t in forest.trees], max_order, mode)


# -- summaries (percent) -----------------------------------------------------

@dataclass(frozen=True)
class CumulativeSummary:
    individual: float
    pairwise: float
    triple: float

    @property
    def total(self) -> float:
        return self.individual + self.pairwise + self.triple

    def as_row(self) -> tuple[float, float, float, float]:
        return self.individual, self.pairwise, self.triple, self.total


def cumulative_summary(d: EffectDecomposition) -> CumulativeSummary:
    if d.max_order < 3:
        raise DataError("cumulative summary needs interactions up to order 3")
    s = d.order_sums()
    return CumulativeSummary(100 * s[1], 100 * s[2], 100 * s[3])


@dataclass(frozen=True)
class PairRow:
    modules: tuple[str, str]
    pairwise: float
    individual1: float
    individual2: float

    @property
    def pair_total(self) -> float:
        return self.pairwise + self.individual1 + self.individual2


def pair_table(d: EffectDecomposition) -> list[PairRow]:
    """All module pairs in percent, most interacting first."""
    if d.max_order < 2:
        raise DataError("pair table needs interactions up to order 2")
    f = d.fractions
    rows = [PairRow(tuple(d.names((a, b))), 100 * f[(a, b)], 100 * f[(a,)], 100 * f[(b,)])
            for a, b in itertools.combinations(range(d.space.n), 2)]
    return sorted(rows, key=lambda r: -r.pairwise)


@dataclass(frozen=True)
class TripletRow:
    modules: tuple[str, str, str]
    triplet: float
    triplet_total: float


def triplet_table(d: EffectDecomposition, k: int | None = None) -> list[TripletRow]:
    """Triplets ranked by the variance they explain with all their sub-effects."""
    if d.max_order < 3:
        raise DataError("triplet table needs interactions up to order 3")
    f = d.fractions
    rows = []
    for U in itertools.combinations(range(d.space.n), 3):
        total = sum(f[W] for r in (1, 2, 3) for W in itertools.combinations(U, r))
        rows.append(TripletRow(tuple(d.names(U)), 100 * f[U], 100 * total))
    rows.sort(key=lambda r: -r.triplet_total)
    return rows if k is None else rows[:k]
