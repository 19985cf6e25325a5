"""Exact functional ANOVA of a full-factorial data table, no model involved.

Components are obtained by inclusion-exclusion over plain axis means,
``f_U = sum_{W subset U} (-1)^{|U|-|W|} a_W``, which is independent of the
recursive route used for trees and so serves as a cross-check for it.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .fanova import EffectDecomposition, _check_closure, subset_keys
from .pipeline import Dataset
from .space import ConfigSpace

MAX_CARDINALITY = 10**6


@dataclass
class FactorialTable:
    space: ConfigSpace
    response: np.ndarray  # shaped like space.shape

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float).reshape(self.space.shape)


def to_factorial(data: Dataset) -> FactorialTable:
    space = data.space
    if space.cardinality > MAX_CARDINALITY:
        raise DataError(f"space has {space.cardinality} variants; exact engine is limited to {MAX_CARDINALITY}")
    idx = np.ravel_multi_index(data.variants.T, space.shape) if len(data) else np.array([], dtype=int)
    if len(np.unique(idx)) != len(idx):
        raise DataError("duplicate variants in dataset")
    seen = np.zeros(space.cardinality, dtype=bool)
    seen[idx] = True
    if not seen.all():
        missing = [tuple(int(i) for i in np.unravel_index(m, space.shape)) for m in np.flatnonzero(~seen)]
        shown = ", ".join(str(v) for v in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataError(f"dataset is not full factorial: {len(missing)} missing variant(s): {shown}{more}")
    flat = np.empty(space.cardinality)
    flat[idx] = data.responses
    return FactorialTable(space, flat)


def _marginal(y: np.ndarray, U: tuple[int, ...]) -> np.ndarray:
    others = tuple(j for j in range(y.ndim) if j not in U)
    return y.mean(axis=others) if others else y


def exact_decompose(table: FactorialTable, max_order: int = 3, mode: str = "ratio") -> EffectDecomposition:
    space = table.space
    if not 1 <= max_order <= space.n:
        raise DataError(f"max_order must be in 1..{space.n}, got {max_order}")
    y = table.response
    keys = subset_keys(space.n, max_order)
    variances = np.zeros((1, len(keys)))
    for i, U in enumerate(keys):
        f = np.zeros(tuple(space.shape[j] for j in U))
        for r in range(len(U) + 1):
            sign = (-1) ** (len(U) - r)
            for W in itertools.combinations(U, r):
                a = _marginal(y, W)
                shape = [space.shape[j] if j in W else 1 for j in U]
                f = f + sign * a.reshape(shape)
        variances[0, i] = np.mean(f ** 2)
    total = float(np.mean((y - y.mean()) ** 2))
    zero = []
    if total <= 0:
        warnings.warn("response table has zero variance; all fractions are 0", stacklevel=2)
        zero = [0]
    d = EffectDecomposition(space, max_order, keys, variances, np.array([total]), mode, zero)
    if max_order == space.n:
        _check_closure(d, [float(np.mean(y ** 2))])
    return d
