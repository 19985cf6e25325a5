"""Problems represented by their effect fractions, compared by cosine similarity."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .errors import DataError
from .fanova import EffectDecomposition, subset_keys
from .pipeline import fmt


@dataclass
class EffectVector:
    problem_id: int | str
    values: np.ndarray
    labels: tuple[str, ...] = ()

    def __len__(self):
        return len(self.values)


def effect_vector(d: EffectDecomposition, problem_id) -> EffectVector:
    """All fractions of order 1 to 3 in canonical subset order."""
    if d.max_order < 3:
        raise DataError("effect vectors need interactions up to order 3")
    keys = subset_keys(d.space.n, 3)
    f = d.fractions
    values = np.array([f[k] for k in keys])
    labels = tuple(";".join(d.names(k)) for k in keys)
    assert len(values) == sum(comb(d.space.n, r) for r in (1, 2, 3))
    return EffectVector(problem_id, values, labels)


def cosine_similarity(a: EffectVector, b: EffectVector) -> float:
    if len(a) != len(b):
        raise DataError(f"effect vectors differ in length ({len(a)} vs {len(b)})")
    if a.labels and b.labels and a.labels != b.labels:
        raise DataError("effect vectors cover different subsets")
    na, nb = np.linalg.norm(a.values), np.linalg.norm(b.values)
    if na == 0 or nb == 0:
        warnings.warn(f"zero effect vector for problem {a.problem_id if na == 0 else b.problem_id}; "
                      "similarity set to 0", stacklevel=2)
        return 0.0
    return float(np.clip(a.values @ b.values / (na * nb), -1.0, 1.0))


def similarity_matrix(vectors: Sequence[EffectVector]) -> np.ndarray:
    m = len(vectors)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            out[i, j] = out[j, i] = cosine_similarity(vectors[i], vectors[j])
    return out


def matrix_to_csv(ids: Sequence, matrix: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem_id", *ids])
    for pid, row in zip(ids, matrix):
        w.writerow([pid, *(fmt(x) for x in row)])
    return buf.getvalue()
