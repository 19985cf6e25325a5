"""CSV/JSON renderings of decompositions. Percentages carry 2 decimals."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from typing import Sequence

import numpy as np

from .errors import DataError
from .fanova import EffectDecomposition, cumulative_summary, pair_table, triplet_table
from .similarity import EffectVector


def pct(x: float) -> str:
    return f"{x:.2f}"


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def effects_csv(d: EffectDecomposition) -> str:
    return _csv(["subset", "order", "fraction_percent"],
                ([";".join(d.names(k)), len(k), pct(100 * f)] for k, f in zip(d.keys, d.fraction_array)))


def effects_json(d: EffectDecomposition) -> str:
    doc = {
        "modules": d.space.names,
        "max_order": d.max_order,
        "fraction_mode": d.mode,
        "subsets": [";".join(d.names(k)) for k in d.keys],
        "fractions": d.fraction_array.tolist(),
        "per_tree": {"variances": d.variances.tolist(), "totals": d.totals.tolist()},
        "zero_variance_trees": d.zero_variance_trees,
    }
    return json.dumps(doc, indent=1) + "\n"


def summary_csv(d: EffectDecomposition, algorithm: str = "", dimension="", budget="") -> str:
    s = cumulative_summary(d)
    return _csv(["algorithm", "dimension", "budget", "individual", "pairwise", "triple", "total"],
                [[algorithm, dimension, budget, *(pct(x) for x in s.as_row())]])


def pairs_csv(d: EffectDecomposition) -> str:
    return _csv(["module1", "module2", "pairwise", "individual1", "individual2", "pair_total"],
                ([*r.modules, pct(r.pairwise), pct(r.individual1), pct(r.individual2), pct(r.pair_total)]
                 for r in pair_table(d)))


def triplets_csv(d: EffectDecomposition, k: int | None = 5) -> str:
    return _csv(["module1", "module2", "module3", "triplet", "triplet_total"],
                ([*r.modules, pct(r.triplet), pct(r.triplet_total)] for r in triplet_table(d, k)))


def read_effects(text: str, name: str, problem_id) -> EffectVector:
    """Effect vector (fractions in [0, 1]) from an effects CSV or effects JSON document."""
    if name.endswith(".json"):
        try:
            doc = json.loads(text)
            pairs = list(zip(doc["subsets"], doc["fractions"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{name}: not an effects JSON document ({exc})") from None
    else:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["subset", "order", "fraction_percent"]:
            raise DataError(f"{name}: not an effects CSV (header {reader.fieldnames})")
        pairs = [(row["subset"], float(row["fraction_percent"]) / 100) for row in reader]
    pairs = [(s, f) for s, f in pairs if len(s.split(";")) <= 3]
    return EffectVector(problem_id, np.array([f for _, f in pairs]), tuple(s for s, _ in pairs))


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
