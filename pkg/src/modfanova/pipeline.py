"""From raw run records to the suite-level and problem-level analysis datasets.

Order of operations is fixed: median over runs, clamp and log10 per
(variant, problem instance), then mean (suite) or median (problem) over
instances.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .space import ConfigSpace, Variant, encode_variant, enumerate_variants

PRECISION_FLOOR = 1e-8

RUN_COLUMNS = ("dimension", "budget", "problem_id", "instance_id", "run_id", "precision")
TRAJECTORY_COLUMNS = ("dimension", "problem_id", "instance_id", "run_id", "evals", "best_f")
CELL_COLUMNS = ("dimension", "budget", "problem_id", "instance_id", "log_precision")


def fmt(x: float) -> str:
    """Float serialization used by every CSV writer."""
    return format(float(x), ".12g")


@dataclass(frozen=True)
class RunRecord:
    variant: Variant
    problem_id: int
    instance_id: int
    run_id: int
    dimension: int
    budget: int
    precision: float

    def __post_init__(self):
        if not self.precision >= 0:
            raise DataError(f"negative or NaN precision {self.precision} in run {self}")
        if self.budget <= 0 or self.dimension <= 0:
            raise DataError(f"budget and dimension must be positive in run {self}")

    @property
    def key(self):
        return (self.variant, self.problem_id, self.instance_id, self.dimension, self.budget)


@dataclass(frozen=True)
class PrecisionCell:
    variant: Variant
    problem_id: int
    instance_id: int
    dimension: int
    budget: int
    log_precision: float


@dataclass
class Dataset:
    """One response per variant for a single analysis scenario."""

    space: ConfigSpace
    variants: np.ndarray  # (rows, n) option indices
    responses: np.ndarray  # (rows,)
    scenario: str = "synthetic"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variants = np.asarray(self.variants, dtype=np.int64).reshape(-1, self.space.n)
        self.responses = np.asarray(self.responses, dtype=float).reshape(-1)
        if len(self.variants) != len(self.responses):
            raise DataError("variants and responses differ in length")
        if len(self.variants):
            if (self.variants < 0).any() or (self.variants >= np.array(self.space.shape)).any():
                raise DataError("variant option index out of range for the space")
            if len(np.unique(self.variants, axis=0)) != len(self.variants):
                raise DataError("duplicate variants in dataset")
        if not np.isfinite(self.responses).all():
            raise DataError("non-finite response values in dataset")

    def __len__(self):
        return len(self.responses)

    @property
    def rows(self) -> list[tuple[Variant, float]]:
        return [(tuple(int(i) for i in v), float(y)) for v, y in zip(self.variants, self.responses)]

    @classmethod
    def from_rows(cls, space, rows: Iterable[tuple[Sequence[int], float]], **kw) -> "Dataset":
        rows = list(rows)
        variants = [tuple(v) for v, _ in rows]
        responses = [y for _, y in rows]
        return cls(space, np.array(variants, dtype=np.int64).reshape(-1, space.n), responses, **kw)


def _read_csv(text: str, required: Sequence[str], space: ConfigSpace) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in (*space.names, *required) if c not in header]
    if missing:
        raise DataError(f"CSV header lacks columns {missing}; got {header}")
    return list(reader)


def _int(row: dict, col: str, line: int) -> int:
    try:
        return int(row[col])
    except (TypeError, ValueError):
        raise DataError(f"line {line}: column {col!r} is not an integer: {row[col]!r}") from None


def _float(row: dict, col: str, line: int) -> float:
    try:
        return float(row[col])
    except (TypeError, ValueError):
        raise DataError(f"line {line}: column {col!r} is not a number: {row[col]!r}") from None


def ingest_runs(text: str, space: ConfigSpace) -> list[RunRecord]:
    """Parse the long-format run CSV (one row per run)."""
    records = []
    for line, row in enumerate(_read_csv(text, RUN_COLUMNS, space), start=2):
        variant = encode_variant(space, {m: row[m] for m in space.names})
        try:
            records.append(RunRecord(
                variant=variant,
                problem_id=_int(row, "problem_id", line),
                instance_id=_int(row, "instance_id", line),
                run_id=_int(row, "run_id", line),
                dimension=_int(row, "dimension", line),
                budget=_int(row, "budget", line),
                precision=_float(row, "precision", line),
            ))
        except DataError as exc:
            raise DataError(f"line {line}: {exc}") from None
    return records


def extract_at_budget(trajectory: Sequence[tuple[float, float]], budget: int, optimum: float) -> float:
    """Target precision of a best-so-far trajectory after ``budget`` evaluations."""
    if not trajectory:
        raise DataError("empty trajectory")
    evals = [e for e, _ in trajectory]
    if any(b <= a for a, b in zip(evals, evals[1:])):
        raise DataError("trajectory evaluations must be strictly increasing")
    if budget < evals[0]:
        raise DataError(f"budget {budget} precedes the first trajectory record at {evals[0]}")
    best = None
    for e, f in trajectory:
        if e > budget:
            break
        best = f
    return best - optimum


def ingest_trajectories(traj_text: str, optima_text: str, space: ConfigSpace,
                        budget_multipliers: Sequence[int]) -> list[RunRecord]:
    """Turn best-so-far trajectories into run records at budgets ``m * dimension``."""
    optima = {}
    for line, row in enumerate(csv.DictReader(io.StringIO(optima_text)), start=2):
        try:
            optima[(int(row["problem_id"]), int(row["instance_id"]))] = float(row["optimum"])
        except (KeyError, TypeError, ValueError):
            raise DataError(f"optima file line {line}: malformed row {row!r}") from None

    runs: dict[tuple, list[tuple[int, float]]] = defaultdict(list)
    for line, row in enumerate(_read_csv(traj_text, TRAJECTORY_COLUMNS, space), start=2):
        variant = encode_variant(space, {m: row[m] for m in space.names})
        key = (variant, _int(row, "dimension", line), _int(row, "problem_id", line),
               _int(row, "instance_id", line), _int(row, "run_id", line))
        runs[key].append((_int(row, "evals", line), _float(row, "best_f", line)))

    records = []
    for (variant, dim, pid, iid, rid), traj in sorted(runs.items()):
        if (pid, iid) not in optima:
            raise DataError(f"no optimum for problem {pid} instance {iid}")
        traj.sort()
        for m in budget_multipliers:
            budget = m * dim
            records.append(RunRecord(variant, pid, iid, rid, dim, budget,
                                     extract_at_budget(traj, budget, optima[(pid, iid)])))
    return records


def solution_precision(records: Sequence[RunRecord], floor: float = PRECISION_FLOOR) -> PrecisionCell:
    """log10 of the run-median target precision, clamped below at ``floor``."""
    if not records:
        raise DataError("cannot compute solution precision of an empty run group")
    key = records[0].key
    if any(r.key != key for r in records):
        raise DataError("run group mixes different (variant, problem, instance, dimension, budget)")
    med = float(np.median([r.precision for r in records]))
    variant, pid, iid, dim, budget = key
    return PrecisionCell(variant, pid, iid, dim, budget, float(np.log10(max(med, floor))))


def precision_cells(records: Iterable[RunRecord], floor: float = PRECISION_FLOOR) -> list[PrecisionCell]:
    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    for r in records:
        groups[r.key].append(r)
    return [solution_precision(groups[k], floor) for k in sorted(groups)]


def _select(cells: Iterable[PrecisionCell], dimension: int, budget: int, problem_id: int | None = None):
    chosen = [c for c in cells
              if c.dimension == dimension and c.budget == budget
              and (problem_id is None or c.problem_id == problem_id)]
    if not chosen:
        what = f"dimension={dimension}, budget={budget}"
        if problem_id is not None:
            what += f", problem={problem_id}"
        raise DataError(f"no rows matched ({what})")
    return chosen


def _by_variant(cells: Sequence[PrecisionCell]) -> dict[Variant, dict[tuple[int, int], float]]:
    table: dict[Variant, dict[tuple[int, int], float]] = defaultdict(dict)
    for c in cells:
        inst = (c.problem_id, c.instance_id)
        if inst in table[c.variant]:
            raise DataError(f"duplicate cell for variant {c.variant} instance {inst}")
        table[c.variant][inst] = c.log_precision
    expected = sorted({inst for per in table.values() for inst in per})
    missing = [(v, inst) for v in sorted(table) for inst in expected if inst not in table[v]]
    if missing:
        shown = ", ".join(f"variant {v} problem {p} instance {i}" for v, (p, i) in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataError(f"missing {len(missing)} cell(s): {shown}{more}")
    return table


def aggregate_suite_level(cells: Iterable[PrecisionCell], space: ConfigSpace,
                          dimension: int, budget: int) -> Dataset:
    """Mean solution precision per variant across every problem instance present."""
    table = _by_variant(_select(cells, dimension, budget))
    rows = [(v, float(np.mean(list(table[v].values())))) for v in sorted(table)]
    n_inst = len(next(iter(table.values())))
    return Dataset.from_rows(space, rows, scenario="suite",
                             metadata={"dimension": dimension, "budget": budget, "instances": n_inst})


def aggregate_problem_level(cells: Iterable[PrecisionCell], space: ConfigSpace, problem_id: int,
                            dimension: int, budget: int) -> Dataset:
    """Median solution precision per variant across the instances of one problem."""
    table = _by_variant(_select(cells, dimension, budget, problem_id))
    rows = [(v, float(np.median(list(table[v].values())))) for v in sorted(table)]
    n_inst = len(next(iter(table.values())))
    return Dataset.from_rows(space, rows, scenario=f"problem:{problem_id}",
                             metadata={"dimension": dimension, "budget": budget,
                                       "problem_id": problem_id, "instances": n_inst})


# -- CSV round trips ---------------------------------------------------------

def _variant_cols(space: ConfigSpace, v: Sequence[int]) -> list[str]:
    return [space.modules[j].options[int(i)] for j, i in enumerate(v)]


def cells_to_csv(cells: Iterable[PrecisionCell], space: ConfigSpace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant_id", *space.names, *CELL_COLUMNS])
    for c in cells:
        w.writerow([space.index_of(c.variant), *_variant_cols(space, c.variant),
                    c.dimension, c.budget, c.problem_id, c.instance_id, fmt(c.log_precision)])
    return buf.getvalue()


def cells_from_csv(text: str, space: ConfigSpace) -> list[PrecisionCell]:
    out = []
    for line, row in enumerate(_read_csv(text, CELL_COLUMNS, space), start=2):
        variant = encode_variant(space, {m: row[m] for m in space.names})
        out.append(PrecisionCell(variant, _int(row, "problem_id", line), _int(row, "instance_id", line),
                                 _int(row, "dimension", line), _int(row, "budget", line),
                                 _float(row, "log_precision", line)))
    return out


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant_id", *data.space.names, "response"])
    for v, y in data.rows:
        w.writerow([data.space.index_of(v), *_variant_cols(data.space, v), fmt(y)])
    return buf.getvalue()


def dataset_from_csv(text: str, space: ConfigSpace, scenario: str = "synthetic") -> Dataset:
    rows = []
    for line, row in enumerate(_read_csv(text, ("response",), space), start=2):
        rows.append((encode_variant(space, {m: row[m] for m in space.names}), _float(row, "response", line)))
    return Dataset.from_rows(space, sorted(rows), scenario=scenario)


def csv_kind(text: str) -> str:
    """Classify a CSV by header: ``runs``, ``cells``, ``dataset`` or ``trajectories``."""
    header = next(csv.reader(io.StringIO(text)), [])
    if "precision" in header:
        return "runs"
    if "log_precision" in header:
        return "cells"
    if "response" in header:
        return "dataset"
    if "best_f" in header:
        return "trajectories"
    raise DataError(f"unrecognized CSV header: {header}")


# -- synthetic data with known decomposition ---------------------------------

def center_component(table: np.ndarray) -> np.ndarray:
    """Project a table onto its pure interaction part (zero mean along every axis)."""
    g = np.array(table, dtype=float)
    for axis in range(g.ndim):
        g = g - g.mean(axis=axis, keepdims=True)
    return g


@dataclass
class SyntheticTruth:
    components: dict[tuple[int, ...], np.ndarray]  # centered tables
    variances: dict[tuple[int, ...], float]
    total_variance: float

    def fractions(self) -> dict[tuple[int, ...], float]:
        if self.total_variance == 0:
            return {k: 0.0 for k in self.variances}
        return {k: v / self.total_variance for k, v in self.variances.items()}


def generate_synthetic(space: ConfigSpace, truth: Mapping[Sequence[int], np.ndarray],
                       noise_sd: float = 0.0, seed: int = 0,
                       intercept: float = 0.0) -> tuple[Dataset, SyntheticTruth]:
    """Full-factorial dataset from a sum of component tables plus Gaussian noise.

    Each component table is indexed by the options of its modules (in
    ascending module order) and is re-centered so that its analytic variance
    is exactly the variance it contributes. Tables sharing a subset are summed.
    """
    comps: dict[tuple[int, ...], np.ndarray] = {}
    for key, values in truth.items():
        key = tuple(key)
        if not key or list(key) != sorted(set(key)) or key[-1] >= space.n:
            raise DataError(f"invalid component subset {key}")
        arr = np.asarray(values, dtype=float)
        expected = tuple(space.shape[j] for j in key)
        if arr.shape != expected:
            arr = arr.reshape(expected) if arr.size == np.prod(expected) else None
        if arr is None:
            raise DataError(f"component {key} needs {int(np.prod(expected))} values")
        comps[key] = comps.get(key, 0) + arr
    comps = {k: center_component(v) for k, v in comps.items()}

    all_keys = [k for r in range(1, space.n + 1) for k in itertools.combinations(range(space.n), r)]
    variances = {k: float(np.mean(comps[k] ** 2)) if k in comps else 0.0 for k in all_keys}

    signal = np.full(space.shape, float(intercept))
    for key, g in comps.items():
        shape = [1] * space.n
        for j, k in zip(key, g.shape):
            shape[j] = k
        signal = signal + g.reshape(shape)
    y = signal.reshape(-1)
    if noise_sd > 0:
        rng = np.random.Generator(np.random.Philox(key=seed))
        y = y + rng.normal(0.0, noise_sd, size=y.shape)
    variants = np.array(list(enumerate_variants(space)), dtype=np.int64).reshape(-1, space.n)
    data = Dataset(space, variants, y, scenario="synthetic",
                   metadata={"noise_sd": noise_sd, "seed": seed})
    return data, SyntheticTruth(comps, variances, float(sum(variances.values())))


def random_truth(space: ConfigSpace, keys: Iterable[Sequence[int]], seed: int = 0,
                 scale: float | Mapping = 1.0) -> dict[tuple[int, ...], np.ndarray]:
    """Standard-normal component tables for ``keys``, each multiplied by its scale."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    out = {}
    for key in keys:
        key = tuple(key)
        s = scale[key] if isinstance(scale, Mapping) else scale
        out[key] = s * rng.standard_normal(tuple(space.shape[j] for j in key))
    return out
