"""Command-line front end: ``modfanova {ingest,analyze,similarity,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, InvariantViolation
from .fanova import canonical, decompose
from .forest import FitParams, Forest, fit_forest
from .oracle import exact_decompose, to_factorial
from .pipeline import (
    Dataset,
    aggregate_problem_level,
    aggregate_suite_level,
    cells_from_csv,
    cells_to_csv,
    csv_kind,
    dataset_from_csv,
    dataset_to_csv,
    generate_synthetic,
    ingest_runs,
    ingest_trajectories,
    precision_cells,
    random_truth,
)
from .reports import (
    effects_csv,
    effects_json,
    pairs_csv,
    read_effects,
    sha256,
    summary_csv,
    triplets_csv,
)
from .similarity import matrix_to_csv, similarity_matrix
from .space import ConfigSpace, load_space

log = logging.getLogger("modfanova")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _write_outputs(outputs: dict[Path, str]) -> None:
    """Write every file or none: anything written before a failure is removed."""
    written = []
    try:
        for path, text in outputs.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise


def _space_ref(arg: str) -> dict:
    p = Path(arg)
    if p.exists():
        return {"path": arg, "sha256": sha256(p.read_bytes())}
    return {"fixture": arg}


def parse_budget(text: str, dimension: int | None) -> int:
    """``"500d"`` means 500 times the dimension; a bare integer is taken as is."""
    text = text.strip()
    try:
        if text.endswith("d"):
            if dimension is None:
                raise UsageError("--budget given as a multiple of d needs --dim")
            return int(text[:-1]) * dimension
        return int(text)
    except ValueError:
        raise UsageError(f"cannot parse budget {text!r}") from None


# -- ingest ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    space = load_space(args.space)
    records = []
    for path in args.data or []:
        records += ingest_runs(_read(path), space)
    if args.trajectories:
        if not args.optima:
            raise UsageError("--trajectories needs --optima")
        mults = [int(m) for m in args.budgets.split(",")]
        records += ingest_trajectories(_read(args.trajectories), _read(args.optima), space, mults)
    if not records and not args.data:
        raise UsageError("nothing to ingest: give --data and/or --trajectories")
    cells = precision_cells(records, floor=args.floor)
    _write_outputs({Path(args.out): cells_to_csv(cells, space)})
    log.info("wrote %d precision cells to %s", len(cells), args.out)
    return 0


# -- analyze -----------------------------------------------------------------

def _load_inputs(space: ConfigSpace, paths: list[str]):
    """Either a ready dataset (``response`` CSV) or a list of precision cells."""
    cells, datasets = [], []
    for path in paths:
        text = _read(path)
        kind = csv_kind(text)
        if kind == "runs":
            cells += precision_cells(ingest_runs(text, space))
        elif kind == "cells":
            cells += cells_from_csv(text, space)
        elif kind == "dataset":
            datasets.append(dataset_from_csv(text, space))
        else:
            raise DataError(f"{path}: trajectory files must go through `ingest` first")
    if datasets and cells:
        raise DataError("cannot mix dataset CSVs with run/cell CSVs")
    if len(datasets) > 1:
        raise DataError("give a single dataset CSV")
    return (datasets[0] if datasets else None), cells


def _fit_params(args, n: int) -> FitParams:
    if args.exact:
        return FitParams.exact(seed=args.seed).resolved(n)
    return FitParams(n_trees=args.trees, bootstrap=args.bootstrap,
                     features_per_split=args.features_per_split, min_samples_leaf=args.min_leaf,
                     max_depth=args.max_depth, seed=args.seed).resolved(n)


def _analyze_one(args, space: ConfigSpace, data: Dataset, out: Path, manifest_base: dict,
                 model_path: Path | None) -> dict[Path, str]:
    if len(data) == 0:
        raise DataError("no rows matched")
    outputs: dict[Path, str] = {}
    manifest = dict(manifest_base, scenario=data.scenario, rows=len(data), metadata=data.metadata)
    if args.engine == "exact":
        d = exact_decompose(to_factorial(data), args.max_order, args.fraction_mode)
    else:
        if args.load_model:
            forest = Forest.loads(_read(args.load_model))
            if forest.space != space:
                raise DataError("loaded model was fitted on a different configuration space")
        else:
            forest = fit_forest(data, _fit_params(args, space.n))
        manifest["fit_params"] = vars(forest.params)
        if model_path is not None:
            outputs[model_path] = forest.dumps() + "\n"
        d = decompose(forest, args.max_order, args.fraction_mode)
    manifest["zero_variance_trees"] = d.zero_variance_trees

    outputs[out / "effects.csv"] = effects_csv(d)
    outputs[out / "effects.json"] = effects_json(d)
    if d.max_order >= 2:
        outputs[out / "pairs.csv"] = pairs_csv(d)
    if d.max_order >= 3:
        dim = data.metadata.get("dimension", "")
        budget = args.budget if args.budget is not None else ""
        outputs[out / "summary.csv"] = summary_csv(d, args.algorithm or "", dim, budget)
        outputs[out / "triplets.csv"] = triplets_csv(d, args.top_k)
    else:
        log.warning("max order %d < 3: summary.csv and triplets.csv are not produced", d.max_order)
    manifest["outputs"] = sorted(p.name for p in outputs) + ["run-manifest.json"]
    outputs[out / "run-manifest.json"] = json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n"
    return outputs


def cmd_analyze(args) -> int:
    space = load_space(args.space)
    if args.max_order is None:
        args.max_order = min(3, space.n)
    if args.algorithm is None:
        args.algorithm = Path(args.space).stem
    if args.load_model and args.scenario == "all-problems":
        raise UsageError("--load-model works with a single analysis, not all-problems")
    data, cells = _load_inputs(space, args.data)
    out = Path(args.out)
    base = {
        "tool": "modfanova", "version": __version__, "command": "analyze",
        "space": _space_ref(args.space),
        "inputs": [{"path": p, "sha256": sha256(Path(p).read_bytes())} for p in args.data],
        "engine": args.engine, "max_order": args.max_order, "fraction_mode": args.fraction_mode,
        "seed": args.seed, "exact_preset": args.exact, "algorithm": args.algorithm,
        "dimension": args.dim, "budget": args.budget, "top_k": args.top_k,
        "load_model": args.load_model,
    }
    model_path = Path(args.save_model) if args.save_model else None
    if data is not None:
        _write_outputs(_analyze_one(args, space, data, out, base, model_path))
        return 0

    if args.dim is None or args.budget is None:
        raise UsageError("--dim and --budget are required for run or cell inputs")
    budget = parse_budget(args.budget, args.dim)
    if args.scenario == "suite":
        data = aggregate_suite_level(cells, space, args.dim, budget)
        outputs = _analyze_one(args, space, data, out, base, model_path)
    elif args.scenario == "problem":
        if args.problem is None:
            raise UsageError("--scenario problem needs --problem")
        data = aggregate_problem_level(cells, space, args.problem, args.dim, budget)
        outputs = _analyze_one(args, space, data, out, base, model_path)
    else:
        problems = sorted({c.problem_id for c in cells if c.dimension == args.dim and c.budget == budget})
        if not problems:
            raise DataError(f"no rows matched (dimension={args.dim}, budget={budget})")
        outputs = {}
        for pid in problems:
            data = aggregate_problem_level(cells, space, pid, args.dim, budget)
            sub = out / f"problem_{pid}"
            outputs.update(_analyze_one(args, space, data, sub, base,
                                        sub / model_path.name if model_path else None))
        outputs[out / "run-manifest.json"] = json.dumps(
            dict(base, scenario="all-problems", problems=problems), indent=1, sort_keys=True) + "\n"
    _write_outputs(outputs)
    return 0


# -- similarity --------------------------------------------------------------

def _find_effects(root: Path, pid) -> Path:
    for cand in (root / f"problem_{pid}" / "effects.json", root / f"problem_{pid}" / "effects.csv",
                 root / f"effects_{pid}.json", root / f"effects_{pid}.csv"):
        if cand.exists():
            return cand
    raise DataError(f"no effects file for problem {pid} under {root}")


def cmd_similarity(args) -> int:
    root = Path(args.effects_dir)
    if args.problems:
        ids = [p.strip() for p in args.problems.split(",") if p.strip()]
    else:
        ids = sorted((p.name.removeprefix("problem_") for p in root.glob("problem_*") if p.is_dir()),
                     key=lambda s: (len(s), s))
    if not ids:
        raise DataError(f"no per-problem effects found under {root}")
    vectors = []
    for pid in ids:
        path = _find_effects(root, pid)
        vectors.append(read_effects(_read(path), path.name, pid))
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        raise DataError(f"effect vectors have different lengths {sorted(lengths)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        matrix = similarity_matrix(vectors)
    for w in caught:
        log.warning("%s", w.message)
    out = Path(args.out)
    target = out if out.suffix == ".csv" else out / "similarity.csv"
    _write_outputs({target: matrix_to_csv(ids, matrix)})
    return 0


# -- synth -------------------------------------------------------------------

def parse_truth(doc: dict, space: ConfigSpace, seed: int) -> tuple[dict, float]:
    """Component tables from a truth document.

    ``{"intercept": c, "components": [{"modules": [...], "values": [...]} |
    {"modules": [...], "scale": s}]}``. ``values`` are laid out over the
    listed modules in the listed order (flat lexicographic or nested);
    ``scale`` draws standard-normal values from ``seed`` (or the entry's own
    ``seed``) and multiplies them by ``s``.
    """
    if not isinstance(doc, dict) or not isinstance(doc.get("components"), list):
        raise DataError("truth spec must be an object with a 'components' list")
    truth: dict[tuple[int, ...], np.ndarray] = {}
    for i, entry in enumerate(doc["components"]):
        if not isinstance(entry, dict) or "modules" not in entry:
            raise DataError(f"component {i}: missing 'modules'")
        idx = [space.module_index(m) for m in entry["modules"]]
        key = canonical(idx)
        if "values" in entry:
            shape = tuple(space.shape[j] for j in idx)
            try:
                arr = np.asarray(entry["values"], dtype=float).reshape(shape)
            except (ValueError, TypeError):
                raise DataError(f"component {i}: expected {int(np.prod(shape))} numeric values") from None
            arr = np.transpose(arr, np.argsort(idx))
        elif "scale" in entry:
            arr = random_truth(space, [key], seed=int(entry.get("seed", seed + 1000 * i)),
                               scale=float(entry["scale"]))[key]
        else:
            raise DataError(f"component {i}: needs 'values' or 'scale'")
        truth[key] = truth.get(key, 0) + arr
    return truth, float(doc.get("intercept", 0.0))


def cmd_synth(args) -> int:
    space = load_space(args.space)
    try:
        doc = json.loads(_read(args.truth))
    except json.JSONDecodeError as exc:
        raise DataError(f"truth spec is not valid JSON: {exc}") from exc
    truth, intercept = parse_truth(doc, space, args.seed)
    _, gt = generate_synthetic(space, truth, 0.0, args.seed, intercept)
    noise = args.noise * np.sqrt(gt.total_variance) if args.noise_relative else args.noise
    data, gt = generate_synthetic(space, truth, noise, args.seed, intercept)
    fractions = gt.fractions()
    sidecar = {
        "space": _space_ref(args.space), "seed": args.seed, "noise_sd": noise,
        "intercept": intercept, "total_variance": gt.total_variance,
        "components": [{"subset": ";".join(space.subspace_names(k)), "order": len(k),
                        "variance": v, "fraction": fractions[k]} for k, v in gt.variances.items()],
    }
    out = Path(args.out)
    _write_outputs({out / "dataset.csv": dataset_to_csv(data),
                    out / "truth.json": json.dumps(sidecar, indent=1) + "\n"})
    return 0


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="modfanova", description="Module importance via functional ANOVA over random forests.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="run or trajectory CSV -> precision-cell CSV")
    p.add_argument("--space", required=True, help="config-space JSON path, or 'modcma' / 'modde'")
    p.add_argument("--data", action="append", help="run CSV (repeatable)")
    p.add_argument("--trajectories", help="trajectory CSV")
    p.add_argument("--optima", help="per-instance optima CSV for --trajectories")
    p.add_argument("--budgets", default="100,500,1500", help="budget multipliers of d for trajectories")
    p.add_argument("--floor", type=float, default=1e-8, help="precision clamp before log10")
    p.add_argument("--out", required=True, help="output cells CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="decompose performance variance into module effects")
    p.add_argument("--space", required=True, help="config-space JSON path, or 'modcma' / 'modde'")
    p.add_argument("--data", action="append", required=True, help="run, cell or dataset CSV (repeatable)")
    p.add_argument("--scenario", choices=["suite", "problem", "all-problems"], default="suite")
    p.add_argument("--problem", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--budget", help="evaluations, or a multiple of the dimension such as 500d")
    p.add_argument("--engine", choices=["forest", "exact"], default="forest")
    p.add_argument("--exact", action="store_true", help="one tree, no bootstrap, all features, min leaf 1")
    p.add_argument("--trees", type=int, default=64)
    p.add_argument("--bootstrap", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--features-per-split", type=int, default=None, help="default ceil(n/2)")
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--max-order", type=int, default=None, help="default min(3, n)")
    p.add_argument("--fraction-mode", choices=["ratio", "pooled"], default="ratio")
    p.add_argument("--top-k", type=int, default=5, help="triplets to report")
    p.add_argument("--algorithm", help="label for summary.csv (default: space name)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-model", help="write the fitted forest as JSON")
    p.add_argument("--load-model", help="decompose a previously saved forest instead of fitting")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("similarity", help="cosine similarity of per-problem effect vectors")
    p.add_argument("--effects-dir", required=True)
    p.add_argument("--problems", help="comma-separated problem ids (default: all problem_* dirs)")
    p.add_argument("--out", required=True, help="output directory or .csv path")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("synth", help="full-factorial synthetic dataset with known effects")
    p.add_argument("--space", required=True)
    p.add_argument("--truth", required=True, help="truth spec JSON")
    p.add_argument("--noise", type=float, default=0.0, help="noise standard deviation")
    p.add_argument("--noise-relative", action="store_true", help="--noise is a multiple of the signal std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"modfanova: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"modfanova: data error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"modfanova: internal invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
