"""Functional-ANOVA module importance for modular optimization frameworks."""

__version__ = "0.1.0"

from .errors import DataError, InvariantViolation
from .fanova import (
    EffectDecomposition,
    component_value,
    cumulative_summary,
    decompose,
    pair_table,
    subset_keys,
    subset_variance,
    total_variance,
    tree_marginal,
    triplet_table,
)
from .forest import FitParams, Forest, Tree, best_split, fit_forest, fit_tree, predict
from .oracle import FactorialTable, exact_decompose, to_factorial
from .pipeline import (
    Dataset,
    PrecisionCell,
    RunRecord,
    aggregate_problem_level,
    aggregate_suite_level,
    extract_at_budget,
    generate_synthetic,
    ingest_runs,
    solution_precision,
)
from .similarity import EffectVector, cosine_similarity, effect_vector, similarity_matrix
from .space import ConfigSpace, ModuleSpec, encode_variant, enumerate_variants, load_space, parse_config_space

__all__ = [
    "aggregate_problem_level",
    "aggregate_suite_level",
    "best_split",
    "component_value",
    "ConfigSpace",
    "cosine_similarity",
    "cumulative_summary",
    "DataError",
    "Dataset",
    "decompose",
    "effect_vector",
    "EffectDecomposition",
    "EffectVector",
    "encode_variant",
    "enumerate_variants",
    "exact_decompose",
    "extract_at_budget",
    "FactorialTable",
    "fit_forest",
    "fit_tree",
    "FitParams",
    "Forest",
    "generate_synthetic",
    "ingest_runs",
    "InvariantViolation",
    "load_space",
    "ModuleSpec",
    "pair_table",
    "parse_config_space",
    "PrecisionCell",
    "predict",
    "RunRecord",
    "similarity_matrix",
    "solution_precision",
    "subset_keys",
    "subset_variance",
    "to_factorial",
    "total_variance",
    "Tree",
    "tree_marginal",
    "triplet_table",
]
