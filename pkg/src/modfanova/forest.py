"""Seeded random forest over nominal features with exact subset splits.

Every tree keeps, for each leaf, the option subsets consistent with its
root-to-leaf path. Those partitions tile the configuration space and make
uniform-measure marginals of the tree computable in closed form.

Randomness: tree ``t`` of a forest with seed ``s`` draws from
``numpy.random.Philox`` keyed with the 128-bit pair ``(s, t)``. Bootstrap
indices are drawn first, then one permutation of the modules per node that
attempts a split, in depth-first (left subtree first) order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError, InvariantViolation
from .pipeline import Dataset
from .space import ConfigSpace, Variant, parse_config_space

# relative SSE difference under which two candidate splits count as tied
TIE_RTOL = 1e-12


@dataclass
class FitParams:
    n_trees: int = 64
    bootstrap: bool = True
    features_per_split: int | None = None  # None -> ceil(n / 2), 0 -> all modules
    min_samples_leaf: int = 1
    max_depth: int | None = None  # None -> unlimited
    seed: int = 0

    @classmethod
    def exact(cls, seed: int = 0) -> "FitParams":
        """One deterministic tree on all features, no bootstrap: interpolates the data."""
        return cls(n_trees=1, bootstrap=False, features_per_split=0, min_samples_leaf=1, seed=seed)

    def resolved(self, n: int) -> "FitParams":
        fps = self.features_per_split
        if fps is None:
            fps = math.ceil(n / 2)
        elif fps == 0:
            fps = n
        p = FitParams(self.n_trees, self.bootstrap, fps, self.min_samples_leaf, self.max_depth, self.seed)
        if p.n_trees < 1 or p.min_samples_leaf < 1 or not 1 <= p.features_per_split <= n:
            raise DataError(f"invalid fit parameters {p} for {n} modules")
        if p.max_depth is not None and p.max_depth < 0:
            raise DataError("max_depth must be non-negative")
        if p.seed < 0:
            raise DataError("seed must be non-negative")
        return p


@dataclass
class Split:
    module: int
    left: tuple[int, ...]
    left_child: "Node"
    right_child: "Node"


@dataclass
class Leaf:
    value: float
    partition: tuple[tuple[int, ...], ...]  # per module, the options reaching this leaf


Node = Split | Leaf


def tree_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(t)))


@dataclass
class Tree:
    space: ConfigSpace
    root: Node
    leaves: list[Leaf] = field(init=False)

    def __post_init__(self):
        self.leaves = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                self.leaves.append(node)
            else:
                stack.append(node.right_child)
                stack.append(node.left_child)

    def leaf_for(self, v: Variant) -> Leaf:
        node = self.root
        while isinstance(node, Split):
            node = node.left_child if v[node.module] in node.left else node.right_child
        return node

    def predict(self, v: Variant) -> float:
        return self.leaf_for(v).value

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(values, masks, fractions)`` of the leaves.

        ``masks[l, j, o]`` is true iff option ``o`` of module ``j`` is in the
        leaf partition; ``fractions[l, j] = |P_lj| / k_j``.
        """
        shape = self.space.shape
        kmax = max(shape)
        L, n = len(self.leaves), self.space.n
        values = np.array([leaf.value for leaf in self.leaves])
        masks = np.zeros((L, n, kmax), dtype=bool)
        for l, leaf in enumerate(self.leaves):
            for j, opts in enumerate(leaf.partition):
                masks[l, j, list(opts)] = True
        fractions = masks.sum(axis=2) / np.array(shape, dtype=float)
        return values, masks, fractions

    def to_json(self) -> dict:
        return _node_to_json(self.root)


@dataclass
class Forest:
    space: ConfigSpace
    trees: list[Tree]
    params: FitParams

    def predict(self, v: Variant) -> float:
        return float(np.mean([t.predict(v) for t in self.trees]))

    def to_json(self) -> dict:
        return {"space": self.space.to_json(), "params": asdict(self.params),
                "trees": [t.to_json() for t in self.trees]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "Forest":
        try:
            space = parse_config_space(json.dumps(doc["space"]))
            params = FitParams(**doc["params"])
            trees = [Tree(space, _node_from_json(t)) for t in doc["trees"]]
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed forest document: {exc}") from exc
        return cls(space, trees, params)

    @classmethod
    def loads(cls, text: str) -> "Forest":
        return cls.from_json(json.loads(text))


def predict(model: Tree | Forest, v: Variant) -> float:
    return model.predict(v)


def _node_to_json(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value, "partition": [list(p) for p in node.partition]}
    return {"module": node.module, "left": list(node.left),
            "children": [_node_to_json(node.left_child), _node_to_json(node.right_child)]}


def _node_from_json(doc: dict) -> Node:
    if "value" in doc:
        return Leaf(float(doc["value"]), tuple(tuple(p) for p in doc["partition"]))
    left, right = doc["children"]
    return Split(int(doc["module"]), tuple(doc["left"]), _node_from_json(left), _node_from_json(right))


def _partitions(present: np.ndarray):
    """Binary partitions of ``present``, each once, as the side holding the smallest option."""
    first, rest = present[0], present[1:]
    m = len(rest)
    for mask in range(2 ** m - 1):  # excludes all-of-rest, which would leave the right side empty
        yield (first, *(rest[i] for i in range(m) if mask >> i & 1))


def best_split(X: np.ndarray, y: np.ndarray, candidates, min_samples_leaf: int = 1):
    """Exhaustive best binary subset split over ``candidates``.

    Returns ``(module, left_options)`` minimizing the summed child SSE, or
    ``None`` if the responses are constant or no admissible split exists.
    A split that leaves SSE unchanged is still returned: pure interaction
    effects have no marginal signal at the root but do after splitting.
    Ties go to the lowest module index, then the lexicographically smallest
    left option set.
    """
    y = np.asarray(y, dtype=float)
    r = y - y.mean()
    parent_sse = float(r @ r)
    if len(y) < 2 or parent_sse == 0.0 or np.ptp(y) == 0:
        return None
    best = []
    for j in candidates:
        col = X[:, j]
        present = np.unique(col)
        if len(present) < 2:
            continue
        kk = int(present[-1]) + 1
        sums = np.bincount(col, weights=r, minlength=kk)
        counts = np.bincount(col, minlength=kk)
        for left in _partitions(present):
            nl = int(counts[list(left)].sum())
            nr = len(y) - nl
            if nl < min_samples_leaf or nr < min_samples_leaf:
                continue
            sl = float(sums[list(left)].sum())
            sse = parent_sse - sl * sl / nl - sl * sl / nr  # right sum is -sl since r is centered
            best.append((sse, int(j), tuple(int(o) for o in left)))
    if not best:
        return None
    lowest = min(b[0] for b in best)
    # centering leaves an error of ~eps * max|y| per residual; ties must absorb it
    # so that shifting the responses does not flip a tie
    rounding = 8 * np.finfo(float).eps * float(np.abs(y).max()) * math.sqrt(len(y) * parent_sse)
    tol = TIE_RTOL * parent_sse + rounding
    _, j, left = min((b for b in best if b[0] <= lowest + tol), key=lambda b: (b[1], b[2]))
    return j, left


def fit_tree(data: Dataset, params: FitParams, rng: np.random.Generator,
             rows: np.ndarray | None = None) -> Tree:
    """Grow one tree on ``data`` (optionally on the resampled ``rows`` only)."""
    if len(data) == 0:
        raise DataError("cannot fit a tree on an empty dataset")
    space = data.space
    p = params.resolved(space.n)
    X = data.variants if rows is None else data.variants[rows]
    y = data.responses if rows is None else data.responses[rows]

    def grow(idx: np.ndarray, reach: list[tuple[int, ...]], depth: int) -> Node:
        ys = y[idx]
        stop = (len(idx) < 2 * p.min_samples_leaf or np.ptp(ys) == 0
                or (p.max_depth is not None and depth >= p.max_depth))
        split = None
        if not stop:
            Xn = X[idx]
            candidates = []
            for j in rng.permutation(space.n):
                if len(candidates) == p.features_per_split:
                    break
                if len(np.unique(Xn[:, j])) > 1:
                    candidates.append(int(j))
            split = best_split(Xn, ys, sorted(candidates), p.min_samples_leaf)
        if split is None:
            return Leaf(float(ys.mean()), tuple(reach))
        j, left = split
        go_left = np.isin(X[idx, j], left)
        lreach, rreach = list(reach), list(reach)
        lreach[j] = left
        rreach[j] = tuple(o for o in reach[j] if o not in left)
        return Split(j, left,
                     grow(idx[go_left], lreach, depth + 1),
                     grow(idx[~go_left], rreach, depth + 1))

    root = grow(np.arange(len(y)), [tuple(range(k)) for k in space.shape], 0)
    tree = Tree(space, root)
    volume = sum(math.prod(len(o) for o in leaf.partition) for leaf in tree.leaves)
    if volume != space.cardinality:
        raise InvariantViolation(f"leaf partitions cover {volume} of {space.cardinality} variants")
    return tree


def fit_forest(data: Dataset, params: FitParams | None = None) -> Forest:
    params = params or FitParams()
    p = params.resolved(data.space.n)
    if len(data) == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    trees = []
    for t in range(p.n_trees):
        rng = tree_rng(p.seed, t)
        rows = rng.integers(0, len(data), size=len(data)) if p.bootstrap else None
        trees.append(fit_tree(data, p, rng, rows))
    return Forest(data.space, trees, p)
