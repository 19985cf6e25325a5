"""Categorical configuration spaces of modular optimizers."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from math import prod
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .errors import DataError

Variant = tuple[int, ...]

FIXTURES = ("modcma", "modde")


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    options: tuple[str, ...]

    def __post_init__(self):
        if not self.options:
            raise DataError(f"module {self.name!r} has an empty option list")
        if len(set(self.options)) != len(self.options):
            raise DataError(f"module {self.name!r} has duplicate option labels")

    @property
    def k(self) -> int:
        return len(self.options)


@dataclass(frozen=True)
class ConfigSpace:
    """Ordered product of finite module option sets."""

    modules: tuple[ModuleSpec, ...]

    def __post_init__(self):
        names = [m.name for m in self.modules]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate module names in {names}")

    @property
    def n(self) -> int:
        return len(self.modules)

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modules]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(m.k for m in self.modules)

    @property
    def cardinality(self) -> int:
        return prod(self.shape)

    def module_index(self, name: str) -> int:
        for j, m in enumerate(self.modules):
            if m.name == name:
                return j
        raise DataError(f"unknown module {name!r}")

    def labels(self, variant: Variant) -> dict[str, str]:
        """Inverse of :func:`encode_variant`."""
        self.check(variant)
        return {m.name: m.options[i] for m, i in zip(self.modules, variant)}

    def check(self, variant: Sequence[int]) -> None:
        if len(variant) != self.n:
            raise DataError(f"variant {tuple(variant)} has {len(variant)} entries, expected {self.n}")
        for m, i in zip(self.modules, variant):
            if not 0 <= i < m.k:
                raise DataError(f"option index {i} out of range for module {m.name!r}")

    def index_of(self, variant: Variant) -> int:
        """Position of ``variant`` in lexicographic enumeration order."""
        idx = 0
        for k, i in zip(self.shape, variant):
            idx = idx * k + i
        return idx

    def to_json(self) -> list[dict]:
        return [{"name": m.name, "options": list(m.options)} for m in self.modules]

    def subspace_names(self, key: Sequence[int]) -> list[str]:
        return [self.modules[j].name for j in key]


def parse_config_space(text: str) -> ConfigSpace:
    """Build a space from a JSON list of ``{"name", "options"}`` entries."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"config space is not valid JSON: {exc}") from exc
    if not isinstance(doc, list) or not doc:
        raise DataError("config space must be a non-empty JSON list")
    modules = []
    for entry in doc:
        if not isinstance(entry, dict) or set(entry) != {"name", "options"}:
            raise DataError(f"malformed module entry: {entry!r}")
        name, options = entry["name"], entry["options"]
        if not isinstance(name, str) or not isinstance(options, list):
            raise DataError(f"malformed module entry: {entry!r}")
        modules.append(ModuleSpec(name, tuple(str(o) for o in options)))
    return ConfigSpace(tuple(modules))


def load_space(source: str | Path) -> ConfigSpace:
    """Load a space from a path, or one of the bundled fixture names."""
    if str(source) in FIXTURES:
        text = resources.files("modfanova.fixtures").joinpath(f"{source}.json").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise DataError(f"cannot read config space {source}: {exc}") from exc
    return parse_config_space(text)


def encode_variant(space: ConfigSpace, labels: Mapping[str, str]) -> Variant:
    unknown = set(labels) - set(space.names)
    if unknown:
        raise DataError(f"unknown module(s): {sorted(unknown)}")
    out = []
    for m in space.modules:
        if m.name not in labels:
            raise DataError(f"missing module {m.name!r}")
        label = str(labels[m.name])
        try:
            out.append(m.options.index(label))
        except ValueError:
            raise DataError(f"unknown option {label!r} for module {m.name!r}") from None
    return tuple(out)


def enumerate_variants(space: ConfigSpace) -> Iterator[Variant]:
    """All variants in lexicographic index order."""
    return itertools.product(*(range(k) for k in space.shape))
