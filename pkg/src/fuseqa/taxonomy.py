"""Land-cover class hierarchy, bundled nomenclatures, label sets and class weights.

A label set is a 0/1 numpy vector aligned with a :class:`Nomenclature`;
a dataset of label sets is a ``(Q, N)`` array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

BENMM19 = "BENMM19"
RSVQA61 = "RSVQA61"
CUSTOM = "CUSTOM"

EXPECTED_SIZE = {BENMM19: 19, RSVQA61: 61}
BUNDLED_FILES = {BENMM19: "benmm19.json", RSVQA61: "rsvqa61.json"}

# names that occur twice in CLC-2018 and are kept once in the 61-class split
MERGED_NAMES = ("water bodies", "pastures")
EXCLUDED_NAMES = ("glaciers and perpetual snow",)


class NomenclatureError(ValueError):
    pass


class DuplicateName(NomenclatureError):
    pass


class DanglingParent(NomenclatureError):
    pass


class WrongClassCount(NomenclatureError):
    pass


@dataclass(frozen=True)
class ClassDef:
    id: int
    name: str
    level: int
    parent: int | None = None


@dataclass(frozen=True)
class Nomenclature:
    classes: tuple[ClassDef, ...]
    kind: str = CUSTOM

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.classes]

    def index(self, name: str) -> int:
        key = name.strip().lower()
        for c in self.classes:
            if c.name == key:
                return c.id
        raise KeyError(name)

    def ancestors(self, class_id: int) -> list[int]:
        out = []
        parent = self.classes[class_id].parent
        while parent is not None:
            out.append(parent)
            parent = self.classes[parent].parent
        return out

    def to_document(self) -> list[dict]:
        return [
            {
                "name": c.name,
                "level": c.level,
                "parent_name": None if c.parent is None else self.classes[c.parent].name,
            }
            for c in self.classes
        ]


def flat_nomenclature(names, kind: str = CUSTOM) -> Nomenclature:
    """Level-1-only nomenclature from a list of names (handy for tests and presets)."""
    return load_nomenclature([{"name": n, "level": 1, "parent_name": None} for n in names], kind=kind)


def load_nomenclature(source, kind: str = CUSTOM) -> Nomenclature:
    """Build a validated :class:`Nomenclature`.

    ``source`` is a path to a JSON file, a JSON string, or an already decoded
    list of ``{name, level, parent_name}`` entries. File order is index order.
    """
    doc = source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("[")):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, str):
        doc = json.loads(source)
    if not isinstance(doc, list) or not doc:
        raise NomenclatureError("nomenclature document must be a non-empty JSON array")

    names: dict[str, int] = {}
    for i, entry in enumerate(doc):
        name = str(entry["name"]).strip().lower()
        if name in names:
            raise DuplicateName(name)
        names[name] = i

    classes = []
    for i, entry in enumerate(doc):
        name = str(entry["name"]).strip().lower()
        level = int(entry.get("level", 1))
        parent_name = entry.get("parent_name")
        if level not in (1, 2, 3):
            raise NomenclatureError(f"{name!r}: level must be 1, 2 or 3, got {level}")
        parent = None
        if parent_name is not None:
            key = str(parent_name).strip().lower()
            if key not in names:
                raise DanglingParent(f"{name!r} -> {parent_name!r}")
            parent = names[key]
        if (parent is None) != (level == 1):
            raise NomenclatureError(f"{name!r}: a parent is required exactly when level > 1")
        if parent is not None and int(doc[parent].get("level", 1)) != level - 1:
            raise NomenclatureError(f"{name!r}: parent must sit one level above")
        classes.append(ClassDef(i, name, level, parent))

    kind = kind.upper()
    if kind in EXPECTED_SIZE and len(classes) != EXPECTED_SIZE[kind]:
        raise WrongClassCount(f"{kind} expects {EXPECTED_SIZE[kind]} classes, got {len(classes)}")
    if kind == BENMM19 and any(c.parent is not None for c in classes):
        raise NomenclatureError("BENMM19 is a flat nomenclature")
    if kind == RSVQA61:
        for excluded in EXCLUDED_NAMES:
            if excluded in names:
                raise NomenclatureError(f"RSVQA61 must not contain {excluded!r}")
        for merged in MERGED_NAMES:
            if merged not in names:
                raise NomenclatureError(f"RSVQA61 must contain {merged!r}")
    return Nomenclature(tuple(classes), kind)


def bundled(kind: str) -> Nomenclature:
    kind = kind.upper()
    text = resources.files("fuseqa.data").joinpath(BUNDLED_FILES[kind]).read_text(encoding="utf-8")
    return load_nomenclature(json.loads(text), kind=kind)


def resolve_nomenclature(source) -> Nomenclature:
    """``"BENMM19"``, ``"RSVQA61"``, a path to a custom nomenclature file,
    or an inline list of names (flat) or class entries."""
    if isinstance(source, (list, tuple)):
        if all(isinstance(s, str) for s in source):
            return flat_nomenclature(source)
        return load_nomenclature(list(source))
    if source.upper() in BUNDLED_FILES:
        return bundled(source)
    return load_nomenclature(Path(source))


def save_nomenclature(nom: Nomenclature, path) -> None:
    Path(path).write_text(json.dumps(nom.to_document(), indent=1), encoding="utf-8")


def label_set(names, nom: Nomenclature) -> np.ndarray:
    bits = np.zeros(len(nom), dtype=np.uint8)
    for name in names:
        bits[nom.index(name)] = 1
    return bits


def hierarchy_closure(labels, nom: Nomenclature) -> np.ndarray:
    """Set every ancestor of every set bit. Works on one vector or a ``(Q, N)`` batch."""
    out = np.array(labels, dtype=np.uint8, copy=True)
    if out.shape[-1] != len(nom):
        raise ValueError(f"label length {out.shape[-1]} != nomenclature size {len(nom)}")
    # file order does not guarantee parents precede children
    for c in nom.classes:
        anc = nom.ancestors(c.id)
        if anc:
            has = out[..., c.id].astype(bool)
            for a in anc:
                out[..., a] |= has
    return out


def class_frequencies(dataset) -> np.ndarray:
    y = np.asarray(dataset)
    if y.ndim != 2 or y.shape[0] == 0:
        raise ValueError("class_frequencies needs a non-empty (Q, N) label array")
    return y.astype(bool).sum(axis=0) / y.shape[0]


def inverse_frequency_weights(freqs, n_samples: int) -> np.ndarray:
    """Reciprocal class frequencies rescaled to unit mean.

    Zero frequencies are clamped to ``1 / (2 * n_samples)`` so absent
    classes get the largest (finite) weight.
    """
    f = np.asarray(freqs, dtype=float)
    if np.any(f < 0) or np.any(f > 1):
        raise ValueError("frequencies must lie in [0, 1]")
    eps = 1.0 / (2 * n_samples)
    w = 1.0 / np.maximum(f, eps)
    return w / w.mean()
