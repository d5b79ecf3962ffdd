"""Dataset loading, class-decomposition schema validation and split planning."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

CATEGORIES = ("vowel", "base", "modifier", "numeral")
EXPECTED_CLASS_COUNTS = {"vowel": 13, "base": 272, "modifier": 5, "numeral": 10}
EXPECTED_ENTRY_COUNT = 569
EXPECTED_CHARACTER_COUNT = 657


class DatasetError(Exception):
    pass


class MissingDirectory(DatasetError):
    def __init__(self, path):
        super().__init__(f"missing or empty dataset directory: {path}")
        self.path = path


class UnreadableImage(DatasetError):
    def __init__(self, path):
        super().__init__(f"unreadable image: {path}")
        self.path = path


class CountMismatch(DatasetError):
    def __init__(self, character_id, expected, found):
        super().__init__(
            f"character {character_id!r}: expected {expected} samples, found {found}"
        )
        self.character_id = character_id
        self.expected = expected
        self.found = found


class SchemaError(Exception):
    pass


class BadClassCount(SchemaError):
    def __init__(self, category, expected, found):
        super().__init__(f"category {category!r}: expected {expected} classes, found {found}")
        self.category = category
        self.expected = expected
        self.found = found


class DanglingClassRef(SchemaError):
    def __init__(self, character_id, class_id):
        super().__init__(f"entry {character_id!r} references unknown class {class_id!r}")
        self.character_id = character_id
        self.class_id = class_id


class DuplicateEntry(SchemaError):
    def __init__(self, character_id):
        super().__init__(f"duplicate entry for character {character_id!r}")
        self.character_id = character_id


class BadSequenceShape(SchemaError):
    def __init__(self, character_id, reason=""):
        super().__init__(f"entry {character_id!r} has an illegal class sequence {reason}")
        self.character_id = character_id


class InfeasiblePlan(Exception):
    pass


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Rectangular bitmap; ``pixels`` is a bool array (height, width), True = foreground."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("pixels must be a non-empty 2D grid")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class Sample:
    image: BinaryImage
    character_id: str
    writer_index: int


@dataclass(frozen=True)
class DecompositionSchema:
    """Maps each lexicon character to its ordered class sequence."""

    classes: dict  # class_id -> category
    entries: dict  # character_id -> tuple of class_ids
    excluded: frozenset  # character_ids dropped as obsolete

    def category_counts(self) -> dict:
        counts = {c: 0 for c in CATEGORIES}
        for cat in self.classes.values():
            counts[cat] += 1
        return counts


@dataclass(frozen=True)
class SplitPlan:
    train: tuple
    validation: tuple
    test: tuple
    fold_index: int


def binarize(gray: np.ndarray) -> np.ndarray:
    """Threshold a grayscale array: below 50% of the 8-bit range is foreground (ink)."""
    return np.asarray(gray) < 128


def load_image(path) -> BinaryImage:
    try:
        with Image.open(path) as im:
            gray = np.asarray(im.convert("L"))
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise UnreadableImage(path) from exc
    return BinaryImage(binarize(gray))


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise MissingDirectory(path)
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("image_format", "samples_per_character", "characters"):
        if key not in manifest:
            raise DatasetError(f"manifest missing field {key!r}")
    return manifest


def load_dataset(root, manifest=None) -> dict:
    """Load all samples under ``root``, grouped by character id.

    Layout is ``root/<character_id>/<sample>.<ext>`` with a ``manifest.json``
    declaring character ordering, samples-per-character and image format.
    """
    root = Path(root)
    if not root.is_dir() or not any(root.iterdir()):
        raise MissingDirectory(root)
    if manifest is None:
        manifest = read_manifest(root)
    per_char = int(manifest["samples_per_character"])
    ext = manifest["image_format"].lstrip(".").lower()

    dataset = {}
    for character_id in manifest["characters"]:
        char_dir = root / character_id
        if not char_dir.is_dir():
            raise CountMismatch(character_id, per_char, 0)
        paths = sorted(char_dir.glob(f"*.{ext}"))
        if len(paths) != per_char:
            raise CountMismatch(character_id, per_char, len(paths))
        dataset[character_id] = [
            Sample(image=load_image(p), character_id=character_id, writer_index=i)
            for i, p in enumerate(paths)
        ]
    return dataset


def _parse_schema_lines(path):
    classes, entries, excluded = {}, {}, set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            kind = fields[0]
            if kind == "C" and len(fields) == 3:
                class_id, category = fields[1], fields[2]
                if category not in CATEGORIES:
                    raise SchemaError(f"line {lineno}: unknown category {category!r}")
                if class_id in classes:
                    raise SchemaError(f"line {lineno}: duplicate class {class_id!r}")
                classes[class_id] = category
            elif kind == "E" and len(fields) == 3:
                character_id = fields[1]
                if character_id in entries:
                    raise DuplicateEntry(character_id)
                entries[character_id] = tuple(fields[2].split(","))
            elif kind == "X" and len(fields) == 2:
                excluded.add(fields[1])
            else:
                raise SchemaError(f"line {lineno}: malformed record {line!r}")
    return classes, entries, excluded


def load_schema(path, strict: bool = True) -> DecompositionSchema:
    """Parse a decomposition TSV; with ``strict`` enforce the full class arithmetic.

    Non-strict mode keeps the structural checks (known classes, sequence
    length, no duplicates) and is intended for synthetic desk-scale corpora.
    """
    classes, entries, excluded = _parse_schema_lines(path)

    for character_id, seq in entries.items():
        if not seq or len(seq) > 2:
            raise BadSequenceShape(character_id, f"(length {len(seq)})")
        for class_id in seq:
            if class_id not in classes:
                raise DanglingClassRef(character_id, class_id)
        if strict:
            cats = tuple(classes[c] for c in seq)
            if len(seq) == 1:
                if cats[0] == "modifier":
                    raise BadSequenceShape(character_id, "(lone modifier)")
            elif cats != ("base", "modifier"):
                raise BadSequenceShape(character_id, f"(categories {cats})")
        if character_id in excluded:
            raise SchemaError(f"character {character_id!r} both mapped and excluded")

    if strict:
        counts = {c: 0 for c in CATEGORIES}
        for cat in classes.values():
            counts[cat] += 1
        for category in CATEGORIES:
            if counts[category] != EXPECTED_CLASS_COUNTS[category]:
                raise BadClassCount(category, EXPECTED_CLASS_COUNTS[category], counts[category])
        if len(entries) != EXPECTED_ENTRY_COUNT:
            raise SchemaError(f"expected {EXPECTED_ENTRY_COUNT} entries, found {len(entries)}")
        if len(entries) + len(excluded) != EXPECTED_CHARACTER_COUNT:
            raise SchemaError(
                "entries plus exclusions must cover the "
                f"{EXPECTED_CHARACTER_COUNT}-character inventory "
                f"(found {len(entries)} + {len(excluded)})"
            )

    return DecompositionSchema(
        classes=dict(classes), entries=dict(entries), excluded=frozenset(excluded)
    )


def validate_schema(schema_file) -> DecompositionSchema:
    """Load and fully validate the reference decomposition schema."""
    return load_schema(schema_file, strict=True)


def default_schema_path() -> Path:
    return Path(__file__).parent / "data" / "decomposition.tsv"


def make_splits(n_samples: int, plan=(15, 5, 5), n_folds: int = 4, seed: int = 0):
    """Build per-fold train/validation/test ordinal splits.

    The test set is fixed across folds (drawn once from the seeded shuffle);
    validation rotates through disjoint blocks of the remaining pool.
    """
    n_train, n_val, n_test = (int(x) for x in plan)
    if min(n_train, n_val, n_test) < 0 or n_folds < 1:
        raise InfeasiblePlan("split sizes and fold count must be non-negative")
    if n_train + n_val + n_test > n_samples:
        raise InfeasiblePlan(
            f"split sizes {plan} exceed {n_samples} available samples"
        )
    if n_val > 0:
        if n_folds * n_val > n_train + n_val:
            raise InfeasiblePlan(
                f"{n_folds} disjoint validation rotations of size {n_val} "
                f"do not fit in a pool of {n_train + n_val}"
            )
    elif n_folds != 1:
        raise InfeasiblePlan("multiple folds require a nonzero validation set")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_samples)
    test = tuple(sorted(int(x) for x in perm[n_samples - n_test:]))
    pool = perm[: n_train + n_val]

    plans = []
    for fold in range(n_folds):
        val_block = pool[fold * n_val : (fold + 1) * n_val]
        val_set = set(int(x) for x in val_block)
        train = tuple(sorted(int(x) for x in pool if int(x) not in val_set))
        plans.append(
            SplitPlan(
                train=train,
                validation=tuple(sorted(val_set)),
                test=test,
                fold_index=fold,
            )
        )
    return plans
