"""Multi-label dataset readers.

Two formats are supported:

* a minimal ARFF subset (numeric and ``{0,1}`` nominal attributes, dense or
  ``{index value, ...}`` sparse rows), as distributed by MULAN; labels are
  named explicitly or taken as the trailing ``m`` attributes;
* a sparse text format with a ``k=<int> dim=<int>`` header followed by one
  example per line, ``l1,l2,... i1:v1 i2:v2 ...`` (1-based labels and
  feature indices; an empty label field means no relevant label).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from mlrboost.core import Example, LabelSet

log = logging.getLogger(__name__)


class DataError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class DatasetHeader:
    feature_count: int
    label_count: int
    label_names: tuple[str, ...]
    split: str | None = None
    missing_values: int = 0

    def __post_init__(self):
        if self.label_count < 1:
            raise ValueError("a dataset needs at least one label")
        if len(set(self.label_names)) != len(self.label_names):
            raise ValueError("label names must be unique")


@dataclass
class ExampleStream:
    """Ordered examples; ``shuffled`` returns a seeded permutation."""

    examples: list[Example] = field(default_factory=list)
    seed: int | None = None

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    def shuffled(self, seed: int) -> "ExampleStream":
        order = np.random.default_rng(seed).permutation(len(self.examples))
        return ExampleStream([self.examples[i] for i in order], seed)


# -- ARFF ---------------------------------------------------------------------

_ATTR_RE = re.compile(r"@attribute\s+('(?:[^'\\]|\\.)*'|\"[^\"]*\"|\S+)\s+(.+)$", re.IGNORECASE)
_BINARY = {"0": 0.0, "1": 1.0}


def _unquote(name: str) -> str:
    if len(name) >= 2 and name[0] == name[-1] and name[0] in "'\"":
        return name[1:-1].replace("\\'", "'")
    return name


def _attribute_kind(spec: str, path, lineno: int) -> str:
    s = spec.strip()
    if s.lower() in ("numeric", "real", "integer"):
        return "numeric"
    if s.startswith("{") and s.endswith("}"):
        values = {_unquote(v.strip()) for v in s[1:-1].split(",")}
        if values == {"0", "1"}:
            return "binary"
        raise DataError(f"nominal attribute {s} is not binary {{0,1}}", path, lineno)
    raise DataError(f"unsupported attribute type {s!r}", path, lineno)


def _number(token: str, kind: str, path, lineno: int) -> float | None:
    token = _unquote(token.strip())
    if token == "?":
        return None
    if kind == "binary":
        if token not in _BINARY:
            raise DataError(f"binary attribute value {token!r} is not 0 or 1", path, lineno)
        return _BINARY[token]
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"non-numeric value {token!r}", path, lineno) from None
    if not np.isfinite(value):
        raise DataError(f"non-finite value {token!r}", path, lineno)
    return value


def parse_arff(path, label_names: Sequence[str] | None = None, n_labels: int | None = None,
               split: str | None = None) -> tuple[DatasetHeader, ExampleStream]:
    """Read a MULAN-style ARFF file.

    Exactly one of ``label_names`` or ``n_labels`` (the trailing-attribute
    count) identifies the label attributes. Missing feature values become 0.0
    and are counted in the header.
    """
    if (label_names is None) == (n_labels is None):
        raise ValueError("give exactly one of label_names or n_labels")
    path = Path(path)
    names: list[str] = []
    kinds: list[str] = []
    rows: list[tuple[int, str]] = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if in_data:
                rows.append((lineno, line))
                continue
            low = line.lower()
            if low.startswith("@relation"):
                continue
            if low.startswith("@attribute"):
                m = _ATTR_RE.match(line)
                if not m:
                    raise DataError("malformed @attribute declaration", path, lineno)
                names.append(_unquote(m.group(1)))
                kinds.append(_attribute_kind(m.group(2), path, lineno))
            elif low.startswith("@data"):
                in_data = True
            else:
                raise DataError(f"unexpected header line {line[:40]!r}", path, lineno)
    if not in_data:
        raise DataError("no @data section", path)

    if label_names is not None:
        index = {n: i for i, n in enumerate(names)}
        missing = [n for n in label_names if n not in index]
        if missing:
            raise DataError(f"unknown label names {missing}", path)
        label_idx = [index[n] for n in label_names]
    else:
        if not 1 <= n_labels <= len(names):
            raise DataError(f"cannot take {n_labels} trailing labels from {len(names)} attributes", path)
        label_idx = list(range(len(names) - n_labels, len(names)))
    for j in label_idx:
        if kinds[j] != "binary":
            raise DataError(f"label attribute {names[j]!r} must be binary {{0,1}}", path)

    label_pos = {j: p for p, j in enumerate(label_idx)}
    feature_pos: dict[int, int] = {}
    for j in range(len(names)):
        if j not in label_pos:
            feature_pos[j] = len(feature_pos)
    k = len(label_idx)

    examples = []
    n_missing = 0
    for lineno, line in rows:
        if line.startswith("{"):
            if not line.endswith("}"):
                raise DataError("unterminated sparse row", path, lineno)
            body = line[1:-1].strip()
            cells = []
            for item in filter(None, (c.strip() for c in body.split(","))):
                parts = item.split(None, 1)
                if len(parts) != 2:
                    raise DataError(f"malformed sparse entry {item!r}", path, lineno)
                try:
                    j = int(parts[0])
                except ValueError:
                    raise DataError(f"bad attribute index {parts[0]!r}", path, lineno) from None
                if not 0 <= j < len(names):
                    raise DataError(f"attribute index {j} out of range", path, lineno)
                cells.append((j, parts[1]))
        else:
            tokens = line.split(",")
            if len(tokens) != len(names):
                raise DataError(f"expected {len(names)} values, found {len(tokens)}", path, lineno)
            cells = list(enumerate(tokens))
        features: dict[int, float] = {}
        labels = []
        for j, token in cells:
            value = _number(token, kinds[j], path, lineno)
            if j in label_pos:
                if value is None:
                    raise DataError(f"missing value for label {names[j]!r}", path, lineno)
                if value == 1.0:
                    labels.append(label_pos[j])
            elif value is None:
                n_missing += 1
            elif value != 0.0:
                features[feature_pos[j]] = value
        examples.append(Example(dict(sorted(features.items())), LabelSet(frozenset(labels), k)))
    if n_missing:
        log.warning("%s: %d missing feature values read as 0.0", path, n_missing)
    header = DatasetHeader(len(feature_pos), k, tuple(names[j] for j in label_idx), split, n_missing)
    return header, ExampleStream(examples)


# -- sparse text format -------------------------------------------------------

_HEADER_RE = re.compile(r"^k=(\d+)\s+dim=(\d+)\s*$")


def parse_sparse_multilabel(path, split: str | None = None) -> tuple[DatasetHeader, ExampleStream]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not _HEADER_RE.match(lines[0].strip()):
        raise DataError("first line must be 'k=<int> dim=<int>'", path, 1)
    m = _HEADER_RE.match(lines[0].strip())
    k, dim = int(m.group(1)), int(m.group(2))
    if k < 1:
        raise DataError("k must be positive", path, 1)
    examples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        if line.startswith((" ", "\t")):
            label_field, rest = "", line.strip()
        else:
            label_field, _, rest = line.partition(" ")
        labels = []
        if label_field:
            for tok in label_field.split(","):
                try:
                    labels.append(int(tok))
                except ValueError:
                    raise DataError(f"bad label {tok!r}", path, lineno) from None
        try:
            Y = LabelSet.from_labels(labels, k)
        except ValueError as err:
            raise DataError(str(err), path, lineno) from None
        features: dict[int, float] = {}
        for tok in rest.split():
            idx, sep, val = tok.partition(":")
            try:
                i, v = int(idx), float(val)
            except ValueError:
                raise DataError(f"malformed feature {tok!r}", path, lineno) from None
            if not sep or i < 1 or (dim and i > dim):
                raise DataError(f"feature index {idx!r} outside [1, {dim}]", path, lineno)
            if not np.isfinite(v):
                raise DataError(f"non-finite feature value {tok!r}", path, lineno)
            if i - 1 in features:
                raise DataError(f"duplicate feature index {i}", path, lineno)
            features[i - 1] = v
        examples.append(Example(dict(sorted(features.items())), Y))
    return DatasetHeader(dim, k, tuple(f"label{j + 1}" for j in range(k)), split), ExampleStream(examples)


def write_sparse_multilabel(path, header: DatasetHeader, stream) -> None:
    """Write ``stream`` in the sparse text format; ``repr`` keeps floats exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"k={header.label_count} dim={header.feature_count}\n")
        for ex in stream:
            labels = ",".join(str(l) for l in ex.label.one_based())
            feats = " ".join(f"{i + 1}:{v!r}" for i, v in sorted(ex.features.items()))
            fh.write(f"{labels} {feats}".rstrip(" ") + "\n" if labels else f" {feats}\n")


def load_dataset(path, label_names=None, n_labels=None, split=None) -> tuple[DatasetHeader, ExampleStream]:
    """Dispatch on extension: ``.arff`` files use :func:`parse_arff`, anything else the sparse format."""
    if str(path).lower().endswith(".arff"):
        return parse_arff(path, label_names=label_names, n_labels=n_labels, split=split)
    return parse_sparse_multilabel(path, split=split)


def subsample(stream, n: int, seed) -> ExampleStream:
    """Seeded sample without replacement that keeps the original relative order."""
    examples = list(stream)
    if not 0 <= n <= len(examples):
        raise ValueError(f"cannot draw {n} examples from {len(examples)}")
    keep = np.sort(np.random.default_rng(seed).choice(len(examples), size=n, replace=False))
    return ExampleStream([examples[i] for i in keep], seed)
