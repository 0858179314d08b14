"""Tagset decomposition into coarse feature dimensions, and back.

A token's morphological annotation arrives as a semicolon-joined bundle of
fine-grained values ("N;PL;NOM;FEM"). A value-to-dimension dictionary routes
each value to its coarse dimension (NOM -> Case), producing a per-dimension
assignment. Dimensions a token does not mention are filled with the null
value "_" so every token carries a total assignment over the schema.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

from .errors import DictionaryError, SchemaError

NULL = "_"
POS = "POS"


def load_dictionary(path: str) -> dict[str, str]:
    """Read a tab-separated (value, dimension) file into a mapping.

    Lines starting with '#' and blank lines are skipped. A value listed
    twice with the same dimension is tolerated; with conflicting dimensions
    it is an error citing both rows.
    """
    mapping: dict[str, str] = {}
    first_row: dict[str, int] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DictionaryError(f"cannot read dictionary {path}: {exc}") from exc

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            parts = line.split()
        if len(parts) != 2:
            raise DictionaryError(f"{path}:{lineno}: expected 'value<TAB>dimension', got {raw!r}")
        value, dimension = parts
        if value in mapping and mapping[value] != dimension:
            raise DictionaryError(
                f"{path}:{lineno}: value {value!r} maps to {dimension!r} but line "
                f"{first_row[value]} already maps it to {mapping[value]!r}"
            )
        if value not in mapping:
            mapping[value] = dimension
            first_row[value] = lineno

    if not mapping:
        print(f"warning: dictionary {path} is empty", file=sys.stderr)
    return mapping


def dimension_counts(mapping: dict[str, str]) -> dict[str, int]:
    """Number of dictionary values per dimension."""
    counts: dict[str, int] = {}
    for dim in mapping.values():
        counts[dim] = counts.get(dim, 0) + 1
    return counts


def decompose_tagset(
    raw: str, mapping: dict[str, str], strict: bool = False
) -> tuple[dict[str, str], list[str]]:
    """Split a semicolon-joined tagset and route each value to its dimension.

    Returns (assignment, unmapped values). The null tagset "_" yields an
    empty assignment. In strict mode an unmapped value raises; in lenient
    mode it is dropped and reported. A second value for an already-filled
    dimension is treated as unmappable (kept first, reported).
    """
    assignment: dict[str, str] = {}
    unmapped: list[str] = []
    if raw == NULL or raw == "":
        return assignment, unmapped
    for value in raw.split(";"):
        value = value.strip()
        if not value:
            continue
        dim = mapping.get(value)
        if dim is None:
            if strict:
                raise SchemaError(f"value {value!r} in tagset {raw!r} has no dimension")
            unmapped.append(value)
            continue
        if dim in assignment and assignment[dim] != value:
            if strict:
                raise SchemaError(
                    f"tagset {raw!r} assigns both {assignment[dim]!r} and {value!r} to {dim}"
                )
            unmapped.append(value)
            continue
        assignment[dim] = value
    return assignment, unmapped


@dataclass
class FeatureSchema:
    """Output spaces of the tagger: one label set per coarse dimension.

    dimensions are ordered POS first, then lexicographically; each label
    space starts with the null value "_" followed by the observed values in
    lexicographic order. The layout is deterministic for a given corpus.
    """

    dimensions: list[str]
    labels: dict[str, list[str]]
    label_index: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        if POS not in self.dimensions:
            raise SchemaError("schema must contain the POS dimension")
        for dim in self.dimensions:
            space = self.labels[dim]
            if space.count(NULL) != 1:
                raise SchemaError(f"label space of {dim} must contain '_' exactly once")
        if not self.label_index:
            self.label_index = {
                dim: {lab: i for i, lab in enumerate(self.labels[dim])}
                for dim in self.dimensions
            }

    def extend(self, assignment: dict[str, str]) -> dict[str, str]:
        """Total assignment over all dimensions, null-filling absences."""
        return {dim: assignment.get(dim, NULL) for dim in self.dimensions}

    def composition_order(self) -> list[str]:
        return [POS] + sorted(d for d in self.dimensions if d != POS)

    def to_text(self) -> str:
        """Serialization used for checkpoint compatibility checks."""
        lines = []
        for dim in self.dimensions:
            lines.append(f"dimension\t{dim}")
            for lab in self.labels[dim]:
                lines.append(f"label\t{lab}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureSchema":
        dimensions: list[str] = []
        labels: dict[str, list[str]] = {}
        current = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            kind, _, value = line.partition("\t")
            if kind == "dimension":
                current = value
                dimensions.append(value)
                labels[value] = []
            elif kind == "label":
                if current is None:
                    raise SchemaError(f"schema text line {lineno}: label before any dimension")
                labels[current].append(value)
            else:
                raise SchemaError(f"schema text line {lineno}: unknown record {kind!r}")
        if not dimensions:
            raise SchemaError("schema text contains no dimensions")
        return cls(dimensions=dimensions, labels=labels)


def build_schema(annotations) -> FeatureSchema:
    """Construct the schema from decomposed training annotations.

    `annotations` is an iterable of per-token dimension->value maps.
    Dimensions are the union of observed dimensions plus POS; each label
    space is the observed values plus the null value.
    """
    observed: dict[str, set[str]] = {}
    count = 0
    for assignment in annotations:
        count += 1
        for dim, value in assignment.items():
            observed.setdefault(dim, set()).add(value)
    if count == 0:
        raise SchemaError("cannot build a schema from an empty corpus")
    observed.setdefault(POS, set())
    dimensions = [POS] + sorted(d for d in observed if d != POS)
    labels = {
        dim: [NULL] + sorted(v for v in observed[dim] if v != NULL) for dim in dimensions
    }
    return FeatureSchema(dimensions=dimensions, labels=labels)


def compose_prediction(assignment: dict[str, str], schema: FeatureSchema) -> str:
    """Join the non-null values back into a canonical tagset string.

    Order is POS first, then the remaining dimensions lexicographically.
    An all-null assignment composes to "_".
    """
    parts = []
    for dim in schema.composition_order():
        if dim not in assignment:
            raise SchemaError(f"assignment is missing dimension {dim}")
        value = assignment[dim]
        if value not in schema.label_index[dim]:
            raise SchemaError(f"value {value!r} is not in the label space of {dim}")
        if value != NULL:
            parts.append(value)
    return ";".join(parts) if parts else NULL
