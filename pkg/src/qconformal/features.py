"""Classical circuit descriptors and feature-keyed deduplication."""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .errors import SchemaError
from .qsim import GATE_SET, Circuit


class FeatureMode(enum.Enum):
    MINIMAL = "minimal"
    FULL = "full"


MINIMAL_SCHEMA: tuple[str, ...] = ("depth", "total_ops")
FULL_SCHEMA: tuple[str, ...] = MINIMAL_SCHEMA + tuple(
    f"count_{kind.value}" for kind in GATE_SET
)


def schema_for(mode: FeatureMode) -> tuple[str, ...]:
    return FULL_SCHEMA if mode is FeatureMode.FULL else MINIMAL_SCHEMA


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    schema: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise SchemaError(
                f"{len(self.values)} values for {len(self.schema)} schema names"
            )

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.schema, self.values))


def extract(circuit: Circuit, mode: FeatureMode = FeatureMode.FULL) -> FeatureVector:
    counts = Counter(g.kind for g in circuit.gates)
    values = [float(circuit.depth), float(len(circuit.gates))]
    if mode is FeatureMode.FULL:
        values.extend(float(counts.get(kind, 0)) for kind in GATE_SET)
    return FeatureVector(tuple(values), schema_for(mode))


def dedup(samples: Iterable[tuple[FeatureVector, Any]]) -> list[tuple[FeatureVector, Any]]:
    """Keep the first sample for each distinct feature tuple, in input order.

    Targets play no part in the key, so equal features with different
    targets collapse to the first one seen.
    """
    seen: set[tuple[float, ...]] = set()
    schema: Sequence[str] | None = None
    out = []
    for fv, target in samples:
        if schema is None:
            schema = fv.schema
        elif fv.schema != schema:
            raise SchemaError(f"mixed schemas: {schema} vs {fv.schema}")
        if fv.values in seen:
            continue
        seen.add(fv.values)
        out.append((fv, target))
    return out
