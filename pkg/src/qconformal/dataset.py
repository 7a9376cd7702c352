"""Dataset assembly, deterministic splits and CSV + JSON-manifest persistence."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, FormatError, SizeError
from .features import FeatureMode, FeatureVector, dedup, extract, schema_for
from .qsim import (
    GATE_SET,
    CircuitConfig,
    GateKind,
    MeasBasis,
    exact_distribution,
    random_circuit,
    sample_counts,
    simulate,
)
from .rng import Xoshiro256, derive_seed

FORMAT_VERSION = 1
BASIS_ORDER = (MeasBasis.Z, MeasBasis.X, MeasBasis.Y)
SIMPLEX_TOL = 1e-9
# Sub-seed slots under each per-sample seed: 0 builds the circuit, 1 + basis
# position in BASIS_ORDER drives that basis' shots. A Z block is therefore the
# same whether or not X and Y are also measured.
_CIRCUIT_SLOT = 0


def parse_bases(value) -> tuple[MeasBasis, ...]:
    """Accept 'zxy', 'Z,X,Y' or a sequence of names/MeasBasis; return in Z, X, Y order."""
    if isinstance(value, str):
        names = [c for c in value.replace(",", "").upper()]
    else:
        names = [b.value if isinstance(b, MeasBasis) else str(b).upper() for b in value]
    try:
        chosen = {MeasBasis(n) for n in names}
    except ValueError as exc:
        raise ConfigError(f"unknown basis in {value!r}") from exc
    if not chosen or len(chosen) != len(names):
        raise ConfigError(f"bases must be a non-empty set, got {value!r}")
    if MeasBasis.Z not in chosen:
        raise ConfigError("the Z basis is always measured")
    return tuple(b for b in BASIS_ORDER if b in chosen)


@dataclass(frozen=True)
class GenerationConfig:
    num_samples: int = 5000
    min_depth: int = 1
    max_depth: int = 8
    shots: int = 1024
    bases: tuple[MeasBasis, ...] = (MeasBasis.Z,)
    feature_mode: FeatureMode = FeatureMode.FULL
    two_qubit_prob: float = 0.5
    gate_set: tuple[GateKind, ...] = GATE_SET

    def __post_init__(self):
        object.__setattr__(self, "bases", parse_bases(self.bases))
        object.__setattr__(self, "feature_mode", FeatureMode(self.feature_mode))
        object.__setattr__(
            self, "gate_set", tuple(GateKind(g) for g in self.gate_set)
        )

    @property
    def d(self) -> int:
        return 4 * len(self.bases)

    def circuit_config(self) -> CircuitConfig:
        return CircuitConfig(
            self.min_depth, self.max_depth, self.gate_set, self.two_qubit_prob
        )

    def validate(self) -> None:
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.shots < 0:
            raise ConfigError("shots must be >= 0")
        self.circuit_config().validate()


@dataclass
class Sample:
    id: int
    seed: int
    features: FeatureVector
    target: tuple[float, ...]


@dataclass
class Dataset:
    samples: list[Sample]
    manifest: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.manifest["d"])

    @property
    def schema(self) -> tuple[str, ...]:
        return tuple(self.manifest["feature_schema"])

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.samples]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def checksum(self) -> str:
        """FNV-1a 64 of the canonical CSV bytes, as 16 hex digits."""
        return f"{fnv1a64(to_csv_bytes(self)):016x}"

    def arrays(self, ids: Optional[Sequence[int]] = None) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) float arrays, optionally restricted to ``ids`` in the given order."""
        samples = self.samples
        if ids is not None:
            by_id = {s.id: s for s in self.samples}
            samples = [by_id[i] for i in ids]
        m, d = len(self.schema), self.d
        X = np.array([s.features.values for s in samples], dtype=float).reshape(-1, m)
        Y = np.array([s.target for s in samples], dtype=float).reshape(-1, d)
        return X, Y


def _manifest(config: GenerationConfig, seed: int, n_rows: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "num_qubits": 2,
        "bases": [b.value for b in config.bases],
        "d": config.d,
        "shots": config.shots,
        "gate_set": [g.value for g in config.gate_set],
        "feature_mode": config.feature_mode.value,
        "feature_schema": list(schema_for(config.feature_mode)),
        "min_depth": config.min_depth,
        "max_depth": config.max_depth,
        "two_qubit_prob": config.two_qubit_prob,
        "num_samples_requested": config.num_samples,
        "num_samples": n_rows,
        "seed": seed,
        "generated_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }


def generate(config: GenerationConfig, seed: int) -> Dataset:
    """Simulate ``config.num_samples`` random circuits and drop duplicate features.

    Sample i uses seed ``derive_seed(seed, i)``; its circuit and every basis'
    shot stream are sub-seeds of that, so samples are independent of each
    other and of evaluation order.
    """
    config.validate()
    cc = config.circuit_config()
    sample_seeds = [derive_seed(seed, i) for i in range(config.num_samples)]
    feats, probs = [], []
    for s in sample_seeds:
        circuit = random_circuit(cc, derive_seed(s, _CIRCUIT_SLOT))
        feats.append(extract(circuit, config.feature_mode))
        state = simulate(circuit)
        probs.append([exact_distribution(state, b) for b in config.bases])
    probs = np.array(probs)  # (N, n_bases, 4)

    if config.shots > 0:
        blocks = []
        for j, basis in enumerate(config.bases):
            slot = 1 + BASIS_ORDER.index(basis)
            basis_seeds = [derive_seed(s, slot) for s in sample_seeds]
            counts = sample_counts(probs[:, j, :], basis_seeds, config.shots)
            blocks.append(counts / config.shots)
        targets = np.stack(blocks, axis=1)
    else:
        targets = np.clip(probs, 0.0, 1.0)
    targets = targets.reshape(config.num_samples, config.d)

    rows = [
        (fv, (i, s, tuple(float(v) for v in y)))
        for i, (fv, s, y) in enumerate(zip(feats, sample_seeds, targets))
    ]
    samples = [
        Sample(i, s, fv, y) for fv, (i, s, y) in dedup(rows)
    ]
    return Dataset(samples, _manifest(config, seed, len(samples)))


@dataclass(frozen=True)
class SplitIndices:
    train: list[int]
    cal: list[int]
    test: list[int]
    seed: int
    fractions: tuple[float, float, float]


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Floor the train and calibration shares; the remainder goes to test."""
    f_train, f_cal, _ = fractions
    # the epsilon keeps products such as 0.7 * 30 = 20.999... from flooring down
    n_train = math.floor(f_train * n + 1e-9)
    n_cal = math.floor(f_cal * n + 1e-9)
    return n_train, n_cal, n - n_train - n_cal


def split(
    dataset: Dataset,
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitIndices:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset)
    if n < 3:
        raise SizeError(f"need at least 3 samples to split, got {n}")
    order = Xoshiro256(seed).shuffle(dataset.ids)
    n_train, n_cal, _ = split_sizes(n, fractions)
    return SplitIndices(
        train=order[:n_train],
        cal=order[n_train : n_train + n_cal],
        test=order[n_train + n_cal :],
        seed=seed,
        fractions=fractions,
    )


# ---------------------------------------------------------------- persistence

def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _fmt(v: float) -> str:
    # repr is the shortest string that parses back to the same double
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def to_csv_bytes(dataset: Dataset) -> bytes:
    d = dataset.d
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "seed", *dataset.schema, *(f"y_{j}" for j in range(d))])
    for s in dataset.samples:
        writer.writerow(
            [s.id, s.seed, *map(_fmt, s.features.values), *map(_fmt, s.target)]
        )
    return buf.getvalue().encode("ascii")


def data_paths(path) -> tuple[Path, Path]:
    """``<name>.csv`` and ``<name>.manifest.json`` for a path prefix."""
    p = Path(path)
    if p.suffix == ".csv":
        p = p.with_suffix("")
    return p.with_name(p.name + ".csv"), p.with_name(p.name + ".manifest.json")


def save(dataset: Dataset, path) -> tuple[Path, Path]:
    csv_path, manifest_path = data_paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    payload = to_csv_bytes(dataset)
    manifest = dict(dataset.manifest)
    manifest["checksum_fnv1a64"] = f"{fnv1a64(payload):016x}"
    csv_path.write_bytes(payload)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path, manifest_path


def check_simplex(target: Sequence[float], d: int) -> None:
    for start in range(0, d, 4):
        block = target[start : start + 4]
        if any(not 0.0 <= v <= 1.0 for v in block):
            raise FormatError(f"target component outside [0, 1] in block {start // 4}")
        if abs(sum(block) - 1.0) > SIMPLEX_TOL:
            raise FormatError(f"target block {start // 4} sums to {sum(block)}")


def load(path) -> Dataset:
    """Read and fully validate a dataset; any defect raises FormatError."""
    csv_path, manifest_path = data_paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
        payload = csv_path.read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc

    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"format_version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    stored = manifest.pop("checksum_fnv1a64", None)
    if stored != f"{fnv1a64(payload):016x}":
        raise FormatError("checksum mismatch: data file is corrupt or truncated")

    try:
        bases = parse_bases(manifest["bases"])
        d = int(manifest["d"])
        schema = tuple(manifest["feature_schema"])
        expected_rows = int(manifest["num_samples"])
    except (KeyError, ConfigError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid manifest: {exc}") from exc
    if d != 4 * len(bases):
        raise FormatError(f"manifest d={d} does not match bases {manifest['bases']}")

    reader = csv.reader(io.StringIO(payload.decode("ascii")))
    header = next(reader, None)
    expected_header = ["id", "seed", *schema, *(f"y_{j}" for j in range(d))]
    if header != expected_header:
        raise FormatError(f"header {header} does not match manifest schema")

    m = len(schema)
    samples: list[Sample] = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(expected_header):
            raise FormatError(
                f"line {lineno}: {len(row)} columns, expected {len(expected_header)}"
            )
        try:
            sid, sseed = int(row[0]), int(row[1])
            values = tuple(float(v) for v in row[2 : 2 + m])
            target = tuple(float(v) for v in row[2 + m :])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if samples and sid <= samples[-1].id:
            raise FormatError(f"line {lineno}: ids must be strictly increasing")
        check_simplex(target, d)
        samples.append(Sample(sid, sseed, FeatureVector(values, schema), target))

    if len(samples) != expected_rows:
        raise FormatError(f"{len(samples)} rows, manifest says {expected_rows}")
    return Dataset(samples, manifest)
