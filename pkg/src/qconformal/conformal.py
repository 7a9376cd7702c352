"""Split conformal calibration with a scalar norm over the whole output vector.

The conformal set around a prediction is the ball {y : ||y - yhat|| <= tau},
a hypercube under LINF and a Euclidean ball under L2.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .forest import ForestModel, mse

REPORT_FORMAT_VERSION = 1
DEFAULT_ALPHAS = (0.05, 0.10, 0.20, 0.30, 0.50)
CSV_HEADER = (
    "alpha", "tau", "coverage", "sum_size", "volume",
    "norm", "d", "n_cal", "n_test", "mse_overall",
)


class NormKind(enum.Enum):
    L2 = "l2"
    LINF = "linf"


def residuals(Y, Yhat, norm: NormKind) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape or Y.ndim != 2:
        raise InputError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    diff = np.abs(Y - Yhat)
    if norm is NormKind.LINF:
        return diff.max(axis=1) if diff.shape[1] else np.zeros(len(diff))
    return np.sqrt((diff**2).sum(axis=1))


def rank_for(alpha: float, n: int) -> int:
    """1-based rank k = ceil((1 - alpha)(n + 1)).

    ``alpha`` is read as the decimal it prints as, so 0.3 means 3/10 and
    boundary cases such as (1 - 0.3) * 10 land on 7 rather than 8.
    """
    a = Fraction(repr(float(alpha)))
    return math.ceil((1 - a) * (n + 1))


@dataclass(frozen=True)
class ConformalCalibration:
    sorted_residuals: np.ndarray
    norm: NormKind
    d: int

    @classmethod
    def from_residuals(cls, r, norm: NormKind, d: int) -> "ConformalCalibration":
        r = np.sort(np.asarray(r, dtype=float), kind="stable")
        if r.size == 0:
            raise InputError("calibration set is empty")
        if not np.all(np.isfinite(r)) or r[0] < 0:
            raise InputError("residuals must be finite and non-negative")
        return cls(r, norm, d)

    @property
    def n(self) -> int:
        return len(self.sorted_residuals)


def calibrate(Y_cal, Yhat_cal, norm: NormKind) -> ConformalCalibration:
    Y_cal = np.asarray(Y_cal, dtype=float)
    return ConformalCalibration.from_residuals(
        residuals(Y_cal, Yhat_cal, norm), norm, Y_cal.shape[1]
    )


def threshold(cal: ConformalCalibration, alpha: float) -> float:
    """k-th smallest calibration residual, or +inf when k exceeds n."""
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    k = rank_for(alpha, cal.n)
    if k > cal.n:
        return math.inf
    return float(cal.sorted_residuals[k - 1])


def coverage(Y_test, Yhat_test, tau: float, norm: NormKind) -> float:
    """Fraction of rows whose residual is at most ``tau``."""
    r = residuals(Y_test, Yhat_test, norm)
    if r.size == 0:
        raise InputError("test set is empty")
    return float(np.mean(r <= tau))


@dataclass(frozen=True)
class SetSize:
    sum_size: float
    volume: float


def set_size(tau: float, d: int, norm: NormKind) -> SetSize:
    """Per-axis diameter sum 2*d*tau and the region's d-volume.

    The sum-size convention is shared by both norms; volume is (2 tau)^d for
    the cube and pi^(d/2) tau^d / Gamma(d/2 + 1) for the ball.
    """
    if d < 1:
        raise InputError("d must be >= 1")
    if tau < 0 or math.isnan(tau):
        raise InputError(f"tau must be >= 0, got {tau}")
    if math.isinf(tau):
        return SetSize(math.inf, math.inf)
    if norm is NormKind.LINF:
        volume = (2.0 * tau) ** d
    else:
        volume = math.pi ** (d / 2) * tau**d / math.gamma(d / 2 + 1)
    return SetSize(2.0 * d * tau, volume)


@dataclass(frozen=True)
class CoverageRow:
    alpha: float
    tau: float
    coverage: float
    sum_size: float
    volume: float


def _num(v: float):
    # JSON has no infinity; spell it out rather than emit a non-standard token
    return "inf" if math.isinf(v) else v


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


@dataclass
class CoverageReport:
    rows: list[CoverageRow]
    norm: NormKind
    d: int
    n_cal: int
    n_test: int
    mse_overall: float
    mse_per_output: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    def csv_rows(self) -> list[list[str]]:
        """Formatted cells shared by the CSV file and the printed table."""
        return [
            [
                _fmt(r.alpha), _fmt(r.tau), _fmt(r.coverage), _fmt(r.sum_size),
                _fmt(r.volume), self.norm.value, str(self.d), str(self.n_cal),
                str(self.n_test), _fmt(self.mse_overall),
            ]
            for r in self.rows
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(self.csv_rows())
        return buf.getvalue()

    def table(self) -> str:
        cells = [list(CSV_HEADER)] + self.csv_rows()
        widths = [max(len(row[i]) for row in cells) for i in range(len(CSV_HEADER))]
        return "\n".join(
            "  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip() for row in cells
        ) + "\n"

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "norm": self.norm.value,
            "d": self.d,
            "n_cal": self.n_cal,
            "n_test": self.n_test,
            "mse_overall": self.mse_overall,
            "mse_per_output": list(self.mse_per_output),
            "rows": [
                {
                    "alpha": r.alpha,
                    "tau": _num(r.tau),
                    "coverage": r.coverage,
                    "sum_size": _num(r.sum_size),
                    "volume": _num(r.volume),
                }
                for r in self.rows
            ],
            **self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "CoverageReport":
        if doc.get("format_version") != REPORT_FORMAT_VERSION:
            raise InputError(
                f"report format_version {doc.get('format_version')!r}, "
                f"expected {REPORT_FORMAT_VERSION}"
            )
        known = {"format_version", "norm", "d", "n_cal", "n_test",
                 "mse_overall", "mse_per_output", "rows"}
        return cls(
            rows=[
                CoverageRow(**{k: float(v) for k, v in row.items()})
                for row in doc["rows"]
            ],
            norm=NormKind(doc["norm"]),
            d=int(doc["d"]),
            n_cal=int(doc["n_cal"]),
            n_test=int(doc["n_test"]),
            mse_overall=float(doc["mse_overall"]),
            mse_per_output=tuple(float(v) for v in doc["mse_per_output"]),
            meta={k: v for k, v in doc.items() if k not in known},
        )


def evaluate(
    model: ForestModel,
    splits,
    dataset,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    norm: NormKind = NormKind.L2,
    meta: Optional[dict] = None,
) -> CoverageReport:
    """Calibrate on ``splits.cal`` once, then score each alpha on ``splits.test``."""
    if not splits.cal:
        raise InputError("calibration split is empty")
    if not splits.test:
        raise InputError("test split is empty")
    if set(splits.cal) & set(splits.test):
        raise InputError("calibration and test splits overlap")
    X_cal, Y_cal = dataset.arrays(splits.cal)
    X_test, Y_test = dataset.arrays(splits.test)
    cal = calibrate(Y_cal, model.predict(X_cal), norm)
    test_pred = model.predict(X_test)
    test_r = residuals(Y_test, test_pred, norm)

    rows = []
    for alpha in alphas:
        tau = threshold(cal, alpha)
        size = set_size(tau, cal.d, norm)
        rows.append(
            CoverageRow(float(alpha), tau, float(np.mean(test_r <= tau)),
                        size.sum_size, size.volume)
        )
    err = mse(model, X_test, Y_test)
    return CoverageReport(
        rows=rows,
        norm=norm,
        d=cal.d,
        n_cal=cal.n,
        n_test=len(splits.test),
        mse_overall=err.overall,
        mse_per_output=err.per_output,
        meta=dict(meta or {}),
    )
