"""Localization evaluation: MAE, nearest-rank percentiles, empirical CDF,
threshold probabilities, and baseline-vs-enhanced deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from srtc.data import FingerprintDataset
from srtc.nets import SpecializedNetwork

DEFAULT_THRESHOLDS_M = (10.0,)
CDF_GRID_STEP_M = 0.5


@dataclass
class EvalReport:
    mae_m: float
    p75_m: float
    p95_m: float
    cdf: list[tuple[float, float]]
    threshold_probes: list[tuple[float, float]]
    n_samples: int
    model_name: str = ""
    dataset_name: str = ""

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "dataset": self.dataset_name,
            "n_samples": self.n_samples,
            "mae_m": self.mae_m,
            "p75_m": self.p75_m,
            "p95_m": self.p95_m,
            "threshold_probes": [
                {"radius_m": r, "probability": p}
                for r, p in self.threshold_probes
            ],
            "cdf": [{"error_m": e, "cum_prob": p} for e, p in self.cdf],
        }


def nearest_rank_percentile(sorted_errors: np.ndarray, p: float) -> float:
    """p-th percentile by nearest rank: element ceil(p/100 * M), 1-based."""
    m = len(sorted_errors)
    if m == 0:
        raise ValueError("percentile of an empty error set")
    rank = max(1, math.ceil(p / 100.0 * m))
    return float(sorted_errors[rank - 1])


def error_distances(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    diff = y_true - y_pred
    return np.sqrt((diff * diff).sum(axis=1))


def report_from_errors(errors: np.ndarray,
                       thresholds=DEFAULT_THRESHOLDS_M,
                       model_name: str = "",
                       dataset_name: str = "") -> EvalReport:
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("cannot evaluate an empty error set")
    sorted_errors = np.sort(errors)
    m = errors.size
    distinct = np.unique(sorted_errors)
    counts = np.searchsorted(sorted_errors, distinct, side="right")
    cdf = [(float(e), float(c) / m) for e, c in zip(distinct, counts)]
    probes = [(float(r), float((errors < r).sum()) / m) for r in thresholds]
    return EvalReport(
        mae_m=float(errors.mean()),
        p75_m=nearest_rank_percentile(sorted_errors, 75.0),
        p95_m=nearest_rank_percentile(sorted_errors, 95.0),
        cdf=cdf,
        threshold_probes=probes,
        n_samples=int(m),
        model_name=model_name,
        dataset_name=dataset_name,
    )


def evaluate(model: SpecializedNetwork, test: FingerprintDataset,
             thresholds=DEFAULT_THRESHOLDS_M,
             model_name: str = "") -> EvalReport:
    """Per-sample Euclidean errors of the model on a held-out dataset."""
    if test.n_samples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if test.n_anchors != model.n_inputs:
        raise ValueError(
            f"anchor count {test.n_anchors} does not match model input "
            f"width {model.n_inputs}")
    predictions = model.predict(test.x)
    errors = error_distances(test.y, predictions)
    return report_from_errors(errors, thresholds, model_name=model_name,
                              dataset_name=test.name)


def cdf_export_points(report: EvalReport,
                      grid_step: float = CDF_GRID_STEP_M
                      ) -> list[tuple[float, float]]:
    """CDF samples at the distinct errors plus a fixed grid."""
    errors = np.array([e for e, _ in report.cdf])
    probs = np.array([p for _, p in report.cdf])
    top = errors[-1] if len(errors) else 0.0
    grid = np.arange(0.0, top + grid_step, grid_step)
    points = np.unique(np.concatenate([errors, grid]))
    idx = np.searchsorted(errors, points, side="right") - 1
    out = []
    for point, i in zip(points, idx):
        out.append((float(point), float(probs[i]) if i >= 0 else 0.0))
    return out


def write_cdf_csv(report: EvalReport, path,
                  grid_step: float = CDF_GRID_STEP_M) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("error_m,cum_prob\n")
        for e, p in cdf_export_points(report, grid_step):
            fh.write(f"{e!r},{p!r}\n")


@dataclass
class ComparisonDeltas:
    """Percent improvements of enhanced over baseline; positive is better."""

    mae_pct: float
    p75_pct: float
    p95_pct: float
    baseline_mae_m: float = 0.0
    enhanced_mae_m: float = 0.0

    def as_dict(self) -> dict:
        return {
            "baseline_mae_m": self.baseline_mae_m,
            "enhanced_mae_m": self.enhanced_mae_m,
            "mae_improvement_pct": self.mae_pct,
            "p75_improvement_pct": self.p75_pct,
            "p95_improvement_pct": self.p95_pct,
        }


def compare(baseline: EvalReport, enhanced: EvalReport) -> ComparisonDeltas:
    def pct(base: float, new: float, label: str) -> float:
        if base == 0.0:
            raise ZeroDivisionError(
                f"baseline {label} is zero; relative delta undefined")
        return (base - new) / base * 100.0

    return ComparisonDeltas(
        mae_pct=pct(baseline.mae_m, enhanced.mae_m, "mae"),
        p75_pct=pct(baseline.p75_m, enhanced.p75_m, "p75"),
        p95_pct=pct(baseline.p95_m, enhanced.p95_m, "p95"),
        baseline_mae_m=baseline.mae_m,
        enhanced_mae_m=enhanced.mae_m,
    )
