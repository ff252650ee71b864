"""Held-out IoU metrics, the three-regime comparison and discriminator weight reports."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from sklearn.metrics import roc_auc_score

from .dwsl.config import TrainConfig
from .dwsl.features import FeatureTable, label_target
from .dwsl.networks import DiscriminatorParams, GeneratorParams, generator_logits
from .dwsl.train import REGIMES, score, train_regime, weight_fn
from .errors import EmptyDataset
from .records import AnnotationRecord
from .synth import SceneSpec, build_mixed_dataset, build_test_set

IOU50 = 0.5

Generator = Union[GeneratorParams, Callable[[AnnotationRecord], np.ndarray]]


@dataclass(frozen=True)
class EvalRow:
    id: str
    iou: float
    weight: float = float("nan")


@dataclass
class EvalReport:
    regime: str
    rows: List[EvalRow]
    mean_iou: float
    iou50_accuracy: float

    @classmethod
    def from_rows(cls, rows: Sequence[EvalRow], regime: str = "") -> "EvalReport":
        if not rows:
            raise EmptyDataset("nothing to evaluate")
        ious = np.array([r.iou for r in rows])
        return cls(regime, list(rows), float(ious.mean()), float(np.mean(ious >= IOU50)))

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "iou", "weight"])
        for r in self.rows:
            w.writerow([r.id, repr(r.iou), repr(r.weight)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def masks_iou(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Row-wise IoU of boolean arrays ``(n, pixels)``; 1.0 where both are empty."""
    inter = np.sum(pred & gt, axis=1)
    union = np.sum(pred | gt, axis=1)
    return np.where(union == 0, 1.0, inter / np.maximum(union, 1))


def ground_truth_masks(records: Sequence[AnnotationRecord]) -> np.ndarray:
    """Ground truth at the 32x32 output resolution, activated where > 0."""
    missing = [r.id for r in records if r.ground_truth is None]
    if missing:
        raise ValueError(f"records without ground truth: {missing[:5]}")
    return np.array([label_target(r.ground_truth) > 0 for r in records], dtype=bool)


def predict_masks(generator: Generator, records: Sequence[AnnotationRecord], table: Optional[FeatureTable] = None):
    """Binary predictions, ``sigmoid(logit) >= 0.5`` (so a zero logit counts as on)."""
    if isinstance(generator, GeneratorParams):
        table = table if table is not None else FeatureTable(records, labels=False)
        # sigmoid(z) >= 0.5 exactly when z >= 0
        return generator_logits(table.gen, generator) >= 0.0
    return np.array([np.asarray(generator(r), dtype=np.float64).ravel() >= 0.5 for r in records], dtype=bool)


def evaluate(
    generator: Generator,
    records: Sequence[AnnotationRecord],
    *,
    regime: str = "",
    weights: Optional[Sequence[float]] = None,
    table: Optional[FeatureTable] = None,
) -> EvalReport:
    """Per-record IoU of thresholded predictions against ground truth.

    ``generator`` is trained parameters or any callable mapping a record to a
    32x32 probability map.  ``table`` may pass precomputed features.
    """
    if len(records) == 0:
        raise EmptyDataset("nothing to evaluate")
    ious = masks_iou(predict_masks(generator, records, table), ground_truth_masks(records))
    w = [float("nan")] * len(records) if weights is None else [float(x) for x in weights]
    rows = [EvalRow(r.id, float(i), wi) for r, i, wi in zip(records, ious, w)]
    return EvalReport.from_rows(rows, regime)


# --- discriminator weights ----------------------------------------------------


def auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    """Ranking AUC, ties counted as half (the Mann-Whitney statistic)."""
    positive = np.asarray(positive, dtype=bool)
    if positive.all() or not positive.any():
        raise EmptyDataset("AUC needs both classes")
    return float(roc_auc_score(positive, np.asarray(scores, dtype=np.float64)))


@dataclass
class WeightReport:
    mean_weight_clean: float
    mean_weight_corrupted: float
    auc: float
    n_clean: int
    n_corrupted: int
    weights: np.ndarray = field(repr=False)
    clean: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return self.mean_weight_clean - self.mean_weight_corrupted

    def histogram_dat(self, n_bins: int = 20) -> str:
        """Gnuplot-ready columns: bin centre, clean count, corrupted count."""
        edges = np.linspace(0.0, 1.0, n_bins + 1)
        hc, _ = np.histogram(self.weights[self.clean], edges)
        hk, _ = np.histogram(self.weights[~self.clean], edges)
        lines = ["# weight clean corrupted"]
        for lo, hi, a, b in zip(edges[:-1], edges[1:], hc, hk):
            lines.append(f"{(lo + hi) / 2:.4f} {a} {b}")
        return "\n".join(lines) + "\n"


def clean_flags(records: Sequence[AnnotationRecord]) -> np.ndarray:
    try:
        return np.array([bool(r.meta["is_clean"]) for r in records])
    except KeyError as exc:
        raise ValueError("records carry no evaluation-only is_clean flag") from exc


def weight_report(
    disc: DiscriminatorParams,
    records: Sequence[AnnotationRecord],
    cfg: TrainConfig = TrainConfig(),
    table: Optional[FeatureTable] = None,
) -> WeightReport:
    """Mean ``f(d)`` on clean vs corrupted records and the AUC of ``d``."""
    clean = clean_flags(records)
    if clean.all() or not clean.any():
        raise EmptyDataset("need both clean and corrupted records")
    table = table if table is not None else FeatureTable(records)
    d = score(disc, table.disc)
    w = weight_fn(d, cfg)
    return WeightReport(
        float(w[clean].mean()), float(w[~clean].mean()), auc(d, clean), int(clean.sum()), int((~clean).sum()), w, clean
    )


# --- regime comparison --------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    seed: int
    regime: str
    mean_iou: float
    iou50_accuracy: float


@dataclass
class Comparison:
    rows: List[ComparisonRow]
    weight_reports: Dict[int, WeightReport] = field(default_factory=dict)

    def mean(self, regime: str) -> float:
        vals = [r.mean_iou for r in self.rows if r.regime == regime]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "regime", "mean_iou", "iou50_accuracy"])
        for r in self.rows:
            w.writerow([r.seed, r.regime, repr(r.mean_iou), repr(r.iou50_accuracy)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> str:
        lines = [f"mean_iou_{r.replace('-', '_')}={self.mean(r):.4f}" for r in REGIMES]
        for seed in sorted(self.weight_reports):
            wr = self.weight_reports[seed]
            lines.append(f"seed={seed} auc={wr.auc:.4f} weight_clean={wr.mean_weight_clean:.4f} weight_corrupted={wr.mean_weight_corrupted:.4f}")
        return "\n".join(lines) + "\n"


def compare_regimes(
    D_e: Sequence[AnnotationRecord],
    D_o: Sequence[AnnotationRecord],
    cfg: TrainConfig,
    seeds: Sequence[int],
    test: Sequence[AnnotationRecord],
    regimes: Sequence[str] = REGIMES,
) -> Comparison:
    """Train each regime once per training seed on fixed data and score on ``test``."""
    if not seeds:
        raise ValueError("need at least one seed")
    te, to, tt = FeatureTable(D_e), FeatureTable(D_o), FeatureTable(test, labels=False)
    rows, reports = [], {}
    for seed in seeds:
        c = cfg.replace(seed=int(seed))
        for regime in regimes:
            res = train_regime(regime, te, to, c)
            rep = evaluate(res.generator, test, regime=regime, table=tt)
            rows.append(ComparisonRow(int(seed), regime, rep.mean_iou, rep.iou50_accuracy))
            if res.discriminator is not None and _has_both_classes(D_o):
                reports[int(seed)] = weight_report(res.discriminator, D_o, c, to)
    return Comparison(rows, reports)


def _has_both_classes(records) -> bool:
    flags = [r.meta.get("is_clean") for r in records]
    return any(f is True for f in flags) and any(f is False for f in flags)


def run_benchmark(
    seeds: Sequence[int],
    cfg: TrainConfig = TrainConfig(),
    n_e: int = 50,
    n_o: int = 5000,
    corruption_rate: float = 0.4,
    n_test: int = 500,
    spec: Optional[SceneSpec] = None,
    regimes: Sequence[str] = REGIMES,
) -> Comparison:
    """Synthetic DWSL-vs-SL experiment: fresh data, test set and init per seed."""
    out = Comparison([], {})
    for seed in seeds:
        ds = build_mixed_dataset(seed, n_e, n_o, corruption_rate, spec)
        test = build_test_set(seed, n_test, spec)
        part = compare_regimes(ds.clean, ds.mixed, cfg, [seed], test, regimes)
        out.rows.extend(part.rows)
        out.weight_reports.update(part.weight_reports)
    return out
