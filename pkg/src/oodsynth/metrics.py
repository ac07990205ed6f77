"""Inference-time detection scoring and evaluation metrics.

Scores follow the "higher means more in-distribution" convention: the kNN
detector score is the negative k-th-neighbor distance, and the detection
threshold is calibrated so at least 95% of ID scores stay above it.

Conventions pinned down here because the usual definitions leave them
open: AUROC gives half credit to ties (Mann-Whitney), AUPR treats ID as
the positive class and integrates the precision-recall curve with the
trapezoid rule over all observed thresholds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import InsufficientDataError, TooFewSamplesError

MIN_CALIBRATION_SCORES = 20


def knn_score(reference: np.ndarray, z: np.ndarray, k: int) -> float:
    """Negative Euclidean distance to the k-th nearest reference embedding."""
    reference = np.asarray(reference, dtype=float)
    if reference.shape[0] < k:
        raise InsufficientDataError(
            f"reference holds {reference.shape[0]} embeddings, fewer than k={k}"
        )
    dists = np.linalg.norm(reference - np.asarray(z, dtype=float), axis=1)
    kth = np.partition(dists, k - 1)[k - 1]
    return float(-kth)


def knn_scores(reference: np.ndarray, zs: np.ndarray, k: int) -> np.ndarray:
    """Vectorized knn_score over the rows of ``zs``."""
    reference = np.asarray(reference, dtype=float)
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    if reference.shape[0] < k:
        raise InsufficientDataError(
            f"reference holds {reference.shape[0]} embeddings, fewer than k={k}"
        )
    out = np.empty(zs.shape[0])
    for i, z in enumerate(zs):
        dists = np.linalg.norm(reference - z, axis=1)
        out[i] = -np.partition(dists, k - 1)[k - 1]
    return out


def calibrate_threshold(id_scores: np.ndarray) -> float:
    """Largest threshold keeping at least 95% of ID scores at or above it."""
    scores = np.sort(np.asarray(id_scores, dtype=float))
    n = scores.size
    if n < MIN_CALIBRATION_SCORES:
        raise TooFewSamplesError(f"need >= {MIN_CALIBRATION_SCORES} ID scores, got {n}")
    required = math.ceil(0.95 * n)
    return float(scores[n - required])


def fpr_at_tpr95(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """Fraction of OOD scores at or above the 95%-TPR threshold."""
    ood_scores = np.asarray(ood_scores, dtype=float)
    if ood_scores.size == 0:
        raise TooFewSamplesError("need at least one OOD score")
    beta = calibrate_threshold(id_scores)
    return float(np.mean(ood_scores >= beta))


def auroc(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """P(ID score > OOD score) + 0.5 P(equal), via the rank-sum statistic."""
    id_scores = np.asarray(id_scores, dtype=float)
    ood_scores = np.asarray(ood_scores, dtype=float)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise TooFewSamplesError("need at least one score on each side")
    ranks = rankdata(np.concatenate([id_scores, ood_scores]))
    n_id = id_scores.size
    u = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * ood_scores.size))


def aupr(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """Trapezoidal area under precision-recall with ID as the positive class."""
    id_scores = np.asarray(id_scores, dtype=float)
    ood_scores = np.asarray(ood_scores, dtype=float)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise TooFewSamplesError("need at least one score on each side")
    thresholds = np.unique(np.concatenate([id_scores, ood_scores]))[::-1]
    n_id = id_scores.size
    recalls = [0.0]
    precisions = [1.0]
    for t in thresholds:
        tp = int(np.sum(id_scores >= t))
        fp = int(np.sum(ood_scores >= t))
        recalls.append(tp / n_id)
        precisions.append(tp / (tp + fp) if tp + fp else 1.0)
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * (precisions[i] + precisions[i - 1]) / 2.0
    return float(area)


@dataclass
class QualityAngles:
    """Hyperspherical embedding quality, in degrees.

    A larger separation angle means OOD points sit further from every
    prototype; larger dispersion means prototypes spread out more; smaller
    compactness means ID points hug their own prototype.
    """

    separation_deg: float
    dispersion_deg: float
    compactness_deg: float


def _deg(cosine: float) -> float:
    return float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))


def hypersphere_quality(
    ood_test: np.ndarray,
    id_test: np.ndarray,
    id_labels: np.ndarray,
    prototypes: np.ndarray,
) -> QualityAngles:
    """Angular separation/dispersion/compactness of a labeled embedding set."""
    ood_test = np.atleast_2d(np.asarray(ood_test, dtype=float))
    id_test = np.atleast_2d(np.asarray(id_test, dtype=float))
    id_labels = np.asarray(id_labels, dtype=int)
    prototypes = np.asarray(prototypes, dtype=float)
    C = prototypes.shape[0]
    cos_sep = float((ood_test @ prototypes.T).max(axis=1).mean())
    proto_cos = prototypes @ prototypes.T
    cos_disp = float(proto_cos[~np.eye(C, dtype=bool)].mean())
    cos_comp = float(
        np.einsum("ij,ij->i", id_test, prototypes[id_labels]).mean()
    )
    return QualityAngles(_deg(cos_sep), _deg(cos_disp), _deg(cos_comp))


@dataclass
class ScoreReport:
    id_scores: np.ndarray
    ood_scores: np.ndarray
    fpr95: float
    auroc: float
    aupr: float
    threshold: float

    def to_dict(self, include_scores: bool = True) -> dict:
        doc = {
            "fpr95": self.fpr95,
            "auroc": self.auroc,
            "aupr": self.aupr,
            "threshold": self.threshold,
        }
        if include_scores:
            doc["id_scores"] = np.asarray(self.id_scores).tolist()
            doc["ood_scores"] = np.asarray(self.ood_scores).tolist()
        return doc

    def save_json(self, path: str | Path, include_scores: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(include_scores), sort_keys=True))

    def metric_rows(self) -> list[tuple[str, float]]:
        return [
            ("fpr95", self.fpr95),
            ("auroc", self.auroc),
            ("aupr", self.aupr),
            ("threshold", self.threshold),
        ]

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name, value in self.metric_rows():
                writer.writerow([name, repr(value)])


def score_report(id_scores: np.ndarray, ood_scores: np.ndarray) -> ScoreReport:
    """Bundle the three detection metrics plus the calibrated threshold."""
    id_scores = np.asarray(id_scores, dtype=float)
    ood_scores = np.asarray(ood_scores, dtype=float)
    return ScoreReport(
        id_scores=id_scores,
        ood_scores=ood_scores,
        fpr95=fpr_at_tpr95(id_scores, ood_scores),
        auroc=auroc(id_scores, ood_scores),
        aupr=aupr(id_scores, ood_scores),
        threshold=calibrate_threshold(id_scores),
    )
