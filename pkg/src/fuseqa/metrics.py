"""Multi-label classification scores and VQA accuracy.

Predictions and ground truth are ``(Q, N)`` 0/1 arrays. Undefined ratios
(0/0) are scored 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

MACRO = "macro"
MICRO = "micro"
WEIGHTED = "weighted"

YES_NO = "yes_no"
LAND_COVER = "land_cover"


@dataclass(frozen=True)
class ClassCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def occurrences(self) -> np.ndarray:
        return self.tp + self.fn

    @property
    def n_samples(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0])


def _pair(preds, gts) -> tuple[np.ndarray, np.ndarray]:
    p = np.atleast_2d(np.asarray(preds)).astype(bool)
    g = np.atleast_2d(np.asarray(gts)).astype(bool)
    if p.shape != g.shape:
        raise ValueError(f"prediction shape {p.shape} does not match ground truth {g.shape}")
    return p, g


def count_stats(preds, gts) -> ClassCounts:
    p, g = _pair(preds, gts)
    return ClassCounts(
        tp=(p & g).sum(axis=0),
        fp=(p & ~g).sum(axis=0),
        fn=(~p & g).sum(axis=0),
        tn=(~p & ~g).sum(axis=0),
    )


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def precision_recall(counts: ClassCounts) -> tuple[np.ndarray, np.ndarray]:
    return _ratio(counts.tp, counts.tp + counts.fp), _ratio(counts.tp, counts.tp + counts.fn)


def f_beta(precision, recall, beta: float = 1.0):
    """Weighted harmonic mean of precision and recall; 0 where both vanish.

    Accepts scalars or arrays.
    """
    p = np.asarray(precision, dtype=float)
    r = np.asarray(recall, dtype=float)
    b2 = beta * beta
    out = _ratio((1 + b2) * p * r, b2 * p + r)
    return float(out) if out.ndim == 0 else out


def per_class_f_beta(counts: ClassCounts, beta: float = 1.0) -> np.ndarray:
    return f_beta(*precision_recall(counts), beta)


def aggregate(scores, counts: ClassCounts, mode: str = MACRO, beta: float = 1.0) -> float:
    """Combine per-class scores.

    ``macro`` is the plain mean, ``weighted`` weights each class by its
    number of actual occurrences, ``micro`` ignores ``scores`` and recomputes
    F-beta from TP/FP/FN pooled over all classes.
    """
    s = np.asarray(scores, dtype=float)
    if mode == MACRO:
        return float(s.mean())
    if mode == WEIGHTED:
        occ = counts.occurrences.astype(float)
        if occ.sum() == 0:
            raise ValueError("weighted aggregate undefined: no class has any occurrence")
        return float((s * occ).sum() / occ.sum())
    if mode == MICRO:
        tp, fp, fn = counts.tp.sum(), counts.fp.sum(), counts.fn.sum()
        return f_beta(_ratio(tp, tp + fp), _ratio(tp, tp + fn), beta)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def match_ratio(preds, gts) -> float:
    p, g = _pair(preds, gts)
    if p.shape[0] == 0:
        raise ValueError("match_ratio of an empty set")
    return float(np.all(p == g, axis=1).mean())


def hamming_distance(preds, gts) -> float:
    """Mean number of classes per sample whose predicted bit differs from the truth."""
    p, g = _pair(preds, gts)
    if p.shape[0] == 0:
        raise ValueError("hamming_distance of an empty set")
    return float((p != g).sum(axis=1).mean())


def vqa_accuracy(pred_answers, gt_answers, qtypes) -> dict:
    """Exact-match answer accuracy overall and per question type.

    A type with no questions is reported as ``None`` (not applicable).
    """
    if not (len(pred_answers) == len(gt_answers) == len(qtypes)):
        raise ValueError("answers and types must be aligned")
    if len(gt_answers) == 0:
        raise ValueError("vqa_accuracy of an empty set")
    correct = np.array([p == g for p, g in zip(pred_answers, gt_answers)])
    types = np.asarray(qtypes)
    out = {"global": float(correct.mean())}
    for t in (YES_NO, LAND_COVER):
        mask = types == t
        out[t] = float(correct[mask].mean()) if mask.any() else None
    return out


@dataclass
class MetricReport:
    class_names: list[str]
    beta: float
    precision: np.ndarray
    recall: np.ndarray
    f_score: np.ndarray
    f1: np.ndarray
    macro: float
    micro: float
    weighted: float
    f1_micro: float
    match_ratio: float
    hamming: float
    n_samples: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "n_samples": self.n_samples,
            "per_class": {
                name: {
                    "precision": float(self.precision[j]),
                    "recall": float(self.recall[j]),
                    "f_beta": float(self.f_score[j]),
                    "f1": float(self.f1[j]),
                }
                for j, name in enumerate(self.class_names)
            },
            "f_beta_macro": self.macro,
            "f_beta_micro": self.micro,
            "f_beta_weighted": self.weighted,
            "f1_micro": self.f1_micro,
            "match_ratio": self.match_ratio,
            "hamming_distance": self.hamming,
            **self.extra,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "precision", "recall", "f_beta", "f1"])
        for j, name in enumerate(self.class_names):
            w.writerow([name, repr(float(self.precision[j])), repr(float(self.recall[j])),
                        repr(float(self.f_score[j])), repr(float(self.f1[j]))])
        w.writerow(["macro", "", "", repr(self.macro), repr(float(self.f1.mean()))])
        w.writerow(["micro", "", "", repr(self.micro), repr(self.f1_micro)])
        w.writerow(["weighted", "", "", repr(self.weighted), ""])
        w.writerow(["match_ratio", "", "", repr(self.match_ratio), ""])
        w.writerow(["hamming_distance", "", "", repr(self.hamming), ""])
        return buf.getvalue()


def metric_report(preds, gts, class_names, beta: float = 2.0) -> MetricReport:
    counts = count_stats(preds, gts)
    prec, rec = precision_recall(counts)
    fs = f_beta(prec, rec, beta)
    f1 = f_beta(prec, rec, 1.0)
    occ = counts.occurrences
    return MetricReport(
        class_names=list(class_names),
        beta=beta,
        precision=prec,
        recall=rec,
        f_score=fs,
        f1=f1,
        macro=aggregate(fs, counts, MACRO),
        micro=aggregate(fs, counts, MICRO, beta),
        # all-negative ground truth leaves the weighted mean undefined; 0 keeps reports total
        weighted=aggregate(fs, counts, WEIGHTED) if occ.sum() else 0.0,
        f1_micro=aggregate(f1, counts, MICRO, 1.0),
        match_ratio=match_ratio(preds, gts),
        hamming=hamming_distance(preds, gts),
        n_samples=counts.n_samples,
    )
