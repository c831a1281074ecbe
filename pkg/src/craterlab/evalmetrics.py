"""Pixel confusion tallies, the six segmentation metrics, and comparisons.

Metrics are computed per image as fractions in [0, 1] and aggregated as an
unweighted arithmetic mean over images (per-image averaging, never pixel
pooling, unless explicitly requested). A 0/0 metric denotes vacuous
agreement (the relevant class is empty on both sides); by default it
resolves to 1 and is flagged in the report.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from craterlab import kernels

METRIC_NAMES = ("accuracy", "iou", "precision", "recall", "f1", "specificity")


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel confusion tallies; foreground = crater."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PixelMetrics:
    """The six per-image metrics plus which of them were 0/0 cases."""

    accuracy: float
    iou: float
    precision: float
    recall: float
    f1: float
    specificity: float
    vacuous: tuple = ()

    def as_tuple(self):
        return tuple(getattr(self, name) for name in METRIC_NAMES)

    def as_dict(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _pixels(mask):
    return np.asarray(getattr(mask, "pixels", mask), dtype=bool)


def confusion(pred, gt):
    """Exact pixel confusion counts between two binary masks."""
    p = _pixels(pred)
    g = _pixels(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask shape mismatch: {p.shape} vs {g.shape}")
    tp, fp, fn, tn = kernels.confusion_counts(p, g)
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _ratio(num, den, name, vacuous, zero_division):
    if den == 0:
        vacuous.append(name)
        return 1.0 if zero_division == "one" else 0.0
    return num / den


def compute_metrics(c, zero_division="one"):
    """Derive the six metrics from confusion counts.

    f1 is computed directly from counts as 2tp / (2tp + fp + fn), which
    equals the harmonic mean of precision and recall wherever that mean is
    defined and makes the f1 0/0 case coincide with both masks being empty.
    """
    if c.total == 0:
        raise ValueError("empty confusion counts")
    if zero_division not in ("one", "zero"):
        raise ValueError("zero_division must be 'one' or 'zero'")
    vac = []
    accuracy = (c.tp + c.tn) / c.total
    iou = _ratio(c.tp, c.tp + c.fp + c.fn, "iou", vac, zero_division)
    precision = _ratio(c.tp, c.tp + c.fp, "precision", vac, zero_division)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", vac, zero_division)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "f1", vac, zero_division)
    specificity = _ratio(c.tn, c.tn + c.fp, "specificity", vac, zero_division)
    return PixelMetrics(
        accuracy=accuracy,
        iou=iou,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        vacuous=tuple(vac),
    )


@dataclass
class MetricsReport:
    """Per-image metrics and their unweighted mean over a validation set."""

    per_image: list
    mean: dict
    n_images: int
    provenance: dict = field(default_factory=dict)
    vacuous_counts: dict = field(default_factory=dict)
    averaging: str = "per_image"

    def __post_init__(self):
        if self.per_image:
            if len(self.per_image) != self.n_images:
                raise ValueError("n_images disagrees with per-image list")
            for name in METRIC_NAMES:
                m = sum(getattr(pm, name) for pm in self.per_image) / self.n_images
                if abs(m - self.mean[name]) > 1e-12:
                    raise ValueError(f"mean[{name}] is not the per-image average")
        for name in METRIC_NAMES:
            v = self.mean[name]
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"mean[{name}]={v} outside [0, 1]")

    def to_json(self, path=None):
        doc = {
            "provenance": self.provenance,
            "averaging": self.averaging,
            "n_images": self.n_images,
            "mean": {k: self.mean[k] for k in METRIC_NAMES},
            "vacuous_counts": self.vacuous_counts,
            "per_image": [
                {**pm.as_dict(), "vacuous": list(pm.vacuous)} for pm in self.per_image
            ],
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return doc

    @classmethod
    def from_json(cls, source):
        if not isinstance(source, dict):
            with open(source) as fh:
                source = json.load(fh)
        per_image = [
            PixelMetrics(vacuous=tuple(e.get("vacuous", ())),
                         **{k: e[k] for k in METRIC_NAMES})
            for e in source.get("per_image", ())
        ]
        return cls(
            per_image=per_image,
            mean={k: source["mean"][k] for k in METRIC_NAMES},
            n_images=source["n_images"],
            provenance=source.get("provenance", {}),
            vacuous_counts=source.get("vacuous_counts", {}),
            averaging=source.get("averaging", "per_image"),
        )


def report_from_mask_pairs(pairs, provenance=None, zero_division="one",
                           averaging="per_image"):
    """Aggregate (pred, gt) mask pairs into a MetricsReport."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty dataset")
    if averaging not in ("per_image", "pooled"):
        raise ValueError("averaging must be 'per_image' or 'pooled'")
    per_image = []
    vac_counts = {name: 0 for name in METRIC_NAMES}
    pooled = [0, 0, 0, 0]
    for pred, gt in pairs:
        c = confusion(pred, gt)
        pm = compute_metrics(c, zero_division=zero_division)
        per_image.append(pm)
        for name in pm.vacuous:
            vac_counts[name] += 1
        pooled[0] += c.tp
        pooled[1] += c.fp
        pooled[2] += c.fn
        pooled[3] += c.tn
    if averaging == "per_image":
        # fixed summation order keeps aggregation independent of parallel scheduling
        mean = {
            name: sum(getattr(pm, name) for pm in per_image) / len(per_image)
            for name in METRIC_NAMES
        }
    else:
        mean = compute_metrics(ConfusionCounts(*pooled), zero_division=zero_division).as_dict()
    return MetricsReport(
        per_image=per_image if averaging == "per_image" else [],
        mean=mean,
        n_images=len(per_image) if averaging == "per_image" else len(pairs),
        provenance=provenance or {},
        vacuous_counts=vac_counts,
        averaging=averaging,
    )


def evaluate(model, samples, threshold=0.5, provenance=None, zero_division="one",
             averaging="per_image"):
    """Run a segmenter over (tile, mask) samples and report the six metrics."""
    from craterlab.segment import predict_mask  # local import keeps torch optional here

    samples = list(samples)
    if not samples:
        raise ValueError("empty dataset")
    pairs = []
    for tile, gt in samples:
        _, pred = predict_mask(model, tile, threshold=threshold)
        pairs.append((pred, gt))
    return report_from_mask_pairs(
        pairs, provenance=provenance, zero_division=zero_division, averaging=averaging)


@dataclass
class ComparisonRow:
    metric: str
    mean_a: float
    mean_b: float
    delta: float
    flag: str


@dataclass
class ComparisonTable:
    """Side-by-side means of two reports with per-metric improvement flags."""

    label_a: str
    label_b: str
    rows: list

    def row(self, metric):
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", self.label_a, self.label_b, "delta", "flag"])
            for r in self.rows:
                writer.writerow([r.metric, repr(r.mean_a), repr(r.mean_b),
                                 repr(r.delta), r.flag])

    def to_text(self):
        """Fixed-width table with percentage presentation."""
        lines = [
            f"{'Metric':<14}{self.label_a:>14}{self.label_b:>16}{'Delta':>10}  Flag",
            "-" * 60,
        ]
        for r in self.rows:
            lines.append(
                f"{r.metric:<14}{100 * r.mean_a:>13.2f}%{100 * r.mean_b:>15.2f}%"
                f"{100 * r.delta:>+10.2f}  {r.flag}"
            )
        return "\n".join(lines)


def compare_reports(a, b, label_a="A", label_b="B"):
    """Compare two reports metric by metric; delta = b - a (all six improve upward)."""
    rows = []
    for name in METRIC_NAMES:
        ma = a.mean[name]
        mb = b.mean[name]
        delta = mb - ma
        flag = "improved" if delta > 0 else ("worsened" if delta < 0 else "equal")
        rows.append(ComparisonRow(metric=name, mean_a=ma, mean_b=mb, delta=delta, flag=flag))
    return ComparisonTable(label_a=label_a, label_b=label_b, rows=rows)


def reference_reports():
    """The published simulated-vs-translated validation means, as reports."""
    from importlib import resources

    with resources.files("craterlab").joinpath(
            "fixtures/reference_comparison.json").open() as fh:
        doc = json.load(fh)
    reports = []
    for key in ("baseline", "translated"):
        entry = doc[key]
        reports.append(MetricsReport(
            per_image=[],
            mean={k: entry["mean"][k] for k in METRIC_NAMES},
            n_images=entry["n_images"],
            provenance={"label": entry["label"], "source": doc["source"]},
        ))
    return tuple(reports)
