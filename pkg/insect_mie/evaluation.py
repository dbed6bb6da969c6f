"""
Detection evaluation for insect-mie
Greedy IoU matching, recall / precision / F1, AP@.5 and the micro and macro
aggregation over camera sites.
"""

import csv
import logging
import statistics
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from insect_mie.core import Annotation, Detection, FrameRecord, iou_matrix
from insect_mie.errors import NoGroundTruth

logger = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5

AP_ALL_POINT = 'all_point'
AP_ELEVEN_POINT = 'eleven_point'

REPORT_COLUMNS = ('site', 'recall', 'precision', 'f1', 'ap50', 'tp', 'fp', 'fn')


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else 0.0


def f1_score(precision: float, recall: float) -> float:
    return _ratio(2.0 * precision * recall, precision + recall)


@dataclass(frozen=True)
class Counts:
    """TP/FP/FN totals; adding two Counts is the aggregation step"""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: 'Counts') -> 'Counts':
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


@dataclass
class MatchResult:
    """Outcome of matching the detections of one frame (or many) to ground truth"""

    true_positives: List[Tuple[Detection, Annotation, float]] = field(default_factory=list)
    false_positives: List[Detection] = field(default_factory=list)
    false_negatives: List[Annotation] = field(default_factory=list)

    @property
    def counts(self) -> Counts:
        return Counts(len(self.true_positives), len(self.false_positives), len(self.false_negatives))

    def extend(self, other: 'MatchResult') -> 'MatchResult':
        self.true_positives.extend(other.true_positives)
        self.false_positives.extend(other.false_positives)
        self.false_negatives.extend(other.false_negatives)
        return self


def _rank(detections: Sequence[Detection]) -> List[int]:
    # stable: equal confidences keep input order
    return sorted(range(len(detections)), key=lambda i: -detections[i].confidence)


def match_frame(dets: Sequence[Detection], anns: Sequence[Annotation],
                iou_thresh: float = IOU_THRESHOLD) -> MatchResult:
    """
    Greedy matching of one frame.

    Detections are visited by descending confidence and each takes the still
    unmatched annotation with the highest IoU >= iou_thresh. Duplicates on an
    annotation after the first become false positives.
    """
    result = MatchResult()
    ious = iou_matrix([d.box for d in dets], [a.box for a in anns])
    matched = np.zeros(len(anns), dtype=bool)

    for i in _rank(dets):
        if len(anns):
            candidates = np.where(matched, -1.0, ious[i])
            best = int(np.argmax(candidates))
            if candidates[best] >= iou_thresh:
                matched[best] = True
                result.true_positives.append((dets[i], anns[best], float(ious[i, best])))
                continue
        result.false_positives.append(dets[i])

    result.false_negatives.extend(a for a, hit in zip(anns, matched) if not hit)
    return result


def max_matching(dets: Sequence[Detection], anns: Sequence[Annotation],
                 iou_thresh: float = IOU_THRESHOLD) -> int:
    """Largest number of detection/annotation pairs with IoU >= iou_thresh (optimal assignment)"""
    if not dets or not anns:
        return 0
    feasible = iou_matrix([d.box for d in dets], [a.box for a in anns]) >= iou_thresh
    rows, cols = linear_sum_assignment(feasible.astype(np.int64), maximize=True)
    return int(feasible[rows, cols].sum())


def matching_gap(dets: Sequence[Detection], anns: Sequence[Annotation],
                 iou_thresh: float = IOU_THRESHOLD) -> int:
    """How many true positives greedy matching loses against the optimal matching"""
    greedy = len(match_frame(dets, anns, iou_thresh).true_positives)
    gap = max_matching(dets, anns, iou_thresh) - greedy
    if gap > 0:
        logger.debug(f"Greedy matching found {greedy} TP, optimum is {greedy + gap}")
    return gap


# =============================================================================
# AVERAGE PRECISION
# =============================================================================

def precision_recall_curve(dets: Sequence[Detection], anns: Sequence[Annotation],
                           iou_thresh: float = IOU_THRESHOLD) -> Tuple[np.ndarray, np.ndarray]:
    """Precision and recall after each detection, ranked by descending confidence"""
    if not anns:
        raise NoGroundTruth("average precision needs at least one annotation")

    by_frame: Dict[FrameRecord, List[Annotation]] = {}
    for annotation in anns:
        by_frame.setdefault(annotation.frame, []).append(annotation)
    claimed: Dict[FrameRecord, np.ndarray] = {
        frame: np.zeros(len(frame_anns), dtype=bool) for frame, frame_anns in by_frame.items()
    }

    hits = np.zeros(len(dets), dtype=bool)
    for position, i in enumerate(_rank(dets)):
        detection = dets[i]
        frame_anns = by_frame.get(detection.frame)
        if not frame_anns:
            continue
        ious = iou_matrix([detection.box], [a.box for a in frame_anns])[0]
        candidates = np.where(claimed[detection.frame], -1.0, ious)
        best = int(np.argmax(candidates))
        if candidates[best] >= iou_thresh:
            claimed[detection.frame][best] = True
            hits[position] = True

    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / len(anns)
    precision = tp / np.maximum(tp + fp, 1)
    return precision, recall


def average_precision(dets: Sequence[Detection], anns: Sequence[Annotation],
                      iou_thresh: float = IOU_THRESHOLD, method: str = AP_ALL_POINT) -> float:
    """
    Area under the precision-recall curve for the single insect class.

    all_point: every recall step weighted by the monotone precision envelope.
    eleven_point: mean of the envelope at recall 0, 0.1, ..., 1.
    """
    precision, recall = precision_recall_curve(dets, anns, iou_thresh)

    if method == AP_ELEVEN_POINT:
        points = []
        for level in np.linspace(0.0, 1.0, 11):
            reached = precision[recall >= level - 1e-12]
            points.append(float(reached.max()) if reached.size else 0.0)
        return float(np.mean(points))
    if method != AP_ALL_POINT:
        raise ValueError(f"unknown AP method {method!r}")

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


# =============================================================================
# AGGREGATION
# =============================================================================

@dataclass(frozen=True)
class Metrics:
    recall: float
    precision: float
    f1: float
    ap50: Optional[float] = None


@dataclass(frozen=True)
class SiteMetrics:
    site_id: str
    counts: Counts
    ap50: Optional[float] = None

    @property
    def metrics(self) -> Metrics:
        return Metrics(self.counts.recall, self.counts.precision, self.counts.f1, self.ap50)


@dataclass(frozen=True)
class EvalReport:
    sites: Tuple[SiteMetrics, ...]
    macro: Metrics
    micro: Metrics

    @property
    def totals(self) -> Counts:
        total = Counts()
        for site in self.sites:
            total = total + site.counts
        return total

    def site(self, site_id: str) -> SiteMetrics:
        for site in self.sites:
            if site.site_id == site_id:
                return site
        raise KeyError(site_id)

    def f1_spread(self) -> Dict[str, float]:
        """Minimum, median and maximum per-site F1"""
        values = [site.counts.f1 for site in self.sites]
        return {'min': min(values), 'median': statistics.median(values), 'max': max(values)}


def aggregate(site_results: Mapping[str, Counts],
              ap_by_site: Optional[Mapping[str, float]] = None,
              micro_ap: Optional[float] = None) -> EvalReport:
    """
    Micro metrics come from the summed counts; macro metrics are unweighted
    means of the per-site values (macro F1 is the mean of per-site F1).
    Empty sites score 0 and still count in the macro mean.
    """
    if not site_results:
        raise ValueError("aggregate needs at least one site")
    ap_by_site = ap_by_site or {}

    sites = tuple(
        SiteMetrics(site_id, counts, ap_by_site.get(site_id))
        for site_id, counts in sorted(site_results.items())
    )

    total = Counts()
    for site in sites:
        total = total + site.counts

    site_aps = [site.ap50 for site in sites if site.ap50 is not None]
    macro = Metrics(
        recall=float(np.mean([s.counts.recall for s in sites])),
        precision=float(np.mean([s.counts.precision for s in sites])),
        f1=float(np.mean([s.counts.f1 for s in sites])),
        ap50=float(np.mean(site_aps)) if site_aps else None,
    )
    micro = Metrics(total.recall, total.precision, total.f1, micro_ap)
    return EvalReport(sites, macro, micro)


def evaluate(frames: Iterable[FrameRecord],
             detections: Mapping[FrameRecord, Sequence[Detection]],
             annotations: Mapping[FrameRecord, Sequence[Annotation]],
             iou_thresh: float = IOU_THRESHOLD,
             ap_method: str = AP_ALL_POINT) -> EvalReport:
    """Match every frame, group by site and build the full report with AP@.5"""
    per_site: Dict[str, MatchResult] = {}
    site_dets: Dict[str, List[Detection]] = {}
    site_anns: Dict[str, List[Annotation]] = {}

    for frame in frames:
        dets = list(detections.get(frame, ()))
        anns = list(annotations.get(frame, ()))
        per_site.setdefault(frame.site_id, MatchResult()).extend(match_frame(dets, anns, iou_thresh))
        site_dets.setdefault(frame.site_id, []).extend(dets)
        site_anns.setdefault(frame.site_id, []).extend(anns)

    def ap_or_none(dets: List[Detection], anns: List[Annotation]) -> Optional[float]:
        if not anns:
            return None
        return average_precision(dets, anns, iou_thresh, ap_method)

    ap_by_site = {site: ap_or_none(site_dets[site], site_anns[site]) for site in per_site}
    all_dets = [d for dets in site_dets.values() for d in dets]
    all_anns = [a for anns in site_anns.values() for a in anns]

    report = aggregate(
        {site: result.counts for site, result in per_site.items()},
        {site: ap for site, ap in ap_by_site.items() if ap is not None},
        ap_or_none(all_dets, all_anns),
    )
    logger.info(
        f"Evaluated {len(per_site)} site(s): micro F1 {report.micro.f1:.3f}, macro F1 {report.macro.f1:.3f}"
    )
    return report


# =============================================================================
# REPORTING
# =============================================================================

def _fmt(value: Optional[float]) -> str:
    return '' if value is None else f"{value:.3f}"


def write_report_csv(stream: TextIO, report: EvalReport) -> None:
    """
    Rows for each site, then macro and micro. Counts only add up for the micro
    row; the macro row averages site metrics and leaves its count cells empty.
    """
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(REPORT_COLUMNS)
    for site in report.sites:
        m, c = site.metrics, site.counts
        writer.writerow([site.site_id, _fmt(m.recall), _fmt(m.precision), _fmt(m.f1), _fmt(m.ap50), c.tp, c.fp, c.fn])
    totals = report.totals
    for name, m, counts in (('Macro', report.macro, ('', '', '')),
                            ('Micro', report.micro, (totals.tp, totals.fp, totals.fn))):
        writer.writerow([name, _fmt(m.recall), _fmt(m.precision), _fmt(m.f1), _fmt(m.ap50), *counts])


def format_report(report: EvalReport, title: str = '') -> str:
    """Plain-text table in the camera / recall / precision / F1 layout"""
    lines = []
    if title:
        lines.append(title)
    header = f"{'Camera':<10} {'Recall':>7} {'Prec.':>7} {'F1':>7} {'AP@.5':>7} {'TP':>6} {'FP':>6} {'FN':>6}"
    lines.append(header)
    lines.append('-' * len(header))
    for site in report.sites:
        m, c = site.metrics, site.counts
        lines.append(f"{site.site_id:<10} {m.recall:>7.3f} {m.precision:>7.3f} {m.f1:>7.3f} "
                     f"{_fmt(m.ap50):>7} {c.tp:>6} {c.fp:>6} {c.fn:>6}")
    lines.append('-' * len(header))
    for name, m in (('Macro', report.macro), ('Micro', report.micro)):
        lines.append(f"{name:<10} {m.recall:>7.3f} {m.precision:>7.3f} {m.f1:>7.3f} {_fmt(m.ap50):>7}")
    return '\n'.join(lines)


@dataclass(frozen=True)
class MetricDelta:
    name: str
    baseline: Metrics
    enhanced: Metrics

    @property
    def f1_gain(self) -> float:
        return self.enhanced.f1 - self.baseline.f1

    @property
    def recall_gain(self) -> float:
        return self.enhanced.recall - self.baseline.recall

    @property
    def precision_gain(self) -> float:
        return self.enhanced.precision - self.baseline.precision


def compare_reports(baseline: EvalReport, enhanced: EvalReport) -> List[MetricDelta]:
    """Per-site, macro and micro changes from color to motion-enhanced input"""
    enhanced_sites = {site.site_id: site for site in enhanced.sites}
    deltas = [
        MetricDelta(site.site_id, site.metrics, enhanced_sites[site.site_id].metrics)
        for site in baseline.sites if site.site_id in enhanced_sites
    ]
    deltas.append(MetricDelta('Macro', baseline.macro, enhanced.macro))
    deltas.append(MetricDelta('Micro', baseline.micro, enhanced.micro))
    return deltas


def format_comparison(deltas: Sequence[MetricDelta]) -> str:
    header = f"{'Camera':<10} {'Recall':>15} {'Precision':>15} {'F1-score':>15}"
    lines = [header, f"{'':<10} {'color':>7} {'MIE':>7} {'color':>7} {'MIE':>7} {'color':>7} {'MIE':>7}"]
    for delta in deltas:
        b, e = delta.baseline, delta.enhanced
        lines.append(f"{delta.name:<10} {b.recall:>7.3f} {e.recall:>7.3f} {b.precision:>7.3f} "
                     f"{e.precision:>7.3f} {b.f1:>7.3f} {e.f1:>7.3f}")
    return '\n'.join(lines)
