"""
Color vs motion-enhanced benchmark for insect-mie
Generates synthetic sequences, runs the baseline detector once on the plain
color red channel and once on the MIE red channel, and compares the scores.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from insect_mie.core import Annotation, ColorFrame, Detection, FrameRecord
from insect_mie.detector import DetectorConfig, detect
from insect_mie.evaluation import EvalReport, MetricDelta, compare_reports, evaluate
from insect_mie.mie import MemorySink, MieConfig, enhance_sequence
from insect_mie.synth import SynthConfig, easy_fixture, frame_records, generate

logger = logging.getLogger(__name__)

DEFAULT_SEQUENCES = 10
DEFAULT_FRAMES = 200

# Plain color detection: a red level halfway between the fixture's background
# (96) and insect (128) red, so every insect-colored shape is found
COLOR_THRESHOLD = 112


@dataclass(frozen=True)
class BenchmarkResult:
    color: EvalReport
    enhanced: EvalReport

    @property
    def f1_gain(self) -> float:
        return self.enhanced.micro.f1 - self.color.micro.f1

    def deltas(self) -> List[MetricDelta]:
        return compare_reports(self.color, self.enhanced)

    def to_dict(self) -> Dict[str, object]:
        return {
            'sites': len(self.enhanced.sites),
            'color_micro_f1': self.color.micro.f1,
            'mie_micro_f1': self.enhanced.micro.f1,
            'micro_f1_gain': self.f1_gain,
            'color_macro_f1': self.color.macro.f1,
            'mie_macro_f1': self.enhanced.macro.f1,
        }


def benchmark_configs(sequences: int = DEFAULT_SEQUENCES, frames: int = DEFAULT_FRAMES,
                      seed: int = 0) -> List[SynthConfig]:
    return [easy_fixture(seed=seed + i, site_id=f"SYN-{i}", frame_count=frames) for i in range(sequences)]


def _run_sequence(cfg: SynthConfig, mie_cfg: MieConfig, detector_cfg: DetectorConfig,
                  color_cfg: DetectorConfig
                  ) -> Tuple[List[FrameRecord], Dict[FrameRecord, List[Detection]],
                             Dict[FrameRecord, List[Detection]], Dict[FrameRecord, List[Annotation]]]:
    records = frame_records(cfg)
    frames, truth = generate(cfg, records)
    by_path: Dict[Path, ColorFrame] = {record.path: frame for record, frame in zip(records, frames)}

    sink = MemorySink()
    mie_cfg = replace(mie_cfg, nominal_interval=cfg.interval)
    enhance_sequence(records, mie_cfg, sink, workers=1, loader=by_path.__getitem__)

    red_cfg = replace(detector_cfg, channel='red')
    color_dets = {record: detect(frame, color_cfg, record) for record, frame in zip(records, frames)}
    mie_dets = {
        sink.records[index]: detect(frame, red_cfg, sink.records[index])
        for index, frame in sink.frames.items()
    }
    annotations = {record: anns for record, anns in zip(records, truth)}
    logger.info(
        f"{cfg.site_id}: {sum(map(len, truth))} insects, {sum(map(len, color_dets.values()))} color "
        f"and {sum(map(len, mie_dets.values()))} MIE detections"
    )
    return records, color_dets, mie_dets, annotations


def run_benchmark(configs: Optional[Sequence[SynthConfig]] = None, mie_cfg: Optional[MieConfig] = None,
                  detector_cfg: Optional[DetectorConfig] = None, color_cfg: Optional[DetectorConfig] = None,
                  workers: int = 1) -> BenchmarkResult:
    """
    Evaluate the detector on color and on MIE frames of every sequence.
    Each sequence is its own camera site; sequences run concurrently.

    The MIE run thresholds the motion (red) channel with detector_cfg. The
    color run thresholds the plain red channel with color_cfg, by default at
    COLOR_THRESHOLD with the same morphology and area limits.
    """
    configs = list(configs) if configs is not None else benchmark_configs()
    mie_cfg = mie_cfg or MieConfig()
    detector_cfg = detector_cfg or DetectorConfig()
    color_cfg = color_cfg or replace(detector_cfg, threshold=COLOR_THRESHOLD, channel='red')

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='benchmark') as pool:
        runs = list(pool.map(lambda cfg: _run_sequence(cfg, mie_cfg, detector_cfg, color_cfg), configs))

    records: List[FrameRecord] = []
    color_dets: Dict[FrameRecord, List[Detection]] = {}
    mie_dets: Dict[FrameRecord, List[Detection]] = {}
    annotations: Dict[FrameRecord, List[Annotation]] = {}
    for run_records, run_color, run_mie, run_truth in runs:
        records.extend(run_records)
        color_dets.update(run_color)
        mie_dets.update(run_mie)
        annotations.update(run_truth)

    result = BenchmarkResult(
        color=evaluate(records, color_dets, annotations),
        enhanced=evaluate(records, mie_dets, annotations),
    )
    logger.info(
        f"Micro F1 color {result.color.micro.f1:.3f} -> MIE {result.enhanced.micro.f1:.3f} "
        f"({result.f1_gain:+.3f})"
    )
    return result
