"""
Tests for Motion-Informed Enhancement
"""

import os
import time
from datetime import timedelta
from fractions import Fraction

import numpy as np
import pytest

from conftest import T0, make_record, uniform_frame
from insect_mie.core import ColorFrame, FrameRecord, GrayFrame
from insect_mie.errors import ConfigInvalid, DimensionMismatch, EmptySequence, FrameTooSmall, UnsortedInput
from insect_mie.mie import (
    DirectorySink,
    EdgePolicy,
    KernelKind,
    MemorySink,
    MieConfig,
    enhance,
    enhance_sequence,
    grayscale_blur,
    motion_likelihood,
    split_segments,
)
from insect_mie.synth import FlatBackground, InsectSpec, SynthConfig, generate
from insect_mie.utils.image_io import write_color_frame

BINOMIAL_5 = np.array([1, 4, 6, 4, 1], dtype=np.int64)


def gray_plane(values) -> GrayFrame:
    return GrayFrame(np.asarray(values, dtype=np.uint8))


def reference_blur(gray: np.ndarray) -> np.ndarray:
    """Direct 5x5 binomial convolution with replicated borders"""
    kernel = np.outer(BINOMIAL_5, BINOMIAL_5)
    padded = np.pad(gray.astype(np.int64), 2, mode='edge')
    height, width = gray.shape
    acc = np.zeros((height, width), dtype=np.int64)
    for dy in range(5):
        for dx in range(5):
            acc += kernel[dy, dx] * padded[dy:dy + height, dx:dx + width]
    return (acc + 128) // 256


class TestGrayscaleBlur:
    def test_uniform_frame(self):
        blurred = grayscale_blur(uniform_frame(77), MieConfig())
        assert np.all(blurred.samples == 77)

    def test_pure_green(self):
        blurred = grayscale_blur(uniform_frame((0, 255, 0)), MieConfig())
        assert np.all(blurred.samples == 150)

    def test_single_white_pixel(self):
        rgb = np.zeros((9, 9, 3), dtype=np.uint8)
        rgb[4, 4] = 255
        blurred = grayscale_blur(ColorFrame(rgb), MieConfig())
        # round(255 * (6/16)^2)
        assert blurred.samples[4, 4] == 36
        assert blurred.samples[4, 6] == round(255 * 6 * 1 / 256)
        assert blurred.samples[0, 0] == 0

    def test_gaussian_kernel_keeps_constant(self):
        cfg = MieConfig(kernel=KernelKind.GAUSSIAN, blur_sigma=1.5)
        assert np.all(grayscale_blur(uniform_frame(201), cfg).samples == 201)

    def test_frame_smaller_than_kernel(self):
        with pytest.raises(FrameTooSmall):
            grayscale_blur(uniform_frame(10, width=4, height=4), MieConfig())

    def test_larger_binomial_kernel(self):
        weights, normalizer = MieConfig(blur_kernel_size=7).kernel_weights()
        assert list(weights) == [1, 6, 15, 20, 15, 6, 1]
        assert normalizer == 64


class TestMotionLikelihood:
    def test_static(self):
        plane = gray_plane(np.full((4, 4), 90))
        assert not motion_likelihood(plane, plane, plane).samples.any()

    def test_pixel_values(self):
        prev, curr, nxt = (gray_plane(np.full((3, 3), v)) for v in (10, 20, 10))
        assert np.all(motion_likelihood(prev, curr, nxt).samples == 20)

    def test_saturates(self):
        prev, curr, nxt = (gray_plane(np.full((3, 3), v)) for v in (0, 200, 0))
        assert np.all(motion_likelihood(prev, curr, nxt).samples == 255)

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            motion_likelihood(gray_plane(np.zeros((3, 3))), gray_plane(np.zeros((3, 4))), gray_plane(np.zeros((3, 3))))


class TestEnhance:
    def test_static_pixel(self):
        frame = uniform_frame((50, 80, 100))
        enhanced = enhance(frame, frame, frame, MieConfig())
        assert tuple(enhanced.rgb[2, 3]) == (0, 80, 75)

    def test_blue_rounds_half_up(self):
        frame = uniform_frame((50, 80, 101))
        assert enhance(frame, frame, frame, MieConfig()).blue[0, 0] == 76

    def test_mismatched_sizes(self):
        with pytest.raises(DimensionMismatch):
            enhance(uniform_frame(1), uniform_frame(1, width=17), uniform_frame(1), MieConfig())

    def test_golden_64x64(self):
        """Hand-built triple against an independent exact-arithmetic oracle"""
        background, mover, sitter = (40, 90, 160), (255, 255, 255), (10, 250, 30)
        frames = []
        for step in range(3):
            rgb = np.empty((64, 64, 3), dtype=np.uint8)
            rgb[:] = background
            x = 10 + 8 * step
            rgb[20:28, x:x + 8] = mover
            rgb[40:46, 40:46] = sitter
            frames.append(ColorFrame(rgb))

        def luminance(color):
            exact = sum(Fraction(w).limit_denominator(1000) * c for w, c in zip(('0.299', '0.587', '0.114'), color))
            return int(exact + Fraction(1, 2))

        luma = {color: luminance(color) for color in (background, mover, sitter)}
        assert luma == {background: 83, mover: 255, sitter: 153}

        blurred = []
        for frame in frames:
            gray = np.empty((64, 64), dtype=np.int64)
            for color, value in luma.items():
                gray[np.all(frame.rgb == color, axis=2)] = value
            blurred.append(reference_blur(gray))

        expected = np.empty((64, 64, 3), dtype=np.int64)
        expected[:, :, 0] = np.minimum(np.abs(blurred[1] - blurred[0]) + np.abs(blurred[2] - blurred[1]), 255)
        expected[:, :, 1] = frames[1].green
        expected[:, :, 2] = (frames[1].blue.astype(np.int64) + frames[1].red + 1) // 2

        enhanced = enhance(*frames, MieConfig())
        np.testing.assert_array_equal(enhanced.rgb, expected.astype(np.uint8))
        # saturated where the bright square sits only in the middle frame
        assert enhanced.red[24, 19] == 255
        # the static square leaves no trace
        assert not enhanced.red[36:50, 36:50].any()

    def test_static_nullity(self, rng):
        cfg = MieConfig()
        for _ in range(100):
            frame = ColorFrame(rng.integers(0, 256, size=(24, 32, 3), dtype=np.uint8))
            enhanced = enhance(frame, frame, frame, cfg)
            assert not enhanced.red.any()
            np.testing.assert_array_equal(enhanced.green, frame.green)

    def test_symmetric_in_time(self, rng):
        frames = [ColorFrame(rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)) for _ in range(3)]
        forward = enhance(frames[0], frames[1], frames[2], MieConfig())
        backward = enhance(frames[2], frames[1], frames[0], MieConfig())
        np.testing.assert_array_equal(forward.rgb, backward.rgb)

    def test_change_stays_local(self):
        base = np.full((40, 40, 3), 100, dtype=np.uint8)
        changed = base.copy()
        changed[20, 20] = 255
        frames = [ColorFrame(base), ColorFrame(changed), ColorFrame(base)]
        red = enhance(*frames, MieConfig()).red
        assert red[20, 20] > 0
        nonzero = np.argwhere(red)
        assert np.abs(nonzero - [20, 20]).max() <= 2

    def test_moving_blob_energy_inside_truth(self):
        blob = InsectSpec(radius=5.5, aspect=1.0, color=(255, 255, 255), waypoints=((20.0, 30.0), (36.0, 30.0)))
        cfg = SynthConfig(width=64, height=60, frame_count=3, background=FlatBackground((60, 60, 60)), insects=(blob,))
        frames, truth = generate(cfg)
        red = enhance(*frames, MieConfig()).red.astype(np.float64)
        box = truth[1][0].box
        inside = np.zeros(red.shape, dtype=bool)
        inside[int(box.y_min):int(np.ceil(box.y_max)), int(box.x_min):int(np.ceil(box.x_max))] = True
        assert red[inside].mean() >= 5 * red[~inside].mean()


class TestConfig:
    @pytest.mark.parametrize('kwargs', [
        {'blur_kernel_size': 4},
        {'blur_kernel_size': 1},
        {'blur_sigma': 0},
        {'grayscale_weights': (0.5, 0.5, 0.5)},
        {'max_gap_factor': 0.5},
        {'output_format': 'bmp'},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigInvalid):
            MieConfig(**kwargs)

    def test_from_settings(self):
        cfg = MieConfig.from_settings({'MIE_EDGE_POLICY': 'skip', 'MIE_KERNEL': 'gaussian',
                                       'SEQUENCE_INTERVAL_SECONDS': '60'})
        assert cfg.edge_policy is EdgePolicy.SKIP
        assert cfg.kernel is KernelKind.GAUSSIAN
        assert cfg.nominal_interval == 60.0


class TestSequence:
    @staticmethod
    def _sequence(count, seed=0, offsets=None):
        rng = np.random.default_rng(seed)
        records, frames = [], {}
        for k in range(count):
            seconds = offsets[k] if offsets else 30.0 * k
            record = make_record(k, seconds=seconds)
            records.append(record)
            frames[record.path] = ColorFrame(rng.integers(0, 256, size=(16, 20, 3), dtype=np.uint8))
        return records, frames

    def test_single_frame_replicates(self):
        records, frames = self._sequence(1)
        sink = MemorySink()
        report = enhance_sequence(records, MieConfig(), sink, loader=frames.__getitem__)
        assert report.written == 1
        assert not sink.ordered()[0].red.any()

    def test_skip_edges(self):
        records, frames = self._sequence(3)
        sink = MemorySink()
        report = enhance_sequence(records, MieConfig(edge_policy='skip'), sink, loader=frames.__getitem__)
        assert report.written == 1
        assert report.skipped_edges == 2
        assert list(sink.frames) == [1]

    def test_replicate_writes_every_frame(self):
        records, frames = self._sequence(25)
        report = enhance_sequence(records, MieConfig(), MemorySink(), loader=frames.__getitem__, chunk_size=4)
        assert report.written == 25
        assert not report.failures

    def test_middle_frame_matches_direct_enhance(self):
        records, frames = self._sequence(5)
        sink = MemorySink()
        enhance_sequence(records, MieConfig(), sink, loader=frames.__getitem__, chunk_size=2)
        direct = enhance(*(frames[r.path] for r in records[1:4]), MieConfig())
        np.testing.assert_array_equal(sink.frames[2].rgb, direct.rgb)

    def test_worker_count_does_not_change_output(self):
        records, frames = self._sequence(30, seed=3)
        single, pooled = MemorySink(), MemorySink()
        enhance_sequence(records, MieConfig(), single, workers=1, loader=frames.__getitem__)
        enhance_sequence(records, MieConfig(), pooled, workers=4, loader=frames.__getitem__, chunk_size=5)
        assert single.frames.keys() == pooled.frames.keys()
        for index in single.frames:
            np.testing.assert_array_equal(single.frames[index].rgb, pooled.frames[index].rgb)

    def test_decode_failure_is_reported(self):
        records, frames = self._sequence(5)
        del frames[records[2].path]
        sink = MemorySink()
        report = enhance_sequence(records, MieConfig(), sink, loader=frames.__getitem__)
        assert [f.sequence_index for f in report.failures] == [2]
        assert report.written == len(sink.frames) == 4
        assert sorted(sink.frames) == [0, 1, 3, 4]

    def test_empty_sequence(self):
        with pytest.raises(EmptySequence):
            enhance_sequence([], MieConfig(), MemorySink())

    def test_directory_sink(self, tmp_path):
        records, frames = self._sequence(3)
        enhance_sequence(records, MieConfig(), DirectorySink(tmp_path, MieConfig()), loader=frames.__getitem__)
        assert sorted(p.name for p in tmp_path.iterdir()) == [f"{r.stem}.png" for r in records]


class TestSegments:
    def test_gap_splits(self):
        offsets = [0, 30, 60, 3600, 3630]
        records = [make_record(k, seconds=s) for k, s in enumerate(offsets)]
        segments = split_segments(records, 30.0, 3.0)
        assert [[r.sequence_index for r in s] for s in segments] == [[0, 1, 2], [3, 4]]

    def test_gap_at_limit_does_not_split(self):
        records = [make_record(0, seconds=0), make_record(1, seconds=90)]
        assert len(split_segments(records, 30.0, 3.0)) == 1

    def test_unsorted(self):
        records = [make_record(1), make_record(0)]
        with pytest.raises(UnsortedInput):
            split_segments(records, 30.0, 3.0)

    def test_segments_enhanced_independently(self):
        records = [
            FrameRecord('S1-0', T0 + timedelta(seconds=s), k, f"f{k}.png")
            for k, s in enumerate([0, 30, 7200, 7230])
        ]
        frames = {r.path: uniform_frame(40 * (r.sequence_index + 1)) for r in records}
        sink = MemorySink()
        report = enhance_sequence(records, MieConfig(), sink, loader=frames.__getitem__)
        assert report.segments == 2
        # frame 1 is replicated as its own next neighbor, so only frame 0 contributes
        assert np.all(sink.frames[1].red == 40)
        assert np.all(sink.frames[2].red == 40)


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason='needs four cores')
class TestThroughput:
    # a day of 30 s frames at 1920x1080 within three minutes
    SECONDS_PER_FRAME = 180.0 / 2160
    FRAMES = 48

    def test_full_hd_sequence_with_workers(self, tmp_path):
        rng = np.random.default_rng(0)
        coarse = rng.integers(60, 200, size=(135, (1920 + self.FRAMES) // 8, 3), dtype=np.uint8)
        texture = coarse.repeat(8, axis=0).repeat(8, axis=1)
        records = []
        for k in range(self.FRAMES):
            record = make_record(k, directory=str(tmp_path / 'in'))
            record.path.parent.mkdir(exist_ok=True)
            write_color_frame(record.path, ColorFrame(np.ascontiguousarray(texture[:, k:k + 1920])), compress_level=1)
            records.append(record)

        cfg = MieConfig()
        started = time.perf_counter()
        report = enhance_sequence(records, cfg, DirectorySink(tmp_path / 'out', cfg), workers=4)
        elapsed = time.perf_counter() - started

        assert report.written == self.FRAMES
        assert not report.failures
        assert elapsed <= self.FRAMES * self.SECONDS_PER_FRAME
