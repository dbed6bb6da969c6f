"""
Command-line front end for insect-mie
Parses arguments, merges settings (flag > config file > environment > default),
runs one stage and reports the outcome through the exit status:
0 success, 1 stage failure, 2 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from insect_mie import __version__
from insect_mie.base.base_stage import BaseStage
from insect_mie.config import Config, setup_logging
from insect_mie.errors import ConfigInvalid, UsageError
from insect_mie.evaluation import AP_ALL_POINT, AP_ELEVEN_POINT
from insect_mie.stages import STAGES

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RUN_REPORT_NAME = 'run_report.json'

# argparse dest -> settings key
SETTING_FLAGS = {
    'workers': 'INSECT_MIE_WORKERS',
    'log_level': 'INSECT_MIE_LOG_LEVEL',
    'interval': 'SEQUENCE_INTERVAL_SECONDS',
    'edge': 'MIE_EDGE_POLICY',
    'kernel': 'MIE_KERNEL',
    'kernel_size': 'MIE_BLUR_KERNEL_SIZE',
    'sigma': 'MIE_BLUR_SIGMA',
    'format': 'MIE_OUTPUT_FORMAT',
    'threshold': 'DETECTOR_THRESHOLD',
    'channel': 'DETECTOR_CHANNEL',
    'open_radius': 'DETECTOR_OPEN_RADIUS',
    'min_area': 'DETECTOR_MIN_AREA',
    'max_area': 'DETECTOR_MAX_AREA',
    'pad': 'DETECTOR_PAD',
    'iou': 'INSECT_MIE_IOU_THRESHOLD',
    'window': 'ABUNDANCE_WINDOW_SECONDS',
    'radius': 'ABUNDANCE_RADIUS_PX',
    'bin': 'ABUNDANCE_BIN_SECONDS',
    'anchor': 'ABUNDANCE_ANCHOR',
    'width': 'INSECT_MIE_FRAME_WIDTH',
    'height': 'INSECT_MIE_FRAME_HEIGHT',
}

# argparse dest -> stage request key
REQUEST_FIELDS = {
    'in_dir': 'in_dir',
    'manifest': 'manifest',
    'out_dir': 'out_dir',
    'out': 'out',
    'det_dir': 'det_dir',
    'ann_dir': 'ann_dir',
    'svg': 'svg',
    'pattern': 'pattern',
    'site': 'site',
    'view': 'view',
    'plant': 'plant',
    'preset': 'preset',
    'seed': 'seed',
    'frames': 'frames',
    'sequences': 'sequences',
    'ap': 'ap_method',
}


class _ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting so run() owns the exit status"""

    def error(self, message):
        raise UsageError(message)


def _add_frame_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--in', dest='in_dir', help='directory of time-lapse frames')
    parser.add_argument('--manifest', help='manifest CSV (path,site,view,plant,timestamp)')
    parser.add_argument('--pattern', help="filename pattern: 'counter', 'iso' or a regex")
    parser.add_argument('--site', help='site id for a scanned directory (default: directory name)')
    parser.add_argument('--view', choices=['Top', 'Side'], help='camera view of a scanned directory')
    parser.add_argument('--plant', help='plant of a scanned directory')
    parser.add_argument('--interval', type=float, help='nominal capture interval in seconds')


def _add_global_options(parser: argparse.ArgumentParser, default=None) -> None:
    parser.add_argument('--config', type=Path, default=default, help='key-value settings file (.env format)')
    parser.add_argument('--log-config', type=Path, default=default,
                        help='logging ini file for logging.config.fileConfig')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], type=str.upper, default=default)
    parser.add_argument('--workers', type=int, default=default,
                        help='worker threads (default: INSECT_MIE_WORKERS or all cores)')


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog='insect-mie',
        description='Motion-informed enhancement and baseline insect detection for time-lapse images.',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    _add_global_options(parser)

    # Global options are also accepted after the subcommand; SUPPRESS keeps an
    # absent option from overwriting one given before it.
    common = _ArgumentParser(add_help=False)
    _add_global_options(common, default=argparse.SUPPRESS)

    commands = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=_ArgumentParser)
    commands.required = True

    enhance = commands.add_parser('enhance', parents=[common], help='MIE over a frame sequence')
    _add_frame_source(enhance)
    enhance.add_argument('--out', dest='out_dir', required=True, help='output directory')
    enhance.add_argument('--edge', choices=['replicate', 'skip'], help='first/last frame policy')
    enhance.add_argument('--kernel', choices=['binomial', 'gaussian'])
    enhance.add_argument('--kernel-size', type=int)
    enhance.add_argument('--sigma', type=float, help='Gaussian kernel sigma')
    enhance.add_argument('--format', choices=['png', 'jpeg'])

    detect = commands.add_parser('detect', parents=[common], help='baseline detector over enhanced frames')
    _add_frame_source(detect)
    detect.add_argument('--out', dest='out_dir', required=True, help='output directory for detection files')
    detect.add_argument('--threshold', help="fixed 8-bit level or 'otsu'")
    detect.add_argument('--channel', choices=['red', 'green', 'blue', 'gray'])
    detect.add_argument('--open-radius', type=int)
    detect.add_argument('--min-area', type=int)
    detect.add_argument('--max-area', type=int)
    detect.add_argument('--pad', type=int)

    evaluate = commands.add_parser('eval', parents=[common], help='detections vs annotations')
    evaluate.add_argument('--det', dest='det_dir', required=True, help='detection files directory')
    evaluate.add_argument('--ann', dest='ann_dir', required=True, help='annotation files directory')
    evaluate.add_argument('--manifest', help='manifest CSV (default: DET/manifest.csv)')
    evaluate.add_argument('--out', help='report CSV path')
    evaluate.add_argument('--ap', choices=[AP_ALL_POINT, AP_ELEVEN_POINT], help='AP interpolation')
    evaluate.add_argument('--iou', type=float, help='matching IoU threshold')

    abundance = commands.add_parser('abundance', parents=[common], help='filtered abundance series from detections')
    abundance.add_argument('--det', dest='det_dir', required=True, help='detection files directory')
    abundance.add_argument('--manifest', help='manifest CSV (default: DET/manifest.csv)')
    abundance.add_argument('--out', required=True, help='series CSV path')
    abundance.add_argument('--svg', help='optional SVG chart path')
    abundance.add_argument('--window', type=float, help='suppression window in seconds')
    abundance.add_argument('--radius', type=float, help='same-position radius in pixels')
    abundance.add_argument('--bin', type=float, help='bin width in seconds')
    abundance.add_argument('--anchor', choices=['kept', 'any'])
    abundance.add_argument('--width', type=int, help='frame width when images are unavailable')
    abundance.add_argument('--height', type=int, help='frame height when images are unavailable')

    synth = commands.add_parser('synth', parents=[common], help='generate a synthetic data set')
    synth.add_argument('--out', dest='out_dir', required=True, help='output directory')
    synth.add_argument('--preset', choices=['easy'], help='built-in fixture instead of SYNTH_* settings')
    synth.add_argument('--seed', type=int)
    synth.add_argument('--frames', type=int)
    synth.add_argument('--site')

    stats = commands.add_parser('stats', parents=[common], help='data set statistics')
    stats.add_argument('--ann', dest='ann_dir', required=True, help='annotation files directory')
    stats.add_argument('--manifest', help='manifest CSV')
    stats.add_argument('--in', dest='in_dir', help='frame directory when no manifest is given')
    stats.add_argument('--out', help='statistics CSV path')

    benchmark = commands.add_parser('benchmark', parents=[common], help='color vs MIE detection on synthetic sequences')
    benchmark.add_argument('--sequences', type=int)
    benchmark.add_argument('--frames', type=int)
    benchmark.add_argument('--seed', type=int)
    benchmark.add_argument('--out', dest='out_dir', help='directory for the two report CSVs')

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, dest, None) for dest, key in SETTING_FLAGS.items()}


def _request(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        key: getattr(args, dest)
        for dest, key in REQUEST_FIELDS.items()
        if getattr(args, dest, None) is not None
    }


def _report_dir(request: Dict[str, Any]) -> Optional[Path]:
    if request.get('out_dir'):
        return Path(request['out_dir'])
    if request.get('out'):
        return Path(request['out']).parent
    return None


def _print_error(command: str, error: BaseException) -> None:
    print(json.dumps(BaseStage.create_error_response(command, error)), file=sys.stderr)


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit status"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _print_error('usage', e)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    command = args.command
    try:
        settings = Config.settings(args.config, _overrides(args))
        setup_logging(settings.get('INSECT_MIE_LOG_LEVEL'), args.log_config)
        request = _request(args)
        stage = STAGES[command](settings)
    except (UsageError, ConfigInvalid) as e:
        _print_error(command, e)
        return EXIT_USAGE

    try:
        result = stage.execute(request)
    except (UsageError, ConfigInvalid) as e:
        _print_error(command, e)
        return EXIT_USAGE
    except Exception as e:
        logging.getLogger('insect_mie').debug('Stage failure', exc_info=True)
        _print_error(command, e)
        return EXIT_FAILURE

    text = result.pop('text', None)
    report_dir = _report_dir(request)
    if report_dir is not None:
        report_dir.mkdir(parents=True, exist_ok=True)
        result['command'] = command
        result['workers'] = stage.workers
        (report_dir / RUN_REPORT_NAME).write_text(json.dumps(result, indent=2, default=str), encoding='utf-8')
    if text:
        print(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == '__main__':
    main()
