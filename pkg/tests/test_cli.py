"""
End-to-end tests of the insect-mie command line
"""

import csv
import json

import pytest

from insect_mie import __version__
from insect_mie.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, RUN_REPORT_NAME, run


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return {row['site']: row for row in csv.DictReader(handle)}


@pytest.fixture
def small_dataset(tmp_path):
    data = tmp_path / 'data'
    assert run(['synth', '--preset', 'easy', '--frames', '30', '--out', str(data)]) == EXIT_OK
    return data


class TestPipeline:
    def test_easy_fixture_end_to_end(self, tmp_path, capsys):
        data, mie, det = tmp_path / 'data', tmp_path / 'mie', tmp_path / 'det'
        report = tmp_path / 'reports' / 'mie.csv'

        assert run(['synth', '--preset', 'easy', '--out', str(data)]) == EXIT_OK
        assert len(list((data / 'images').glob('*.png'))) == 200

        assert run(['enhance', '--manifest', str(data / 'manifest.csv'), '--out', str(mie)]) == EXIT_OK
        assert len(list(mie.glob('*.png'))) == 200
        run_report = json.loads((mie / RUN_REPORT_NAME).read_text())
        assert run_report['status'] == 'COMPLETE'
        assert run_report['command'] == 'enhance'
        assert run_report['summary']['frames_written'] == 200

        assert run(['detect', '--in', str(mie), '--out', str(det)]) == EXIT_OK
        assert len(list(det.glob('*.txt'))) == 200

        capsys.readouterr()
        assert run(['eval', '--det', str(det), '--ann', str(data / 'labels'), '--out', str(report)]) == EXIT_OK
        assert 'Micro' in capsys.readouterr().out

        rows = read_rows(report)
        assert list(rows) == ['SYN-0', 'Macro', 'Micro']
        assert float(rows['Micro']['f1']) >= 0.90
        assert (report.parent / RUN_REPORT_NAME).is_file()

    def test_worker_count_does_not_change_output(self, small_dataset, tmp_path):
        manifest = str(small_dataset / 'manifest.csv')
        assert run(['--workers', '1', 'enhance', '--manifest', manifest, '--out', str(tmp_path / 'one')]) == EXIT_OK
        assert run(['--workers', '3', 'enhance', '--manifest', manifest, '--out', str(tmp_path / 'three')]) == EXIT_OK
        names = sorted(p.name for p in (tmp_path / 'one').glob('*.png'))
        assert len(names) == 30
        for name in names:
            assert (tmp_path / 'one' / name).read_bytes() == (tmp_path / 'three' / name).read_bytes()

    def test_config_file_and_flag_precedence(self, small_dataset, tmp_path):
        config = tmp_path / 'run.env'
        config.write_text('MIE_EDGE_POLICY=skip\n')
        manifest = str(small_dataset / 'manifest.csv')

        assert run(['--config', str(config), 'enhance', '--manifest', manifest, '--out', str(tmp_path / 'a')]) == 0
        assert len(list((tmp_path / 'a').glob('*.png'))) == 28

        assert run(['--config', str(config), 'enhance', '--manifest', manifest,
                    '--out', str(tmp_path / 'b'), '--edge', 'replicate']) == 0
        assert len(list((tmp_path / 'b').glob('*.png'))) == 30

    def test_global_options_after_subcommand(self, tmp_path):
        config = tmp_path / 'blob.env'
        config.write_text('SYNTH_FRAMES=5\nSYNTH_WIDTH=32\nSYNTH_HEIGHT=24\n')
        out = tmp_path / 'fixture'

        assert run(['synth', '--config', str(config), '--out', str(out), '--workers', '2']) == EXIT_OK
        assert len(list((out / 'images').glob('*.png'))) == 5
        assert json.loads((out / RUN_REPORT_NAME).read_text())['workers'] == 2

    def test_global_options_before_subcommand_are_kept(self, tmp_path):
        out = tmp_path / 'fixture'
        assert run(['--workers', '3', 'synth', '--frames', '2', '--out', str(out)]) == EXIT_OK
        assert json.loads((out / RUN_REPORT_NAME).read_text())['workers'] == 3

    def test_abundance_and_stats(self, small_dataset, tmp_path):
        mie, det = tmp_path / 'mie', tmp_path / 'det'
        assert run(['enhance', '--manifest', str(small_dataset / 'manifest.csv'), '--out', str(mie)]) == EXIT_OK
        assert run(['detect', '--in', str(mie), '--out', str(det)]) == EXIT_OK

        series, chart = tmp_path / 'abundance' / 'series.csv', tmp_path / 'abundance' / 'chart.svg'
        assert run(['abundance', '--det', str(det), '--out', str(series), '--svg', str(chart)]) == EXIT_OK
        lines = series.read_text().splitlines()
        assert lines[0] == 'bin_start,raw,filtered,no_data'
        assert lines[1].startswith('2023-06-01T00:00:00Z,')
        assert chart.is_file()

        stats = tmp_path / 'stats' / 'stats.csv'
        assert run(['stats', '--ann', str(small_dataset / 'labels'), '--manifest',
                    str(small_dataset / 'manifest.csv'), '--out', str(stats)]) == EXIT_OK
        rows = read_rows(stats)
        assert rows['SYN-0']['images'] == '30'
        assert rows['SYN-0']['plant'] == 'synthetic'
        assert rows['Total']['images'] == '30'

    def test_benchmark(self, tmp_path, capsys):
        out = tmp_path / 'bench'
        assert run(['benchmark', '--sequences', '1', '--frames', '30', '--out', str(out)]) == EXIT_OK
        assert 'MIE' in capsys.readouterr().out
        assert list(read_rows(out / 'color_report.csv')) == ['SYN-0', 'Macro', 'Micro']
        assert (out / 'mie_report.csv').is_file()
        summary = json.loads((out / RUN_REPORT_NAME).read_text())['summary']
        assert summary['sites'] == 1


class TestErrors:
    def test_version(self, capsys):
        assert run(['--version']) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_missing_required_flag(self, capsys):
        assert run(['enhance', '--in', 'frames']) == EXIT_USAGE
        error = last_error(capsys)
        assert error['status'] == 'ERROR'
        assert error['error_type'] == 'UsageError'
        assert '--out' in error['error_message']

    def test_unknown_command(self, capsys):
        assert run(['paint']) == EXIT_USAGE
        assert last_error(capsys)['error_type'] == 'UsageError'

    def test_missing_config_file(self, tmp_path, capsys):
        assert run(['--config', str(tmp_path / 'absent.env'), 'synth', '--out', str(tmp_path)]) == EXIT_USAGE
        assert last_error(capsys)['error_type'] == 'ConfigInvalid'

    def test_invalid_setting(self, tmp_path, capsys):
        code = run(['enhance', '--in', str(tmp_path), '--out', str(tmp_path / 'out'), '--kernel-size', '4'])
        assert code == EXIT_USAGE
        assert last_error(capsys)['error_type'] == 'ConfigInvalid'

    def test_missing_input_directory(self, tmp_path, capsys):
        assert run(['eval', '--det', str(tmp_path / 'nope'), '--ann', str(tmp_path)]) == EXIT_USAGE
        error = last_error(capsys)
        assert error['command'] == 'eval'

    def test_stage_failure(self, tmp_path, capsys):
        empty = tmp_path / 'empty'
        empty.mkdir()
        assert run(['eval', '--det', str(empty), '--ann', str(empty)]) == EXIT_FAILURE
        error = last_error(capsys)
        assert error['error_type'] == 'EmptySequence'
        assert error['command'] == 'eval'
