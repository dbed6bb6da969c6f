"""
Tests for settings precedence, logging setup and the stage base class
"""

import logging
from pathlib import Path

import pytest

from insect_mie.base.base_stage import BaseStage
from insect_mie.config import Config, get_setting, setup_logging
from insect_mie.errors import ConfigInvalid, UsageError

CONFIGS = Path(__file__).resolve().parents[1] / 'configs'


class TestSettings:
    def test_precedence(self, tmp_path, monkeypatch):
        monkeypatch.setenv('MIE_BLUR_KERNEL_SIZE', '3')
        monkeypatch.setenv('DETECTOR_PAD', '7')
        monkeypatch.setenv('ABUNDANCE_BIN_SECONDS', '3600')
        path = tmp_path / 'run.env'
        path.write_text('MIE_BLUR_KERNEL_SIZE=7\nDETECTOR_PAD=4\n')

        settings = Config.settings(path, {'MIE_BLUR_KERNEL_SIZE': 9, 'DETECTOR_PAD': None})
        assert settings['MIE_BLUR_KERNEL_SIZE'] == '9'
        assert settings['DETECTOR_PAD'] == '4'
        assert settings['ABUNDANCE_BIN_SECONDS'] == '3600'

    def test_unrelated_environment_is_ignored(self, monkeypatch):
        monkeypatch.setenv('HOME_DIRECTORY_SIZE', '1')
        assert 'HOME_DIRECTORY_SIZE' not in Config.settings()

    def test_unknown_key_in_file(self, tmp_path, caplog):
        path = tmp_path / 'run.env'
        path.write_text('COLOUR=blue\nDETECTOR_PAD=1\n')
        with caplog.at_level(logging.WARNING, logger='insect_mie'):
            settings = Config.settings(path)
        assert 'COLOUR' not in settings
        assert 'Ignoring unknown config key COLOUR' in caplog.text

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            Config.settings(tmp_path / 'absent.env')

    def test_shipped_pipeline_file(self):
        settings = Config.settings(CONFIGS / 'pipeline.env')
        assert settings['ABUNDANCE_WINDOW_SECONDS'] == '120'
        assert settings['MIE_EDGE_POLICY'] == 'replicate'

    def test_get_setting(self):
        assert get_setting({'A': '3'}, 'A', 0, int) == 3
        assert get_setting({}, 'A', 5, int) == 5
        with pytest.raises(ConfigInvalid):
            get_setting({'A': 'three'}, 'A', 0, int)

    def test_workers(self):
        assert Config.workers({'INSECT_MIE_WORKERS': '3'}) == 3
        assert Config.workers({}) == Config.WORKERS
        with pytest.raises(ConfigInvalid):
            Config.workers({'INSECT_MIE_WORKERS': '0'})


class TestLogging:
    def test_default_handler(self):
        logger = setup_logging('debug')
        assert logger.name == 'insect_mie'
        assert logger.level == logging.DEBUG
        assert len(logger.handlers) == 1
        setup_logging('debug')
        assert len(logger.handlers) == 1

    def test_ini_file(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        root = logging.getLogger()
        saved = (list(root.handlers), root.level)
        try:
            logger = setup_logging(log_config=CONFIGS / 'logging_config.ini')
            logger.info('rotating file check')
            assert 'rotating file check' in (tmp_path / 'insect_mie.log').read_text()
        finally:
            for handler in list(root.handlers):
                root.removeHandler(handler)
                if handler not in saved[0]:
                    handler.close()
            for handler in saved[0]:
                root.addHandler(handler)
            root.setLevel(saved[1])
            for name in ('matplotlib', 'PIL', 'py.warnings'):
                other = logging.getLogger(name)
                for handler in list(other.handlers):
                    other.removeHandler(handler)
                other.setLevel(logging.NOTSET)
                other.propagate = True

    def test_missing_ini(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            setup_logging(log_config=tmp_path / 'absent.ini')


class EchoStage(BaseStage):
    def __init__(self, settings=None, workers=None):
        super().__init__('echo', settings, workers)

    def run(self, request):
        if request.get('fail'):
            raise RuntimeError('asked to fail')
        return self.create_standard_response({'in_dir': Path('frames')}, {}, {'echo': request.get('value')})


class TestBaseStage:
    def test_execute_adds_metadata(self):
        stage = EchoStage(workers=2)
        result = stage.execute({'value': 5})
        assert result['status'] == 'COMPLETE'
        assert result['stage'] == 'echo'
        assert result['summary'] == {'echo': 5}
        assert result['inputs'] == {'in_dir': 'frames'}
        assert result['version'] == Config.VERSION
        assert result['processing_time_ms'] >= 0
        assert stage.get_status()['processing_count'] == 1
        assert stage.logger.name == 'insect_mie.echo'

    def test_failure_is_counted_and_raised(self):
        stage = EchoStage(workers=1)
        with pytest.raises(RuntimeError):
            stage.execute({'fail': True})
        status = stage.get_status()
        assert status['error_count'] == 1
        assert status['processing_count'] == 0

    def test_workers_from_settings(self):
        assert EchoStage({'INSECT_MIE_WORKERS': '3'}).workers == 3

    def test_continue_on_frame_failure_setting(self):
        assert EchoStage({'INSECT_MIE_CONTINUE_ON_FRAME_FAILURE': 'false'}, 1).continue_on_frame_failure is False
        assert EchoStage({'INSECT_MIE_CONTINUE_ON_FRAME_FAILURE': 'true'}, 1).continue_on_frame_failure is True

    def test_error_response(self):
        response = BaseStage.create_error_response('eval', ValueError('bad'))
        assert response['status'] == 'ERROR'
        assert response['error_type'] == 'ValueError'
        assert response['error_message'] == 'bad'
        assert response['command'] == 'eval'

    def test_require_dir(self, tmp_path):
        assert BaseStage.require_dir({'det_dir': str(tmp_path)}, 'det_dir') == tmp_path
        with pytest.raises(UsageError):
            BaseStage.require_dir({}, 'det_dir')
        with pytest.raises(UsageError):
            BaseStage.require_dir({'det_dir': str(tmp_path / 'nope')}, 'det_dir')
