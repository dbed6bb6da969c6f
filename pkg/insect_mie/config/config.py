"""
insect-mie Configuration
Loads configuration from environment variables and key-value config files and
provides centralized config access for every stage.
"""

import logging
import logging.config
import os
import sys
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv

from insect_mie.errors import ConfigInvalid

# Load environment variables from .env file
load_dotenv()

# Keys the pipeline understands; anything else in a config file is ignored
SETTING_PREFIXES = ('MIE_', 'DETECTOR_', 'ABUNDANCE_', 'SEQUENCE_', 'SYNTH_', 'INSECT_MIE_')


class Config:
    """Centralized configuration for all stages"""

    # Logging Configuration
    LOG_LEVEL = os.getenv('INSECT_MIE_LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = os.getenv('INSECT_MIE_LOG_FORMAT', '%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Concurrency Settings
    WORKERS = int(os.getenv('INSECT_MIE_WORKERS', str(os.cpu_count() or 1)))

    # Error Handling
    CONTINUE_ON_FRAME_FAILURE = os.getenv('INSECT_MIE_CONTINUE_ON_FRAME_FAILURE', 'true').lower() == 'true'

    # Sequence defaults
    SEQUENCE_INTERVAL_SECONDS = float(os.getenv('SEQUENCE_INTERVAL_SECONDS', '30'))
    SEQUENCE_INTERVAL_SLACK_SECONDS = float(os.getenv('SEQUENCE_INTERVAL_SLACK_SECONDS', '5'))

    # Default frame size for normalized box files (monitoring camera resolution)
    FRAME_WIDTH = int(os.getenv('INSECT_MIE_FRAME_WIDTH', '1920'))
    FRAME_HEIGHT = int(os.getenv('INSECT_MIE_FRAME_HEIGHT', '1080'))

    VERSION = '1.0.0'

    @classmethod
    def settings(cls, config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, object]] = None) -> Dict[str, str]:
        """
        Merge settings from the environment, a key-value config file and overrides.

        Precedence, lowest first: environment, config file, overrides.
        Overrides whose value is None are skipped so unset CLI flags fall through.
        """
        merged: Dict[str, str] = {
            key: value for key, value in os.environ.items() if key.startswith(SETTING_PREFIXES)
        }

        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise ConfigInvalid(f"config file not found: {path}")
            for key, value in dotenv_values(path).items():
                if value is None:
                    continue
                if not key.startswith(SETTING_PREFIXES):
                    logging.getLogger(__name__).warning(f"Ignoring unknown config key {key} in {path}")
                    continue
                merged[key] = value

        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = str(value)

        return merged

    @classmethod
    def workers(cls, settings: Optional[Mapping[str, str]] = None) -> int:
        """Worker pool size from settings, falling back to the environment default"""
        raw = (settings or {}).get('INSECT_MIE_WORKERS')
        workers = int(raw) if raw is not None else cls.WORKERS
        if workers < 1:
            raise ConfigInvalid(f"worker count must be at least 1, got {workers}")
        return workers


def setup_logging(level: Optional[str] = None, log_config: Optional[Union[str, Path]] = None) -> logging.Logger:
    """
    Configure the package logger once.

    With an ini file the stdlib fileConfig loader takes over completely,
    otherwise a stderr StreamHandler with the configured format is attached.
    """
    logger = logging.getLogger('insect_mie')

    if log_config is not None:
        path = Path(log_config)
        if not path.is_file():
            raise ConfigInvalid(f"logging config not found: {path}")
        logging.config.fileConfig(path, disable_existing_loggers=False)
        return logger

    logger.setLevel(getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO))
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(Config.LOG_FORMAT))
        logger.addHandler(handler)

    return logger


def get_setting(settings: Mapping[str, str], key: str, default, cast=str):
    """Typed lookup with a ConfigInvalid on bad values"""
    if key not in settings:
        return default
    raw = settings[key]
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"invalid value {raw!r} for {key}: {e}") from e
