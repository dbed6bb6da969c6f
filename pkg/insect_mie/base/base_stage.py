"""
Base Stage Class for insect-mie
Provides common functionality for all pipeline stages: logging, settings,
timing metadata, run counters and the standard success/error responses.
"""

import logging
import time
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from insect_mie.config import Config, get_setting, setup_logging
from insect_mie.errors import UsageError


class BaseStage(ABC):
    """
    Base class for all insect-mie stages
    A stage turns one request (paths and options) into one result dictionary.
    """

    def __init__(self, stage_type: str, settings: Optional[Mapping[str, str]] = None,
                 workers: Optional[int] = None):
        self.stage_type = stage_type
        self.config = Config()
        self.settings: Dict[str, str] = dict(settings or {})
        self.logger = self._setup_logging()
        self.workers = workers or Config.workers(self.settings)
        self.processing_count = 0
        self.error_count = 0
        self.start_time = datetime.now(timezone.utc)

        self.continue_on_frame_failure = get_setting(
            self.settings, 'INSECT_MIE_CONTINUE_ON_FRAME_FAILURE',
            self.config.CONTINUE_ON_FRAME_FAILURE, lambda raw: raw.strip().lower() == 'true',
        )

        self.logger.debug(f"Initializing {stage_type} stage with {self.workers} worker(s)")

    def _setup_logging(self) -> logging.Logger:
        """Setup logging for the stage; the package logger is configured once"""
        if not logging.getLogger('insect_mie').handlers:
            setup_logging()
        return logging.getLogger(f"insect_mie.{self.stage_type}")

    def execute(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """Run the stage and attach timing metadata to its result"""
        self.logger.debug(f"Processing request: {request}")
        start_time = time.time()
        try:
            result = self.run(request)
        except Exception as e:
            self.error_count += 1
            self.logger.error(f"{self.stage_type} failed: {e}")
            raise
        processing_time = int((time.time() - start_time) * 1000)

        result.update({
            'stage': self.stage_type,
            'processing_time_ms': processing_time,
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'version': self.config.VERSION,
        })
        self.processing_count += 1
        return result

    def get_status(self) -> Dict[str, Any]:
        """Get stage status information"""
        uptime = (datetime.now(timezone.utc) - self.start_time).total_seconds()
        return {
            'stage': self.stage_type,
            'uptime_seconds': uptime,
            'processing_count': self.processing_count,
            'error_count': self.error_count,
            'error_rate': self.error_count / max(self.processing_count, 1),
            'workers': self.workers,
        }

    @abstractmethod
    def run(self, request: Dict[str, Any]) -> Dict[str, Any]:
        """
        Process one request - must be implemented by subclasses

        Args:
            request: Dictionary of input/output paths and stage options

        Returns:
            Dictionary built with create_standard_response
        """
        pass

    def create_standard_response(self, inputs: Dict[str, Any], outputs: Dict[str, Any],
                                 summary: Dict[str, Any]) -> Dict[str, Any]:
        """Create standardized response format"""
        return {
            'status': 'COMPLETE',
            'inputs': {key: str(value) if isinstance(value, Path) else value for key, value in inputs.items()},
            'outputs': {key: str(value) if isinstance(value, Path) else value for key, value in outputs.items()},
            'summary': summary,
        }

    @staticmethod
    def create_error_response(command: str, error: BaseException) -> Dict[str, Any]:
        """Machine-readable error summary"""
        return {
            'status': 'ERROR',
            'command': command,
            'error_type': type(error).__name__,
            'error_message': str(error),
            'timestamp': datetime.now(timezone.utc).isoformat(),
        }

    @staticmethod
    def require_dir(request: Dict[str, Any], key: str) -> Path:
        """Existing input directory from the request, UsageError otherwise"""
        value = request.get(key)
        if value is None:
            raise UsageError(f"missing required input '{key}'")
        path = Path(value)
        if not path.is_dir():
            raise UsageError(f"{key}: {path} is not a directory")
        return path
