"""
Logging configuration for the simulation and analysis pipelines
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

ROOT_LOGGER = "biprism"

COMPONENTS = ["source", "whichpath", "coincidence", "optics", "iccd", "pipeline"]

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(log_dir: Optional[Path] = None, level: Optional[str] = None) -> Dict[str, logging.Logger]:
    """Configure one logger per component plus a console handler on the root logger

    File handlers are only installed when a log directory is given (or set in
    BIPRISM_LOG_DIR).
    """
    level_name = (level or os.getenv("BIPRISM_LOG_LEVEL", "INFO")).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    if log_dir is None and os.getenv("BIPRISM_LOG_DIR"):
        log_dir = Path(os.environ["BIPRISM_LOG_DIR"])

    formatter = logging.Formatter(LOG_FORMAT)
    loggers = {}

    for component in COMPONENTS:
        logger = logging.getLogger(f"{ROOT_LOGGER}.{component}")
        logger.setLevel(log_level)

        # Remove existing handlers so repeated CLI calls in one process don't duplicate output
        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        if log_dir is not None:
            log_dir = Path(log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_dir / f"{component}.log", encoding='utf-8')
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        loggers[component] = logger

    root_logger = logging.getLogger(ROOT_LOGGER)
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
    root_logger.addHandler(console_handler)

    return loggers


def get_logger(component: str) -> logging.Logger:
    """Logger for one component, e.g. get_logger("optics")"""
    return logging.getLogger(f"{ROOT_LOGGER}.{component}")


def _jsonable(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return str(value)


class RunLogger:
    """Structured JSON records for pipeline runs"""

    def __init__(self, component: str = "pipeline"):
        self.logger = get_logger(component)

    def _emit(self, kind: str, payload: Dict[str, Any]):
        self.logger.info(f"{kind}: {json.dumps(payload, sort_keys=True, default=_jsonable)}")

    def log_run(self, command: str, params: Dict[str, Any]):
        """Log the parameters a command was started with"""
        self._emit("Run started", {"command": command, "params": params})

    def log_alpha(self, run_index: int, result: Dict[str, Any]):
        """Log one alpha evaluation"""
        self._emit("Alpha", {"run": run_index, "result": result})

    def log_fit(self, fit_type: str, result: Dict[str, Any]):
        """Log a fit result (peaks, z)"""
        self._emit(f"Fit {fit_type}", result)

    def log_artifact(self, path: Path, kind: str):
        """Log a written artifact"""
        self._emit("Artifact", {"kind": kind, "path": str(path)})

    def log_stage(self, stage: str, decision: str, reason: str = ""):
        """Log a stage transition or failure"""
        self._emit("Stage", {"stage": stage, "decision": decision, "reason": reason})
