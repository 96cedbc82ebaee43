"""Utility modules: logging, configuration, rendering and plots."""

from .logger import ExperimentLogger
from .config import PipelineConfig, load_pipeline_config

__all__ = [
    'ExperimentLogger',
    'PipelineConfig',
    'load_pipeline_config',
]
