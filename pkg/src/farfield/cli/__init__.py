from farfield.cli.config import PipelineConfig, load_config
from farfield.cli.main import main

__all__ = ["PipelineConfig", "load_config", "main"]
