"""Synthetic world, configuration, stage pipeline and CLI."""

from .config import DEFAULTS, Config, default_config, load_config, parse_config
from .pipeline import Pipeline, StageFailed, run_pipeline
from .world import (EFFECTS, SyntheticRun, WeatherEffect, World, WorldSpec, generate_world,
                    render_run)
