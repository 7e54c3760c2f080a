from dualloop.config.loader import Config, load_config, output_dir, preflight
from dualloop.config.schema import ScenarioConfig, parse_frequency

__all__ = ["Config", "ScenarioConfig", "load_config", "output_dir", "parse_frequency", "preflight"]
