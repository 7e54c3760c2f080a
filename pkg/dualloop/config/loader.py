# dualloop/config/loader.py
import copy
import logging
import os
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from dualloop.config.schema import ScenarioConfig
from dualloop.middleware.error_handler import ConfigParseError, ConfigValidationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "DUALLOOP"
OUTPUT_DIR_ENV = "DUALLOOP_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
DEFAULTS_NAME = "<defaults>"


def _parse(text: str, path: str) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        if mark is not None:
            raise ConfigParseError(path, mark.line + 1, mark.column + 1, problem) from e
        raise ConfigParseError(path, None, None, problem) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError(path, 1, 1, "top level must be a mapping of sections")
    return data


def _merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


class Config:
    """Raw configuration tree: packaged defaults, the user file, then environment overrides."""

    def __init__(
        self,
        path: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ):
        load_dotenv()
        self.path = path
        self.source = path or DEFAULTS_NAME
        self.environ = os.environ if environ is None else environ
        self.config_data = self._load_config(overrides or {})

    def _load_config(self, overrides: Mapping[str, Any]) -> Dict[str, Any]:
        defaults = resources.files("dualloop.config").joinpath("default.yaml").read_text()
        config = _parse(defaults, DEFAULTS_NAME)
        if self.path is not None:
            try:
                with open(self.path, "r", encoding="utf-8") as file:
                    text = file.read()
            except OSError as e:
                raise ConfigParseError(
                    self.path, None, None, f"cannot read config file ({e.strerror})"
                ) from e
            _merge(config, _parse(text, self.path))
        _merge(config, overrides)

        # Override with environment variables
        self._override_with_env(config, ENV_PREFIX)
        return config

    def _override_with_env(self, config: Dict[str, Any], prefix: str = ""):
        for key, value in config.items():
            full_key = f"{prefix}_{key}".upper() if prefix else key.upper()
            if isinstance(value, dict):
                self._override_with_env(value, full_key)
                continue
            env_value = self.environ.get(full_key)
            if env_value is None:
                continue
            logger.debug("Config %s overridden from the environment", full_key)
            try:
                if isinstance(value, bool):
                    config[key] = env_value.lower() == "true"
                elif isinstance(value, int):
                    config[key] = int(env_value)
                elif isinstance(value, float):
                    config[key] = float(env_value)
                elif isinstance(value, list):
                    config[key] = yaml.safe_load(env_value)
                else:
                    config[key] = env_value
            except (ValueError, yaml.YAMLError) as e:
                raise ConfigValidationError(
                    full_key, [{"field": full_key, "message": f"bad environment value: {e}"}]
                ) from e

    def get(self, key: str, default=None):
        value: Any = self.config_data
        for k in key.split("."):
            if not isinstance(value, dict) or k not in value:
                return default
            value = value[k]
        return value

    def validated(self) -> ScenarioConfig:
        try:
            return ScenarioConfig.model_validate(self.config_data)
        except ValidationError as e:
            failures = [
                {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
                for err in e.errors()
            ]
            raise ConfigValidationError(self.source, failures) from e


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ScenarioConfig:
    return Config(path, overrides, environ).validated()


def preflight(cfg: ScenarioConfig) -> List[str]:
    """Non-fatal geometry and sampling warnings; nothing is computed."""
    g = cfg.geometry
    warnings = []
    if g.inner_diameter_um >= g.outer_diameter_um:
        warnings.append(
            f"geometry: inner diameter {g.inner_diameter_um} um is not smaller than "
            f"outer diameter {g.outer_diameter_um} um"
        )
    if g.spacing_um < g.outer_diameter_um / 2:
        warnings.append(
            f"geometry.spacing_um: neighbour site inside outer loop "
            f"(s = {g.spacing_um} um, outer radius {g.outer_diameter_um / 2} um)"
        )
    elif g.spacing_um <= g.outer_diameter_um:
        warnings.append(
            f"geometry.spacing_um: neighbouring outer loops overlap "
            f"(s = {g.spacing_um} um, outer diameter {g.outer_diameter_um} um)"
        )
    if g.z_um == 0:
        warnings.append("geometry.z_um: scans in the loop plane cross the conductors")
    if cfg.sweep.ratio_scan_um[0] <= g.outer_diameter_um / 2:
        warnings.append("sweep.ratio_scan_um starts inside the outer loop")
    return warnings


def output_dir(cli_value: Optional[str] = None) -> str:
    load_dotenv()
    return cli_value or os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
