# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import logging
from os import PathLike
from pathlib import Path
from typing import List, Optional

import marshmallow
import marshmallow_dataclass
import yaml

from sivsim.common_serdes import MarshmallowDataclassExtensions, ext_field

logger = logging.getLogger(__name__)


class InvalidConfigError(Exception):
    """Raised when the provided configuration is incorrect"""


@marshmallow_dataclass.dataclass
class Config(MarshmallowDataclassExtensions):
    """User-level sivsim settings, none of which changes numerical results"""

    jobs: Optional[int] = ext_field(None)
    log_level: Optional[str] = ext_field(None)

    def update(self, config: "Config"):
        if config.jobs is not None:
            if config.jobs < 1:
                raise InvalidConfigError(f"jobs must be at least 1, got {config.jobs}")
            self.jobs = config.jobs
        if config.log_level is not None:
            self.log_level = config.log_level.upper()


class ConfigManager:
    """Manager used to load sivsim's settings from files.

    Files listed earlier in `DEFAULT_SEARCH_PATHS` (or in the list passed to
    the constructor) take priority over the ones that follow.
    """

    DEFAULT_SEARCH_PATHS = [
        "sivsim.yaml",
        "~/.config/sivsim/sivsim.yaml",
        "~/.config/sivsim/config.yaml",
    ]

    def __init__(self, search_paths: Optional[List[PathLike]] = None):
        if search_paths is None:
            search_paths = self.DEFAULT_SEARCH_PATHS

        self.search_paths = []
        for path in search_paths:
            self.search_paths += [Path(path).expanduser()]

    def load(self, overrides: Optional[Config] = None, default: Optional[Config] = None):
        config = Config() if default is None else default

        for path in reversed(self.search_paths):
            if not path.is_file():
                continue

            with open(path) as f:
                try:
                    yaml_dict = yaml.safe_load(f)
                except yaml.YAMLError:
                    logger.warning(f"{path} configuration file is not a valid YAML")
                    continue

            try:
                config.update(Config.from_dict(yaml_dict or {}))
            except marshmallow.ValidationError as e:
                logger.warning(f"{path} configuration file is not valid ({e.messages})")
                continue
            except InvalidConfigError as e:
                logger.warning(f"{path} configuration file is not valid ({e})")
                continue

        if overrides is not None:
            config.update(overrides)

        logger.debug(f"Final configuration used by sivsim: {config}")

        return config


config = ConfigManager().load()
