"""
Configuration: environment variables (.env) and key-value config files
"""

import os
import logging
from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

TOOL_VERSION = '0.3.0'


class Settings:
    """Process-wide settings read from the environment"""

    def __init__(self):
        self.threads = self._int_env('HC_EQTL_THREADS', os.cpu_count() or 1)
        self.db_path = os.getenv('HC_EQTL_DB', 'runs.db')
        self.log_level = os.getenv('HC_EQTL_LOG_LEVEL', 'INFO').upper()

        if self.threads < 1:
            logger.warning(f"HC_EQTL_THREADS={self.threads} is not positive, using 1")
            self.threads = 1

    @staticmethod
    def _int_env(name, default):
        raw = os.getenv(name)
        if raw is None or raw.strip() == '':
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name} must be an integer, got {raw!r}")

    @property
    def history_enabled(self):
        return bool(self.db_path)


def normalize_key(key):
    """Flag spelling and underscore spelling map to the same key"""
    return key.strip().lstrip('-').replace('-', '_').lower()


def load_config_file(path):
    """
    Parse a key-value config file

    Format:
        # comment
        key = value          (applies to every subcommand)
        [subcommand]
        key = value          (applies to that subcommand only)

    Returns:
        (global_values: dict, section_values: dict of dicts)
    """
    global_values = {}
    sections = {}
    current = global_values

    try:
        with open(path, 'r', encoding='utf-8') as handle:
            lines = handle.readlines()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")

    for line_no, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if line.startswith('[') and line.endswith(']'):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"Empty section name at {path}:{line_no}")
            current = sections.setdefault(name, {})
            continue
        if '=' not in line:
            raise ConfigError(f"Expected 'key = value' at {path}:{line_no}, got {line!r}")
        key, value = line.split('=', 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"Missing key at {path}:{line_no}")
        current[key] = value.strip()

    logger.debug(f"Loaded {len(global_values)} global and {len(sections)} section(s) from {path}")
    return global_values, sections


def build_default_map(path, command_names):
    """click default_map: global keys for every command, section keys override"""
    global_values, sections = load_config_file(path)
    unknown = set(sections) - set(command_names)
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(sorted(unknown))}")
    default_map = {}
    for name in command_names:
        values = dict(global_values)
        values.update(sections.get(name, {}))
        default_map[name] = values
    return default_map, global_values
