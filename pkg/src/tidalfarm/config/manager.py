from copy import deepcopy
from pathlib import Path
from typing import Dict, List, Union

import toml

from tidalfarm.errors import TidalFarmError

DEFAULTS_FILE = Path(__file__).with_name('defaults.toml')

# Sections holding named entries: section -> template name.
# "boundaries" is a table of tables keyed by tag, "farms" an array of tables.
ENTRY_SECTIONS = {'boundaries': 'boundary', 'farms': 'farm'}


class ConfigError(TidalFarmError):
    code = 'config.parse'


def deep_merge(base: dict, updates: dict) -> dict:
    """Recursively merge ``updates`` into a copy of ``base``."""
    merged = deepcopy(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = deepcopy(value)
    return merged


def _unknown(reference: dict, values: dict, prefix: str) -> List[str]:
    found = []
    for key, value in values.items():
        name = f"{prefix}{key}"
        if key not in reference:
            found.append(name)
        elif isinstance(reference[key], dict) and isinstance(value, dict):
            found.extend(_unknown(reference[key], value, name + '.'))
    return found


class ConfigManager:
    """Loads a scenario file over the packaged defaults and gives dotted access."""

    def __init__(self, config_file: Union[str, Path] = None, defaults_file: Union[str, Path] = DEFAULTS_FILE):
        """
        Initialize ConfigManager.

        Args:
            config_file:   Scenario TOML file. If None, only the defaults are loaded.
            defaults_file: Defaults merged under the scenario.
        """
        self.config_file = Path(config_file) if config_file else None
        self.defaults = self._read(Path(defaults_file))
        self.templates = self.defaults.pop('templates', {})
        self.raw = {}
        self.config = deepcopy(self.defaults)
        if self.config_file:
            self.load_config()

    @staticmethod
    def _read(path: Path) -> dict:
        try:
            return toml.load(path)
        except toml.TomlDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}: {e.msg}")
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror or e}")

    def exists(self) -> bool:
        """Check if the scenario file exists."""
        return bool(self.config_file and self.config_file.exists())

    def load_config(self):
        """Load the scenario file and merge it over the defaults."""
        if not self.exists():
            raise ConfigError(f"scenario file {self.config_file} not found")
        self.raw = self._read(self.config_file)
        self.config = deep_merge(self.defaults, self.raw)

    def save_config(self, path: Union[str, Path] = None) -> Path:
        """Write the resolved configuration as TOML."""
        path = Path(path) if path else self.config_file
        if not path:
            raise ConfigError("no config file specified")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            toml.dump(self.resolved(), f)
        return path

    def get(self, key: str, default=None):
        """
        Get configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'optimizer.ftol')
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        value = self.config
        for k in key.split('.'):
            if isinstance(value, dict):
                value = value.get(k)
                if value is None:
                    return default
            else:
                return default
        return value

    def set(self, key: str, value):
        """
        Set configuration value using dot notation (in memory only).

        Args:
            key: Configuration key (e.g., 'simulation.mode')
            value: Value to set
        """
        keys = key.split('.')
        config = self.config
        for k in keys[:-1]:
            config = config.setdefault(k, {})
        config[keys[-1]] = value

    def update(self, updates: dict):
        """Deep-merge several configuration values."""
        self.config = deep_merge(self.config, updates)

    def entries(self, section: str) -> Dict[str, dict]:
        """
        Entries of a named-entry section merged over their template.

        ``boundaries`` entries are keyed by tag, ``farms`` entries by their
        position ("farms[0]", ...).
        """
        template = self.templates.get(ENTRY_SECTIONS[section], {})
        raw = self.config.get(section, {} if section == 'boundaries' else [])
        if isinstance(raw, dict):
            items = list(raw.items())
        else:
            items = [(f"{section}[{i}]", entry) for i, entry in enumerate(raw)]
        return {key: deep_merge(template, entry if isinstance(entry, dict) else {}) for key, entry in items}

    def unknown_keys(self) -> List[str]:
        """Dotted names of scenario keys absent from the defaults or entry templates."""
        found = []
        for key, value in self.raw.items():
            if key in ENTRY_SECTIONS:
                template = self.templates.get(ENTRY_SECTIONS[key], {})
                items = value.items() if isinstance(value, dict) else enumerate(value)
                for name, entry in items:
                    prefix = f"{key}.{name}." if isinstance(value, dict) else f"{key}[{name}]."
                    if isinstance(entry, dict):
                        found.extend(_unknown(template, entry, prefix))
                    else:
                        found.append(prefix.rstrip('.'))
            elif key not in self.defaults:
                found.append(key)
            elif isinstance(self.defaults[key], dict) and isinstance(value, dict):
                found.extend(_unknown(self.defaults[key], value, key + '.'))
        return found

    def resolved(self) -> dict:
        """Complete configuration with every entry merged over its template."""
        resolved = deepcopy(self.config)
        if 'boundaries' in resolved:
            resolved['boundaries'] = self.entries('boundaries')
        if 'farms' in resolved:
            resolved['farms'] = list(self.entries('farms').values())
        return resolved
