"""Service for reading and writing run configurations."""

import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from src.errors import ConfigError
from src.models.config import InitAtoms, InitDensity, SimulationConfig
from src.numerics.grid import Domain

logger = logging.getLogger(__name__)

CONFIG_JSON = "config.json"


def _clean_message(message: str) -> str:
    """Drop pydantic's 'Value error, ' prefix from custom validator messages."""
    prefix = "Value error, "
    return message[len(prefix) :] if message.startswith(prefix) else message


class ConfigService:
    """Parses flat ``key = value`` files into :class:`SimulationConfig`."""

    def parse(self, text: str, base_dir: Path | None = None) -> SimulationConfig:
        """Parse configuration text.

        Args:
            text: Lines of ``key = value``; ``#`` starts a comment.
            base_dir: Directory that relative ``file(...)`` paths resolve against.

        Returns:
            The validated configuration.

        Raises:
            ConfigError: On malformed lines, unknown or repeated keys, and
                values outside their documented ranges.
        """
        values: dict[str, Any] = {}
        line_of: dict[str, int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SimulationConfig.model_fields:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(
                    f"line {lineno}: duplicate key {key!r} "
                    f"(first set on line {line_of[key]})"
                )
            if not value:
                raise ConfigError(f"line {lineno}: missing value for {key!r}")
            values[key] = value
            line_of[key] = lineno

        try:
            config = SimulationConfig.model_validate(values)
        except ValidationError as err:
            first = err.errors()[0]
            key = str(first["loc"][0]) if first["loc"] else ""
            message = _clean_message(first["msg"])
            where = f"line {line_of[key]}: " if key in line_of else ""
            raise ConfigError(f"{where}{key}: {message}" if key else message) from err

        if base_dir is not None:
            config = self._resolve_paths(config, base_dir)
        return config

    def load(self, path: Path) -> SimulationConfig:
        """Load a configuration file; relative input paths follow the file."""
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        config = self.parse(text, base_dir=path.parent)
        logger.info("Loaded %s config from %s", config.mode, path)
        return config

    def _resolve_paths(self, config: SimulationConfig, base: Path) -> SimulationConfig:
        updates: dict[str, Any] = {}
        density_path = config.init_density.path
        if density_path is not None and not density_path.is_absolute():
            updates["init_density"] = config.init_density.model_copy(
                update={"path": base / density_path}
            )
        atoms_path = config.init_atoms.path
        if atoms_path is not None and not atoms_path.is_absolute():
            updates["init_atoms"] = config.init_atoms.model_copy(
                update={"path": base / atoms_path}
            )
        return config.model_copy(update=updates) if updates else config

    def write_json(self, config: SimulationConfig, out_dir: Path) -> Path:
        """Write the resolved configuration next to the run outputs."""
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / CONFIG_JSON
        target.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return target

    def read_json(self, out_dir: Path) -> SimulationConfig:
        """Read back the configuration a run wrote to ``out_dir``."""
        source = out_dir / CONFIG_JSON
        if not source.exists():
            raise ConfigError(f"no {CONFIG_JSON} in {out_dir}")
        try:
            return SimulationConfig.model_validate_json(
                source.read_text(encoding="utf-8")
            )
        except ValidationError as err:
            raise ConfigError(f"invalid {source}: {err}") from err

    @staticmethod
    def defaults() -> list[tuple[str, str, str]]:
        """(key, default, description) for every configuration key."""
        rows = []
        for name, info in SimulationConfig.model_fields.items():
            default = info.get_default(call_default_factory=True)
            if isinstance(default, Domain):
                shown = (
                    f"{default.x_min:g},{default.x_max:g},"
                    f"{default.y_min:g},{default.y_max:g}"
                )
            elif isinstance(default, InitDensity | InitAtoms):
                shown = default.kind
            elif default is None:
                shown = "auto"
            else:
                shown = str(default)
            rows.append((name, shown, info.description or ""))
        return rows


def load_config(path: Path) -> SimulationConfig:
    """Load a configuration file (see :meth:`ConfigService.load`)."""
    return ConfigService().load(path)
