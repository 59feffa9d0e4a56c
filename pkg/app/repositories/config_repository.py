import configparser
import hashlib
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import ValidationError

from app.config import settings
from app.domain.exceptions import ConfigurationError
from app.domain.experiment_config import ExperimentConfig


logger = logging.getLogger(__name__)

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """(section, key) -> 1-based line; (section, None) for section headers."""
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION.match(line)
        if header:
            section = header.group(1).strip()
            lines.setdefault((section, None), number)
            continue
        key = _KEY.match(line)
        if key and section is not None:
            lines.setdefault((section, key.group(1).strip()), number)
    return lines


def config_hash(config: ExperimentConfig) -> str:
    """md5 of the validated configuration, output location excluded."""
    canonical = config.model_dump_json(exclude={"output": {"path"}})
    return hashlib.md5(canonical.encode()).hexdigest()


class ConfigRepository:
    """Reads INI experiment configurations into validated ExperimentConfig objects."""

    def __init__(self, path: str):
        self.path = Path(path)

    def load(self) -> ExperimentConfig:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config {self.path}: {e}")
        config = self.parse(text, source=str(self.path))
        logger.info(f"Loaded config {self.path} (md5 {config_hash(config)})")
        return config

    @staticmethod
    def parse(text: str, source: str = "<string>") -> ExperimentConfig:
        parser = configparser.ConfigParser(
            interpolation=None,
            inline_comment_prefixes=("#", ";"),
            default_section="__defaults__",
        )
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as e:
            line = getattr(e, "lineno", None)
            prefix = f"line {line}: " if line else ""
            raise ConfigurationError(f"{source}: malformed INI", [f"{prefix}{e.message}"])

        raw = {section: dict(parser.items(section)) for section in parser.sections()}
        try:
            return ExperimentConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(
                f"{source}: invalid configuration", ConfigRepository._diagnostics(e, text)
            )

    @staticmethod
    def _diagnostics(error: ValidationError, text: str) -> List[str]:
        lines = _line_map(text)
        diagnostics = []
        for item in error.errors():
            loc = [str(part) for part in item["loc"]]
            section = loc[0] if loc else None
            key = loc[1] if len(loc) > 1 else None
            line = lines.get((section, key)) or lines.get((section, None))
            where = f"[{section}] {key}" if key else f"[{section}]"
            prefix = f"line {line}: " if line else ""
            diagnostics.append(f"{prefix}{where}: {item['msg']}")
        return diagnostics


def artifact_header(config: ExperimentConfig, command: str) -> str:
    return f"# config_md5={config_hash(config)} version={settings.APP_VERSION} command={command}"
