"""Module containing the bdrylib key = value configuration files."""

from fractions import Fraction
from pathlib import Path
from typing import Any

import crcmod  # type: ignore

from bdrylib.errors import ConfigError
from bdrylib.logger import logger

ECHO_NAME = "config.txt"


def parse_value(text: str) -> Any:
    """Parse a configuration value.

    Supported: none, true/false, int, float, fractions like 36/255 and
    comma separated lists of those.

    :param text: raw value
    """
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]

    low = text.lower()
    if low in ("", "none"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if "/" in text:
        try:
            return float(Fraction(text.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            pass
    return text


def format_value(value: Any) -> str:
    """Format a value so that parse_value reads it back unchanged.

    :param value: value to format
    """
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        # a one element list needs the trailing comma
        body = ", ".join(format_value(v) for v in value)
        return body + "," if len(value) == 1 else body
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_lines(text: str, source: str = "<text>") -> list[tuple[str, Any]]:
    """Parse key = value lines in file order.

    :param text: file contents
    :param source: name used in error messages
    """
    out: list[tuple[str, Any]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            msg = f"{source}:{lineno}: expected 'key = value'"
            raise ConfigError(msg)
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out.append((key, parse_value(value)))
    return out


def read_config(path: str | Path) -> dict[str, Any]:
    """Read a configuration file, later keys win.

    :param path: file path
    """
    return dict(parse_lines(Path(path).read_text(), str(path)))


def split_blocks(pairs: list[tuple[str, Any]]) -> list[dict[str, Any]]:
    """Split key/value pairs into blocks, each method key starts one.

    Keys before the first method key are shared by every block.

    :param pairs: parsed pairs in file order
    """
    shared: dict[str, Any] = {}
    blocks: list[dict[str, Any]] = []
    for key, value in pairs:
        if key == "method":
            blocks.append(dict(shared))
        if blocks:
            blocks[-1][key] = value
        else:
            shared[key] = value
    return blocks


def crc32(data: bytes) -> int:
    """Get the CRC-32 of bytes."""
    func = crcmod.predefined.mkCrcFun("crc-32")
    return int(func(data))


###############################################################################
# Class: RunConfig
###############################################################################


class RunConfig:
    """Resolved parameters of one CLI command.

    Defaults are overridden by the config file, the file by explicit flags.
    Only keys present in the defaults are accepted.
    """

    def __init__(self, command: str, defaults: dict[str, Any]) -> None:
        """Initialize a run configuration.

        :param command: subcommand tag
        :param defaults: every accepted key with its default value
        """
        self._command = command
        self._params = dict(defaults)

    def __getitem__(self, key: str) -> Any:
        """Get a parameter value."""
        return self._params[key]

    def __str__(self) -> str:
        """Get run config string represenation."""
        return f"RunConfig({self._command}, {len(self._params)} keys)"

    @property
    def command(self) -> str:
        """Get the subcommand tag."""
        return self._command

    @property
    def params(self) -> dict[str, Any]:
        """Get a copy of the resolved parameters."""
        return dict(self._params)

    def _set(self, key: str, value: Any, source: str) -> None:
        if key not in self._params:
            msg = f"{source}: unknown key '{key}' for {self._command}"
            raise ConfigError(msg)
        self._params[key] = value

    def load_file(self, path: str | Path) -> None:
        """Apply values from a configuration file.

        :param path: file path
        """
        for key, value in read_config(path).items():
            if key == "command":
                if value != self._command:
                    msg = f"{path}: config is for '{value}'"
                    raise ConfigError(msg)
                continue
            self._set(key, value, str(path))
        logger.debug("config loaded from %s", path)

    def override(self, flags: dict[str, Any]) -> None:
        """Apply explicitly given flags, None means not given.

        :param flags: flag values
        """
        for key, value in flags.items():
            if value is not None:
                self._set(key, value, "flags")

    def echo(self) -> str:
        """Get the resolved configuration as file text."""
        lines = [f"command = {self._command}"]
        lines += [
            f"{key} = {format_value(self._params[key])}"
            for key in sorted(self._params)
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> int:
        """Get the CRC-32 of the echoed configuration."""
        return crc32(self.echo().encode())

    def run_name(self, tag: str) -> str:
        """Get a run directory name tied to this configuration.

        :param tag: name prefix
        """
        return f"{tag}-{self.digest():08x}"

    def write_echo(self, outdir: str | Path) -> Path:
        """Write the configuration echo into a directory.

        :param outdir: output directory
        """
        path = Path(outdir) / ECHO_NAME
        path.write_text(self.echo())
        return path
