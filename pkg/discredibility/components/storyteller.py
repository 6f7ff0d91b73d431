from __future__ import annotations

import json
import sys
import time
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Union, TYPE_CHECKING

import emoji  # type: ignore
import toml
from colorama import Fore, init

from discredibility import DiscredibilityWarning

from .component import Component

if TYPE_CHECKING:
    from discredibility.project import Project

init()


class StoryTeller(Component):
    """
    A class in charge of documentation of the experiment.

    It keeps two records: the artifact manifest, which maps every emitted
    file to the figure or table it reproduces and carries no timestamps, and
    the run log, which holds wall-clock information per subcommand.
    """

    def __init__(self, project: Project):
        super().__init__(project=project)
        self.manifest_json = self.project.paths.manifest_json
        self.run_log_toml = self.project.paths.run_log_toml
        self.printer = PrettyPrinter(quiet=self.project.config.run.quiet)
        self.manifest: Dict[str, Dict[str, str]] = (
            self._load_manifest() if self.manifest_json.exists() else {}
        )

    def _load_manifest(self) -> Dict[str, Dict[str, str]]:
        with open(self.manifest_json, "r") as fh:
            return json.load(fh)

    def record_artifact(self, path: Union[str, Path], subcommand: str, reproduces: str) -> None:
        """
        Register an artifact in the manifest.

        :param path: file that was written
        :param subcommand: subcommand that emitted it
        :param reproduces: figure/table identifier, e.g. ``"figure2"`` or ``"table4"``
        """
        key = str(Path(path).relative_to(self.project.paths.root))
        previous = self.manifest.get(key, {}).get("subcommand")
        if previous is not None and previous != subcommand:
            warnings.warn(f"{key} written by {previous} was overwritten by {subcommand}.", DiscredibilityWarning)
        self.manifest[key] = {"subcommand": subcommand, "reproduces": reproduces}
        with open(self.manifest_json, "w") as fh:
            json.dump(dict(sorted(self.manifest.items())), fh, indent=1, sort_keys=True)

    def log_run(self, subcommand: str, started: float, status: str) -> None:
        log = toml.load(self.run_log_toml) if self.run_log_toml.exists() else {}
        runs = log.setdefault("runs", [])
        runs.append(
            {
                "subcommand": subcommand,
                "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
                "duration_in_s": round(time.time() - started, 3),
                "status": status,
            }
        )
        with open(self.run_log_toml, "w") as fh:
            toml.dump(log, fh)


RULE = "\n " + "=" * 30 + " \n"

COLORS = {
    "white": Fore.WHITE,
    "black": Fore.BLACK,
    "blue": Fore.BLUE,
    "green": Fore.GREEN,
    "red": Fore.RED,
    "cyan": Fore.CYAN,
    "magenta": Fore.MAGENTA,
    "yellow": Fore.YELLOW,
    "lightred": Fore.LIGHTRED_EX,
}


def emoji_prefix(aliases: Optional[Union[str, Sequence[str]]]) -> str:
    """Emojis for the given aliases, the last one followed by a bar."""
    if not aliases:
        return ""
    if isinstance(aliases, str):
        aliases = [aliases]
    glyphs = [emoji.emojize(f":{alias.strip(':')}:", language="alias") for alias in aliases]
    return " ".join(glyphs) + " | "


class PrettyPrinter(object):
    """
    Console output of the subcommands. A color stays in effect until another
    one is requested; a quiet printer writes nothing.
    """

    def __init__(self, quiet: bool = False, stream: Optional[TextIO] = None) -> None:
        self.quiet = quiet
        self.stream = stream
        self.color = Fore.WHITE

    def set_color(self, color: str) -> None:
        try:
            self.color = COLORS[color.lower()]
        except KeyError:
            raise ValueError(f"Unknown color {color!r}, available: {', '.join(COLORS)}") from None

    def format(
        self,
        message: str,
        line_above: bool = False,
        line_below: bool = False,
        emoji_alias: Optional[Union[str, List[str]]] = None,
        color: Optional[str] = None,
    ) -> str:
        if color is not None:
            self.set_color(color)
        parts = [f"{self.color} "]
        if line_above:
            parts.append(RULE)
        parts += [emoji_prefix(emoji_alias), message]
        if line_below:
            parts.append(RULE)
        return "".join(parts)

    def print(
        self,
        message: str,
        line_above: bool = False,
        line_below: bool = False,
        emoji_alias: Optional[Union[str, List[str]]] = None,
        color: Optional[str] = None,
    ) -> None:
        """
        :param emoji_alias: one alias or several, e.g. ``["rocket", "tada"]``
        :param color: one of the keys of ``COLORS``
        """
        if self.quiet:
            return
        line = self.format(message, line_above, line_below, emoji_alias, color)
        print(line, file=self.stream or sys.stdout)
