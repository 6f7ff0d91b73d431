from __future__ import annotations

from typing import List, Optional, Union

from discredibility.project import Project


class Component(object):
    """
    Base class for components that are added to Project
    """

    print_color: Optional[str] = None
    print_emoji: Optional[Union[str, List[str]]] = None

    def __init__(self, project: Project):
        assert isinstance(project, Project)
        self.project = project

    def print(
        self,
        message: str,
        color: Optional[str] = None,
        line_above: bool = False,
        line_below: bool = False,
        emoji_alias: Optional[Union[str, List[str]]] = None,
    ) -> None:
        self.project.storyteller.printer.print(
            message=message,
            color=color or self.print_color,
            line_above=line_above,
            line_below=line_below,
            emoji_alias=emoji_alias or self.print_emoji,
        )
