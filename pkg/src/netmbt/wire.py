"""Physical connection identifiers and observed packets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .codec import Message


@dataclass(frozen=True, order=True)
class Pcid:
    """A physical connection, numbered in the order the tester learns of it."""

    id: int
    sut_initiated: bool = False

    def __str__(self) -> str:
        return f"{'p' if self.sut_initiated else 'c'}{self.id}"


@dataclass(frozen=True)
class Wire:
    """One whole message on a physical connection.

    ``msg`` is None when the bytes did not parse as HTTP.
    """

    pcid: Pcid
    msg: Optional[Message]

    def __str__(self) -> str:
        body = self.msg.summary() if self.msg is not None else "<malformed>"
        return f"{self.pcid} {body}"
