"""Source file representation and position mapping for PowerShell scripts."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from pathlib import Path


class OffsetOutOfRange(ValueError):
    """Raised when a character offset lies outside the script text."""


def _line_starts(text: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)
    return starts


@dataclass
class SourceScript:
    """A PowerShell source file plus its identity.

    ``raw`` is the decoded text with any byte-order mark removed; all
    offsets and columns count characters (1-based lines and columns),
    matching analyzer diagnostics.  ``line_starts[0]`` is always 0 and
    the list is strictly increasing.
    """

    path: str
    raw: str
    line_starts: list[int] = field(repr=False)
    had_bom: bool = False
    decode_errors: bool = False

    @classmethod
    def from_text(cls, text: str, path: str = "<memory>") -> "SourceScript":
        had_bom = text.startswith("﻿")
        if had_bom:
            text = text[1:]
        return cls(path=path, raw=text, line_starts=_line_starts(text), had_bom=had_bom)

    @classmethod
    def from_bytes(cls, data: bytes, path: str = "<memory>") -> "SourceScript":
        had_bom = data.startswith(b"\xef\xbb\xbf")
        if had_bom:
            data = data[3:]
        try:
            text = data.decode("utf-8")
            decode_errors = False
        except UnicodeDecodeError:
            text = data.decode("utf-8", errors="replace")
            decode_errors = True
        script = cls.from_text(text, path=path)
        script.had_bom = had_bom or script.had_bom
        script.decode_errors = decode_errors
        return script

    @classmethod
    def from_path(cls, path: str | Path) -> "SourceScript":
        p = Path(path)
        return cls.from_bytes(p.read_bytes(), path=str(p))

    def locate(self, offset: int) -> tuple[int, int]:
        """Map a character offset to a 1-based (line, column) pair.

        ``offset == len(raw)`` is allowed and names the end-of-file
        position.
        """
        if not 0 <= offset <= len(self.raw):
            raise OffsetOutOfRange(
                f"offset {offset} outside [0, {len(self.raw)}] for {self.path}"
            )
        line = bisect.bisect_right(self.line_starts, offset) - 1
        return line + 1, offset - self.line_starts[line] + 1

    def slice(self, start: int, end: int) -> str:
        return self.raw[start:end]

    @property
    def line_count(self) -> int:
        return len(self.line_starts)
