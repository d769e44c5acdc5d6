# errors.py
from __future__ import annotations

from pathlib import Path


class PcbSampleError(RuntimeError):
    pass


class RejectedInputError(PcbSampleError, ValueError):
    """Input violates an operation's precondition (sizes, ranges, non-finite values)."""


class SampleFormatError(PcbSampleError):
    """A scan or label file does not match its binary layout."""

    def __init__(self, message: str, *, path: Path | str | None = None, byte_offset: int | None = None):
        self.path = Path(path) if path is not None else None
        self.byte_offset = byte_offset
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if byte_offset is not None:
            where.append(f"byte offset {byte_offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CheckFailedError(PcbSampleError):
    pass
