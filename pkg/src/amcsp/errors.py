from __future__ import annotations


class LimitExceededError(RuntimeError):
    """An exhaustive search or spectral computation was refused at its configured limit."""

    def __init__(self, quantity: str, value: int, limit: int) -> None:
        super().__init__(f"{quantity}={value} exceeds the configured limit {limit}")
        self.quantity = quantity
        self.value = value
        self.limit = limit


class FormatError(ValueError):
    def __init__(self, message: str, *, lineno: int | None = None, source: str = "") -> None:
        where = f"{source}:" if source else ""
        prefix = f"{where}line {lineno}: " if lineno is not None else where
        super().__init__(f"{prefix}{message}")
        self.lineno = lineno
        self.source = source
