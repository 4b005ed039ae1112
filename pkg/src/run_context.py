from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from datetime import timedelta


class RunContext:
    def __init__(self, out_dir: Path) -> None:
        self.start_at = datetime.now()
        self.out_dir = out_dir
        self.written: list[Path] = []

    def get_uptime(self) -> timedelta:
        return datetime.now() - self.start_at

    def output(self, name: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(path)
        return path
