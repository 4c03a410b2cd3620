"""Run manifests and structured text reports.

Every report embeds the manifest of its run: command, config digest,
input digests, backend, seed, timestamps, tool version. Reruns with an
equal manifest write byte-identical reports; set SOURCE_DATE_EPOCH to pin
the timestamps.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Sequence


def tool_version() -> str:
    try:
        return version("relscore")
    except PackageNotFoundError:
        return "0.0.0"


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def timestamp() -> str:
    """UTC ISO timestamp; SOURCE_DATE_EPOCH overrides the clock so runs
    can be byte-reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.fromtimestamp(int(epoch), tz=timezone.utc)
        if epoch
        else datetime.now(tz=timezone.utc)
    )
    return moment.replace(microsecond=0).isoformat()


@dataclass(frozen=True)
class RunManifest:
    """Identity of one run: everything that shaped its outputs."""

    command: str
    config_digest: str
    dataset_digests: tuple[tuple[str, str], ...]
    backend: str
    seed: int
    started: str
    finished: str
    tool_version: str

    def lines(self) -> list[str]:
        rows = [
            f"command: {self.command}",
            f"tool_version: {self.tool_version}",
            f"backend: {self.backend}",
            f"seed: {self.seed}",
            f"config_digest: {self.config_digest}",
        ]
        for name, digest in self.dataset_digests:
            rows.append(f"input {name}: {digest}")
        rows.append(f"started: {self.started}")
        rows.append(f"finished: {self.finished}")
        return rows


def fmt_score(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    """Fixed-width text table; purely a function of its cells."""
    widths = [len(h) for h in headers]
    for row in rows:
        for index, cell in enumerate(row):
            widths[index] = max(widths[index], len(cell))
    def render(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    lines = [render(headers), render(["-" * w for w in widths])]
    lines.extend(render(row) for row in rows)
    return lines


def write_report(
    path: str | Path,
    title: str,
    manifest: RunManifest,
    sections: Sequence[tuple[str, Sequence[str]]],
) -> None:
    lines = [f"# {title}", ""]
    lines.extend(manifest.lines())
    for heading, body in sections:
        lines.append("")
        lines.append(f"## {heading}")
        lines.extend(body)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
