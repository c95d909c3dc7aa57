"""Per-episode metrics and their on-disk form.

The main metrics CSV contains only deterministic columns, so identical
(config, seed) runs produce byte-identical files; wall-clock timings go to a
``*.timing.csv`` sidecar.  A JSON header records the effective config, seed,
code version, kernel backend, and the CSV schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = [
    "episode",
    "steps",
    "terminal",
    "attack_reward_total",
    "defense_reward_total",
    "injections",
    "blocks",
    "recons",
    "assesses",
    "proximity_mean",
    "proximity_final",
    "tolerance_mean",
    "aggression_steps",
    "epsilon_attack",
    "epsilon_defense",
    "opp_loss_attack",
    "opp_loss_defense",
]

TIMING_COLUMNS = ["episode", "wall_time_s"]


class SchemaMismatch(ValueError):
    """Metrics file does not carry the expected columns."""


class EmptySeries(ValueError):
    pass


@dataclass
class EpisodeMetrics:
    episode: int
    steps: int
    terminal: str
    attack_reward_total: float
    defense_reward_total: float
    injections: int
    blocks: int
    recons: int
    assesses: int
    proximity_mean: float
    proximity_final: float
    tolerance_mean: float
    aggression_steps: int
    epsilon_attack: float | None
    epsilon_defense: float | None
    opp_loss_attack: float | None
    opp_loss_defense: float | None
    wall_time_s: float
    # In-memory only: per-step proximity trace and the protecting step index.
    proximity_series: list[float] = field(default_factory=list)
    protected_at: int | None = None

    def csv_row(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            value = getattr(self, col)
            if value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out


@dataclass
class MetricsLog:
    header: dict
    rows: list[EpisodeMetrics]

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        lines.extend(",".join(row.csv_row()) for row in self.rows)
        return "\n".join(lines) + "\n"

    def timing_csv_text(self) -> str:
        lines = [",".join(TIMING_COLUMNS)]
        lines.extend(f"{row.episode},{row.wall_time_s!r}" for row in self.rows)
        return "\n".join(lines) + "\n"

    def header_text(self) -> str:
        return json.dumps(self.header, sort_keys=True, indent=2) + "\n"

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "metrics": out / "metrics.csv",
            "timing": out / "metrics.timing.csv",
            "header": out / "header.json",
        }
        paths["metrics"].write_text(self.csv_text(), encoding="utf-8")
        paths["timing"].write_text(self.timing_csv_text(), encoding="utf-8")
        paths["header"].write_text(self.header_text(), encoding="utf-8")
        return paths


def moving_average(series: list[float], window: int) -> list[float]:
    """Trailing mean; the first window-1 entries average the available prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if not series:
        raise EmptySeries("cannot smooth an empty series")
    out = []
    acc = 0.0
    for i, value in enumerate(series):
        acc += value
        if i >= window:
            acc -= series[i - window]
        out.append(acc / min(i + 1, window))
    return out


def read_csv_columns(path: str | Path, required: list[str]) -> dict[str, list[str]]:
    """Parse a metrics-style CSV into raw string columns, validating the schema."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise SchemaMismatch(f"{path} is empty")
    columns = lines[0].split(",")
    missing = [c for c in required if c not in columns]
    if missing:
        raise SchemaMismatch(f"{path} is missing columns {missing}")
    if len(lines) < 2:
        raise SchemaMismatch(f"{path} has a header but no data rows")
    table: dict[str, list[str]] = {c: [] for c in columns}
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(columns):
            raise SchemaMismatch(f"{path}: row has {len(cells)} cells, expected {len(columns)}")
        for col, cell in zip(columns, cells):
            table[col].append(cell)
    return table
