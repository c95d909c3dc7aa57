"""Standalone SVG line charts for the metrics suite.

Generates self-contained vector files directly (no plotting library), each
with a raw series and a trailing moving-average overlay.
"""

from __future__ import annotations

from pathlib import Path

from .metrics import SchemaMismatch, moving_average, read_csv_columns

_COLORS = ["#9aa5b1", "#b8c4ce", "#c9b5a0"]
_MA_COLORS = ["#d62728", "#1f77b4", "#2ca02c"]

_WIDTH, _HEIGHT = 720, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 40, 48


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def line_chart(
    title: str,
    x_label: str,
    y_label: str,
    series: list[tuple[str, list[float]]],
    ma_window: int = 10,
) -> str:
    """Render named series plus their moving averages into SVG text."""
    if not series or not series[0][1]:
        raise SchemaMismatch("chart needs at least one non-empty series")
    n = len(series[0][1])
    all_values = [v for _, values in series for v in values]
    lo, hi = min(all_values), max(all_values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(i: int) -> float:
        return _MARGIN_L + (plot_w * i / max(n - 1, 1))

    def sy(v: float) -> float:
        return _MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    for tick in _ticks(lo, hi):
        y = sy(tick)
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{y:.1f}" x2="{_MARGIN_L}" y2="{y:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" text-anchor="end">{tick:.3g}</text>')
    for tick in _ticks(0, n - 1) if n > 1 else [0.0]:
        x = sx(int(round(tick)))
        parts.append(
            f'<line x1="{x:.1f}" y1="{_MARGIN_T + plot_h}" x2="{x:.1f}" '
            f'y2="{_MARGIN_T + plot_h + 4}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle">{int(round(tick)) + 1}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 10}" text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.1f})">{y_label}</text>'
    )

    def polyline(values: list[float], color: str, width: float) -> str:
        points = " ".join(f"{sx(i):.2f},{sy(v):.2f}" for i, v in enumerate(values))
        return f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="{width}"/>'

    legend_y = _MARGIN_T + 14
    for idx, (name, values) in enumerate(series):
        raw_color = _COLORS[idx % len(_COLORS)]
        ma_color = _MA_COLORS[idx % len(_MA_COLORS)]
        parts.append(polyline(values, raw_color, 1.0))
        parts.append(polyline(moving_average(values, ma_window), ma_color, 1.8))
        lx = _MARGIN_L + 10
        parts.append(
            f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 18}" y2="{legend_y}" '
            f'stroke="{ma_color}" stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{lx + 24}" y="{legend_y + 4}">{name} (ma{ma_window} + raw)</text>'
        )
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_charts(
    metrics_csv: str | Path,
    out_dir: str | Path,
    ma_window: int = 10,
) -> list[Path]:
    """Produce the five standard charts from a metrics CSV (+ timing sidecar)."""
    metrics_csv = Path(metrics_csv)
    table = read_csv_columns(
        metrics_csv,
        required=[
            "episode",
            "attack_reward_total",
            "defense_reward_total",
            "injections",
            "blocks",
            "proximity_mean",
            "tolerance_mean",
        ],
    )
    timing_path = metrics_csv.with_name(metrics_csv.stem + ".timing.csv")
    if not timing_path.exists():
        raise SchemaMismatch(f"timing sidecar {timing_path} not found")
    timing = read_csv_columns(timing_path, required=["episode", "wall_time_s"])

    def floats(col: str, src: dict) -> list[float]:
        return [float(v) for v in src[col]]

    charts = {
        "attack_reward.svg": line_chart(
            "Attack agent reward per episode", "episode", "total reward",
            [("attack reward", floats("attack_reward_total", table))], ma_window),
        "defense_reward.svg": line_chart(
            "Defense agent reward per episode", "episode", "total reward",
            [("defense reward", floats("defense_reward_total", table))], ma_window),
        "actions.svg": line_chart(
            "Injection vs block actions", "episode", "actions per episode",
            [("injections", floats("injections", table)), ("blocks", floats("blocks", table))],
            ma_window),
        "tolerance_proximity.svg": line_chart(
            "Defense tolerance vs attack proximity", "episode", "mean level",
            [("proximity", floats("proximity_mean", table)), ("tolerance", floats("tolerance_mean", table))],
            ma_window),
        "overhead.svg": line_chart(
            "Per-episode wall time", "episode", "seconds",
            [("wall time", floats("wall_time_s", timing))], ma_window),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, svg in charts.items():
        path = out / name
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    return written
