"""Deterministic output writers: CSV tables and self-contained SVG charts.

All numbers are printed with 12 significant digits and files are written
atomically (temp file + rename), so identical runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["fmt", "atomic_write_text", "write_csv", "svg_line_chart"]


def fmt(value) -> str:
    """Canonical cell format: 12 significant digits for floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value == 0.0:
            return "0"  # normalize negative zero
        return f"{value:.12g}"
    return str(value)


def atomic_write_text(path: str | Path, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def svg_line_chart(
    path: str | Path,
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    title: str = "",
    width: int = 720,
    height: int = 440,
) -> None:
    """Minimal multi-line chart; one polyline per named series."""
    xs = [float(v) for v in x]
    if not xs or not series:
        atomic_write_text(path, "<svg xmlns='http://www.w3.org/2000/svg'/>\n")
        return
    all_y = [float(v) for ys in series.values() for v in ys]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 50
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

    def sx(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}' "
        f"viewBox='0 0 {width} {height}'>",
        f"<rect width='{width}' height='{height}' fill='white'/>",
        f"<text x='{width // 2}' y='24' text-anchor='middle' font-size='15'>{title}</text>",
        f"<line x1='{pad}' y1='{height - pad}' x2='{width - pad}' y2='{height - pad}' stroke='black'/>",
        f"<line x1='{pad}' y1='{pad}' x2='{pad}' y2='{height - pad}' stroke='black'/>",
        f"<text x='{pad}' y='{height - pad + 28}' font-size='11'>{fmt(x_lo)}</text>",
        f"<text x='{width - pad}' y='{height - pad + 28}' text-anchor='end' font-size='11'>{fmt(x_hi)}</text>",
        f"<text x='{pad - 4}' y='{height - pad}' text-anchor='end' font-size='11'>{fmt(y_lo)}</text>",
        f"<text x='{pad - 4}' y='{pad + 6}' text-anchor='end' font-size='11'>{fmt(y_hi)}</text>",
    ]
    for idx, (name, ys) in enumerate(series.items()):
        color = colors[idx % len(colors)]
        pts = " ".join(f"{sx(a):.2f},{sy(float(b)):.2f}" for a, b in zip(xs, ys))
        parts.append(f"<polyline points='{pts}' fill='none' stroke='{color}' stroke-width='1.6'/>")
        parts.append(
            f"<text x='{width - pad + 4}' y='{pad + 16 * idx}' font-size='11' fill='{color}'>{name}</text>"
        )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
