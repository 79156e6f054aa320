"""Deterministic SVG rendering of Top-K prediction overlays.

Hand-written SVG keeps the output byte-reproducible and dependency-free.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ["#d62728", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8"]


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _polyline(points: np.ndarray, color: str, width: float, dash: str = "") -> str:
    coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}"{dash_attr}/>')


def render_overlay(obs_positions, truth_positions, proposals, path,
                   title: str = "") -> None:
    """Write one overlay figure.

    obs/truth are (T, 2) position arrays; proposals is a list of
    (positions, probability) pairs sorted however the caller likes.
    """
    obs = np.asarray(obs_positions, dtype=np.float64)
    truth = np.asarray(truth_positions, dtype=np.float64)
    props = [(np.asarray(p, dtype=np.float64), float(prob)) for p, prob in proposals]

    all_pts = np.vstack([obs, truth] + [p for p, _ in props])
    lo = all_pts.min(axis=0)
    hi = all_pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    margin = 0.1 * span.max()
    width, height = 480.0, 480.0
    scale = (min(width, height) - 2 * 40.0) / (span.max() + 2 * margin)

    def to_px(pts: np.ndarray) -> np.ndarray:
        out = np.empty_like(pts)
        out[:, 0] = 40.0 + (pts[:, 0] - lo[0] + margin) * scale
        out[:, 1] = height - 40.0 - (pts[:, 1] - lo[1] + margin) * scale
        return out

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="12" y="20" font-family="monospace" font-size="13">{title}</text>')

    for i, (pts, prob) in enumerate(props):
        px = to_px(np.vstack([obs[-1:], pts]))  # connect to the last observed point
        color = PALETTE[i % len(PALETTE)]
        parts.append(_polyline(px, color, 1.5, dash="5,3"))
        parts.append(
            f'<text x="{_fmt(px[-1, 0] + 4)}" y="{_fmt(px[-1, 1])}" '
            f'font-family="monospace" font-size="11" fill="{color}">p={prob:.2f}</text>'
        )

    obs_px = to_px(obs)
    parts.append(_polyline(obs_px, "#000000", 2.0))
    truth_px = to_px(np.vstack([obs[-1:], truth]))
    parts.append(_polyline(truth_px, "#2ca02c", 2.0))
    parts.append(
        f'<circle cx="{_fmt(obs_px[0, 0])}" cy="{_fmt(obs_px[0, 1])}" r="3" fill="#000000"/>'
    )
    parts.append("</svg>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
