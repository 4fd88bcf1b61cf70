"""Per-step SVG frames of an episode trace."""

import logging
from pathlib import Path
from typing import List

import numpy as np

from crowd_safety_navigator.metrics.trace import EpisodeTrace

logger = logging.getLogger(__name__)

PIXELS_PER_METER = 50.0
MARGIN = 20.0

SVG_TEMPLATE = """<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">
    <style>
        .arena {{ fill: #ffffff; stroke: #333333; stroke-width: 2; }}
        .uncertainty {{ fill: #87cefa; fill-opacity: 0.3; stroke: #4682b4; stroke-opacity: 0.4; stroke-width: 1; }}
        .prediction {{ fill: #4682b4; }}
        .human {{ fill: #1f4e9c; fill-opacity: 0.85; stroke: #0b2a5b; stroke-width: 1; }}
        .robot {{ fill: #ffd700; stroke: #8b7500; stroke-width: 1.5; }}
        .goal {{ fill: #ff8c00; stroke: #8b4500; stroke-width: 1; }}
        .path {{ fill: none; stroke: #daa520; stroke-width: 2; stroke-dasharray: 4 3; }}
        .label {{ font-family: Helvetica, Arial, sans-serif; font-size: 12px; fill: #333333; }}
    </style>
    <rect class="arena" x="{margin:.1f}" y="{margin:.1f}" width="{arena_width:.1f}" height="{arena_height:.1f}"/>
{body}
    <text class="label" x="{margin:.1f}" y="{label_y:.1f}">{caption}</text>
</svg>
"""


class SvgRenderer:
    """Draws arena, humans, robot, goal, prediction points and uncertainty discs."""

    def __init__(self, arena: tuple[float, float], scale: float = PIXELS_PER_METER) -> None:
        self.arena = arena
        self.scale = scale

    def _xy(self, point: np.ndarray) -> tuple[float, float]:
        # World is centred on the origin with y up; SVG has y down.
        width, height = self.arena
        x = MARGIN + (float(point[0]) + width / 2.0) * self.scale
        y = MARGIN + (height / 2.0 - float(point[1])) * self.scale
        return x, y

    def _circle(self, center: np.ndarray, radius: float, css: str) -> str:
        x, y = self._xy(center)
        return f'    <circle class="{css}" cx="{x:.2f}" cy="{y:.2f}" r="{radius * self.scale:.2f}"/>'

    def _star(self, center: np.ndarray, radius: float) -> str:
        x, y = self._xy(center)
        outer = radius * self.scale
        points = []
        for i in range(10):
            r = outer if i % 2 == 0 else outer * 0.45
            angle = -np.pi / 2 + i * np.pi / 5
            points.append(f"{x + r * np.cos(angle):.2f},{y + r * np.sin(angle):.2f}")
        return f'    <polygon class="goal" points="{" ".join(points)}"/>'

    def render_frame(self, trace: EpisodeTrace, index: int) -> str:
        """SVG for the state after step ``index + 1``, with the robot path up to it."""
        header = trace.header
        record = trace.steps[index]
        elements: List[str] = []

        if record.predictions is not None and record.uncertainty is not None:
            for h in range(record.predictions.shape[0]):
                for k in range(record.predictions.shape[1]):
                    center = record.predictions[h, k]
                    # Disc of the queried uncertainty radius around each prediction point.
                    elements.append(self._circle(center, float(record.uncertainty[h, k]), "uncertainty"))
                    elements.append(self._circle(center, 0.04, "prediction"))

        for position, radius in zip(record.human_positions, header.human_radii):
            elements.append(self._circle(position, float(radius), "human"))

        path = trace.robot_positions[: index + 2]
        if len(path) > 1:
            coordinates = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self._xy(point) for point in path))
            elements.append(f'    <polyline class="path" points="{coordinates}"/>')

        elements.append(self._star(header.robot_goal, 0.3))
        elements.append(self._circle(record.robot_position, header.robot_radius, "robot"))

        width, height = self.arena
        caption = f"t = {record.time:.2f} s  step {record.step}  {record.event.value}  cost {record.cost:.3f}"
        return SVG_TEMPLATE.format(
            width=width * self.scale + 2 * MARGIN,
            height=height * self.scale + 2 * MARGIN + 20,
            margin=MARGIN,
            arena_width=width * self.scale,
            arena_height=height * self.scale,
            label_y=height * self.scale + 2 * MARGIN + 12,
            body="\n".join(elements),
            caption=caption,
        )


def render_trace(trace: EpisodeTrace, out_dir: Path | str) -> List[Path]:
    """Write one ``frame_NNNN.svg`` per step record.

    Returns:
        Paths of the written frames in step order
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    renderer = SvgRenderer(trace.header.scenario.arena)
    paths = []
    for index, record in enumerate(trace.steps):
        path = out_dir / f"frame_{record.step:04d}.svg"
        path.write_text(renderer.render_frame(trace, index), encoding="utf-8")
        paths.append(path)
    logger.info(f"Rendered {len(paths)} frames to {out_dir}")
    return paths
