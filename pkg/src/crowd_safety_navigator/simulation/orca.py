"""Optimal reciprocal collision avoidance (ORCA) for pedestrian and robot agents.

Each neighbour contributes one half-plane of admissible velocities. The new velocity is the
point of the intersection closest to the preferred velocity (2D incremental linear program);
when the intersection is empty the constraints are relaxed uniformly until one velocity
becomes admissible (3D linear program). Same construction as the RVO2 library.
"""

import math
from dataclasses import dataclass

import numpy as np

from crowd_safety_navigator.simulation.state import AgentState, clamp_velocity, preferred_velocity

EPSILON = 1e-5


@dataclass(frozen=True, eq=False)
class OrcaLine:
    """Directed line; admissible velocities lie on its left (det(direction, point - v) <= 0)."""

    point: np.ndarray
    direction: np.ndarray

    def violation(self, velocity: np.ndarray) -> float:
        """Signed distance by which ``velocity`` lies on the forbidden side (> 0 means violated)."""
        return _det(self.direction, self.point - velocity)


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _tie_break_direction(agent_id: int, other_id: int) -> np.ndarray:
    # Coincident agents: push apart along x, ordered by id so the pair splits symmetrically.
    return np.array([1.0, 0.0]) if agent_id < other_id else np.array([-1.0, 0.0])


def orca_half_planes(
    agent: AgentState,
    neighbors: list[AgentState],
    dt: float,
    time_horizon: float = 5.0,
    neighbor_dist: float = 10.0,
) -> list[OrcaLine]:
    """Build one ORCA half-plane per neighbour within ``neighbor_dist``."""
    lines: list[OrcaLine] = []
    inv_time_horizon = 1.0 / time_horizon

    for other in neighbors:
        relative_position = other.position - agent.position
        relative_velocity = agent.velocity - other.velocity
        dist_sq = float(relative_position @ relative_position)
        if dist_sq > neighbor_dist**2:
            continue
        combined_radius = agent.radius + other.radius
        combined_radius_sq = combined_radius**2

        if dist_sq > combined_radius_sq:
            # No collision yet: project onto the truncated velocity-obstacle cone.
            w = relative_velocity - inv_time_horizon * relative_position
            w_length_sq = float(w @ w)
            dot_product1 = float(w @ relative_position)

            if dot_product1 < 0.0 and dot_product1**2 > combined_radius_sq * w_length_sq:
                # Project on the cut-off circle.
                w_length = math.sqrt(w_length_sq)
                unit_w = w / w_length
                direction = np.array([unit_w[1], -unit_w[0]])
                u = (combined_radius * inv_time_horizon - w_length) * unit_w
            else:
                # Project on the legs.
                leg = math.sqrt(dist_sq - combined_radius_sq)
                rx, ry = relative_position
                if _det(relative_position, w) > 0.0:
                    direction = np.array([rx * leg - ry * combined_radius, rx * combined_radius + ry * leg]) / dist_sq
                else:
                    direction = -np.array([rx * leg + ry * combined_radius, -rx * combined_radius + ry * leg]) / dist_sq
                dot_product2 = float(relative_velocity @ direction)
                u = dot_product2 * direction - relative_velocity
        else:
            # Already overlapping: resolve within one time step.
            inv_time_step = 1.0 / dt
            w = relative_velocity - inv_time_step * relative_position
            w_length = float(np.hypot(w[0], w[1]))
            if w_length < 1e-12:
                unit_w = -_tie_break_direction(agent.agent_id, other.agent_id)
                w_length = 0.0
            else:
                unit_w = w / w_length
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_radius * inv_time_step - w_length) * unit_w

        lines.append(OrcaLine(point=agent.velocity + 0.5 * u, direction=direction))

    return lines


def _linear_program1(
    lines: list[OrcaLine],
    line_no: int,
    radius: float,
    opt_velocity: np.ndarray,
    direction_opt: bool,
) -> np.ndarray | None:
    """Optimize on line ``line_no`` subject to lines before it and the speed disc."""
    line = lines[line_no]
    dot_product = float(line.point @ line.direction)
    discriminant = dot_product**2 + radius**2 - float(line.point @ line.point)
    if discriminant < 0.0:
        # Max speed circle fully invalidates this line.
        return None

    sqrt_discriminant = math.sqrt(discriminant)
    t_left = -dot_product - sqrt_discriminant
    t_right = -dot_product + sqrt_discriminant

    for i in range(line_no):
        denominator = _det(line.direction, lines[i].direction)
        numerator = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denominator) <= EPSILON:
            # Lines are (almost) parallel.
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        if float(opt_velocity @ line.direction) > 0.0:
            return line.point + t_right * line.direction
        return line.point + t_left * line.direction

    t = float(line.direction @ (opt_velocity - line.point))
    t = min(max(t, t_left), t_right)
    return line.point + t * line.direction


def _linear_program2(
    lines: list[OrcaLine],
    radius: float,
    opt_velocity: np.ndarray,
    direction_opt: bool,
) -> tuple[int, np.ndarray]:
    """Incremental 2D program. Returns (index of first infeasible line or len(lines), result)."""
    if direction_opt:
        result = opt_velocity * radius
    elif float(opt_velocity @ opt_velocity) > radius**2:
        result = opt_velocity / float(np.linalg.norm(opt_velocity)) * radius
    else:
        result = opt_velocity.copy()

    for i, line in enumerate(lines):
        if line.violation(result) > 0.0:
            candidate = _linear_program1(lines, i, radius, opt_velocity, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _linear_program3(
    lines: list[OrcaLine],
    begin_line: int,
    radius: float,
    result: np.ndarray,
) -> np.ndarray:
    """Minimize the maximum constraint violation (3D program projected to 2D)."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if lines[i].violation(result) <= distance:
            continue
        projected: list[OrcaLine] = []
        for j in range(i):
            denominator = _det(lines[i].direction, lines[j].direction)
            if abs(denominator) <= EPSILON:
                if float(lines[i].direction @ lines[j].direction) > 0.0:
                    # Same direction: line j is implied by line i.
                    continue
                point = 0.5 * (lines[i].point + lines[j].point)
            else:
                point = lines[i].point + (
                    _det(lines[j].direction, lines[i].point - lines[j].point) / denominator
                ) * lines[i].direction
            direction = lines[j].direction - lines[i].direction
            direction = direction / float(np.linalg.norm(direction))
            projected.append(OrcaLine(point=point, direction=direction))

        previous = result
        opt_direction = np.array([-lines[i].direction[1], lines[i].direction[0]])
        fail, candidate = _linear_program2(projected, radius, opt_direction, True)
        # Failure here only comes from floating point error; keep the previous result then.
        result = candidate if fail >= len(projected) else previous
        distance = lines[i].violation(result)
    return result


def solve_orca(lines: list[OrcaLine], preferred: np.ndarray, max_speed: float) -> tuple[np.ndarray, bool]:
    """Return (velocity, feasible) for a set of ORCA lines."""
    fail, velocity = _linear_program2(lines, max_speed, preferred, False)
    if fail < len(lines):
        return _linear_program3(lines, fail, max_speed, velocity), False
    return velocity, True


def orca_velocity(
    agent: AgentState,
    neighbors: list[AgentState],
    dt: float,
    time_horizon: float = 5.0,
    neighbor_dist: float = 10.0,
) -> np.ndarray:
    """New velocity for ``agent`` against ``neighbors`` (which must not contain the agent)."""
    preferred = preferred_velocity(agent)
    lines = orca_half_planes(agent, neighbors, dt, time_horizon, neighbor_dist)
    velocity, _ = solve_orca(lines, preferred, agent.max_speed)
    # LP output sits on the speed circle up to rounding.
    return clamp_velocity(velocity, agent.max_speed)
