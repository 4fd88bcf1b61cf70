"""Social force pedestrian model: goal relaxation plus exponential pairwise repulsion."""

import math

import numpy as np

from crowd_safety_navigator.config import SocialForceParams
from crowd_safety_navigator.simulation.state import AgentState, clamp_velocity, preferred_velocity


def repulsion_force(agent: AgentState, neighbor: AgentState, params: SocialForceParams) -> np.ndarray:
    """A * exp((r_i + r_j - d_ij) / B) along the unit vector from the neighbour to the agent."""
    difference = agent.position - neighbor.position
    distance = float(np.hypot(difference[0], difference[1]))
    if distance > params.neighbor_cutoff:
        return np.zeros(2)
    if distance < 1e-12:
        direction = np.array([1.0, 0.0]) if agent.agent_id < neighbor.agent_id else np.array([-1.0, 0.0])
    else:
        direction = difference / distance
    magnitude = params.repulsion_strength * math.exp(
        (agent.radius + neighbor.radius - distance) / params.repulsion_range
    )
    return magnitude * direction


def social_force(agent: AgentState, neighbors: list[AgentState], params: SocialForceParams) -> np.ndarray:
    force = (preferred_velocity(agent) - agent.velocity) / params.relaxation_time
    for neighbor in neighbors:
        force = force + repulsion_force(agent, neighbor, params)
    return force


def social_force_velocity(
    agent: AgentState,
    neighbors: list[AgentState],
    params: SocialForceParams,
    dt: float,
) -> np.ndarray:
    """Velocity after one explicit Euler step of the social force, clamped to max speed."""
    force = social_force(agent, neighbors, params)
    return clamp_velocity(agent.velocity + force * dt, agent.max_speed)
