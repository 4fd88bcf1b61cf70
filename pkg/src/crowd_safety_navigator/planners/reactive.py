"""Crowd models reused as robot planners: the robot is the ego agent, humans its neighbours."""

import numpy as np

from crowd_safety_navigator.config import Behavior, SocialForceParams
from crowd_safety_navigator.simulation.orca import orca_velocity
from crowd_safety_navigator.simulation.social_force import social_force_velocity
from crowd_safety_navigator.simulation.state import WorldState


def orca_planner(world: WorldState) -> np.ndarray:
    params = world.config.orca
    return orca_velocity(
        world.robot.as_agent(Behavior.ORCA),
        list(world.humans),
        world.dt,
        time_horizon=params.time_horizon,
        neighbor_dist=params.neighbor_dist,
    )


def sf_planner(world: WorldState, params: SocialForceParams | None = None) -> np.ndarray:
    return social_force_velocity(
        world.robot.as_agent(Behavior.SOCIAL_FORCE),
        list(world.humans),
        params or world.config.social_force,
        world.dt,
    )
