"""Tests for the ORCA velocity solver."""

import numpy as np
import pytest

from crowd_safety_navigator.simulation.orca import orca_half_planes, orca_velocity, solve_orca
from crowd_safety_navigator.simulation.state import AgentState, preferred_velocity


def agent(position, velocity=(0.0, 0.0), goal=None, radius=0.3, max_speed=1.0, agent_id=0):
    position = np.asarray(position, dtype=float)
    return AgentState(
        position=position,
        velocity=np.asarray(velocity, dtype=float),
        radius=radius,
        goal=position if goal is None else np.asarray(goal, dtype=float),
        max_speed=max_speed,
        agent_id=agent_id,
    )


def disc_samples(rng, radius, count):
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    theta = rng.uniform(0.0, 2.0 * np.pi, count)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def test_no_neighbors_returns_preferred_velocity():
    a = agent((0.0, 0.0), goal=(3.0, 4.0))

    np.testing.assert_allclose(orca_velocity(a, [], dt=0.25), [0.6, 0.8])


def test_distant_neighbor_adds_no_constraint():
    a = agent((0.0, 0.0), goal=(5.0, 0.0))
    far = agent((20.0, 0.0), agent_id=1)

    assert orca_half_planes(a, [far], dt=0.25, neighbor_dist=10.0) == []


def test_head_on_pair_is_point_symmetric():
    a = agent((-2.0, 0.0), velocity=(1.0, 0.0), goal=(5.0, 0.0), agent_id=0)
    b = agent((2.0, 0.0), velocity=(-1.0, 0.0), goal=(-5.0, 0.0), agent_id=1)

    va = orca_velocity(a, [b], dt=0.25)
    vb = orca_velocity(b, [a], dt=0.25)

    np.testing.assert_allclose(va, -vb, atol=1e-9)
    assert not np.allclose(va, preferred_velocity(a))


def test_head_on_pair_never_overlaps():
    a = agent((-3.0, 0.0), goal=(3.0, 0.0), agent_id=0)
    b = agent((3.0, 0.0), goal=(-3.0, 0.0), agent_id=1)
    dt = 0.25

    for _ in range(60):
        va = orca_velocity(a, [b], dt)
        vb = orca_velocity(b, [a], dt)
        a, b = a.moved(va, dt), b.moved(vb, dt)
        assert np.linalg.norm(a.position - b.position) >= a.radius + b.radius - 1e-6


def test_coincident_agents_split_apart():
    a = agent((1.0, 1.0), agent_id=0)
    b = agent((1.0, 1.0), agent_id=1)

    va = orca_velocity(a, [b], dt=0.25)
    vb = orca_velocity(b, [a], dt=0.25)

    np.testing.assert_allclose(va, -vb, atol=1e-12)
    assert abs(va[0]) > 0.5


@pytest.mark.parametrize("seed", range(12))
def test_solution_is_optimal_against_sampled_velocities(seed):
    rng = np.random.default_rng(seed)
    center = agent((0.0, 0.0), velocity=rng.uniform(-0.7, 0.7, 2), goal=rng.uniform(-5.0, 5.0, 2))
    neighbors = []
    while len(neighbors) < 3:
        position = rng.uniform(-3.0, 3.0, 2)
        if all(np.linalg.norm(position - other.position) > 0.7 for other in [center, *neighbors]):
            neighbors.append(agent(position, velocity=rng.uniform(-0.7, 0.7, 2), agent_id=len(neighbors) + 1))

    lines = orca_half_planes(center, neighbors, dt=0.25)
    preferred = preferred_velocity(center)
    velocity, feasible = solve_orca(lines, preferred, center.max_speed)

    assert np.linalg.norm(velocity) <= center.max_speed + 1e-9
    if not feasible:
        return
    for line in lines:
        assert line.violation(velocity) <= 1e-6

    candidates = disc_samples(rng, center.max_speed, 10_000)
    admissible = np.ones(len(candidates), dtype=bool)
    for line in lines:
        admissible &= np.array([line.violation(c) <= 0.0 for c in candidates])
    if admissible.any():
        best = np.min(np.linalg.norm(candidates[admissible] - preferred, axis=1))
        assert np.linalg.norm(velocity - preferred) <= best + 1e-6
