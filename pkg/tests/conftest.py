from __future__ import annotations

import os

from hypothesis import settings

from metamob.core import MovementEvent, canonicalize_trajectories

settings.register_profile("repo", derandomize=True, max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


def events_of(paths: dict[str, list[str]]) -> list[MovementEvent]:
    """One event per location, ticks 0, 1, 2, ... per agent."""
    return [MovementEvent(agent, t, loc) for agent, locs in paths.items()
            for t, loc in enumerate(locs)]


def trajs_of(paths: dict[str, list[str]]):
    return canonicalize_trajectories(events_of(paths))
