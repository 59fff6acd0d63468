"""Normalized, time-averaged observations for the soft agent.

The observation vector has length 3*n + 3 for an n-mass ring:
[touch_0..touch_{n-1}, relx_0, rely_0, ..., relx_{n-1}, rely_{n-1},
 v_x, v_y, p_norm], every entry in [0, 1], averaged over a sliding
window of the most recent frames.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .morphology import PsaMorphology
from .physics2d import World

HISTORY_LEN = 25
VELOCITY_CAP_M_S = 10.0


def observation_size(n_mass):
    """Length of the observation vector for an n-mass ring."""
    return 3 * n_mass + 3


@dataclass(frozen=True)
class SensorConfig:
    """Normalization scales for one morphology."""

    position_scale: float  # m; relative positions map through c/scale + 0.5
    p_max: float  # Pa; pressure maps through p/p_max
    velocity_cap: float = VELOCITY_CAP_M_S
    history_len: int = HISTORY_LEN

    def __post_init__(self):
        if self.history_len < 1:
            raise ValueError("history_len must be at least 1")
        if self.velocity_cap <= 0.0 or self.position_scale <= 0.0:
            raise ValueError("scales must be positive")

    @classmethod
    def for_psa(cls, psa: PsaMorphology):
        return cls(position_scale=2.0 * psa.radius, p_max=psa.p_max)


def read_raw(psa: PsaMorphology, world: World):
    """Raw sensor tuple (touch, rel_positions, com_velocity, pressure).

    touch_j is 1.0 when mass j contacted static geometry during the last
    step; rel_j is mass j's position relative to the center of mass.
    """
    touch = world.touching[psa.mass_ids].astype(np.float64)
    pos = world.pos[psa.mass_ids]
    rel = pos - pos.mean(axis=0)
    vel = world.vel[psa.mass_ids].mean(axis=0)
    return touch, rel, vel, psa.pressure


def normalize(raw, config: SensorConfig):
    """Map one raw frame to a flat vector in [0,1] with the fixed layout."""
    touch, rel, vel, pressure = raw
    n = touch.shape[0]
    frame = np.empty(3 * n + 3)
    frame[:n] = touch
    frame[n:3 * n] = np.clip(rel / config.position_scale + 0.5, 0.0, 1.0).ravel()
    frame[3 * n:3 * n + 2] = np.clip(
        vel / (2.0 * config.velocity_cap) + 0.5, 0.0, 1.0)
    frame[3 * n + 2] = min(max(pressure / config.p_max, 0.0), 1.0)
    return frame


@dataclass
class SensorHistory:
    """Sliding window of normalized frames owned by one episode."""

    config: SensorConfig
    frames: deque = field(default_factory=deque)

    def observe(self, psa: PsaMorphology, world: World):
        """Push the current frame and return the window-mean observation."""
        self.frames.append(normalize(read_raw(psa, world), self.config))
        if len(self.frames) > self.config.history_len:
            self.frames.popleft()
        return np.mean(self.frames, axis=0)
