"""Stepwise environment API (reset/step) over the task episodes.

The environment advances the exact same compiled step as run_episode, one
action at a time. An action holds n_mass + 1 spring commands (entries
clamped to [-1, 1]; the last command is accepted for interface
compatibility but drives no joint) followed, when pressure control is
enabled, by one unbounded pressure-change entry.
"""

from __future__ import annotations

import numpy as np

from . import tasks
from .sensing import observation_size
from .tasks import (EPISODE_STEPS, STATUS_OK, MORPHOLOGIES, MorphologyConfig,
                    _act_and_step_kernel, _build_episode, _observe_kernel)
from .sensing import HISTORY_LEN, VELOCITY_CAP_M_S


class Env:
    """Single-episode session; call reset() before the first step()."""

    def __init__(self, task, morphology, pressure_enabled=True):
        if task not in ("locomotion", "escape"):
            raise ValueError(f"unknown task {task!r}")
        self.task = task
        self.config: MorphologyConfig = (
            MORPHOLOGIES[morphology] if isinstance(morphology, str) else morphology)
        self.pressure_enabled = bool(pressure_enabled)
        self.action_size = (self.config.n_mass + 1) + (1 if pressure_enabled else 0)
        self._ready = False
        self.done = False

    def reset(self, seed=0):
        """Build a fresh episode; returns the initial observation."""
        self.world, self.psa, self.gas, self.cage = _build_episode(
            self.task, self.config, seed)
        n = self.config.n_mass
        dim = observation_size(n)
        self._hist = np.zeros((HISTORY_LEN, dim))
        self._hist_state = np.zeros(2, np.int64)
        self._obs = np.zeros(dim)
        self._s_buf = np.zeros(n + 1)
        self._p_state = np.array([self.psa.pressure, self.psa.p_min,
                                  self.psa.p_max])
        self._threshold = (self.cage.wall_separation / 2.0
                           + self.cage.wall_thickness
                           if self.cage is not None else -1.0)
        self.step_count = 0
        self.done = False
        self._ready = True
        self._prev_com = self.world.pos[self.psa.mass_ids].mean(axis=0)
        self._start_com = self._prev_com.copy()
        self._observe()
        return self._obs.copy()

    def _observe(self):
        w = self.world
        _observe_kernel(w.pos, w.vel, w.touching, self._p_state[0],
                        self._p_state[2], 2.0 * self.psa.radius,
                        VELOCITY_CAP_M_S, self._hist, self._hist_state,
                        self._obs)

    def step(self, action):
        """Apply one action and advance 1/60 s.

        Returns (observation, reward, done); the reward is the per-step
        displacement rate matching the task fitness.
        """
        if not self._ready:
            raise RuntimeError("reset() must be called before step()")
        if self.done:
            raise RuntimeError("episode is done; call reset()")
        action = np.asarray(action, np.float64)
        if action.shape != (self.action_size,):
            raise ValueError(
                f"action length mismatch: expected {self.action_size}, "
                f"found {action.size}")
        n = self.config.n_mass
        self._s_buf[:] = np.clip(action[:n + 1], -1.0, 1.0)
        dp = float(action[n + 1]) if self.pressure_enabled else 0.0

        w = self.world
        status = _act_and_step_kernel(
            w.pos, w.vel, w.force, w.mass, w.inv_mass, w.half, w.touching,
            w.joint_a, w.joint_b, w.rest_length, w.kspring, w.cdamp,
            w.min_length, w.max_length, w.segments,
            w.gravity[0], w.gravity[1], w.dt,
            w.velocity_iterations, w.position_iterations, w.contact_slop,
            w.max_speed, w.linear_damping,
            float(self.psa.base_lengths[0]), self._s_buf, dp,
            not self.pressure_enabled, self.gas.nrt, self._p_state)
        self.psa.pressure = float(self._p_state[0])
        self.step_count += 1

        com = w.pos[self.psa.mass_ids].mean(axis=0)
        if self.task == "locomotion":
            reward = (com[0] - self._prev_com[0]) / w.dt
        else:
            reward = (np.hypot(*(com - self._start_com))
                      - np.hypot(*(self._prev_com - self._start_com))) / w.dt
        self._prev_com = com

        if status != STATUS_OK:
            self.done = True
        elif self.step_count >= EPISODE_STEPS:
            self.done = True
        elif self.task == "escape" and np.all(
                np.abs(w.pos[self.psa.mass_ids, 0]) >= self._threshold):
            self.done = True
        self._observe()
        return self._obs.copy(), float(reward), self.done
