"""Genome decoding and the two controllers of the soft agent.

A flat genome holds, in order: the pressure controller weights W_p (1 x |o|)
and bias b_p, then the springs controller weights W_s ((n+1) x |o|,
row-major) and biases b_s. Without pressure control the W_p/b_p block is
absent. The pressure controller is linear and unbounded; the springs
controller is tanh-squashed into [-1, 1]^(n+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensing import observation_size


def genome_size(n_mass, pressure_enabled):
    """Number of parameters for an n-mass ring."""
    if n_mass < 3:
        raise ValueError("a ring needs at least 3 masses")
    obs = observation_size(n_mass)
    size = (n_mass + 1) * (obs + 1)
    if pressure_enabled:
        size += obs + 1
    return size


@dataclass(frozen=True)
class ControllerPair:
    """Decoded controllers; immutable and safe to share across episodes."""

    n_mass: int
    pressure_enabled: bool
    w_p: np.ndarray | None  # (|o|,) or None when pressure control is off
    b_p: float
    w_s: np.ndarray  # (n+1, |o|)
    b_s: np.ndarray  # (n+1,)

    def pressure_control(self, obs):
        """Unbounded pressure change W_p . o + b_p."""
        if not self.pressure_enabled:
            raise ValueError("pressure controller is disabled")
        return float(self.w_p @ obs) + self.b_p

    def springs_control(self, obs):
        """Spring commands tanh(W_s . o + b_s) in (-1, 1)^(n+1)."""
        return np.tanh(self.w_s @ obs + self.b_s)


def decode_genome(theta, n_mass, pressure_enabled):
    """Split a flat parameter vector into the controller pair."""
    theta = np.asarray(theta, np.float64)
    expected = genome_size(n_mass, pressure_enabled)
    if theta.shape != (expected,):
        raise ValueError(
            f"genome length mismatch: expected {expected}, found {theta.size}")
    obs = observation_size(n_mass)
    offset = 0
    w_p = None
    b_p = 0.0
    if pressure_enabled:
        w_p = theta[:obs].copy()
        b_p = float(theta[obs])
        offset = obs + 1
    w_s = theta[offset:offset + (n_mass + 1) * obs].reshape(n_mass + 1, obs).copy()
    b_s = theta[offset + (n_mass + 1) * obs:].copy()
    return ControllerPair(n_mass=n_mass, pressure_enabled=pressure_enabled,
                          w_p=w_p, b_p=b_p, w_s=w_s, b_s=b_s)


def encode_genome(controller: ControllerPair):
    """Inverse of decode_genome; exact round-trip."""
    parts = []
    if controller.pressure_enabled:
        parts.append(controller.w_p)
        parts.append([controller.b_p])
    parts.append(controller.w_s.ravel())
    parts.append(controller.b_s)
    return np.concatenate(parts)


def actuate_spring(base_length, s):
    """Rest length for command s in [-1, 1], stateless from base length.

    s = 1 gives maximum contraction 0.75*l; s = -1 gives maximum expansion
    1.25*l; s = 0 leaves the base length unchanged.
    """
    if s > 0.0:
        return base_length - s * (base_length - 0.75 * base_length)
    return base_length - s * (1.25 * base_length - base_length)


def save_genome(path, theta, n_mass, pressure_enabled):
    """Write a genome as plain text: 3-line header then one value per line."""
    theta = np.asarray(theta, np.float64)
    with open(path, "w") as fh:
        fh.write(f"n_mass {n_mass}\n")
        fh.write(f"pressure_enabled {int(bool(pressure_enabled))}\n")
        fh.write(f"length {theta.size}\n")
        for value in theta:
            fh.write(repr(float(value)) + "\n")


def load_genome(path):
    """Read a genome file; returns (theta, n_mass, pressure_enabled)."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if len(lines) < 3:
        raise ValueError("truncated genome file")
    n_mass = int(lines[0].split()[1])
    pressure_enabled = bool(int(lines[1].split()[1]))
    length = int(lines[2].split()[1])
    theta = np.array([float(v) for v in lines[3:]], np.float64)
    if theta.size != length:
        raise ValueError(
            f"genome length mismatch: expected {length}, found {theta.size}")
    return theta, n_mass, pressure_enabled
