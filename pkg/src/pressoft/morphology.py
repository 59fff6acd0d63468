"""Construction of the soft agent body and the pressure force distribution.

The body is a closed ring of square masses joined by soft distance joints.
A global internal pressure acts on the ring: every edge contributes a force
proportional to its current length along its outward normal, split equally
between its two anchor masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physics2d import World

SPRING_FREQUENCY_HZ = 8.0
SPRING_DAMPING_RATIO = 0.3
LENGTH_LIMIT_RATIO = (0.75, 1.25)
MASS_SIDE_M = 1.0
MASS_DENSITY = 2500.0
SPAWN_CLEARANCE_M = 0.0


@dataclass
class PsaMorphology:
    """A pressure-based soft agent body bound to one world."""

    n_mass: int
    radius: float
    mass_ids: list[int]
    joint_ids: list[int]
    base_lengths: np.ndarray
    pressure: float
    p_min: float
    p_max: float
    spawn_center: tuple[float, float] = (0.0, 0.0)

    def update_pressure(self, delta_p):
        """Add delta_p and clamp the result to [p_min, p_max]."""
        self.pressure = min(max(self.pressure + delta_p, self.p_min), self.p_max)
        return self.pressure


def ring_layout(n_mass, radius, center=(0.0, 0.0)):
    """Mass centers equispaced counterclockwise on a circle."""
    angles = 2.0 * math.pi * np.arange(n_mass) / n_mass
    points = np.empty((n_mass, 2))
    points[:, 0] = center[0] + radius * np.cos(angles)
    points[:, 1] = center[1] + radius * np.sin(angles)
    return points


def flattened_layout(n_mass, radius, center=(0.0, 0.0), height=1.2):
    """Mass centers along a deflated hairpin loop with every edge exactly
    equal to the ring's base length, so the spawn carries no spring strain.

    The loop runs right along a bottom row, turns up, and runs back along a
    top row `height` above; for odd counts the right turn goes through an
    elbow point. Points are ordered counterclockwise; `center` is the loop
    midpoint. The enclosed area is near zero relative to the circle.
    """
    if n_mass < 4:
        raise ValueError("flattened layout needs at least 4 masses")
    chord = 2.0 * radius * math.sin(math.pi / n_mass)
    if height >= chord:
        raise ValueError("height must be smaller than the chord length")
    dx = math.sqrt(chord * chord - height * height)
    points = []
    if n_mass % 2 == 0:
        u = n_mass // 2
        for i in range(u):
            points.append((i * chord, 0.0))
        x_top = (u - 1) * chord + dx
        for j in range(u):
            points.append((x_top - j * chord, height))
    else:
        u = (n_mass - 1) // 2
        for i in range(u):
            points.append((i * chord, 0.0))
        # Right turn: two chords from the bottom end to the top row start,
        # meeting at an outward elbow.
        x_b = (u - 1) * chord
        x_t = dx + (u - 1) * chord
        span = math.hypot(x_t - x_b, height)
        bulge = math.sqrt(chord * chord - 0.25 * span * span)
        mx = 0.5 * (x_b + x_t)
        my = 0.5 * height
        # Outward (rightward) normal of the turn chord.
        nx = height / span
        ny = -(x_t - x_b) / span
        points.append((mx - bulge * nx, my - bulge * ny))
        for j in range(u):
            points.append((x_t - j * chord, height))
    points = np.array(points, np.float64)
    points[:, 0] += center[0] - points[:, 0].mean()
    points[:, 1] += center[1] - height / 2.0
    return points


def build_psa(world: World, n_mass, radius, center=(0.0, 0.0),
              pressure=0.0, p_min=0.0, p_max=math.inf, layout=None):
    """Construct the mass ring and joint chain in the given world.

    `layout` overrides the default circular mass placement with explicit
    (n_mass, 2) centers; ring order must be counterclockwise.
    """
    if n_mass < 3:
        raise ValueError("a ring needs at least 3 masses")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if layout is None:
        layout = ring_layout(n_mass, radius, center)
    else:
        layout = np.asarray(layout, np.float64)
        if layout.shape != (n_mass, 2):
            raise ValueError("layout shape mismatch")

    base_length = 2.0 * radius * math.sin(math.pi / n_mass)
    mass_ids = [world.add_body(layout[i], half_side=MASS_SIDE_M / 2.0,
                               density=MASS_DENSITY)
                for i in range(n_mass)]
    joint_ids = [world.add_spring_joint(mass_ids[i], mass_ids[(i + 1) % n_mass],
                                        frequency=SPRING_FREQUENCY_HZ,
                                        damping_ratio=SPRING_DAMPING_RATIO,
                                        base_length=base_length,
                                        limit_ratio=LENGTH_LIMIT_RATIO)
                 for i in range(n_mass)]
    return PsaMorphology(
        n_mass=n_mass, radius=radius, mass_ids=mass_ids, joint_ids=joint_ids,
        base_lengths=np.full(n_mass, base_length), pressure=pressure,
        p_min=p_min, p_max=p_max, spawn_center=(float(center[0]), float(center[1])))


def pressure_forces(points, pressure):
    """Per-vertex pressure forces for a closed counterclockwise polygon.

    Each edge of length l contributes a force l*pressure along its outward
    normal, split equally between its two end vertices. Zero-length edges
    contribute nothing. Returns an (n, 2) array summing to zero.
    """
    points = np.asarray(points, np.float64)
    n = points.shape[0]
    forces = np.zeros((n, 2))
    for i in range(n):
        j = (i + 1) % n
        ex = points[j, 0] - points[i, 0]
        ey = points[j, 1] - points[i, 1]
        length = math.hypot(ex, ey)
        if length < 1e-12:
            continue
        # Outward normal of a counterclockwise edge.
        nx = ey / length
        ny = -ex / length
        half = 0.5 * length * pressure
        forces[i, 0] += half * nx
        forces[i, 1] += half * ny
        forces[j, 0] += half * nx
        forces[j, 1] += half * ny
    return forces


def apply_pressure_forces(psa: PsaMorphology, world: World):
    """Apply the current pressure to the mass centers; returns the forces."""
    points = world.pos[psa.mass_ids]
    forces = pressure_forces(points, psa.pressure)
    for k, body in enumerate(psa.mass_ids):
        world.apply_force(body, forces[k, 0], forces[k, 1])
    return forces


def polygon_area(points):
    """Absolute shoelace area of a closed polygon."""
    points = np.asarray(points, np.float64)
    x = points[:, 0]
    y = points[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def envelope_area(psa: PsaMorphology, world: World):
    """Shoelace area of the polygon through the mass centers in ring order."""
    return polygon_area(world.pos[psa.mass_ids])


def center_of_mass(psa: PsaMorphology, world: World):
    """All masses are equal, so this is the mean of the mass centers."""
    return world.pos[psa.mass_ids].mean(axis=0)


def com_velocity(psa: PsaMorphology, world: World):
    return world.vel[psa.mass_ids].mean(axis=0)


def spawn_center_above(radius, ground_y=0.0, flattened=False, height=1.2):
    """Center placing the lowest mass bottom SPAWN_CLEARANCE_M above ground."""
    lowest = height / 2.0 if flattened else radius
    return (0.0, ground_y + lowest + MASS_SIDE_M / 2.0 + SPAWN_CLEARANCE_M)
