"""Deterministic fixed-timestep 2D physics for translational square bodies.

Bodies are axis-aligned squares with rotation permanently fixed. They are
connected by soft distance joints (frequency/damping parameterization with
hard length limits) and collide only with static segment geometry, never
with each other. Integration is semi-implicit Euler; contacts are resolved
with sequential impulses followed by positional correction.
"""

from __future__ import annotations

import logging
import math
import pickle

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

DEFAULT_GRAVITY = (0.0, -9.81)
DEFAULT_DT = 1.0 / 60.0
DEFAULT_VELOCITY_ITERATIONS = 8
DEFAULT_POSITION_ITERATIONS = 3
DEFAULT_CONTACT_SLOP = 0.005
DEFAULT_FRICTION = 0.2
# Cap on translation per step, to rule out tunneling: a body overlaps a
# 1 m-thick wall over a 2 m span of center positions (and any bare segment
# over a 1 m span), so steps shorter than that span cannot skip a contact.
DEFAULT_MAX_TRANSLATION = 0.75

_MAX_CONTACTS_PER_BODY = 8


class NumericalBlowupError(RuntimeError):
    """Raised when a step produces non-finite positions or velocities."""


@njit(cache=True)
def _closest_point_on_segment(px, py, x1, y1, x2, y2):
    ex = x2 - x1
    ey = y2 - y1
    ee = ex * ex + ey * ey
    if ee < 1e-18:
        return x1, y1
    t = ((px - x1) * ex + (py - y1) * ey) / ee
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return x1 + t * ex, y1 + t * ey


@njit(cache=True)
def _step_kernel(pos, vel, force, mass, inv_mass, half, touching,
                 ja, jb, rest, kspring, cdamp, min_len, max_len,
                 segs, gx, gy, dt, vel_iters, pos_iters, slop, max_speed,
                 lin_damp):
    """Advance the world one timestep in place.

    Returns (ok, degenerate_joints): ok is False when any body state went
    non-finite, degenerate_joints counts joints skipped for zero length.
    """
    n = pos.shape[0]
    nj = ja.shape[0]
    ns = segs.shape[0]
    degenerate = 0

    # Spring forces from the soft distance joints.
    for j in range(nj):
        a = ja[j]
        b = jb[j]
        dx = pos[b, 0] - pos[a, 0]
        dy = pos[b, 1] - pos[a, 1]
        length = math.sqrt(dx * dx + dy * dy)
        if length < 1e-12:
            degenerate += 1
            continue
        ux = dx / length
        uy = dy / length
        rel = (vel[b, 0] - vel[a, 0]) * ux + (vel[b, 1] - vel[a, 1]) * uy
        f = kspring[j] * (length - rest[j]) + cdamp[j] * rel
        force[a, 0] += f * ux
        force[a, 1] += f * uy
        force[b, 0] -= f * ux
        force[b, 1] -= f * uy

    # Integrate velocities (semi-implicit Euler) and clamp speed.
    damp_factor = 1.0 / (1.0 + lin_damp * dt)
    for i in range(n):
        vel[i, 0] += (force[i, 0] * inv_mass[i] + gx) * dt
        vel[i, 1] += (force[i, 1] * inv_mass[i] + gy) * dt
        vel[i, 0] *= damp_factor
        vel[i, 1] *= damp_factor
        speed = math.sqrt(vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1])
        if speed > max_speed:
            s = max_speed / speed
            vel[i, 0] *= s
            vel[i, 1] *= s

    # Contact detection: axis-aligned square vs static segment, one contact
    # per overlapping pair, normal from closest segment point to center.
    max_contacts = _MAX_CONTACTS_PER_BODY * n
    c_body = np.empty(max_contacts, np.int64)
    c_seg = np.empty(max_contacts, np.int64)
    c_nx = np.empty(max_contacts, np.float64)
    c_ny = np.empty(max_contacts, np.float64)
    nc = 0
    for i in range(n):
        touching[i] = 0
        h = half[i]
        reach = h + 0.1
        px = pos[i, 0]
        py = pos[i, 1]
        for s in range(ns):
            x1 = segs[s, 0]
            y1 = segs[s, 1]
            x2 = segs[s, 2]
            y2 = segs[s, 3]
            lo = x1 if x1 < x2 else x2
            hi = x1 if x1 > x2 else x2
            if lo > px + reach or hi < px - reach:
                continue
            lo = y1 if y1 < y2 else y2
            hi = y1 if y1 > y2 else y2
            if lo > py + reach or hi < py - reach:
                continue
            qx, qy = _closest_point_on_segment(px, py, x1, y1, x2, y2)
            dx = px - qx
            dy = py - qy
            dist = math.sqrt(dx * dx + dy * dy)
            if dist > 1e-9:
                nx = dx / dist
                ny = dy / dist
            else:
                # Center exactly on the segment: fall back to the upward
                # facing segment normal.
                ex = x2 - x1
                ey = y2 - y1
                elen = math.sqrt(ex * ex + ey * ey)
                nx = -ey / elen
                ny = ex / elen
                if ny < 0.0:
                    nx = -nx
                    ny = -ny
            support = abs(nx) * h + abs(ny) * h
            pen = support - dist
            if pen > 0.0 and nc < max_contacts:
                c_body[nc] = i
                c_seg[nc] = s
                c_nx[nc] = nx
                c_ny[nc] = ny
                nc += 1
                touching[i] = 1

    # Sequential impulses: restitution 0, Coulomb friction.
    jn_acc = np.zeros(nc, np.float64)
    jt_acc = np.zeros(nc, np.float64)
    for _ in range(vel_iters):
        for c in range(nc):
            i = c_body[c]
            nx = c_nx[c]
            ny = c_ny[c]
            vn = vel[i, 0] * nx + vel[i, 1] * ny
            dj = -vn * mass[i]
            jn_new = jn_acc[c] + dj
            if jn_new < 0.0:
                jn_new = 0.0
            dj = jn_new - jn_acc[c]
            jn_acc[c] = jn_new
            vel[i, 0] += dj * inv_mass[i] * nx
            vel[i, 1] += dj * inv_mass[i] * ny

            tx = -ny
            ty = nx
            vt = vel[i, 0] * tx + vel[i, 1] * ty
            djt = -vt * mass[i]
            max_friction = segs[c_seg[c], 4] * jn_acc[c]
            jt_new = jt_acc[c] + djt
            if jt_new > max_friction:
                jt_new = max_friction
            elif jt_new < -max_friction:
                jt_new = -max_friction
            djt = jt_new - jt_acc[c]
            jt_acc[c] = jt_new
            vel[i, 0] += djt * inv_mass[i] * tx
            vel[i, 1] += djt * inv_mass[i] * ty

    # Integrate positions.
    for i in range(n):
        pos[i, 0] += vel[i, 0] * dt
        pos[i, 1] += vel[i, 1] * dt

    # Positional correction: contact penetration, then joint length limits.
    for _ in range(pos_iters):
        for c in range(nc):
            i = c_body[c]
            s = c_seg[c]
            qx, qy = _closest_point_on_segment(
                pos[i, 0], pos[i, 1], segs[s, 0], segs[s, 1], segs[s, 2], segs[s, 3])
            dx = pos[i, 0] - qx
            dy = pos[i, 1] - qy
            dist = math.sqrt(dx * dx + dy * dy)
            if dist > 1e-9:
                nx = dx / dist
                ny = dy / dist
            else:
                nx = c_nx[c]
                ny = c_ny[c]
            support = abs(nx) * half[i] + abs(ny) * half[i]
            pen = support - dist
            if pen > slop:
                corr = 0.8 * (pen - slop)
                if corr > 0.2:
                    corr = 0.2
                pos[i, 0] += corr * nx
                pos[i, 1] += corr * ny

        for j in range(nj):
            a = ja[j]
            b = jb[j]
            dx = pos[b, 0] - pos[a, 0]
            dy = pos[b, 1] - pos[a, 1]
            length = math.sqrt(dx * dx + dy * dy)
            if length < 1e-12:
                continue
            violation = 0.0
            if length > max_len[j]:
                violation = length - max_len[j]
            elif length < min_len[j]:
                violation = length - min_len[j]
            else:
                continue
            ux = dx / length
            uy = dy / length
            w = inv_mass[a] + inv_mass[b]
            corr = violation / w
            pos[a, 0] += ux * corr * inv_mass[a]
            pos[a, 1] += uy * corr * inv_mass[a]
            pos[b, 0] -= ux * corr * inv_mass[b]
            pos[b, 1] -= uy * corr * inv_mass[b]
            # Remove relative velocity that keeps violating the limit.
            rel = (vel[b, 0] - vel[a, 0]) * ux + (vel[b, 1] - vel[a, 1]) * uy
            if (violation > 0.0 and rel > 0.0) or (violation < 0.0 and rel < 0.0):
                imp = rel / w
                vel[a, 0] += imp * inv_mass[a] * ux
                vel[a, 1] += imp * inv_mass[a] * uy
                vel[b, 0] -= imp * inv_mass[b] * ux
                vel[b, 1] -= imp * inv_mass[b] * uy

    ok = True
    for i in range(n):
        force[i, 0] = 0.0
        force[i, 1] = 0.0
        if not (math.isfinite(pos[i, 0]) and math.isfinite(pos[i, 1])
                and math.isfinite(vel[i, 0]) and math.isfinite(vel[i, 1])):
            ok = False
    return ok, degenerate


class World:
    """A single-owner physics scene stepped at a fixed timestep."""

    def __init__(self, gravity=DEFAULT_GRAVITY, dt=DEFAULT_DT,
                 velocity_iterations=DEFAULT_VELOCITY_ITERATIONS,
                 position_iterations=DEFAULT_POSITION_ITERATIONS,
                 contact_slop=DEFAULT_CONTACT_SLOP,
                 max_translation=DEFAULT_MAX_TRANSLATION,
                 linear_damping=0.0):
        self.gravity = (float(gravity[0]), float(gravity[1]))
        self.dt = float(dt)
        self.velocity_iterations = int(velocity_iterations)
        self.position_iterations = int(position_iterations)
        self.contact_slop = float(contact_slop)
        self.max_speed = float(max_translation) / self.dt
        self.linear_damping = float(linear_damping)
        self.step_counter = 0

        self.pos = np.empty((0, 2), np.float64)
        self.vel = np.empty((0, 2), np.float64)
        self.force = np.empty((0, 2), np.float64)
        self.mass = np.empty(0, np.float64)
        self.inv_mass = np.empty(0, np.float64)
        self.half = np.empty(0, np.float64)
        self.touching = np.empty(0, np.uint8)

        self.joint_a = np.empty(0, np.int64)
        self.joint_b = np.empty(0, np.int64)
        self.base_length = np.empty(0, np.float64)
        self.rest_length = np.empty(0, np.float64)
        self.frequency = np.empty(0, np.float64)
        self.damping_ratio = np.empty(0, np.float64)
        self.kspring = np.empty(0, np.float64)
        self.cdamp = np.empty(0, np.float64)
        self.min_length = np.empty(0, np.float64)
        self.max_length = np.empty(0, np.float64)

        # Static segments: columns x1, y1, x2, y2, friction.
        self.segments = np.empty((0, 5), np.float64)

    # -- construction -----------------------------------------------------

    @property
    def n_bodies(self):
        return self.pos.shape[0]

    @property
    def n_joints(self):
        return self.joint_a.shape[0]

    def add_body(self, position, half_side=0.5, density=2500.0, velocity=(0.0, 0.0)):
        """Add a fixed-rotation square body; returns its id."""
        half_side = float(half_side)
        if half_side <= 0.0:
            raise ValueError("half_side must be positive")
        mass = (2.0 * half_side) ** 2 * float(density)
        if mass <= 0.0:
            raise ValueError("body mass must be positive")
        self.pos = np.vstack([self.pos, np.asarray(position, np.float64)])
        self.vel = np.vstack([self.vel, np.asarray(velocity, np.float64)])
        self.force = np.vstack([self.force, np.zeros(2)])
        self.mass = np.append(self.mass, mass)
        self.inv_mass = np.append(self.inv_mass, 1.0 / mass)
        self.half = np.append(self.half, half_side)
        self.touching = np.append(self.touching, np.uint8(0))
        return self.n_bodies - 1

    def add_spring_joint(self, body_a, body_b, frequency=8.0, damping_ratio=0.3,
                         base_length=None, limit_ratio=(0.75, 1.25)):
        """Join two bodies with a soft distance joint; returns the joint id.

        Stiffness follows the frequency/damping convention
        k = m_eff (2 pi f)^2, c = 2 m_eff d (2 pi f) with the reduced mass
        m_eff = m_a m_b / (m_a + m_b).
        """
        if frequency <= 0.0:
            raise ValueError("frequency must be positive")
        if damping_ratio < 0.0:
            raise ValueError("damping_ratio must be non-negative")
        if base_length is None:
            base_length = float(np.linalg.norm(self.pos[body_b] - self.pos[body_a]))
        m_eff = (self.mass[body_a] * self.mass[body_b]) / (
            self.mass[body_a] + self.mass[body_b])
        omega = 2.0 * math.pi * frequency
        self.joint_a = np.append(self.joint_a, body_a)
        self.joint_b = np.append(self.joint_b, body_b)
        self.base_length = np.append(self.base_length, base_length)
        self.rest_length = np.append(self.rest_length, base_length)
        self.frequency = np.append(self.frequency, frequency)
        self.damping_ratio = np.append(self.damping_ratio, damping_ratio)
        self.kspring = np.append(self.kspring, m_eff * omega * omega)
        self.cdamp = np.append(self.cdamp, 2.0 * m_eff * damping_ratio * omega)
        self.min_length = np.append(self.min_length, limit_ratio[0] * base_length)
        self.max_length = np.append(self.max_length, limit_ratio[1] * base_length)
        return self.n_joints - 1

    def add_static_polyline(self, points, friction=DEFAULT_FRICTION):
        """Add static geometry as consecutive segments through points."""
        points = np.asarray(points, np.float64)
        if points.ndim != 2 or points.shape[0] < 2:
            raise ValueError("polyline needs at least two points")
        segs = np.empty((points.shape[0] - 1, 5), np.float64)
        segs[:, 0:2] = points[:-1]
        segs[:, 2:4] = points[1:]
        segs[:, 4] = friction
        self.segments = np.vstack([self.segments, segs])

    def add_static_segment(self, p1, p2, friction=DEFAULT_FRICTION):
        self.add_static_polyline([p1, p2], friction=friction)

    # -- runtime ----------------------------------------------------------

    def apply_force(self, body, fx, fy):
        self.force[body, 0] += fx
        self.force[body, 1] += fy

    def set_rest_length(self, joint, length):
        """Set the current rest length, clamped to the joint's hard limits."""
        length = min(max(length, self.min_length[joint]), self.max_length[joint])
        self.rest_length[joint] = length

    def joint_length(self, joint):
        a = self.joint_a[joint]
        b = self.joint_b[joint]
        return float(np.linalg.norm(self.pos[b] - self.pos[a]))

    def step(self):
        """Advance one dt; raises NumericalBlowupError on non-finite state."""
        ok, degenerate = _step_kernel(
            self.pos, self.vel, self.force, self.mass, self.inv_mass,
            self.half, self.touching,
            self.joint_a, self.joint_b, self.rest_length,
            self.kspring, self.cdamp, self.min_length, self.max_length,
            self.segments, self.gravity[0], self.gravity[1], self.dt,
            self.velocity_iterations, self.position_iterations,
            self.contact_slop, self.max_speed, self.linear_damping)
        self.step_counter += 1
        if degenerate:
            logger.debug("step %d: %d degenerate (zero-length) joints",
                         self.step_counter, degenerate)
        if not ok:
            raise NumericalBlowupError(
                f"non-finite body state after step {self.step_counter}")

    # -- snapshots --------------------------------------------------------

    def snapshot(self):
        """Serialize the full world state; round-trips exactly."""
        state = {
            "gravity": self.gravity,
            "dt": self.dt,
            "velocity_iterations": self.velocity_iterations,
            "position_iterations": self.position_iterations,
            "contact_slop": self.contact_slop,
            "max_speed": self.max_speed,
            "linear_damping": self.linear_damping,
            "step_counter": self.step_counter,
        }
        for name in ("pos", "vel", "force", "mass", "inv_mass", "half",
                     "touching", "joint_a", "joint_b", "base_length",
                     "rest_length", "frequency", "damping_ratio", "kspring",
                     "cdamp", "min_length", "max_length", "segments"):
            state[name] = getattr(self, name).copy()
        return pickle.dumps(state)

    @classmethod
    def restore(cls, blob):
        state = pickle.loads(blob)
        world = cls.__new__(cls)
        world.gravity = state["gravity"]
        world.dt = state["dt"]
        world.velocity_iterations = state["velocity_iterations"]
        world.position_iterations = state["position_iterations"]
        world.contact_slop = state["contact_slop"]
        world.max_speed = state["max_speed"]
        world.linear_damping = state["linear_damping"]
        world.step_counter = state["step_counter"]
        for name in ("pos", "vel", "force", "mass", "inv_mass", "half",
                     "touching", "joint_a", "joint_b", "base_length",
                     "rest_length", "frequency", "damping_ratio", "kspring",
                     "cdamp", "min_length", "max_length", "segments"):
            setattr(world, name, state[name])
        return world
