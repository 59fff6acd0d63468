"""Task environments (hilly terrain, cage), episode execution, fitness.

Episodes run at 60 Hz for up to 30 simulated seconds. Each step: observe,
update pressure (controller delta or ideal-gas law in the ablation), set
spring rest lengths from the springs controller, apply pressure forces,
advance the world. The escape task terminates early once every mass is
outside the cage. The hot loop is compiled as a single numba kernel; the
modular morphology/sensing/control functions implement the same arithmetic
and are used by the stepwise environment API.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import morphology as morph
from .gas import GAS_MASS_KG, GasModel
from .physics2d import World, _step_kernel
from .sensing import HISTORY_LEN, VELOCITY_CAP_M_S, observation_size

logger = logging.getLogger(__name__)

T_FINAL_S = 30.0
EPISODE_STEPS = 1800  # T_FINAL_S * 60 Hz

# World configuration for agent simulations. The near-zero gravity keeps
# gravitational loads comparable to the pascal-scale pressure forces the
# envelope can produce.
AGENT_GRAVITY_M_S2 = 0.00196
AGENT_LINEAR_DAMPING = 0.1
# High ground friction: under micro-gravity the normal impulses are tiny, so
# the tangential traction budget (mu * normal impulse) must not be the
# bottleneck for gait forces.
GROUND_FRICTION = 1.0

P_MIN_RATIO = 0.2
# Gas-law degeneracy floor: a ring of n non-overlapping unit-square masses
# cannot enclose a center polygon smaller than about half a square per mass.
MIN_GAS_AREA_PER_MASS_M2 = 0.5
WALL_THICKNESS_M = 1.0
AVG_BUMP_DISTANCE_M = 10.0
TERRAIN_EXTENT_M = 2000.0
WORST_FITNESS = -1.0e9

VALIDATION_DURATION_S = 120.0
VALIDATION_SPAWN_HEIGHT_M = 1.2

# Episode termination status codes.
STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_DEGENERATE = 2


@dataclass(frozen=True)
class MorphologyConfig:
    name: str
    n_mass: int
    radius: float
    gas_mass: float
    avg_bump_height: float


MORPHOLOGIES = {
    "small": MorphologyConfig("small", 10, 5.0, GAS_MASS_KG["small"], 1.0),
    "medium": MorphologyConfig("medium", 15, 7.5, GAS_MASS_KG["medium"], 2.0),
    "large": MorphologyConfig("large", 20, 10.0, GAS_MASS_KG["large"], 3.0),
}


@dataclass(frozen=True)
class TerrainSpec:
    seed: int
    avg_bump_height: float
    avg_bump_distance: float = AVG_BUMP_DISTANCE_M
    extent: float = TERRAIN_EXTENT_M
    pad_length: float = 12.0

    def __post_init__(self):
        if self.avg_bump_height < 0.0 or self.avg_bump_distance <= 0.0:
            raise ValueError("bump statistics must be positive")


@dataclass(frozen=True)
class CageSpec:
    roof_height: float
    wall_separation: float
    aperture_height: float
    wall_thickness: float = WALL_THICKNESS_M

    def __post_init__(self):
        if abs(self.aperture_height - self.roof_height / 3.0) > 1e-9:
            raise ValueError("aperture height must be one third of the roof")

    @classmethod
    def for_radius(cls, radius):
        roof = 2.0 * radius + 1.0
        return cls(roof_height=roof, wall_separation=3.0 * radius,
                   aperture_height=roof / 3.0)


@dataclass
class EpisodeResult:
    fitness: float
    elapsed: float
    solved: bool = False
    trajectory: np.ndarray | None = None  # rows: step, com_x, com_y, p, area
    positions: np.ndarray | None = None  # (steps, n_mass, 2) when recorded
    segments: np.ndarray | None = None  # static geometry of the episode


def generate_hilly_terrain(spec: TerrainSpec):
    """Vertex list of the terrain polyline, deterministic in the seed.

    A flat spawn pad sits centered at x = 0; triangular bumps continue in
    both directions with peak heights uniform in [0.5, 1.5] of the average
    height and peak spacing uniform in [0.5, 1.5] of the average distance;
    each bump is half as wide as the spacing that precedes it.
    """
    rng = np.random.default_rng(spec.seed)
    half_extent = spec.extent / 2.0

    def side(start):
        verts = []
        x = start
        while x < half_extent:
            spacing = rng.uniform(0.5, 1.5) * spec.avg_bump_distance
            height = rng.uniform(0.5, 1.5) * spec.avg_bump_height
            peak = x + spacing
            width = spacing / 2.0
            if height > 0.0:
                verts.append((peak - width / 2.0, 0.0))
                verts.append((peak, height))
                verts.append((peak + width / 2.0, 0.0))
            x = peak
        end = max(half_extent, verts[-1][0] if verts else x)
        verts.append((end, 0.0))
        return verts

    right = side(spec.pad_length / 2.0)
    left = side(spec.pad_length / 2.0)
    vertices = [(-x, y) for x, y in reversed(left)]
    vertices.append((-spec.pad_length / 2.0, 0.0))
    vertices.append((spec.pad_length / 2.0, 0.0))
    vertices.extend(right)
    return np.asarray(vertices, np.float64)


def build_cage(world: World, spec: CageSpec):
    """Add the cage: flat ground, two walls with bottom apertures, a roof."""
    inner = spec.wall_separation / 2.0
    outer = inner + spec.wall_thickness
    world.add_static_polyline([(-TERRAIN_EXTENT_M / 2.0, 0.0),
                               (TERRAIN_EXTENT_M / 2.0, 0.0)],
                              friction=GROUND_FRICTION)
    for sign in (1.0, -1.0):
        a, b = sign * inner, sign * outer
        world.add_static_polyline([
            (a, spec.aperture_height), (b, spec.aperture_height),
            (b, spec.roof_height), (a, spec.roof_height),
            (a, spec.aperture_height)], friction=GROUND_FRICTION)
    world.add_static_segment((-outer, spec.roof_height),
                             (outer, spec.roof_height),
                             friction=GROUND_FRICTION)


def escaped(psa, world, cage: CageSpec):
    """True iff every mass center is beyond the outer wall faces."""
    threshold = cage.wall_separation / 2.0 + cage.wall_thickness
    return bool(np.all(np.abs(world.pos[psa.mass_ids, 0]) >= threshold))


def locomotion_fitness(initial_com_x, final_com_x):
    return (final_com_x - initial_com_x) / T_FINAL_S


def escape_fitness(initial_com, final_com, elapsed):
    return float(np.hypot(final_com[0] - initial_com[0],
                          final_com[1] - initial_com[1])) / elapsed


@njit(cache=True)
def _observe_kernel(pos, vel, touching, pressure, p_max, pos_scale, vel_cap,
                    hist, hist_state, obs_out):
    """Push the current normalized frame and write the window mean."""
    n = pos.shape[0]
    dim = 3 * n + 3
    hist_len = hist.shape[0]
    count = hist_state[0]
    head = hist_state[1]
    cx = 0.0
    cy = 0.0
    for i in range(n):
        cx += pos[i, 0]
        cy += pos[i, 1]
    cx /= n
    cy /= n
    vx = 0.0
    vy = 0.0
    for i in range(n):
        vx += vel[i, 0]
        vy += vel[i, 1]
    vx /= n
    vy /= n
    for i in range(n):
        hist[head, i] = touching[i]
        rx = (pos[i, 0] - cx) / pos_scale + 0.5
        ry = (pos[i, 1] - cy) / pos_scale + 0.5
        hist[head, n + 2 * i] = min(max(rx, 0.0), 1.0)
        hist[head, n + 2 * i + 1] = min(max(ry, 0.0), 1.0)
    hist[head, 3 * n] = min(max(vx / (2.0 * vel_cap) + 0.5, 0.0), 1.0)
    hist[head, 3 * n + 1] = min(max(vy / (2.0 * vel_cap) + 0.5, 0.0), 1.0)
    hist[head, 3 * n + 2] = min(max(pressure / p_max, 0.0), 1.0)
    if count < hist_len:
        count += 1
    hist_state[0] = count
    hist_state[1] = (head + 1) % hist_len
    start = (head + 1 - count) % hist_len
    for k in range(dim):
        acc = 0.0
        for j in range(count):
            acc += hist[(start + j) % hist_len, k]
        obs_out[k] = acc / count
    return cx, cy


@njit(cache=True)
def _act_and_step_kernel(pos, vel, force, mass, inv_mass, half, touching,
                         ja, jb, rest, kspring, cdamp, min_len, max_len,
                         segs, gx, gy, dt, vel_iters, pos_iters, slop,
                         max_speed, lin_damp,
                         base_length, s, dp, use_gas_law, nrt, p_state):
    """Apply one control action and advance the world one step.

    p_state holds [pressure, p_min, p_max] and is updated in place. Returns
    a status code (0 ok, 1 numerical blow-up, 2 degenerate envelope).
    """
    n = pos.shape[0]
    if use_gas_law:
        area2 = 0.0
        for i in range(n):
            j = (i + 1) % n
            area2 += pos[i, 0] * pos[j, 1] - pos[j, 0] * pos[i, 1]
        # Signed area of the ring in construction (counterclockwise) order:
        # a fold that flips orientation means the envelope no longer bounds
        # a well-defined gas volume, so the episode is degenerate. The same
        # holds when the polygon area drops below what the n unit-square
        # masses on its boundary physically occupy (~0.5 m^2 each): bodies
        # do not collide with one another, so only this check stops the
        # envelope from being crushed into itself.
        area = area2 / 2.0
        if area <= MIN_GAS_AREA_PER_MASS_M2 * n:
            return STATUS_DEGENERATE
        p_state[0] = nrt / area
    else:
        p = p_state[0] + dp
        p_state[0] = min(max(p, p_state[1]), p_state[2])

    for i in range(n):
        if s[i] > 0.0:
            length = base_length - s[i] * (base_length - 0.75 * base_length)
        else:
            length = base_length - s[i] * (1.25 * base_length - base_length)
        rest[i] = min(max(length, min_len[i]), max_len[i])

    pressure = p_state[0]
    for i in range(n):
        j = (i + 1) % n
        ex = pos[j, 0] - pos[i, 0]
        ey = pos[j, 1] - pos[i, 1]
        length = math.sqrt(ex * ex + ey * ey)
        if length < 1e-12:
            continue
        fx = 0.5 * pressure * ey
        fy = -0.5 * pressure * ex
        force[i, 0] += fx
        force[i, 1] += fy
        force[j, 0] += fx
        force[j, 1] += fy

    ok, _ = _step_kernel(pos, vel, force, mass, inv_mass, half, touching,
                         ja, jb, rest, kspring, cdamp, min_len, max_len,
                         segs, gx, gy, dt, vel_iters, pos_iters, slop,
                         max_speed, lin_damp)
    if not ok:
        return STATUS_BLOWUP
    return STATUS_OK


@njit(cache=True)
def _run_kernel(pos, vel, force, mass, inv_mass, half, touching,
                ja, jb, rest, kspring, cdamp, min_len, max_len,
                segs, gx, gy, dt, vel_iters, pos_iters, slop, max_speed,
                lin_damp, base_length,
                hist, hist_state, obs, s_buf,
                w_p, b_p, w_s, b_s, pressure_enabled, validation_dp,
                nrt, p_state, pos_scale, vel_cap,
                n_steps, escape_threshold, traj, pos_traj, record_pos):
    """Closed-loop episode; returns (steps done, status, escaped flag)."""
    n = pos.shape[0]
    dim = obs.shape[0]
    n_cmd = w_s.shape[0]
    for k in range(n_steps):
        _observe_kernel(pos, vel, touching, p_state[0], p_state[2],
                        pos_scale, vel_cap, hist, hist_state, obs)
        dp = 0.0
        if validation_dp != 0.0:
            dp = validation_dp
            for i in range(n):
                s_buf[i] = 0.0
        else:
            if pressure_enabled:
                acc = b_p
                for j in range(dim):
                    acc += w_p[j] * obs[j]
                dp = acc
            for i in range(n_cmd):
                acc = b_s[i]
                for j in range(dim):
                    acc += w_s[i, j] * obs[j]
                s_buf[i] = math.tanh(acc)
        status = _act_and_step_kernel(
            pos, vel, force, mass, inv_mass, half, touching,
            ja, jb, rest, kspring, cdamp, min_len, max_len,
            segs, gx, gy, dt, vel_iters, pos_iters, slop, max_speed,
            lin_damp, base_length, s_buf, dp,
            (not pressure_enabled) and validation_dp == 0.0, nrt, p_state)
        if status != STATUS_OK:
            return k, status, False
        cx = 0.0
        cy = 0.0
        for i in range(n):
            cx += pos[i, 0]
            cy += pos[i, 1]
        cx /= n
        cy /= n
        area2 = 0.0
        for i in range(n):
            j = (i + 1) % n
            area2 += pos[i, 0] * pos[j, 1] - pos[j, 0] * pos[i, 1]
        traj[k, 0] = k
        traj[k, 1] = cx
        traj[k, 2] = cy
        traj[k, 3] = p_state[0]
        traj[k, 4] = abs(area2) / 2.0
        if record_pos:
            for i in range(n):
                pos_traj[k, i, 0] = pos[i, 0]
                pos_traj[k, i, 1] = pos[i, 1]
        if escape_threshold > 0.0:
            out = True
            for i in range(n):
                if abs(pos[i, 0]) < escape_threshold:
                    out = False
                    break
            if out:
                return k + 1, STATUS_OK, True
    return n_steps, STATUS_OK, False


def _build_episode(task, config: MorphologyConfig, seed,
                   validation=False, spawn_height=VALIDATION_SPAWN_HEIGHT_M):
    """World + agent for one episode; returns (world, psa, gas, cage)."""
    world = World(gravity=(0.0, -AGENT_GRAVITY_M_S2),
                  linear_damping=AGENT_LINEAR_DAMPING)
    gas = GasModel(config.gas_mass)
    p_max = gas.p_max_for(config.radius)
    cage = None
    if task == "locomotion":
        spec = TerrainSpec(seed=seed, avg_bump_height=config.avg_bump_height,
                           pad_length=2.0 * config.radius + 2.0)
        world.add_static_polyline(generate_hilly_terrain(spec),
                                  friction=GROUND_FRICTION)
    elif task == "escape":
        cage = CageSpec.for_radius(config.radius)
        build_cage(world, cage)
    elif task == "validate":
        world.add_static_polyline([(-TERRAIN_EXTENT_M / 2.0, 0.0),
                                   (TERRAIN_EXTENT_M / 2.0, 0.0)],
                                  friction=GROUND_FRICTION)
    else:
        raise ValueError(f"unknown task {task!r}")
    if validation:
        center = morph.spawn_center_above(config.radius, flattened=True,
                                          height=spawn_height)
        layout = morph.flattened_layout(config.n_mass, config.radius, center,
                                        spawn_height)
        pressure = 0.0
    else:
        center = morph.spawn_center_above(config.radius)
        layout = None
        pressure = p_max
    psa = morph.build_psa(world, config.n_mass, config.radius, center,
                          pressure=pressure, p_min=P_MIN_RATIO * p_max,
                          p_max=p_max, layout=layout)
    return world, psa, gas, cage


def _kernel_args(world: World, psa, gas: GasModel, controller_arrays,
                 validation_dp, p_state, n_steps, escape_threshold,
                 record_positions=False):
    n = psa.n_mass
    dim = observation_size(n)
    hist = np.zeros((HISTORY_LEN, dim))
    hist_state = np.zeros(2, np.int64)
    obs = np.zeros(dim)
    w_p, b_p, w_s, b_s, pressure_enabled = controller_arrays
    s_buf = np.zeros(max(w_s.shape[0], n))
    traj = np.zeros((n_steps, 5))
    pos_traj = np.zeros((n_steps if record_positions else 1, n, 2))
    args = (world.pos, world.vel, world.force, world.mass, world.inv_mass,
            world.half, world.touching,
            world.joint_a, world.joint_b, world.rest_length,
            world.kspring, world.cdamp, world.min_length, world.max_length,
            world.segments, world.gravity[0], world.gravity[1], world.dt,
            world.velocity_iterations, world.position_iterations,
            world.contact_slop, world.max_speed, world.linear_damping,
            float(psa.base_lengths[0]),
            hist, hist_state, obs, s_buf,
            w_p, b_p, w_s, b_s, pressure_enabled, validation_dp,
            gas.nrt, p_state, 2.0 * psa.radius, VELOCITY_CAP_M_S,
            n_steps, escape_threshold, traj, pos_traj,
            bool(record_positions))
    return args, traj, pos_traj


def _controller_arrays(genome, n_mass, pressure_enabled):
    from .control import decode_genome
    ctrl = decode_genome(genome, n_mass, pressure_enabled)
    dim = observation_size(n_mass)
    w_p = ctrl.w_p if ctrl.w_p is not None else np.zeros(dim)
    return (np.ascontiguousarray(w_p), float(ctrl.b_p),
            np.ascontiguousarray(ctrl.w_s), np.ascontiguousarray(ctrl.b_s),
            bool(pressure_enabled))


def run_episode(task, morphology, genome, seed, pressure_enabled=True,
                record_trajectory=False, record_positions=False):
    """Run one closed-loop episode; pure in (configs, genome, seed).

    `morphology` is a MorphologyConfig or one of its registry names. The
    returned fitness is the task measure, or a large negative sentinel when
    the simulation degenerates (non-finite state or collapsed envelope).
    """
    config = MORPHOLOGIES[morphology] if isinstance(morphology, str) else morphology
    world, psa, gas, cage = _build_episode(task, config, seed)
    controller = _controller_arrays(genome, config.n_mass, pressure_enabled)
    p_state = np.array([psa.pressure, psa.p_min, psa.p_max])
    threshold = (cage.wall_separation / 2.0 + cage.wall_thickness
                 if cage is not None else -1.0)
    initial_com = world.pos[psa.mass_ids].mean(axis=0)
    args, traj, pos_traj = _kernel_args(world, psa, gas, controller, 0.0,
                                        p_state, EPISODE_STEPS, threshold,
                                        record_positions)
    steps, status, solved = _run_kernel(*args)
    psa.pressure = float(p_state[0])
    elapsed = max(steps, 1) * world.dt
    trajectory = traj[:steps] if record_trajectory else None
    positions = pos_traj[:steps] if record_positions else None
    segments = world.segments.copy() if record_positions else None
    if status != STATUS_OK:
        reason = "non-finite state" if status == STATUS_BLOWUP else "degenerate envelope"
        logger.debug("episode aborted after %d steps: %s", steps, reason)
        return EpisodeResult(fitness=WORST_FITNESS, elapsed=elapsed,
                             solved=False, trajectory=trajectory,
                             positions=positions, segments=segments)
    final_com = world.pos[psa.mass_ids].mean(axis=0)
    if task == "escape":
        fitness = escape_fitness(initial_com, final_com, elapsed)
    else:
        fitness = locomotion_fitness(initial_com[0], final_com[0])
    if not math.isfinite(fitness):
        logger.warning("non-finite fitness after %d steps", steps)
        fitness = WORST_FITNESS
    return EpisodeResult(fitness=fitness, elapsed=elapsed, solved=bool(solved),
                         trajectory=trajectory, positions=positions,
                         segments=segments)


@dataclass(frozen=True)
class EpisodeEvaluator:
    """Picklable fitness function: genome -> episode fitness."""

    task: str
    morphology: str
    pressure_enabled: bool
    seed: int

    def __call__(self, genome):
        return run_episode(self.task, self.morphology, genome, self.seed,
                           self.pressure_enabled).fitness


def run_validation(morphology, duration_s=VALIDATION_DURATION_S,
                   spawn_height=VALIDATION_SPAWN_HEIGHT_M):
    """Fixed-controller inflation run on flat ground.

    Starts deflated at zero pressure; every step applies s = 0 and a
    pressure increment of p_max/100. Returns an array with columns
    t (step index), rho (area over the construction-circle area), and
    p_rel (pressure over p_max).
    """
    config = MORPHOLOGIES[morphology] if isinstance(morphology, str) else morphology
    world, psa, gas, cage = _build_episode("validate", config, seed=0,
                                           validation=True,
                                           spawn_height=spawn_height)
    n_steps = int(round(duration_s / world.dt))
    dim = observation_size(config.n_mass)
    controller = (np.zeros(dim), 0.0, np.zeros((config.n_mass + 1, dim)),
                  np.zeros(config.n_mass + 1), True)
    p_state = np.array([psa.pressure, 0.0, psa.p_max])
    args, traj, _ = _kernel_args(world, psa, gas, controller,
                                 psa.p_max / 100.0, p_state, n_steps, -1.0)
    steps, status, _ = _run_kernel(*args)
    if status != STATUS_OK:
        raise RuntimeError(f"validation run failed after {steps} steps")
    circle_area = math.pi * config.radius ** 2
    out = np.empty((steps, 3))
    out[:, 0] = traj[:steps, 0]
    out[:, 1] = traj[:steps, 4] / circle_area
    out[:, 2] = traj[:steps, 3] / psa.p_max
    return out
