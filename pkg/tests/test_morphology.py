import math

import numpy as np
import pytest

from pressoft import morphology as morph
from pressoft.physics2d import World


def make_world():
    return World(gravity=(0.0, 0.0))


def test_ring_layout_n4_positions_and_base_length():
    world = make_world()
    psa = morph.build_psa(world, 4, 1.0)
    expected = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
    assert np.allclose(world.pos[psa.mass_ids], expected, atol=1e-12)
    assert psa.base_lengths[0] == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_large_ring_counts_and_base_length():
    world = make_world()
    psa = morph.build_psa(world, 20, 10.0)
    assert len(psa.mass_ids) == 20 and len(psa.joint_ids) == 20
    assert psa.base_lengths[0] == pytest.approx(3.1286893008046173, rel=1e-12)
    assert psa.base_lengths[0] == pytest.approx(3.1287, abs=1e-4)
    # Joint i connects mass i and mass i+1 (mod n).
    for i in range(20):
        j = psa.joint_ids[i]
        assert world.joint_a[j] == psa.mass_ids[i]
        assert world.joint_b[j] == psa.mass_ids[(i + 1) % 20]
    assert np.all(world.mass[psa.mass_ids] == 2500.0)


def test_degenerate_ring_rejected():
    with pytest.raises(ValueError):
        morph.build_psa(make_world(), 2, 1.0)
    with pytest.raises(ValueError):
        morph.build_psa(make_world(), 10, 0.0)


def test_update_pressure_clamps():
    world = make_world()
    p_max = 10.0
    psa = morph.build_psa(world, 4, 1.0, pressure=0.3 * p_max,
                          p_min=0.2 * p_max, p_max=p_max)
    assert psa.update_pressure(-0.2 * p_max) == pytest.approx(0.2 * p_max)
    assert psa.update_pressure(100.0 * p_max) == pytest.approx(p_max)
    psa.pressure = 0.5 * p_max
    assert psa.update_pressure(0.0) == pytest.approx(0.5 * p_max)


def test_envelope_area_regular_polygon_closed_form():
    world = make_world()
    psa = morph.build_psa(world, 20, 10.0)
    area = morph.envelope_area(psa, world)
    assert area == pytest.approx(309.0169943749474, rel=1e-9)
    assert area / (math.pi * 100.0) == pytest.approx(0.9836, abs=1e-4)


def _random_simple_polygon(rng):
    # Star-shaped polygons around the origin are always simple.
    n = rng.integers(3, 41)
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n))
    radii = rng.uniform(0.5, 10.0, n)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def test_pressure_forces_sum_to_zero_on_random_polygons():
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        points = _random_simple_polygon(rng)
        p = rng.uniform(1e-9, 100.0)
        forces = morph.pressure_forces(points, p)
        perimeter = np.sum(np.hypot(*(np.roll(points, -1, 0) - points).T))
        assert np.linalg.norm(forces.sum(axis=0)) <= 1e-9 * p * perimeter


def test_pressure_forces_point_outward_for_ccw_ring():
    points = morph.ring_layout(8, 2.0)
    forces = morph.pressure_forces(points, 5.0)
    # Each vertex force is radially outward by symmetry.
    for point, force in zip(points, forces):
        radial = point / np.linalg.norm(point)
        magnitude = np.linalg.norm(force)
        assert magnitude > 0.0
        assert np.dot(force / magnitude, radial) == pytest.approx(1.0, abs=1e-9)


def test_pressure_force_magnitude_single_edge():
    # A unit square: each edge of length 1 contributes l*p/2 per endpoint.
    points = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    forces = morph.pressure_forces(points, 2.0)
    # Corner force: two half-edge shares along -y and -x etc.; magnitude
    # sqrt(2) * (l p / 2).
    assert np.allclose(np.linalg.norm(forces, axis=1),
                       math.sqrt(2.0) * 1.0, atol=1e-12)


def test_zero_length_edges_are_skipped():
    points = np.array([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
    forces = morph.pressure_forces(points, 3.0)
    assert np.all(np.isfinite(forces))


def test_apply_pressure_forces_accumulates_into_world():
    world = make_world()
    psa = morph.build_psa(world, 6, 3.0, pressure=7.0)
    forces = morph.apply_pressure_forces(psa, world)
    assert np.allclose(world.force[psa.mass_ids], forces)


def test_flattened_layout_zero_strain_and_small_area():
    for n, r in ((10, 5.0), (15, 7.5), (20, 10.0), (7, 4.0), (12, 6.0)):
        base = 2.0 * r * math.sin(math.pi / n)
        points = morph.flattened_layout(n, r, (3.0, 4.0))
        edges = np.roll(points, -1, axis=0) - points
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        assert np.allclose(lengths, base, atol=1e-9)
        rho = morph.polygon_area(points) / (math.pi * r * r)
        assert rho < 0.3
        assert points[:, 0].mean() == pytest.approx(3.0, abs=1e-9)


def test_flattened_layout_rejects_bad_inputs():
    with pytest.raises(ValueError):
        morph.flattened_layout(3, 5.0)
    with pytest.raises(ValueError):
        morph.flattened_layout(40, 5.0, height=1.2)  # chord shorter than height


def test_spawn_center_above():
    center = morph.spawn_center_above(5.0)
    assert center[1] == pytest.approx(5.0 + 0.5 + morph.SPAWN_CLEARANCE_M)
    flat = morph.spawn_center_above(5.0, flattened=True, height=1.2)
    assert flat[1] == pytest.approx(0.6 + 0.5 + morph.SPAWN_CLEARANCE_M)


def test_center_of_mass_and_velocity():
    world = make_world()
    psa = morph.build_psa(world, 5, 2.0, center=(10.0, 20.0))
    assert np.allclose(morph.center_of_mass(psa, world), (10.0, 20.0),
                       atol=1e-12)
    world.vel[psa.mass_ids] = (1.0, -2.0)
    assert np.allclose(morph.com_velocity(psa, world), (1.0, -2.0))
