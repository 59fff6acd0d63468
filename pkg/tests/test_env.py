import numpy as np
import pytest

from pressoft.env import Env
from pressoft import tasks
from pressoft.control import decode_genome, genome_size


def test_reset_deterministic():
    env = Env("locomotion", "small")
    a = env.reset(seed=3)
    b = Env("locomotion", "small").reset(seed=3)
    assert np.array_equal(a, b)


def test_observation_and_action_sizes():
    env = Env("locomotion", "small", pressure_enabled=True)
    obs = env.reset(0)
    assert obs.shape == (33,)
    assert env.action_size == 12
    env = Env("escape", "medium", pressure_enabled=False)
    assert env.reset(0).shape == (48,)
    assert env.action_size == 16


def test_step_before_reset_rejected():
    env = Env("locomotion", "small")
    with pytest.raises(RuntimeError):
        env.step(np.zeros(12))


def test_wrong_action_length_rejected():
    env = Env("locomotion", "small")
    env.reset(0)
    with pytest.raises(ValueError, match="12"):
        env.step(np.zeros(11))


def test_zero_action_runs_full_episode_and_done_is_final():
    env = Env("locomotion", "small")
    env.reset(0)
    action = np.zeros(env.action_size)
    done = False
    steps = 0
    while not done:
        _, _, done = env.step(action)
        steps += 1
    assert steps == 1800
    with pytest.raises(RuntimeError):
        env.step(action)


def test_rewards_integrate_to_episode_fitness():
    rng = np.random.default_rng(0)
    genome = rng.normal(0.0, 0.2, genome_size(10, True))
    env = Env("locomotion", "small")
    obs = env.reset(seed=1)
    start_x = env.world.pos[env.psa.mass_ids, 0].mean()
    ctrl = decode_genome(genome, 10, True)
    total = 0.0
    done = False
    while not done:
        s = ctrl.springs_control(obs)
        dp = ctrl.pressure_control(obs)
        obs, reward, done = env.step(np.concatenate([s, [dp]]))
        total += reward * (1.0 / 60.0)
    # Telescoping: summed per-step rewards equal the episode displacement.
    final_x = env.world.pos[env.psa.mass_ids, 0].mean()
    assert total / tasks.T_FINAL_S == pytest.approx(
        (final_x - start_x) / tasks.T_FINAL_S, abs=1e-9)


def test_null_policy_matches_run_episode_fitness():
    genome = np.zeros(genome_size(10, True))
    episode = tasks.run_episode("locomotion", "small", genome, seed=1)
    env = Env("locomotion", "small")
    env.reset(seed=1)
    action = np.zeros(env.action_size)
    total = 0.0
    done = False
    while not done:
        _, reward, done = env.step(action)
        total += reward * (1.0 / 60.0)
    assert total / tasks.T_FINAL_S == pytest.approx(episode.fitness, abs=1e-9)


def test_spring_actions_are_clamped():
    env = Env("locomotion", "small")
    env.reset(0)
    action = np.full(env.action_size, 100.0)
    env.step(action)  # must not blow past the actuation limits
    base = env.psa.base_lengths[0]
    rests = env.world.rest_length[env.psa.joint_ids]
    assert np.all(rests >= 0.75 * base - 1e-12)
    assert np.all(rests <= 1.25 * base + 1e-12)
    # s = 1 (after clamping) drives every joint to maximum contraction.
    assert np.allclose(rests, 0.75 * base)


def test_escape_env_done_when_outside():
    env = Env("escape", "small")
    env.reset(0)
    threshold = env._threshold
    env.world.pos[env.psa.mass_ids, 0] += threshold + 10.0
    _, _, done = env.step(np.zeros(env.action_size))
    assert done


def test_unknown_task_rejected():
    with pytest.raises(ValueError):
        Env("swim", "small")
