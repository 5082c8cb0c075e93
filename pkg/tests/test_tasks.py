"""Curriculum, goal sampling, reward and terminal-rule contracts."""

import numpy as np
import pytest

from snakecpg.robot import Observation, PhysicsParams
from snakecpg.tasks import (TABLE_CURRICULUM, CurriculumLevel, EpisodeConfig,
                            Outcome, RANDOMIZATION_RANGES, RewardConfig,
                            episode_status, randomize_domain, reward,
                            sample_goal, smoke_curriculum, validate_curriculum)


def _obs(rho=2.0, theta=0.0, v_g=0.0, speed=0.0, d_g=0.0):
    return Observation(rho_g=rho, rho_dot=0.0, theta_g=theta, theta_dot=0.0,
                       kappa=np.zeros(4), v_g=v_g, d_g=d_g, speed=speed)


class TestCurriculum:
    def test_stock_table_shape(self):
        assert len(TABLE_CURRICULUM) == 12
        first, last = TABLE_CURRICULUM[0], TABLE_CURRICULUM[-1]
        assert first.rho_range == (1.2, 1.5) and first.radius == 0.5
        assert first.angle_range_deg == (-10, 10)
        assert last.rho_range == (0.8, 1.5) and last.radius == 0.05
        assert last.angle_range_deg == (-80, 80)

    def test_stock_table_monotone(self):
        validate_curriculum(TABLE_CURRICULUM)

    def test_smoke_curriculum_monotone(self):
        validate_curriculum(smoke_curriculum())

    def test_violations_detected(self):
        grow_r = [CurriculumLevel(1, (1.0, 1.5), (-10, 10), 0.3),
                  CurriculumLevel(2, (1.0, 1.5), (-10, 10), 0.4)]
        with pytest.raises(ValueError, match="radius"):
            validate_curriculum(grow_r)
        shrink_angle = [CurriculumLevel(1, (1.0, 1.5), (-20, 20), 0.3),
                        CurriculumLevel(2, (1.0, 1.5), (-10, 10), 0.3)]
        with pytest.raises(ValueError, match="angle"):
            validate_curriculum(shrink_angle)

    def test_goal_samples_respect_fan(self, rng):
        level = TABLE_CURRICULUM[4]  # 1.2-1.5 m, +/-30 deg, r = 0.2
        head, heading = np.array([0.3, -0.2]), 0.7
        for _ in range(10_000):
            g = sample_goal(level, head, heading, rng)
            d = g.position - head
            dist = np.hypot(*d)
            bearing = np.arctan2(d[1], d[0]) - heading
            assert 1.2 <= dist <= 1.5
            assert abs(bearing) <= np.radians(30) + 1e-12
            assert g.radius == 0.2


class TestReward:
    def test_stationary_outside_rings_is_zero(self):
        cfg = RewardConfig()
        assert reward(_obs(rho=2.0, v_g=0.0, speed=0.0), [0.5, 0.4], cfg) == 0.0

    def test_straight_approach_inside_ring(self):
        cfg = RewardConfig(c_v=1.0, c_g=0.5)
        obs = _obs(rho=0.3, theta=0.0, v_g=0.2, speed=0.2)
        expected = 1.0 * 0.2 + 0.5 * (0.2 / 0.3) + 0.5 * (1.0 / 0.5)
        assert reward(obs, [0.5], cfg) == pytest.approx(expected)

    def test_perpendicular_motion_outside_rings(self):
        cfg = RewardConfig()
        obs = _obs(rho=2.0, theta=np.pi / 2, v_g=0.0, speed=0.2)
        assert reward(obs, [0.5], cfg) == 0.0

    def test_ring_sum_monotone_in_depth(self):
        cfg = RewardConfig()
        radii = [0.5, 0.4, 0.3]
        vals = [reward(_obs(rho=r, theta=0.0, v_g=0.1, speed=0.1), radii, cfg)
                for r in (0.45, 0.35, 0.25)]
        assert vals[0] < vals[1] < vals[2]

    def test_singularity_guard(self):
        cfg = RewardConfig()
        val = reward(_obs(rho=1e-12, v_g=0.1, speed=0.1), [], cfg)
        assert np.isfinite(val)


class TestEpisodeStatus:
    def test_success_inside_radius(self):
        assert episode_status([0.2], [0.1], [0.1], 0.5) is Outcome.SUCCESS

    def test_missed_goal_after_sixty_negative(self):
        n = 61
        out = episode_status([1.0] * n, [-0.01] * n, [0.1] * n, 0.2)
        assert out is Outcome.MISSED_GOAL
        assert episode_status([1.0] * 59, [-0.01] * 59, [0.1] * 59, 0.2) is None

    def test_starvation_window(self):
        n = 60
        out = episode_status([1.0] * n, [0.01] * n, [0.001] * n, 0.2)
        assert out is Outcome.STARVED

    def test_interrupted_runs_reset_counters(self):
        v_g = [-0.01] * 59 + [0.01] + [-0.01] * 59
        out = episode_status([1.0] * 119, v_g, [0.1] * 119, 0.2)
        assert out is None

    def test_timeout(self):
        cfg = EpisodeConfig(max_steps=100)
        out = episode_status([1.0] * 100, [0.01] * 100, [0.1] * 100, 0.2, cfg)
        assert out is Outcome.TIMEOUT


class TestRandomization:
    def test_draws_within_ranges(self, rng):
        for _ in range(10_000):
            ph = randomize_domain(rng)
            for name, (lo, hi) in RANDOMIZATION_RANGES.items():
                assert lo <= getattr(ph, name) <= hi

    def test_seeded_sequences_identical(self):
        a = [randomize_domain(np.random.default_rng(5)).to_dict() for _ in range(3)]
        b = [randomize_domain(np.random.default_rng(5)).to_dict() for _ in range(3)]
        assert a == b

    def test_disabled_gives_midpoints(self):
        ph = randomize_domain(enabled=False)
        for name, (lo, hi) in RANDOMIZATION_RANGES.items():
            assert getattr(ph, name) == pytest.approx(0.5 * (lo + hi))

    def test_non_randomized_fields_come_from_base(self, rng):
        base = PhysicsParams(actuator_lag=0.33, bend_gain=0.5)
        ph = randomize_domain(rng, base=base)
        assert ph.actuator_lag == 0.33 and ph.bend_gain == 0.5
