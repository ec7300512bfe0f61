"""Tests for maps, the geodesic oracle, sensors, the simulator and suites."""

import numpy as np
import pytest

from dmtf_nav.core.errors import DataError, EpisodeSetupError, MapGenerationError, ProtocolError
from dmtf_nav.env import (
    Action,
    AgentPose,
    EnvPool,
    GridMap,
    GridNavEnv,
    TemplateBank,
    check_split,
    distance_field,
    generate_map,
    generate_suites,
    geodesic_distance,
    minimal_action_count,
    oracle_first_actions,
    render_visual,
    synth_audio,
)
from dmtf_nav.env.sensors import binaural_gains
from dmtf_nav.env.suites import SuiteRequest, validate_reachability, write_suites


class TestMaps:
    def test_same_seed_same_map(self):
        a = generate_map(5, 10, 8, 0.3)
        b = generate_map(5, 10, 8, 0.3)
        np.testing.assert_array_equal(a.occupancy, b.occupancy)

    def test_border_is_walled(self):
        grid = generate_map(1, 8, 8, 0.2)
        assert grid.occupancy[0].all() and grid.occupancy[-1].all()
        assert grid.occupancy[:, 0].all() and grid.occupancy[:, -1].all()

    def test_density_out_of_range(self):
        with pytest.raises(MapGenerationError):
            generate_map(0, 8, 8, 0.9)

    def test_distance_field_on_empty_room(self):
        grid = generate_map(0, 6, 6, 0.0)
        field = distance_field(grid, (1, 1))
        assert field[1, 1] == 0
        assert field[4, 4] == 6
        assert field[0, 0] == -1


class TestOracle:
    def setup_method(self):
        self.grid = generate_map(0, 6, 6, 0.0)
        self.goal = (1, 1)

    def test_facing_the_goal_moves_forward(self):
        actions, remaining = oracle_first_actions(self.grid, AgentPose(1, 4, 0), self.goal)
        assert actions == frozenset({Action.MOVE_FORWARD})
        assert remaining == 2

    def test_goal_behind_allows_both_turns(self):
        actions, _ = oracle_first_actions(self.grid, AgentPose(1, 4, 2), self.goal)
        assert actions == frozenset({Action.TURN_LEFT, Action.TURN_RIGHT})

    def test_inside_success_region_only_stop(self):
        actions, remaining = oracle_first_actions(self.grid, AgentPose(1, 2, 1), self.goal)
        assert actions == frozenset({Action.STOP})
        assert remaining == 0

    def test_minimal_action_count_counts_stop(self):
        assert minimal_action_count(self.grid, AgentPose(1, 4, 0), self.goal) == 3
        assert minimal_action_count(self.grid, AgentPose(1, 4, 2), self.goal) == 5


class TestSensors:
    def test_visual_is_egocentric_image(self):
        grid = generate_map(0, 6, 6, 0.0)
        image = render_visual(grid, AgentPose(1, 4, 0), view_size=3, image_size=8)
        assert image.shape == (8, 8, 3)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_source_on_the_left_is_louder_on_the_left(self):
        left, right = binaural_gains(np.pi / 2)
        assert left == pytest.approx(1.0) and right == pytest.approx(0.0)
        left, right = binaural_gains(0.0)
        assert left == pytest.approx(right)

    def test_template_split_arithmetic(self):
        bank = TemplateBank.create(seed=0, count=100, num_bands=8, split_fraction=0.2)
        assert len(bank.manifest.heard_ids) == 80
        assert len(bank.manifest.unheard_ids) == 20


class TestSimulator:
    def test_oracle_walk_succeeds_on_shortest_path(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        obs = env.reset(room_spec)
        assert obs.visual.shape == (8, 8, 3)
        assert obs.audio.shape == (8, 8, 2)
        while not env.done:
            actions, _ = env.oracle_targets()
            env.step(min(actions))
        record = env.record()
        assert record.success == 1
        assert record.path_length == record.shortest == 2
        assert record.actions == record.oracle_actions == 3

    def test_early_stop_is_terminal_failure(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        env.reset(room_spec)
        result = env.step(Action.STOP)
        assert result.done and not result.info.success
        assert env.record().success == 0
        with pytest.raises(ProtocolError):
            env.step(Action.MOVE_FORWARD)

    def test_collision_keeps_pose(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        env.reset(room_spec.model_copy(update={"start": [1, 4, 3]}))
        result = env.step(Action.MOVE_FORWARD)
        assert result.info.collided
        assert env.pose == AgentPose(1, 4, 3)

    def test_reward_tracks_geodesic_progress(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        env.reset(room_spec)
        result = env.step(Action.MOVE_FORWARD)
        assert result.reward == pytest.approx(1.0 - env_config.step_penalty)

    def test_step_budget_truncates(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        env.reset(room_spec.model_copy(update={"max_steps": 2}))
        env.step(Action.TURN_LEFT)
        result = env.step(Action.TURN_LEFT)
        assert result.done and result.info.truncated

    def test_unknown_action_rejected(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        env.reset(room_spec)
        with pytest.raises(ProtocolError):
            env.step(7)

    def test_blocked_start_rejected(self, env_config, bank, room_spec):
        env = GridNavEnv(env_config, bank)
        with pytest.raises(EpisodeSetupError):
            env.reset(room_spec.model_copy(update={"start": [0, 0, 0]}))

    def test_observations_are_deterministic(self, env_config, bank, room_spec):
        a, b = GridNavEnv(env_config, bank), GridNavEnv(env_config, bank)
        np.testing.assert_array_equal(a.reset(room_spec).audio, b.reset(room_spec).audio)

    def test_pool_preserves_order_for_any_worker_count(self, env_config, bank, room_spec):
        specs = [
            room_spec.model_copy(update={"episode_id": f"room-{i}", "start": [1 + i % 3, 4, i % 4]})
            for i in range(6)
        ]

        def walk(env, spec):
            env.reset(spec)
            while not env.done:
                env.step(min(env.oracle_targets()[0]))
            return env.record()

        serial = EnvPool(env_config, bank, 1).run(walk, specs)
        threaded = EnvPool(env_config, bank, 3).run(walk, specs)
        assert [r.episode_id for r in threaded] == [s.episode_id for s in specs]
        assert serial == threaded


class TestSuites:
    REQUEST = SuiteRequest(seed=4, count=10, size=8, density=0.2, split_fraction=0.2, episodes=5, bands=8)

    def test_same_seed_same_suites(self):
        _, first = generate_suites(self.REQUEST)
        _, second = generate_suites(self.REQUEST)
        assert first == second

    def test_every_episode_is_reachable(self):
        _, suites = generate_suites(self.REQUEST)
        for suite in suites.values():
            assert validate_reachability(suite) == 5

    def test_suites_respect_template_split(self):
        manifest, suites = generate_suites(self.REQUEST)
        for suite in suites.values():
            check_split(suite, manifest)
        leaked = suites["test-unheard"].model_copy(
            update={"episodes": suites["train"].episodes}
        )
        with pytest.raises(ProtocolError):
            check_split(leaked, manifest)

    def test_no_unheard_templates_skips_unheard_suites(self):
        request = SuiteRequest(seed=0, count=2, size=6, density=0.0, split_fraction=0.0, episodes=2, bands=8)
        _, suites = generate_suites(request)
        assert set(suites) == {"train", "val-heard", "test-heard"}

    def test_refuses_to_overwrite_without_force(self, tmp_path):
        manifest, suites = generate_suites(self.REQUEST)
        write_suites(tmp_path, manifest, suites)
        with pytest.raises(DataError):
            write_suites(tmp_path, manifest, suites)
        write_suites(tmp_path, manifest, suites, force=True)


def rotate_clockwise(grid, pose):
    """The same scene turned 90° clockwise: cell (x, y) moves to (H-1-y, x)."""
    occupancy = np.ascontiguousarray(np.rot90(grid.occupancy, k=-1))
    rotated = GridMap(width=grid.height, height=grid.width, occupancy=occupancy, seed=grid.seed)
    return rotated, AgentPose(grid.height - 1 - pose.y, pose.x, (pose.heading + 1) % 4)


class TestSensorProperties:
    @pytest.mark.parametrize("seed", range(10))
    def test_view_is_invariant_to_rotating_map_and_heading(self, seed):
        grid = generate_map(seed, 9, 7, 0.3)
        rng = np.random.default_rng(seed)
        for x, y in grid.free_cells():
            pose = AgentPose(x, y, int(rng.integers(4)))
            expected = render_visual(grid, pose, view_size=5, image_size=10)
            rotated, turned = grid, pose
            for _ in range(4):
                rotated, turned = rotate_clockwise(rotated, turned)
                np.testing.assert_array_equal(render_visual(rotated, turned, view_size=5, image_size=10), expected)
            assert turned == pose

    def test_audio_fades_as_one_over_distance(self, bank):
        template = next(iter(bank))
        near = synth_audio(0, 0.3, template, frames=4, noise_scale=0.0)
        energies = []
        for d in range(25):
            spec = synth_audio(d, 0.3, template, frames=4, noise_scale=0.0)
            np.testing.assert_allclose(spec, near / (1.0 + d), rtol=1e-12)
            energies.append(float(np.sum(spec ** 2)))
        assert all(a > b for a, b in zip(energies, energies[1:]))

    def test_geodesic_changes_by_at_most_one_per_action(self, env_config):
        request = SuiteRequest(seed=2, count=4, size=9, density=0.25, split_fraction=0.5, episodes=8, bands=8)
        manifest, suites = generate_suites(request)
        env = GridNavEnv(env_config, TemplateBank(manifest))
        rng = np.random.default_rng(0)
        for spec in suites["train"].episodes:
            env.reset(spec)
            previous = geodesic_distance(env.grid, env.pose.cell, env.source)
            for _ in range(40):
                if env.done:
                    break
                result = env.step(int(rng.integers(3)))
                current = geodesic_distance(env.grid, env.pose.cell, env.source)
                assert current == result.info.geodesic_distance
                assert abs(current - previous) <= 1
                previous = current
