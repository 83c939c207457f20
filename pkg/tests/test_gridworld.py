import math
from collections import Counter

import pytest

from safeprior.gridworld import (COLLISION_REWARD, DELTAS, DOWN, GOAL_REWARD, LEFT, RIGHT, STEP_REWARD, UP,
                                 AgentPose, CellKind, MapParseError, cell_center, load_map,
                                 parse_map, reset, shipped_maps, step,
                                 true_unsafe_actions, unsafe_mask, with_goal)
from safeprior.rng import RngStream


def quiet(text):
    """Parse a map with the noise switched off."""
    return parse_map("@noise 0\n" + text)


class TestParse:
    def test_single_goal(self):
        m = parse_map("G")
        assert (m.width, m.height) == (1, 1)
        assert m.cells == (CellKind.GOAL,)

    def test_two_by_two(self):
        m = parse_map(".#\nG.")
        assert m.kind(1, 0) == CellKind.OBSTACLE
        assert m.goal == (0, 1)

    def test_ragged(self):
        with pytest.raises(MapParseError) as err:
            parse_map("..\n.\nG.")
        assert err.value.line == 2

    def test_unknown_character(self):
        with pytest.raises(MapParseError) as err:
            parse_map("G.\n.x")
        assert (err.value.line, err.value.column) == (2, 2)

    def test_goal_required(self):
        with pytest.raises(MapParseError):
            parse_map("..\n..")
        assert parse_map("..", require_goal=False).width == 2

    def test_directives(self):
        m = parse_map("@goal a 1 0\n@common_reward 0.2\n@noise 0.1\nG.C")
        assert m.labels == {"a": (1, 0)}
        assert m.common_reward_value == 0.2 and m.noise == 0.1
        assert m.common_states == (2,)

    @pytest.mark.parametrize("line", ["@goal a 1", "@frob 1", "@noise x"])
    def test_bad_directive(self, line):
        with pytest.raises(MapParseError):
            parse_map(line + "\nG")

    def test_label_on_obstacle(self):
        with pytest.raises(MapParseError):
            parse_map("@goal a 1 0\nG#")

    def test_text_roundtrip(self):
        m = load_map("common_reward")
        again = parse_map(m.to_text())
        assert again.cells == m.cells and again.labels == m.labels
        assert again.common_reward_value == m.common_reward_value


class TestShippedMaps:
    def test_catalogue(self):
        assert set(shipped_maps()) >= {"original", "variant_a", "variant_b", "variant_c",
                                       "variant_d", "common_reward"}

    def test_original_size(self):
        m = load_map("original")
        assert (m.height, m.width) == (21, 24)
        assert len(m.cells) == 504

    @pytest.mark.parametrize("name", ["original", "variant_a", "variant_b", "variant_c",
                                      "variant_d", "common_reward"])
    def test_labels_and_connectivity(self, name):
        m = load_map(name)
        assert {"omega1", "omega2", "omega3", "omega4", "target"} <= set(m.labels)
        open_cells = {s for s, c in enumerate(m.cells) if c != CellKind.OBSTACLE}
        start = next(iter(open_cells))
        seen, todo = {start}, [start]
        while todo:
            x, y = m.xy(todo.pop())
            for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                t = (x + dx, y + dy)
                if m.in_bounds(*t) and m.state(*t) in open_cells and m.state(*t) not in seen:
                    seen.add(m.state(*t))
                    todo.append(m.state(*t))
        assert seen == open_cells

    def test_variants_differ_from_original(self):
        base = load_map("original").cells
        for v in "abcd":
            assert load_map(f"variant_{v}").cells != base

    def test_common_reward_map(self):
        m = load_map("common_reward")
        assert m.common_reward_value == 0.2
        assert len(m.common_states) == 1


class TestWithGoal:
    def test_label(self):
        m = with_goal(load_map("original"), "omega2")
        assert m.goal == load_map("original").labels["omega2"]

    def test_obstacle_rejected(self):
        with pytest.raises(ValueError):
            with_goal(parse_map("G#"), (1, 0))

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            with_goal(parse_map("G."), "nowhere")


class TestReset:
    def test_singleton(self):
        m = parse_map("G.#")
        rng = RngStream(0)
        assert all(reset(m, rng)[0] == 1 for _ in range(50))

    def test_two_cells_uniform(self):
        m = parse_map("..G")
        rng = RngStream(1)
        counts = Counter(reset(m, rng)[0] for _ in range(100_000))
        for s in (0, 1):
            assert abs(counts[s] / 100_000 - 0.5) < 0.01

    def test_pose_at_centre(self):
        s, pose = reset(parse_map(".G"), RngStream(0))
        assert pose == AgentPose(0.5, 0.5)

    def test_goal_only(self):
        with pytest.raises(ValueError):
            reset(parse_map("G"), RngStream(0))


class TestStep:
    def test_wall_bump(self):
        m = quiet(".#\nG.")
        pose = cell_center(m, 0)
        out = step(m, pose, RIGHT, RngStream(0))
        assert (out.next_state, out.reward, out.collided, out.terminal) == (0, -1.0, True, False)
        assert out.pose == pose

    def test_out_of_bounds_is_collision(self):
        m = quiet(".G")
        out = step(m, cell_center(m, 0), UP, RngStream(0))
        assert out.collided and out.reward == COLLISION_REWARD

    def test_goal(self):
        m = quiet(".G")
        out = step(m, cell_center(m, 0), RIGHT, RngStream(0))
        assert (out.next_state, out.reward, out.terminal) == (1, GOAL_REWARD, True)

    def test_free_move(self):
        m = quiet("..\nG.")
        out = step(m, cell_center(m, 0), RIGHT, RngStream(0))
        assert (out.next_state, out.reward, out.terminal) == (1, STEP_REWARD, False)

    def test_common_cell(self):
        m = parse_map("@noise 0\n@common_reward 0.2\n.CG")
        out = step(m, cell_center(m, 0), RIGHT, RngStream(0))
        assert out.reward == 0.2 and not out.terminal

    def test_invalid_action(self):
        with pytest.raises(IndexError):
            step(parse_map(".G"), AgentPose(0.5, 0.5), 4, RngStream(0))

    def test_noise_accumulates(self):
        m = load_map("original")
        rng = RngStream(2)
        s = m.state(5, 13)
        out = step(m, cell_center(m, s), RIGHT, rng)
        assert out.pose.x != 6.5 and abs(out.pose.x - 6.5) <= 0.2
        assert abs(out.pose.y - 13.5) <= 0.2

    def test_noise_never_skips_a_cell(self):
        m = with_goal(load_map("original"), "target")
        rng = RngStream(3)
        s, pose = reset(m, rng)
        rewards = set()
        for _ in range(200_000):
            a = rng.integers(4)
            intended = (math.floor(pose.x + DELTAS[a][0]), math.floor(pose.y + DELTAS[a][1]))
            out = step(m, pose, a, rng)
            rewards.add(out.reward)
            if out.collided:
                assert out.next_state == s and out.pose == pose
            else:
                x, y = m.xy(out.next_state)
                assert max(abs(x - intended[0]), abs(y - intended[1])) <= 1
            s, pose = out.next_state, out.pose
            if out.terminal:
                s, pose = reset(m, rng)
        assert rewards <= {COLLISION_REWARD, STEP_REWARD, GOAL_REWARD}


class TestTrueUnsafe:
    def test_enclosed_pocket(self):
        m = parse_map("###\n#.#\n###\nG..", require_goal=True)
        assert true_unsafe_actions(m, m.state(1, 1)) == {UP, RIGHT, DOWN, LEFT}

    def test_open_interior(self):
        m = parse_map("...\n...\n..G")
        assert true_unsafe_actions(m, m.state(1, 1)) == frozenset()

    def test_corner(self):
        m = parse_map("...\n...\n..G")
        assert true_unsafe_actions(m, 0) == {UP, LEFT}

    @pytest.mark.parametrize("name", ["original", "variant_d", "common_reward"])
    def test_agrees_with_noise_free_simulation(self, name):
        m = parse_map("@noise 0\n" + load_map(name).to_text())
        rng = RngStream(0)
        mask = unsafe_mask(m)
        for s in m.open_states:
            for a in range(4):
                assert step(m, cell_center(m, s), a, rng).collided == mask[s][a]
