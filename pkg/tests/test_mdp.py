import math

import numpy as np
import pytest

from safeprior.mdp import (DiscountedParams, QTable, TabularModel, advantage, format_qtable,
                           greedy_action, load_qtable, parse_qtable, q_update, save_qtable,
                           value_iteration)

from oracles import bellman_q


def row_table(*rows):
    return QTable(np.array(rows, dtype=float))


class TestQTable:
    def test_zeros(self):
        q = QTable.zeros(3, 4)
        assert q.state_count == 3 and q.action_count == 4
        assert not q.values.any()

    @pytest.mark.parametrize("bad", [[[np.nan, 0.0]], [[np.inf, 0.0]]])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            QTable(np.array(bad))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            QTable(np.zeros(4))

    def test_index_checks(self):
        q = QTable.zeros(2, 2)
        with pytest.raises(IndexError):
            greedy_action(q, 2)
        with pytest.raises(IndexError):
            advantage(q, 0, 5)

    def test_copy_is_independent(self):
        q = row_table([1.0, 2.0])
        c = q.copy()
        c.values[0, 0] = 9.0
        assert q.values[0, 0] == 1.0


class TestGreedyAction:
    @pytest.mark.parametrize("row,expected", [
        ([0, 0, 0, 0], 0),
        ([1, 3, 2, 0], 1),
        ([-1, -1, -0.5, -0.5], 2),
    ])
    def test_examples(self, row, expected):
        assert greedy_action(row_table(row), 0) == expected


class TestAdvantage:
    def test_argmax_is_zero(self):
        q = row_table([0.3, 0.9, -0.2])
        assert advantage(q, 0, greedy_action(q, 0)) == 0.0

    def test_example(self):
        assert advantage(row_table([2.0, 1.0]), 0, 1) == -1.0

    def test_all_equal(self):
        q = row_table([-0.5, -0.5])
        assert advantage(q, 0, 0) == advantage(q, 0, 1) == 0.0


class TestQUpdate:
    def test_alpha_zero_keeps_value(self):
        q = row_table([0.4, 0.1], [1.0, 2.0])
        assert q_update(q, 0, 0, 5.0, 1, False, DiscountedParams(0.0, 0.9)) == 0.4

    def test_full_overwrite(self):
        q = row_table([0.4, 0.1], [1.0, 2.0])
        assert q_update(q, 0, 1, 0.7, 1, False, DiscountedParams(1.0, 0.0)) == pytest.approx(0.7)

    def test_example(self):
        q = QTable.zeros(2, 2)
        assert q_update(q, 0, 0, 1.0, 1, False, DiscountedParams(0.05, 0.95)) == pytest.approx(0.05)

    def test_terminal_ignores_bootstrap(self):
        q = row_table([0.0, 0.0], [10.0, 10.0])
        assert q_update(q, 0, 0, 1.0, 1, True, DiscountedParams(1.0, 0.9)) == 1.0

    def test_rejects_nan_reward(self):
        with pytest.raises(ValueError):
            q_update(QTable.zeros(1, 1), 0, 0, math.nan, 0, False, DiscountedParams())

    @pytest.mark.parametrize("alpha,gamma", [(-0.1, 0.5), (1.5, 0.5), (0.5, 1.2)])
    def test_param_ranges(self, alpha, gamma):
        with pytest.raises(ValueError):
            DiscountedParams(alpha, gamma)


def chain_model(rewards, terminal_last=True):
    """Deterministic corridor: action 0 stays, action 1 moves right."""
    n = len(rewards) + 1
    T = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    for s in range(n):
        T[s, 0, s] = 1.0
        nxt = min(s + 1, n - 1)
        T[s, 1, nxt] = 1.0
        if s < n - 1:
            R[s, 1, nxt] = rewards[s]
    term = np.zeros(n, dtype=bool)
    term[-1] = terminal_last
    return TabularModel(T, R, term)


class TestValueIteration:
    def test_single_state_zero(self):
        m = TabularModel(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), np.zeros(1, dtype=bool))
        assert value_iteration(m, 0.9).values[0, 0] == 0.0

    def test_two_state_chain(self):
        q = value_iteration(chain_model([1.0]), 0.5)
        assert q.values[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_corridor(self):
        # start -> middle (reward 0) -> goal (reward 1), terminal goal
        q = value_iteration(chain_model([0.0, 1.0]), 0.9)
        assert q.values[0, 1] == pytest.approx(0.9, abs=1e-9)

    def test_gamma_one_needs_terminal(self):
        with pytest.raises(ValueError):
            value_iteration(chain_model([1.0], terminal_last=False), 1.0)

    def test_residual_below_tol(self):
        m = chain_model([0.2, -0.3, 1.0])
        q = value_iteration(m, 0.95, tol=1e-10)
        assert np.abs(m.backup(q.values, 0.95) - q.values).max() < 1e-10

    def test_matches_loop_oracle_on_random_mdp(self):
        rng = np.random.default_rng(3)
        S, A = 6, 3
        T = rng.random((S, A, S))
        T /= T.sum(axis=2, keepdims=True)
        R = rng.uniform(-1, 1, (S, A, S))
        term = np.zeros(S, dtype=bool)
        term[-1] = True
        q = value_iteration(TabularModel(T, R, term), 0.9, tol=1e-12)
        trans = [[[(T[s, a, s2], s2, R[s, a, s2]) for s2 in range(S)] for a in range(A)]
                 for s in range(S)]
        ref = bellman_q(trans, R, term, 0.9)
        np.testing.assert_allclose(q.values, ref, atol=1e-9)

    def test_q_learning_converges_to_oracle(self):
        # deterministic 5-state corridor with persistent uniform exploration
        m = chain_model([-0.1, -0.1, -0.1, 1.0])
        ref = value_iteration(m, 0.9).values
        q = QTable.zeros(5, 2)
        rng = np.random.default_rng(0)
        p = DiscountedParams(0.5, 0.9)
        for _ in range(20000):
            s = int(rng.integers(4))
            a = int(rng.integers(2))
            s2 = int(np.argmax(m.transitions[s, a]))
            q_update(q, s, a, m.rewards[s, a, s2], s2, bool(m.terminal[s2]), p)
        np.testing.assert_allclose(q.values, ref, atol=1e-3)


class TestPersistence:
    def test_roundtrip_exact(self, tmp_path):
        q = QTable(np.array([[0.1, -1 / 3], [1e-300, 2.5e10]]))
        save_qtable(q, tmp_path / "q.txt")
        assert load_qtable(tmp_path / "q.txt") == q

    def test_header(self):
        assert format_qtable(QTable.zeros(2, 3)).splitlines()[0] == "qtable 2 3"

    def test_hex_floats(self):
        q = parse_qtable("qtable 1 2\n0x1.8p+0 -0x1p-1\n")
        assert q.values.tolist() == [[1.5, -0.5]]

    @pytest.mark.parametrize("text", ["", "table 1 1\n0\n", "qtable 2 1\n0\n", "qtable 1 2\n0\n"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_qtable(text)
