import math

import numpy as np
import pytest

from safeprior.explore import ExploreConfig
from safeprior.gridworld import load_map, parse_map, unsafe_mask, with_goal
from safeprior.learner import (CSV_HEADER, MetricsLog, SourceConfig, TrainConfig, episode_return,
                               greedy_success_rate, learn_prior_offpolicy, train_source, train_task)
from safeprior.mdp import QTable
from safeprior.prior import PriorModel


class TestEpisodeReturn:
    def test_single(self):
        assert episode_return([1.0], 0.95) == 1.0

    def test_two(self):
        assert episode_return([-0.1, 1.0], 0.95) == pytest.approx(0.85)

    def test_zeros(self):
        assert episode_return([0.0] * 5, 0.9) == 0.0


SMALL = parse_map(".....\n.#.#.\n....G")


class TestTrainTask:
    def test_zero_episodes(self):
        q, log, _ = train_task(SMALL, TrainConfig(episodes=0))
        assert len(log) == 0 and not q.values.any()

    def test_prior_required(self):
        with pytest.raises(ValueError):
            train_task(SMALL, TrainConfig(episodes=1, prior_enabled=True))

    def test_parallel_needs_model(self):
        with pytest.raises(ValueError):
            train_task(SMALL, TrainConfig(episodes=1, prior_learn_parallel=True),
                       prior=QTable.zeros(15, 4))

    def test_deterministic_replay(self):
        cfg = TrainConfig(episodes=30, horizon=50)
        a = train_task(SMALL, cfg, rng=11)
        b = train_task(SMALL, cfg, rng=11)
        assert a[0] == b[0] and a[1].to_csv() == b[1].to_csv()

    def test_returns_bounded(self):
        cfg = TrainConfig(episodes=40, horizon=60)
        _, log, _ = train_task(SMALL, cfg, rng=2)
        for r, n in zip(log.returns, log.steps):
            assert -60 <= r <= 1 + 60 * 0.1
            assert 1 <= n <= 60

    def test_parallel_prior_counts_transitions(self):
        srcs = [QTable(np.random.default_rng(i).uniform(-1, 1, (15, 4))) for i in range(3)]
        prior = PriorModel.fresh(srcs)
        cfg = TrainConfig(episodes=20, horizon=40, prior_learn_parallel=True)
        _, log, prior = train_task(SMALL, cfg, prior=prior, rng=1)
        assert log.prior_updates == log.env_steps == prior.updates
        assert all(math.isfinite(x) for x in log.prior_td)

    def test_learns_small_map(self):
        cfg = TrainConfig(episodes=600, horizon=100, explore=ExploreConfig(epsilon_decay=0.99))
        q, _, _ = train_task(SMALL, cfg, rng=0)
        assert greedy_success_rate(SMALL, q, 100, rng=0) == 1.0

    def test_biased_run_collides_less(self):
        env = with_goal(load_map("original"), "target")
        bad = np.zeros((env.state_count, 4))
        bad[np.array(unsafe_mask(env))] = -1.0  # oracle prior
        cfg = TrainConfig(episodes=30)
        _, base, _ = train_task(env, cfg, rng=5)
        _, biased, _ = train_task(env, TrainConfig(episodes=30, prior_enabled=True),
                                  prior=QTable(bad), rng=5)
        assert biased.cumulative_collisions() < base.cumulative_collisions()


class TestOffPolicy:
    def test_needs_two_sources(self):
        with pytest.raises(ValueError):
            learn_prior_offpolicy(SMALL, [QTable.zeros(15, 4)], TrainConfig(episodes=1))

    def test_transition_count(self):
        srcs = [QTable(np.random.default_rng(i).uniform(-1, 1, (15, 4))) for i in range(2)]
        prior, log = learn_prior_offpolicy(SMALL, srcs, TrainConfig(episodes=25, horizon=30), rng=4)
        assert prior.updates == log.prior_updates == log.env_steps

    def test_greedy_behavior(self):
        srcs = [QTable(np.random.default_rng(i).uniform(-1, 1, (15, 4))) for i in range(2)]
        task = QTable(np.random.default_rng(7).uniform(-1, 1, (15, 4)))
        _, log = learn_prior_offpolicy(SMALL, srcs, TrainConfig(episodes=5, horizon=30), rng=4,
                                       behavior=task)
        assert log.epsilons[0] == 1.0 and log.epsilons[-1] < 1.0

    def test_unknown_behavior(self):
        srcs = [QTable.zeros(15, 4)] * 2
        with pytest.raises(ValueError):
            learn_prior_offpolicy(SMALL, srcs, TrainConfig(episodes=1), behavior="greedy")


class TestMetricsLog:
    def test_csv_roundtrip(self, tmp_path):
        log = MetricsLog()
        log.add(-0.1234567890123, 3, 17, 0.995)
        log.add(0.5, 0, 2, 0.99, 0.0625)
        log.save(tmp_path / "m.csv")
        text = (tmp_path / "m.csv").read_text()
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        back = MetricsLog.load(tmp_path / "m.csv")
        assert back.returns == log.returns and back.collisions == log.collisions
        assert math.isnan(back.prior_td[0]) and back.prior_td[1] == 0.0625

    def test_bad_header(self):
        with pytest.raises(ValueError):
            MetricsLog.from_csv("a,b\n")

    def test_cumulative(self):
        log = MetricsLog()
        for c in (1, 2, 3):
            log.add(0.0, c, 1, 1.0)
        assert log.cumulative_collisions(2) == 3 and log.cumulative_collisions() == 6


def test_source_training_converges_on_small_map():
    cfg = SourceConfig(chunk=300, max_episodes=3000, horizon=100,
                       explore=ExploreConfig(epsilon_decay=0.99, epsilon_min=0.1, mode="none"))
    q, log, ok = train_source(SMALL, cfg, rng=0)
    assert ok and len(log) % 300 == 0
