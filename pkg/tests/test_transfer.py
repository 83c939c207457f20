import numpy as np
import pytest

from safeprior.gridworld import load_map
from safeprior.learner import TrainConfig
from safeprior.mdp import QTable
from safeprior.prior import PriorModel, save_prior
from safeprior.transfer import TransferSpec, initial_prior, run_transfer


def test_spec_validation():
    with pytest.raises(ValueError):
        TransferSpec("variant_a", "warm")
    with pytest.raises(ValueError):
        TransferSpec("variant_a", "from_source")
    with pytest.raises(ValueError):
        TransferSpec("variant_a", "scratch", seeds=())


def test_dimension_mismatch(tmp_path):
    small = QTable.zeros(4, 4)
    save_prior(PriorModel.fresh([small, small.copy()]), tmp_path / "p.qtable")
    spec = TransferSpec("variant_a", "from_source", tmp_path / "p.qtable")
    with pytest.raises(ValueError):
        initial_prior(spec, load_map("variant_a"))


def test_missing_prior(tmp_path):
    spec = TransferSpec("variant_a", "from_source", tmp_path / "none.qtable")
    with pytest.raises(FileNotFoundError):
        initial_prior(spec, load_map("variant_a"))


def test_scratch_and_from_source_share_transitions(tmp_path):
    env = load_map("original")
    rng = np.random.default_rng(0)
    srcs = [QTable(rng.uniform(-1, 1, (env.state_count, 4))) for _ in range(4)]
    warm = PriorModel.fresh(srcs)
    warm.q_p.values[:] = rng.uniform(-0.1, 0.1, warm.q_p.values.shape)
    save_prior(warm, tmp_path / "w.qtable")
    train = TrainConfig(episodes=6, horizon=40)
    out = {}
    for mode in ("from_source", "scratch"):
        spec = TransferSpec("original", mode, tmp_path / "w.qtable", train=train, seeds=(0, 1))
        out[mode] = run_transfer(spec, sources=srcs)
    a, b = out["from_source"], out["scratch"]
    assert [log.steps for log in a.logs] == [log.steps for log in b.logs]
    assert a.logs[0].prior_td != b.logs[0].prior_td
    assert a.first_window(3) > 0 and a.last_window(3) > 0
