import io

import numpy as np
import pytest

from bayescs.core import BettingConfig
from bayescs.lucb import (
    LucbConfig,
    ReplaySource,
    lucb_init,
    lucb_run,
    lucb_step,
    make_arm,
    read_replay_csv,
    simulated_arms,
    write_trace,
)
from bayescs.oracle import TrueLaw
from bayescs.predictives import EmpiricalPredictor

CFG = BettingConfig(grid_size=100)


def _replay_arms(columns, config=LucbConfig()):
    return [
        make_arm(f"a{i}", ReplaySource(col), EmpiricalPredictor(), CFG, config, len(columns))
        for i, col in enumerate(columns)
    ]


def _sim(ps, seed, config=LucbConfig()):
    laws = [TrueLaw.bernoulli(p) for p in ps]
    return simulated_arms(laws, seed, lambda i: EmpiricalPredictor(), CFG, config)


class TestInit:
    def test_four_arms(self):
        state = lucb_init(_sim([0.9, 0.6, 0.3, 0.1], 0), LucbConfig())
        assert state.t == 4 and [a.pulls for a in state.arms] == [1, 1, 1, 1]

    def test_two_arms(self):
        assert lucb_init(_sim([0.9, 0.1], 0), LucbConfig()).t == 2

    def test_one_arm(self):
        with pytest.raises(ValueError):
            lucb_init(_sim([0.9], 0), LucbConfig())

    def test_m_too_large(self):
        with pytest.raises(ValueError):
            lucb_init(_sim([0.9, 0.1], 0), LucbConfig(m=2))


class TestStep:
    def test_mechanics(self):
        arms = _replay_arms([[0.9] * 50, [0.1] * 50])
        state = lucb_init(arms, LucbConfig())
        assert state.J == (0,) and state.h == 0 and state.l == 1
        lucb_step(state)
        assert [a.pulls for a in state.arms] == [2, 2]

    def test_only_contender_and_challenger_pulled(self):
        state = lucb_init(_sim([0.9, 0.6, 0.3, 0.1], 3), LucbConfig())
        while not state.stopped:
            before = [a.pulls for a in state.arms]
            h, l = state.h, state.l
            lucb_step(state)
            if state.truncated:
                break
            diff = [a.pulls - b for a, b in zip(state.arms, before)]
            assert diff == [int(i in (h, l)) for i in range(4)]

    def test_ties_prefer_lower_index(self):
        arms = _replay_arms([[0.5] * 5, [0.5] * 5, [0.5] * 5])
        state = lucb_init(arms, LucbConfig())
        assert state.J == (0,)
        assert state.l == 1

    def test_step_after_stop(self):
        arms = _replay_arms([[1.0] * 5, [0.0] * 5], LucbConfig(epsilon=1.5))
        state = lucb_init(arms, LucbConfig(epsilon=1.5))
        assert state.stopped
        with pytest.raises(RuntimeError):
            lucb_step(state)


class TestRun:
    def test_bounds_monotone_and_stop_rule(self):
        res = lucb_run(_sim([0.9, 0.6, 0.3, 0.1], 5), LucbConfig())
        assert not res.truncated
        per_arm = np.array([[b for b in bounds] for _, _, _, bounds in res.trace])
        assert np.all(np.diff(per_arm[:, :, 0], axis=0) >= 0)
        assert np.all(np.diff(per_arm[:, :, 1], axis=0) <= 0)
        st = res.state
        assert st.arms[st.h].lower > st.arms[st.l].upper - st.config.epsilon

    def test_two_arm_selection_rate(self):
        picks = [lucb_run(_sim([0.9, 0.1], seed), LucbConfig()).selected == (0,) for seed in range(200)]
        assert np.mean(picks) >= 0.95

    def test_identical_arms_terminate(self):
        res = lucb_run(_sim([0.5, 0.5], 1), LucbConfig(epsilon=0.5))
        assert not res.truncated and res.total_pulls < 100_000

    def test_symmetry_top_m(self):
        # m = K - 1 on reversed means keeps the same arms out as m = 1 picks in
        low = lucb_run(_sim([0.1, 0.4, 0.9], 2), LucbConfig(m=2))
        assert set(low.selected) == {1, 2}

    def test_truncation_flag(self):
        res = lucb_run(_sim([0.5, 0.5], 1), LucbConfig(epsilon=0.0, max_pulls=50))
        assert res.truncated and res.reason == "max_pulls reached"
        assert res.total_pulls <= 50

    def test_replay_exhaustion(self):
        res = lucb_run(_replay_arms([[0.6, 0.5, 0.7], [0.4, 0.5, 0.3]]), LucbConfig())
        assert res.truncated and res.reason == "replay exhausted"

    def test_union_bound_alpha(self):
        arms = _replay_arms([[0.5], [0.5]], LucbConfig(union_bound=True))
        assert arms[0].cs.config.alpha == pytest.approx(0.05)


class TestFiles:
    def test_replay_csv(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("x,y\n0.1,0.2\n0.3,\n")
        names, cols = read_replay_csv(p)
        assert names == ["x", "y"] and cols == [[0.1, 0.3], [0.2]]

    def test_replay_bad_value(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("x,y\n0.1,0.2\n0.3,1.7\n")
        with pytest.raises(ValueError, match=":3"):
            read_replay_csv(p)

    def test_missing(self, tmp_path):
        with pytest.raises(OSError, match="nope.csv"):
            read_replay_csv(tmp_path / "nope.csv")

    def test_trace(self):
        res = lucb_run(_sim([0.9, 0.1], 0), LucbConfig())
        buf = io.StringIO()
        write_trace(res, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,h,l,L_arm0,U_arm0,L_arm1,U_arm1"
        assert len(lines) == len(res.trace) + 1
