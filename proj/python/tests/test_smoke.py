import csv
import json
import math

import numpy as np
import pytest

import dgrl


def test_quantize_snaps_each_segment_to_its_nearest_code():
    codes = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0]])
    book = dgrl.Codebook.from_codes(codes)
    cfg = dgrl.VqConfig()
    cfg.factors = 3
    cfg.codebook_size = 3
    z_e = np.array([0.9, 1.2, -0.8, 1.7, 0.1, -0.2])
    q = dgrl.quantize(z_e, book, cfg)
    assert list(q.factor_indices) == [1, 2, 0]
    np.testing.assert_array_equal(q.z_q, [1.0, 1.0, -1.0, 2.0, 0.0, 0.0])
    assert q.commitment == pytest.approx(cfg.beta / 3 * np.sum((z_e - q.z_q) ** 2), rel=1e-12)


def test_nearest_code_breaks_ties_toward_the_lowest_index():
    book = dgrl.Codebook.from_codes(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    index, dist = dgrl.nearest_code([0.0, 0.0], book)
    assert index == 0
    assert dist == pytest.approx(1.0)


def test_factor_match_fraction():
    assert dgrl.factor_match_fraction([1, 2, 3, 4], [1, 0, 3, 0]) == pytest.approx(0.5)


def test_invalid_factor_count_raises_config_error():
    cfg = dgrl.VqConfig()
    cfg.factors = 0
    with pytest.raises(dgrl.ConfigError):
        cfg.validate()


def test_goal_maze_episode_reaches_its_goal():
    maze = dgrl.build_maze("loop")
    train, test = dgrl.goal_split(maze, 4, 4)
    assert len(train) == 4
    assert not set(train) & set(test)
    env = dgrl.GoalMazeEnv(maze, horizon=100)
    state, goal = env.reset(train[0])
    assert state.shape == (80, 80, 3)
    assert goal.shape == (80, 80, 3)
    assert state.dtype == np.uint8
    small = dgrl.downsample(state, 16)
    assert small.shape == (16, 16, 3)
    assert 0.0 <= small.min() and small.max() <= 1.0

    rows = maze.splitlines()

    def distance_after(action):
        r, c = env.agent[0] + moves[action][0], env.agent[1] + moves[action][1]
        if not (0 <= r < len(rows) and 0 <= c < len(rows[0])) or rows[r][c] == "#":
            return 10**6
        return dgrl.shortest_path_length(maze, (r, c), train[0])

    moves = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}
    total = 0.0
    result = {"done": False}
    while not result["done"]:
        result = env.step(min(moves, key=distance_after))
        total += result["reward"]
    assert result["reached"]
    steps = env.steps
    assert total == pytest.approx(5.0 - (steps - 1))
    with pytest.raises(dgrl.UsageError):
        env.step(7)


def test_concentration_term_matches_its_closed_form():
    assert dgrl.concentration_term(100, 0.05, 4, 1.0) == pytest.approx(math.sqrt(8 * math.log(40) / 100))
    with pytest.raises(dgrl.UsageError):
        dgrl.concentration_term(10, 0.0, 4, 1.0)


def test_bound_check_on_a_piecewise_value():
    assert set(dgrl.value_models()) >= {"constant", "linear", "piecewise"}
    quantized = dgrl.check_bound("piecewise", "q", n_list=[10, 100], trials=40, expectation_samples=5000)
    assert [row["n"] for row in quantized] == [10, 100]
    assert all(row["max_abs_omega"] == 0.0 for row in quantized)
    identity = dgrl.check_bound("piecewise", "id", n_list=[10, 1000], trials=60, expectation_samples=5000)
    assert identity[1]["median_abs_omega"] < identity[0]["median_abs_omega"]
    assert all(row["holds_fraction"] > 0.8 for row in identity)


def test_config_parse_and_hash():
    text = "schema_version: 1\nexperiment:\n  kind: theorem_check\n  seeds: [0]\n"
    cfg = dgrl.parse_config(text)
    assert cfg.kind == "theorem_check"
    assert cfg.seeds == [0]
    assert len(cfg.hash()) == 16
    assert dgrl.parse_config(text, overrides=[("DGRL_THEORY_TRIALS", "7")]).hash() != cfg.hash()
    with pytest.raises(dgrl.ConfigError, match="vq.factors"):
        dgrl.parse_config(text + "vq:\n  factors: 5\n")


def test_run_experiment_writes_summary_and_manifest(tmp_path):
    text = (
        "schema_version: 1\n"
        "experiment:\n  kind: theorem_check\n  seeds: [0]\n"
        "theory:\n  n_list: [10]\n  trials: 10\n  expectation_samples: 1000\n  min_conditional_samples: 50\n"
    )
    out = dgrl.run_experiment(dgrl.parse_config(text), out=tmp_path / "run")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    with open(out / "seed_0" / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {"model", "sigma", "n", "holds_fraction"} <= set(rows[0])
