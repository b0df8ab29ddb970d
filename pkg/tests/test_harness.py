import csv
import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpelab.harness import (
    CUMULATIVE_COLUMNS,
    TRACE_COLUMNS,
    Config,
    ConfigError,
    LemmaConfig,
    RunResult,
    TraceFormatError,
    TraceRow,
    check_lemmas,
    parse_config,
    read_csv,
    run_experiment,
    summarize,
    sweep,
    write_csv,
)

SIX = "K=6 M=3 means=0.9,0.8,0.7,0.6,0.5,0.4"


def test_parse_example():
    cfg = parse_config(SIX + " T=1000000 seeds=50 algo=dpe")
    assert (cfg.K, cfg.M, cfg.T, cfg.algorithm) == (6, 3, 10**6, "dpe")
    assert cfg.seeds == list(range(50))
    assert cfg.checkpoints == [100, 1000, 10**4, 10**5, 10**6]
    assert cfg.tolerance == 1e-9


def test_parse_lines_and_json():
    text = "K=3\nM=1  # one player\nmeans=0.2,0.5,0.4\nhorizon=1e3\nseeds=4,9\n"
    cfg = parse_config(text)
    assert cfg.T == 1000 and cfg.seeds == [4, 9]
    js = parse_config('{"K": 3, "M": 2, "means": [0.2, 0.5, 0.4], "T": 50, "seeds": [3]}')
    assert js.seeds == [3] and js.means == [0.2, 0.5, 0.4]
    assert parse_config("K=3 M=2 means=0.2,0.5,0.4 T=50 seeds=[7]").seeds == [7]


@pytest.mark.parametrize(
    "text, key",
    [
        ("K=3 M=3 means=0.1,0.2,0.3 T=10", "M"),
        ("K=3 M=1 means=0.1,0.2 T=10", "means"),
        ("K=3 M=1 means=0.1,0.2,0.2 T=10", "means"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=0", "T"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=10 algo=ucb", "algorithm"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=10 checkpoints=5,3", "checkpoints"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=10 checkpoints=20", "checkpoints"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=10 colour=red", "colour"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=ten", "T"),
        ("K=3 M=1 T=10", "means"),
        ("K=3 M=1 means=0.1,0.2,0.3 T=10 truncation=5", "truncation"),
    ],
)
def test_parse_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key
    assert key in str(err.value)


def test_oracle_has_zero_regret():
    rows, summary, _ = run_experiment(parse_config(SIX + " T=5000 seeds=3 algo=oracle"))
    assert rows and all(r.cum_regret_zeroed == 0.0 and r.cum_regret_literal == 0.0 for r in rows)
    assert summary.at("cum_regret_zeroed", 5000) == 0.0


def test_dpe_runs_are_deterministic(tmp_path):
    cfg = parse_config(SIX + " T=20000 seeds=2 algo=dpe")
    a, _, _ = run_experiment(cfg)
    b, _, _ = run_experiment(cfg)
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("algo", ["dpe", "centralized", "random"])
def test_trace_invariants(algo):
    cfg = parse_config(SIX + f" T=20000 seeds=2 algo={algo} checkpoints=10,100,1000,5000,20000")
    rows, summary, results = run_experiment(cfg)
    for res in results:
        assert res.error is None
        ts = [r.t for r in res.rows]
        assert ts == cfg.checkpoints
        for col in CUMULATIVE_COLUMNS:
            vals = [getattr(r, col) for r in res.rows]
            assert all(b >= a for a, b in zip(vals, vals[1:])), col
    assert summary.lower_bound_constant == pytest.approx(8.284572653929994)


def test_dpe_run_bookkeeping():
    cfg = parse_config(SIX + " T=30000 seeds=[5]")
    _, _, (res,) = run_experiment(cfg)
    assert sorted(res.ranks) == [1, 2, 3]
    assert res.init_rounds == res.rows[-1].init_rounds > 0
    assert res.consistent_collisions == 0
    assert res.unexplained_bad_rounds == 0
    last = res.rows[-1]
    # each phase lasts (M-1)(M+K+1) = 20 rounds
    if not res.phase_active_at_end:
        assert last.comm_rounds == 20 * last.comm_phases
    assert last.set_changes >= last.comm_phases


def test_single_player_dpe():
    cfg = parse_config("K=3 M=1 means=0.3,0.8,0.5 T=20000 seeds=2")
    _, summary, results = run_experiment(cfg)
    assert all(r.error is None for r in results)
    assert summary.at("comm_rounds", 20000) == 0
    assert summary.at("cum_regret_zeroed", 20000) < 500


def test_coupled_draws_across_algorithms():
    # the oracle and a centralized run on the same seed see identical arm draws
    from dpelab.env import new_env

    a = new_env((0.9, 0.8, 0.7), 2, 3)
    b = new_env((0.9, 0.8, 0.7), 2, 3)
    for _ in range(2000):
        assert a.step([1, 2])[1].draws == b.step([3, 1])[1].draws


def _row(run_id, t, regret):
    return TraceRow(run_id, run_id, "dpe", 6, 3, t, regret, regret, 0, 0, 0, 0, 0)


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=12))
def test_summary_mean_within_range(values):
    cfg = Config(K=3, M=1, means=[0.1, 0.2, 0.3], T=10, seeds=list(range(len(values))),
                 checkpoints=[10])
    results = [RunResult(i, i, [_row(i, 10, v)]) for i, v in enumerate(values)]
    s = summarize(cfg, results)
    m = s.at("cum_regret_zeroed", 10)
    assert min(values) - 1e-9 <= m <= max(values) + 1e-9


def test_summary_skips_failed_runs():
    cfg = Config(K=3, M=1, means=[0.1, 0.2, 0.3], T=10, seeds=[0, 1], checkpoints=[10])
    bad = RunResult(1, 1, [_row(1, 10, 99.0)], error="t=10: broken")
    s = summarize(cfg, [RunResult(0, 0, [_row(0, 10, 1.0)]), bad])
    assert s.at("cum_regret_zeroed", 10) == 1.0
    assert s.errors == ["run 1: t=10: broken"]


def test_csv_round_trip(tmp_path):
    rows = [_row(0, 100, 1.25), _row(0, 1000, 0.1 + 0.2)]
    path = tmp_path / "t.csv"
    write_csv(rows, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == TRACE_COLUMNS
    assert read_csv(path) == rows


@pytest.mark.parametrize(
    "content, where",
    [
        ("", "row 1"),
        (",".join(TRACE_COLUMNS) + "\n", "row 2"),
        ("a,b\n1,2\n", "row 1"),
        (",".join(TRACE_COLUMNS) + "\n0,0,dpe,6,3,100,1.0,1.0,0,0,0,0,0\n0,0,dpe,6,3,x,1,1,0,0,0,0,0\n",
         "row 3"),
        (",".join(TRACE_COLUMNS) + "\n0,0,dpe,6\n", "row 2"),
    ],
)
def test_csv_errors_carry_row_number(tmp_path, content, where):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(TraceFormatError, match=where):
        read_csv(path)


def test_sweep_appends_horizons():
    cfg = parse_config(SIX + " T=1000 seeds=2 algo=centralized checkpoints=100")
    rows, summaries = sweep(cfg, [300, 1000])
    assert [s.checkpoints for s in summaries] == [[100, 300], [100, 1000]]
    assert sorted({r.run_id for r in rows}) == [0, 1, 2, 3]


def test_check_lemmas_small_grid():
    cfg = LemmaConfig(M_grid=[2, 5], truncation=10**4, c_grid=[1.0], delta_grid=[0.5, 10.0],
                      horizon=2000)
    report = check_lemmas(cfg)
    assert report["passed"]
    forced = [e for e in report["concentration"] if e["delta"] == 10.0][0]
    assert forced["empirical_sum"] == 0.0 and forced["passed"]
    assert all(e["total"] <= 15 for e in report["series_constant"])


def test_check_lemmas_rejects_short_truncation():
    with pytest.raises(ConfigError):
        check_lemmas(dataclasses.replace(LemmaConfig(), truncation=100))


def test_default_checkpoint_grid():
    assert parse_config(SIX + " T=50").checkpoints == [50]
    assert parse_config(SIX + " T=12345").checkpoints == [100, 1000, 10000, 12345]
    assert math.isclose(parse_config(SIX + " T=1e4").T, 10**4)
