import csv
import io
import json
from pathlib import Path

import pytest

from swsts import cli
from swsts.lab import (CSV_HEADER, ExperimentConfig, ExperimentError, fit_power_law,
                       make_setup, run_experiment, rows_to_csv, summarize, survival_experiment)

PROTOCOLS = Path(__file__).resolve().parent.parent / "protocols"


def test_summarize():
    assert summarize([]) == (None, None, None)
    assert summarize([4.0]) == (4.0, 0.0, 0.0)
    m, v, se = summarize([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and v == pytest.approx(5 / 3) and se == pytest.approx((5 / 12) ** 0.5)


def test_fit_recovers_quadratic():
    # exact means; small sizes carry a visible lower-order term
    fit = fit_power_law([(n, (n - 1) ** 2) for n in (16, 24, 32, 48, 64)])
    assert 1.8 <= fit.exponent <= 2.1
    assert fit_power_law([(n, (n - 1) ** 2) for n in range(4, 17)]).exponent > 2.1
    assert fit.ci[0] <= fit.exponent <= fit.ci[1]
    exact = fit_power_law([(n, 3 * n ** 2) for n in (2, 4, 8, 16)])
    assert exact.exponent == pytest.approx(2) and exact.stderr == pytest.approx(0, abs=1e-9)


def test_fit_flat_and_errors():
    assert fit_power_law([(n, 7.0) for n in (3, 5, 9)]).exponent == pytest.approx(0, abs=1e-12)
    with pytest.raises(ExperimentError):
        fit_power_law([(3, 1.0), (4, 2.0)])
    with pytest.raises(ExperimentError):
        fit_power_law([(3, 1.0), (4, 0.0), (5, 2.0)])
    with pytest.raises(ExperimentError):
        fit_power_law([(3, 1.0), (3, 2.0), (3, 3.0)])


def test_config_validation():
    for bad in (dict(sizes=[]), dict(trials=0), dict(cap=0)):
        kw = dict(protocol="leader_election", sizes=[3], trials=5, cap=10, seed=0)
        kw.update(bad)
        with pytest.raises(ExperimentError):
            run_experiment(ExperimentConfig(**kw))
    with pytest.raises(ExperimentError):
        make_setup("no_such_protocol", {}, 3)


def test_rows_and_report_consistent(tmp_path):
    cfg = ExperimentConfig("leader_election", [3, 4, 5], 60, 10 ** 5, 11,
                           raw_path=str(tmp_path / "r.csv"), summary_path=str(tmp_path / "s.json"))
    report, rows = run_experiment(cfg)
    assert [r[0] for r in rows] == list(range(180))
    for s in report.sizes:
        mine = [r for r in rows if r[2] == s.n]
        assert sum(s.outcomes.values()) == s.trials == len(mine)
        assert s.mean == pytest.approx(sum(r[3] for r in mine) / len(mine))
        assert s.oracle_states == s.n
    assert report.fit is not None
    text = (tmp_path / "r.csv").read_text()
    assert next(csv.reader(io.StringIO(text))) == CSV_HEADER
    assert json.loads((tmp_path / "s.json").read_text())["seed"] == 11


def test_rerun_is_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        cfg = ExperimentConfig("doctor", [4, 5], 40, 10 ** 6, 3, raw_path=str(tmp_path / f"{i}.csv"))
        run_experiment(cfg)
        outs.append((tmp_path / f"{i}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_workers_do_not_change_rows():
    base = ExperimentConfig("leader_election", [4], 30, 10 ** 5, 2)
    _, one = run_experiment(base)
    base.workers = 3
    _, many = run_experiment(base)
    assert rows_to_csv(one) == rows_to_csv(many)


def test_cap_one_gives_no_fit():
    report, rows = run_experiment(ExperimentConfig("leader_election", [4, 5, 6], 10, 1, 0))
    assert all(r[4] == "Capped" for r in rows)
    assert report.fit is None and report.fit_error
    assert all(s.mean is None for s in report.sizes)


def test_protocol_file_with_word():
    s = make_setup(str(PROTOCOLS / "racy_vote.proto"), {"word": "ab"}, 5)
    assert s.init.states == ("X0", "X1", "X0", "X1", "X0")
    with pytest.raises(ExperimentError):
        make_setup(str(PROTOCOLS / "racy_vote.proto"), {"word": "z"}, 3)


def test_survival_small():
    with pytest.raises(ExperimentError):
        survival_experiment(0)
    with pytest.raises(ExperimentError):
        survival_experiment(5, backend="abacus")
    # threshold 2 counts every run as surviving: truncation can only raise the estimate
    rep = survival_experiment(200, threshold=2, backend="python")
    assert rep.never == 1.0 and rep.truncated_oracle == 1.0 >= rep.oracle


def test_survival_backends_agree():
    py = survival_experiment(2000, threshold=200, seed=5, backend="python")
    nb = survival_experiment(2000, threshold=200, seed=5, backend="numba")
    for r in (py, nb):
        assert r.produced + r.escaped + r.other == r.trials
        assert abs(r.never - r.truncated_oracle) < 0.04
    assert abs(py.never - nb.never) < 0.05


def test_cli_run_and_errors(tmp_path, capsys):
    assert cli.main(["run", "leader_election", "--n", "4", "--trials", "20",
                     "--out", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["sizes"][0]["n"] == 4
    assert (tmp_path / "trials.csv").exists() and (tmp_path / "run.json").exists()
    assert cli.main(["run", "nope", "--n", "4"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["command"] == "run"


def test_cli_reach_and_xsim(tmp_path, capsys):
    assert cli.main(["reach", "doctor", "--n", "5", "--query", "hitting"]) == 0
    assert json.loads(capsys.readouterr().out)["expected_steps"] == pytest.approx(170)
    assert cli.main(["xsim", str(PROTOCOLS / "leader_election.proto"), "--target", "matching",
                     "--n", "4", "--trials", "300", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert any(p.suffix == ".proto" for p in tmp_path.iterdir())
