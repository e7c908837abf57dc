import csv
import json

import numpy as np
import pytest

from phaseless_sr import experiment as ex
from phaseless_sr.localization import time_error
from phaseless_sr.signal import ImpulseSignal, fourier_synthesize, min_separation


def small_fig1(**kw):
    base = dict(trials=2, separations=(8 / 32,), sizes=(8, 12), seed=3)
    base.update(kw)
    return ex.ExperimentConfig(**base)


def small_fig2(**kw):
    base = dict(trials=2, sizes=(16,), ks=(1, 2), seed=5, n=12)
    base.update(kw)
    return ex.ExperimentConfig(**base)


def test_fig1_default_grid_shape():
    cfg = ex.fig1_defaults(ex.ExperimentConfig())
    assert len(cfg.separations) == 11 and len(cfg.sizes) == 29
    np.testing.assert_allclose(cfg.separations, np.arange(1, 12) / 32)
    assert cfg.sizes == tuple(range(2, 31))
    assert cfg.trials == 50 and cfg.threshold == 1e-3
    assert set(cfg.methods) == {ex.STANDARD_ANM, ex.PHASELESS_ANM}


def test_fig2_default_grid():
    cfg = ex.fig2_defaults(ex.ExperimentConfig())
    assert cfg.separation == pytest.approx(4 / 32)
    assert set(cfg.methods) == {ex.PHASELESS_ANM, ex.PHASELIFT_ANM}


def test_fig1_replay_is_identical():
    cfg = small_fig1(trials=1)
    a, b = ex.run_fig1(cfg), ex.run_fig1(cfg)
    assert a.signature() == b.signature()
    assert [c.row()["successes"] for c in a.cells] == [c.row()["successes"] for c in b.cells]


def test_fig1_cells_and_seeds():
    cfg = small_fig1()
    grid = ex.run_fig1(cfg)
    assert len(grid.cells) == 2 * 2
    for r in grid.records:
        trial = (r.seed - cfg.seed) - r.cell * cfg.trials
        assert 0 <= trial < cfg.trials
        assert r.success == (r.time_error < cfg.threshold)
    for c in grid.cells:
        assert c.successes <= c.trials == cfg.trials
    # both methods see the same instance in every trial
    by_key = {}
    for r in grid.records:
        by_key.setdefault((r.cell, r.seed), []).append(json.dumps(r.diagnostics["truth"]))
    assert all(len(set(v)) == 1 and len(v) == 2 for v in by_key.values())
    assert grid.cell(ex.PHASELESS_ANM, 8 / 32, 12).probability == 1.0


def test_trial_record_replays_from_seed():
    cfg = small_fig1(trials=1)
    rec = ex.run_fig1(cfg).records[0]
    truth = ex.draw_instance(cfg.k, rec.delta_t, rec.seed, rec.m_or_q, guard=True)
    res = ex.recover_once(truth, rec.method, ex.MASKS, rec.m_or_q, tol=cfg.tol)
    assert time_error(res.signal, truth) == rec.time_error


def test_fig2_pairs_trials():
    grid = ex.run_fig2(small_fig2())
    assert len(grid.cells) == 2 * 2
    pairs = {}
    for r in grid.records:
        pairs.setdefault((r.cell, r.seed), {})[r.method] = r
    for pair in pairs.values():
        a, b = pair[ex.PHASELESS_ANM], pair[ex.PHASELIFT_ANM]
        assert a.diagnostics["truth"] == b.diagnostics["truth"]
        assert a.diagnostics["q"] == b.diagnostics["q"] == a.m_or_q
    rows = ex.paired_summary(grid)
    assert len(rows) == 2 and all(0 <= r[ex.PHASELIFT_ANM] <= 1 for r in rows)


def test_fig2_shares_measurement_sets():
    # same seed -> same Gaussian vectors for every method
    truth = ex.draw_instance(2, 0.25, 9, 12)
    a = ex.recover_once(truth, ex.PHASELESS_ANM, ex.RANDOM, 12, 40, seed=9)
    b = ex.recover_once(truth, ex.PHASELIFT_ANM, ex.RANDOM, 12, 40, seed=9)
    assert a.ok and b.ok
    np.testing.assert_allclose(a.signal.times, b.signal.times, atol=1e-5)


def test_guard_redraws_small_coefficients(monkeypatch):
    monkeypatch.setattr(ex, "NONZERO_GUARD", 0.2)
    redrawn = 0
    for seed in range(20):
        sig = ex.draw_instance(2, 0.25, seed, 16, guard=True)
        assert np.abs(fourier_synthesize(sig, 16)).min() >= 0.2
        assert min_separation(sig) == pytest.approx(0.25)
        redrawn += not np.array_equal(sig.times, ex.draw_instance(2, 0.25, seed, 16).times)
    assert redrawn > 0


def test_guard_gives_up(monkeypatch):
    monkeypatch.setattr(ex, "NONZERO_GUARD", 100.0)
    with pytest.raises(RuntimeError):
        ex.draw_instance(2, 0.25, 0, 8, guard=True)


def test_q_completion_agrees_with_phaseless():
    truth = ex.draw_instance(2, 8 / 32, 11, 32, guard=True)
    a = ex.recover_once(truth, ex.PHASELESS_ANM, ex.MASKS, 32)
    b = ex.recover_once(truth, ex.Q_COMPLETION, ex.MASKS, 32)
    assert a.ok and b.ok
    np.testing.assert_allclose(a.x_hat, b.x_hat, atol=1e-4 * np.abs(b.x_hat).max())
    assert time_error(a.signal, truth) < 1e-3 and time_error(b.signal, truth) < 1e-3


def test_failed_extraction_counts_as_failure():
    truth = ex.draw_instance(3, 0.2, 0, 16)
    res = ex.recover_once(truth, ex.PHASELIFT_ANM, ex.RANDOM, 16, 8, seed=0)
    assert not res.ok and res.signal.k == 0 and res.reason


def test_solver_status_failure_counts_as_failure():
    truth = ex.draw_instance(2, 0.25, 0, 16)
    res = ex.recover_once(truth, ex.PHASELESS_ANM, ex.MASKS, 16, max_iters=10)
    assert not res.ok and "max_iters" in res.reason


@pytest.mark.parametrize("kw", [dict(trials=0), dict(methods=("nope",)), dict(n=1), dict(tol=0.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ex.ExperimentConfig(**kw).validate()


def test_figure_specific_validation():
    with pytest.raises(ValueError):
        ex.run_fig1(small_fig1(separations=(0.5,)))
    with pytest.raises(ValueError):
        ex.run_fig1(small_fig1(methods=(ex.PHASELIFT_ANM,)))
    with pytest.raises(ValueError):
        ex.run_fig2(small_fig2(methods=(ex.STANDARD_ANM,)))
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_mapping({"bogus": 1})


def test_unknown_method_or_family():
    sig = ImpulseSignal([0.1], [1])
    with pytest.raises(ValueError):
        ex.recover_once(sig, "magic")
    with pytest.raises(ValueError):
        ex.recover_once(sig, ex.PHASELESS_ANM, "other", 8)
    with pytest.raises(ValueError):
        ex.recover_once(sig, ex.PHASELESS_ANM, ex.RANDOM, 8)


def test_outputs(tmp_path):
    grid = ex.run_fig1(small_fig1(trials=1))
    grid.write_csv(tmp_path / "g.csv")
    grid.write_jsonl(tmp_path / "g.jsonl")
    with open(tmp_path / "g.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(ex.CSV_COLUMNS)
    assert len(rows) == len(grid.cells)
    lines = (tmp_path / "g.jsonl").read_text().splitlines()
    assert len(lines) == len(grid.records)
    rec = json.loads(lines[0])
    assert {"seed", "success", "time_error", "distances", "diagnostics"} <= set(rec)
    assert all("status" in s for s in ex.iter_solver_records(grid.records))


def test_worker_pool_matches_serial():
    cfg = small_fig1(trials=1)
    serial = ex.run_fig1(cfg)
    pooled = ex.run_fig1(ex.ExperimentConfig(**{**cfg.__dict__, "workers": 2}))
    assert serial.signature() == pooled.signature()


def test_k10_preset_is_feasible():
    cfg = ex.fig1_defaults(ex.ExperimentConfig.from_mapping(ex.K10_PRESET))
    assert cfg.k == 10
    assert all(cfg.k * dt < 1 for dt in cfg.separations)
