import json
import math

import numpy as np
import pytest

from rmpiscn.data import Dataset, apply_normalization, fit_normalization
from rmpiscn.linalg import penrose_violation
from rmpiscn.metrics import rmse
from rmpiscn.trainers import (
    TRACE_HEADER,
    SCNModel,
    Status,
    TrainerConfig,
    fit_rvfl,
    get_trainer,
    predict,
    train_irvfl,
    train_rmpi_scn,
    train_rvfl,
    train_scn1,
    train_scn3,
)
from rmpiscn.candidates import hidden_output

from conftest import db1_split

INCREMENTAL = [train_rmpi_scn, train_scn3, train_scn1, train_irvfl]
FAST = TrainerConfig(L_max=25, T_max=40, patience=0)


def zero_target():
    X = np.linspace(0, 1, 30)[:, None]
    ds = Dataset(X, np.zeros((30, 1)))
    return apply_normalization(ds, fit_normalization(ds))


class TestConfig:
    def test_defaults_validate(self):
        cfg = TrainerConfig().validate()
        assert cfg.Lambda[0] == 0.5 and cfg.r_grid[-1] == 0.99999

    @pytest.mark.parametrize("kw, msg", [
        ({"Lambda": (1, 0.5)}, "strictly increasing"),
        ({"Lambda": ()}, "non-empty"),
        ({"r": 1.0}, "r must be"),
        ({"r_grid": (0.99, 0.9)}, "r_grid must be"),
        ({"alpha": 0}, "alpha"),
        ({"L_max": 0}, "L_max"),
        ({"activation": "relu"}, "unknown activation"),
        ({"refresh_interval": 0}, "refresh_interval"),
    ])
    def test_invalid(self, kw, msg):
        with pytest.raises(ValueError, match=msg):
            TrainerConfig(**kw).validate()

    def test_dict_round_trip(self):
        cfg = TrainerConfig(L_max=7, Lambda=(1, 2))
        assert TrainerConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError, match="unknown trainer config keys"):
            TrainerConfig.from_dict({"Lmax": 3})

    def test_invalid_config_rejected_by_trainer(self):
        with pytest.raises(ValueError):
            train_rmpi_scn(zero_target(), None, TrainerConfig(T_max=0))


@pytest.mark.parametrize("trainer", [train_rmpi_scn, train_scn3, train_irvfl])
def test_zero_target_converges_at_first_node(trainer):
    model, trace = trainer(zero_target(), None, FAST)
    assert trace.status is Status.CONVERGED
    assert model.n_nodes == 1 and trace.rows[0].residual_norm == 0.0


@pytest.mark.parametrize("trainer", [train_rmpi_scn, train_scn3, train_irvfl])
def test_residual_non_increasing(trainer):
    sp = db1_split(0)
    _, trace = trainer(sp.train, sp.val, FAST)
    res = trace.residual_norms
    assert np.all(np.diff(res) <= 1e-9 * res[:-1])


def test_rmpi_geometric_decay_and_first_node():
    sp = db1_split(1)
    model, trace = train_rmpi_scn(sp.train, sp.val, FAST)
    assert math.isnan(trace.rows[0].r_L) and trace.rows[0].lam == FAST.Lambda[0]
    sq = trace.residual_norms ** 2
    for prev, row, cur in zip(sq, trace.rows[1:], sq[1:]):
        assert cur <= row.r_L * prev + 1e-12
        assert row.xi <= 0 and row.lam in FAST.Lambda


def test_rmpi_residual_matches_recomputed_least_squares():
    sp = db1_split(2)
    model, trace = train_rmpi_scn(sp.train, None, TrainerConfig(L_max=12, patience=0))
    H = hidden_output(sp.train.X, model.W, model.b)
    beta = np.linalg.lstsq(H, sp.train.Y, rcond=None)[0]
    assert trace.residual_norms[-1] == pytest.approx(np.linalg.norm(sp.train.Y - H @ beta), rel=1e-6)


def test_scn3_accepts_only_passing_candidates():
    sp = db1_split(0)
    _, trace = train_scn3(sp.train, sp.val, FAST)
    for row in trace.rows:
        assert row.xi >= 0 and row.r_L in FAST.r_grid


def test_scn1_residual_identity_from_trace():
    sp = db1_split(0)
    _, trace = train_scn1(sp.train, sp.val, FAST)
    sq = trace.residual_norms ** 2
    prev = float(np.sum(sp.train.Y ** 2))
    for row, cur in zip(trace.rows, sq):
        gain = row.xi + (1 - row.r_L) * prev
        assert cur == pytest.approx(prev - gain, rel=1e-9, abs=1e-12)
        prev = cur


def test_full_refit_beats_single_weight_on_same_nodes():
    sp = db1_split(3)
    model, trace = train_scn1(sp.train, None, FAST)
    H = hidden_output(sp.train.X, model.W, model.b)
    ls = np.linalg.lstsq(H, sp.train.Y, rcond=None)[0]
    assert np.linalg.norm(sp.train.Y - H @ ls) <= trace.residual_norms[-1] + 1e-10


def test_rvfl_interpolates_with_n_nodes(rng):
    X = rng.uniform(size=(15, 3))
    ds = Dataset(X, np.sin(X.sum(axis=1)))
    ds = apply_normalization(ds, fit_normalization(ds))
    model = train_rvfl(ds, TrainerConfig(L_max=15, rvfl_lambda=3.0))
    assert rmse(predict(model, ds.norm.inverse_x(ds.X)), ds.norm.inverse_y(ds.Y)) < 1e-6


def test_rvfl_narrow_support_misses_peaks():
    sp = db1_split(0)
    model, trace = fit_rvfl(sp.train, sp.val, TrainerConfig(L_max=100, rvfl_lambda=1.0))
    assert trace.rows[0].train_rmse > 0.04
    assert model.n_nodes == 100 and trace.status is Status.MAX_NODES


def test_early_stopping_returns_best_snapshot():
    sp = db1_split(0)
    cfg = TrainerConfig(L_max=60, T_max=40, patience=2)
    model, trace = train_scn3(sp.train, sp.val, cfg)
    assert trace.status is Status.EARLY_STOPPED
    assert trace.rows[-1].val_rmse == min(r.val_rmse for r in trace.rows)
    assert model.n_nodes == len(trace.rows) and trace.nodes_explored == model.n_nodes + 2


def test_stall_status(rng):
    # pure noise cannot be cut by 90% per node
    ds = Dataset(rng.uniform(size=(40, 1)), rng.standard_normal(40))
    ds = apply_normalization(ds, fit_normalization(ds))
    cfg = TrainerConfig(r=0.01, alpha=1.0, T_max=10, Lambda=(1.0,), stall_retries=1, patience=0)
    model, trace = train_rmpi_scn(ds, None, cfg)
    assert trace.status is Status.STALLED
    assert model.n_nodes >= 1


def test_predict_reproduces_trace_rmse():
    sp = db1_split(4)
    for name in ("rmpi_scn", "scn3", "scn1", "irvfl"):
        model, trace = get_trainer(name)(sp.train, None, FAST)
        got = rmse(predict(model, sp.raw_train.X), sp.raw_train.Y)
        assert got == pytest.approx(trace.rows[-1].train_rmse, abs=1e-8)


def test_predict_errors():
    sp = db1_split(0)
    model, _ = train_scn3(sp.train, None, FAST)
    with pytest.raises(ValueError, match="columns"):
        predict(model, np.ones((3, 2)))
    empty = SCNModel(np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)), "sigmoid", model.norm, "x")
    with pytest.raises(ValueError, match="untrained"):
        predict(empty, np.ones((3, 1)))


def test_model_round_trip_is_bit_exact(tmp_path):
    sp = db1_split(0)
    model, _ = train_rmpi_scn(sp.train, None, FAST)
    path = tmp_path / "m.json"
    model.save(path)
    back = SCNModel.load(path)
    assert np.array_equal(back.W, model.W) and np.array_equal(back.Beta, model.Beta)
    assert np.array_equal(predict(back, sp.raw_test.X), predict(model, sp.raw_test.X))
    assert json.loads(path.read_text())["format"] == "rmpiscn-model/1"


@pytest.mark.parametrize("trainer", INCREMENTAL)
def test_determinism(trainer, tmp_path):
    sp = db1_split(5)
    outs = []
    for k in range(2):
        model, trace = trainer(sp.train, sp.val, FAST)
        trace.write_csv(tmp_path / f"t{k}.csv", timing=False)
        model.save(tmp_path / f"m{k}.json")
        outs.append(((tmp_path / f"t{k}.csv").read_bytes(), (tmp_path / f"m{k}.json").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][0].decode().splitlines()[0] == ",".join(TRACE_HEADER)


def test_refresh_interval(rng):
    sp = db1_split(0)
    _, trace = train_scn3(sp.train, None, TrainerConfig(L_max=10, T_max=40, refresh_interval=5, patience=0))
    assert len(trace.rows) == 10


def test_pinv_consistent_on_well_conditioned_runs():
    # the absolute Penrose residual scales with cond(H)^2, so check short runs
    for seed in (0, 2):
        sp = db1_split(seed)
        _, trace = train_scn3(sp.train, None, TrainerConfig(L_max=8, patience=0, seed=seed))
        assert trace.pinv_violation <= 1e-6


def test_unknown_trainer():
    with pytest.raises(ValueError, match="valid names: rmpi_scn, scn3, scn1, irvfl, rvfl"):
        get_trainer("elm")
