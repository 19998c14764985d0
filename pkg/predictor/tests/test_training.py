import numpy as np
import pytest

from velocity_predictor import (
    EncoderConfig,
    evaluate_ade_fde,
    load_dataset,
    split_dataset,
    synthesize_episodes,
    train,
)


@pytest.fixture(scope="module")
def toy_cfg():
    return EncoderConfig(m_tra=5, m_map=4, d_s=5.0, dt=0.1, v_max=50.0, n_out=6)


def _dataset(tmp_path, cfg, n, kind, seed=0):
    synthesize_episodes(str(tmp_path), n, seed=seed, cfg=cfg, kind=kind)
    return split_dataset(load_dataset(str(tmp_path), cfg), seed=0)


def test_displacement_errors_constant_offset():
    # a steady 1 m/s speed error integrates into a linearly growing gap:
    # 3 m at the horizon, 1.55 m on average over 30 steps of 0.1 s
    truth = np.full(30, 20.0)
    ade, fde = evaluate_ade_fde(truth + 1.0, truth, dt=0.1)
    assert ade == pytest.approx(1.55, abs=1e-12)
    assert fde == pytest.approx(3.0, abs=1e-12)


def test_displacement_errors_identical_profiles():
    v = np.linspace(10.0, 30.0, 30)
    assert evaluate_ade_fde(v, v, dt=0.1) == (0.0, 0.0)


def test_displacement_errors_sign_symmetric():
    truth = np.full(30, 20.0)
    assert evaluate_ade_fde(truth - 1.0, truth, dt=0.1) == \
        pytest.approx((1.55, 3.0), abs=1e-12)


def test_displacement_errors_length_mismatch():
    with pytest.raises(ValueError, match="shapes differ"):
        evaluate_ade_fde(np.ones(5), np.ones(6), dt=0.1)


def test_train_input_validation(toy_cfg):
    with pytest.raises(ValueError, match="empty dataset"):
        train([], [], toy_cfg)


def test_constant_labels_are_memorized(tmp_path, toy_cfg):
    # constant-speed scenes: every prediction must settle within 0.5 m/s of
    # the scene's speed
    tr, va, te = _dataset(tmp_path, toy_cfg, 240, "constant")
    model, report = train(tr, va, toy_cfg, epochs=12, seed=0, batch_size=16)
    assert len(report.epoch_losses) == 12 and len(report.val_losses) == 12
    worst = 0.0
    for ex in va + te:
        pred = model(ex.matrices, ex.target_index).detach().numpy()
        c = ex.labels[0]
        assert np.ptp(ex.labels) == 0.0
        worst = max(worst, float(np.abs(pred - c).max()))
    assert worst <= 0.5, worst
    assert report.ade <= report.fde


def test_validation_loss_descends(tmp_path, toy_cfg):
    # smoothed validation loss must fall monotonically through the first ten
    # windows: the recipe has to actually learn, not just not diverge
    tr, va, _ = _dataset(tmp_path, toy_cfg, 160, "car_following")
    _, report = train(tr, va, toy_cfg, epochs=14, seed=0, batch_size=16)
    losses = np.asarray(report.val_losses)
    smoothed = np.convolve(losses, np.ones(3) / 3.0, mode="valid")
    assert smoothed.size >= 10
    assert np.all(np.diff(smoothed[:10]) < 0.0), smoothed[:10]
    assert losses[-1] < losses[0]


def test_training_is_seeded(tmp_path, toy_cfg):
    tr, va, _ = _dataset(tmp_path, toy_cfg, 40, "car_following")
    _, a = train(tr, va, toy_cfg, epochs=3, seed=7, batch_size=16)
    _, b = train(tr, va, toy_cfg, epochs=3, seed=7, batch_size=16)
    assert a.epoch_losses == b.epoch_losses
    assert a.val_losses == b.val_losses
    _, c = train(tr, va, toy_cfg, epochs=3, seed=8, batch_size=16)
    assert a.epoch_losses != c.epoch_losses
