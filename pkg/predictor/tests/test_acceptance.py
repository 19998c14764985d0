"""Release gates for the predictor package.

Each test prints one pass line with the measured numbers.
"""
import numpy as np
import pytest
import torch

from highway_planner.core import PlannerConfig, Scenario, load_scenario
from highway_planner.planner import PlanStatus, plan_cycle
from highway_planner.velocity import load_profile

from velocity_predictor import (
    EncoderConfig,
    VelocityNet,
    export_profile,
    load_dataset,
    predict_velocities,
    split_dataset,
    synthesize_episodes,
    train,
    vectorize,
)

_EPOCHS = 10   # well under the 50-epoch budget


@pytest.fixture(scope="module")
def cfg():
    return EncoderConfig()


@pytest.fixture(scope="module")
def trained(tmp_path_factory, cfg):
    d = tmp_path_factory.mktemp("const_episodes")
    synthesize_episodes(str(d), 300, seed=0, cfg=cfg, kind="constant")
    tr, va, te = split_dataset(load_dataset(str(d), cfg), seed=0)
    model, report = train(tr, va, cfg, epochs=_EPOCHS, seed=0)
    return model, report, te


def test_acceptance_output_bounds(cfg):
    # the squashing head must keep every prediction strictly inside
    # (0, v_max) for arbitrary finite inputs, not just in-distribution ones
    torch.manual_seed(0)
    model = VelocityNet(cfg)
    rng = np.random.default_rng(1)
    lo, hi = np.inf, -np.inf
    with torch.no_grad():
        for _ in range(1000):
            n_poly = int(rng.integers(1, 6))
            mats = [rng.uniform(-1.0, 1.0, size=(int(rng.integers(1, 25)), 15))
                    * 10.0 ** rng.uniform(-3.0, 6.0) for _ in range(n_poly)]
            out = model(mats, int(rng.integers(0, n_poly)))
            assert torch.all(torch.isfinite(out))
            assert float(out.min()) > 0.0
            assert float(out.max()) < cfg.v_max
            lo = min(lo, float(out.min()))
            hi = max(hi, float(out.max()))
    print(f"bounds: 1000/1000 adversarial scenes strictly inside (0, {cfg.v_max}); "
          f"observed range [{lo:.3e}, {hi:.6f}]")


def test_acceptance_gradient_check(cfg):
    # float64 central differences against autograd across every parameter
    # tensor
    torch.manual_seed(2)
    model = VelocityNet(cfg).double()
    rng = np.random.default_rng(3)
    v = np.linspace(18.0, 26.0, cfg.m_tra)
    from conftest import make_scene
    graph = vectorize(make_scene(v, cfg, extras=(("a", -3.75, 120.0, 15.0),)), cfg)
    mats, ti = graph.matrices(), graph.target_index
    w = torch.as_tensor(rng.normal(size=cfg.n_out), dtype=torch.float64)

    def loss():
        return (model(mats, ti) * w).sum()

    model.zero_grad()
    loss().backward()
    eps, checked, worst = 1e-6, 0, 0.0
    for p in model.parameters():
        flat, grad = p.data.view(-1), p.grad.view(-1)
        for j in rng.choice(flat.numel(), size=min(4, flat.numel()), replace=False):
            with torch.no_grad():
                orig = float(flat[j])
                flat[j] = orig + eps
                f_plus = float(loss())
                flat[j] = orig - eps
                f_minus = float(loss())
                flat[j] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = float(grad[j])
            dev = abs(numeric - analytic) / max(1.0, abs(analytic))
            assert dev <= 1e-4, (numeric, analytic)
            worst = max(worst, dev)
            checked += 1
    assert checked >= 40
    print(f"gradients: {checked} weights checked, worst relative deviation "
          f"{worst:.3e} <= 1e-4")


def test_acceptance_constant_velocity_ade(trained, cfg):
    model, report, test_items = trained
    assert report.ade < 0.5, report.ade
    from velocity_predictor import dataset_ade_fde
    test_ade, test_fde = dataset_ade_fde(model, test_items, cfg.dt)
    assert test_ade < 0.5, test_ade
    print(f"ade: constant-speed scenes after {_EPOCHS} epochs -> "
          f"val {report.ade:.4f} m, held-out {test_ade:.4f} m (< 0.5)")


def test_acceptance_profile_round_trip(trained, cfg, tmp_path):
    model, _, _ = trained
    d = tmp_path / "episodes"
    path = synthesize_episodes(str(d), 1, seed=42, cfg=cfg)[0]
    with open(path) as fh:
        scenario = load_scenario(fh.read())

    predicted = predict_velocities(model, scenario, cfg)
    assert predicted.shape == (cfg.n_out,)
    out = tmp_path / "profile.txt"
    export_profile(predicted, str(out))
    text = out.read_text()

    planner_cfg = PlannerConfig()
    assert (planner_cfg.n_steps, planner_cfg.dt) == (cfg.n_out, cfg.dt)
    profile = load_profile(text, planner_cfg.n_steps, planner_cfg.dt,
                           planner_cfg.v_max)
    err = float(np.abs(profile.v - predicted).max())
    assert err <= 1e-6

    with pytest.raises(ValueError, match="entries, expected"):
        load_profile(text, planner_cfg.n_steps - 1, planner_cfg.dt,
                     planner_cfg.v_max)

    # the planning view describes the same scene without the predicted
    # agent's own track
    view = Scenario(road=scenario.road, ev=scenario.ev,
                    svs=tuple(sv for sv in scenario.svs if sv.id != "ev"),
                    dt=scenario.dt, duration=scenario.duration)
    outcome = plan_cycle(view, planner_cfg,
                         profile_provider=lambda v, c: profile)
    assert outcome.status is PlanStatus.SOLVED
    assert np.array_equal(outcome.profile.v, profile.v)
    print(f"round-trip: {cfg.n_out}-step profile reparsed within {err:.2e}; "
          f"planner consumed it ({outcome.status.value})")
