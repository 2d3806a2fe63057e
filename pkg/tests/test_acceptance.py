"""Acceptance suite: every criterion at its stated tolerance, one line each.

The desk-scale benchmark is shared: 2-class Gaussian blobs in 20 dimensions
(inter-class gap 5.0), 4000/1000 train/test samples, a 20-32-2 network, and
an l-infinity budget of 0.3 x gap for both training and evaluation attacks.
"""

import time

import numpy as np
import pytest
from fdtools import fd_input_grad, fd_logit_grad, fd_param_grads, max_rel_err

from nullspace_at.attacks import AttackSpec, npda_generate, pgd_attack
from nullspace_at.harness.data import make_blobs
from nullspace_at.harness.evaluation import evaluate
from nullspace_at.harness.experiment import run_experiment
from nullspace_at.losses import (cross_entropy, kl_divergence, lse_loss,
                                 madry_inner_objective, trades_loss)
from nullspace_at.model import (backward_params, backward_to_input, forward,
                                init_model, save_model)
from nullspace_at.numerics import (null_projector_closed_form,
                                   null_projector_svd)
from nullspace_at.trainers import TrainSpec, freeze_backbone_option, train

GAP = 5.0
EPS = 0.3 * GAP
TRAIN_ATTACK = AttackSpec(epsilon=EPS, step_size=EPS / 5, steps=10)
EVAL_ATTACK = AttackSpec(epsilon=EPS, step_size=EPS / 4, steps=20)


def report(number, name, elapsed, bound):
    print(f"ACCEPTANCE {number} ({name}): PASS in {elapsed:.1f}s (budget {bound}s)")
    assert elapsed < bound


@pytest.fixture(scope="module")
def benchmark():
    train_set = make_blobs(4000, 20, 2, GAP, seed=[0, 11], split="train")
    test_set = make_blobs(1000, 20, 2, GAP, seed=[0, 12], split="test")
    return train_set, test_set


@pytest.fixture(scope="module")
def std_model(benchmark, tmp_path_factory):
    train_set, test_set = benchmark
    spec = TrainSpec(method="standard", model_dims=(20, 32, 2), epochs=30,
                     learning_rate=0.1, batch_size=64, seed=0,
                     attack=TRAIN_ATTACK)
    rep = train(train_set, spec)
    path = tmp_path_factory.mktemp("acc_std") / "std_model.json"
    save_model(rep.model, path)
    ev = evaluate(rep.model, test_set, EVAL_ATTACK, seed=[0, 13])
    return {"model": rep.model, "path": str(path), "eval": ev}


def test_criterion_1_projector_algebra():
    t0 = time.time()
    rng = np.random.default_rng(20240001)
    closed_form_checked = 0
    for trial in range(500):
        c = int(rng.integers(2, 11))
        h = int(rng.integers(8, 513))
        m = rng.standard_normal((c, h)) * 10 ** rng.uniform(-1.5, 1.5)
        proj = null_projector_svd(m)
        scale = np.abs(m).max()
        assert np.abs(m @ proj.p).max() <= 1e-10 * scale
        assert np.abs(proj.p @ proj.p - proj.p).max() <= 1e-10
        assert np.abs(proj.p - proj.p.T).max() <= 1e-10
        assert abs(np.trace(proj.p) - (h - proj.source_rank)) <= 1e-8
        if c < h:  # full row rank holds almost surely: the closed form applies
            cf = null_projector_closed_form(m)
            assert np.abs(cf.p - proj.p).max() <= 1e-8
            closed_form_checked += 1
    assert closed_form_checked > 400
    report(1, "projector algebra, 500 seeded maps", time.time() - t0, 60)


def test_criterion_2_gradient_fidelity():
    t0 = time.time()
    rng = np.random.default_rng(20240002)
    for trial in range(50):
        n_hidden = int(rng.integers(0, 4))
        dims = [int(rng.integers(2, 9))]
        dims += [int(rng.integers(2, 33)) for _ in range(n_hidden)]
        dims += [int(rng.integers(2, 6))]
        model = init_model(dims, int(rng.integers(0, 1 << 31)))
        # generic biases keep pre-activations off the relu kink, where a
        # central-difference oracle is undefined (fresh zero biases put fully
        # dead samples exactly on it)
        for layer in list(model.backbone) + [model.last_layer]:
            layer.bias += rng.uniform(-0.3, 0.3, size=layer.bias.shape)
        batch = int(rng.integers(1, 5))
        x = rng.standard_normal((batch, dims[0]))
        probe = rng.standard_normal((batch, dims[-1]))

        tr = forward(model, x)
        analytic = backward_params(model, tr, probe)
        numeric = fd_param_grads(model, x, probe)
        for (aw, ab), (nw, nb) in zip(analytic, numeric):
            assert max_rel_err(aw, nw) < 1e-4
            assert max_rel_err(ab, nb) < 1e-4

        r = rng.standard_normal((batch, model.hidden_dim))
        assert max_rel_err(backward_to_input(model, tr, r),
                           fd_input_grad(model, x.copy(), r)) < 1e-4

        logits = rng.standard_normal((batch, dims[-1])) * 3
        other = rng.standard_normal((batch, dims[-1])) * 3
        labels = rng.integers(0, dims[-1], size=batch)
        first = lambda lv: lv.logit_grad
        second = lambda lv: lv.adv_logit_grad
        cases = [
            (lambda z: cross_entropy(z, labels), first),
            (lambda z: lse_loss(z, labels), first),
            (lambda z: madry_inner_objective(z, labels), first),
            (lambda z: kl_divergence(z, other), first),
            (lambda z: kl_divergence(other, z), second),
            (lambda z: trades_loss(z, other, labels, 1.5), first),
            (lambda z: trades_loss(other, z, labels, 1.5), second),
        ]
        for loss_fn, pick_grad in cases:
            analytic_grad = pick_grad(loss_fn(logits))
            fd = fd_logit_grad(loss_fn, logits, h=1e-5)
            assert max_rel_err(analytic_grad, fd, floor=1e-3) < 1e-4
    report(2, "gradient fidelity, 50 seeded models", time.time() - t0, 60)


def test_criterion_3_npda_constraint(benchmark, std_model):
    t0 = time.time()
    train_set, _ = benchmark
    # (a) annihilation on every batch of a full training run
    spec = TrainSpec(method="npda", loss_selector="trades", beta=1.5,
                     std_model_path=std_model["path"], epochs=10,
                     learning_rate=0.1, batch_size=64, seed=1,
                     attack=TRAIN_ATTACK)
    rep = train(train_set, spec)
    std_scale = np.abs(std_model["model"].last_layer.weight).max()
    assert rep.npda_max_residual is not None
    assert rep.npda_max_residual <= 1e-10 * std_scale

    # (b) exact regime: linear backbone, sign off, reference logits frozen
    linear_std = init_model((20, 2), 77)
    proj = null_projector_svd(linear_std.last_layer.weight)
    x = train_set.inputs[:256]
    labels = train_set.labels[:256]
    gen_spec = AttackSpec(epsilon=100.0, step_size=0.5, steps=10,
                          random_start_scale=0.0, use_sign=False)
    adv = npda_generate(linear_std, proj, x, labels, gen_spec, seed=2)
    drift = np.abs(forward(linear_std, adv).logits - forward(linear_std, x).logits)
    assert drift.max() <= 1e-9
    report(3, "npda constraint, exact and trained regimes", time.time() - t0, 30)


def test_criterion_4_npgd_accumulated_drift(benchmark, std_model):
    t0 = time.time()
    train_set, _ = benchmark
    spec = TrainSpec(method="npgd", loss_selector="ce",
                     std_model_path=std_model["path"], epochs=8,
                     learning_rate=0.05, batch_size=64, seed=3,
                     attack=TRAIN_ATTACK)
    spec = freeze_backbone_option(spec)
    rep = train(train_set, spec)
    assert rep.update_steps >= 500
    std_map = std_model["model"].last_layer.weight
    delta = rep.model.last_layer.weight - std_map
    drift = np.abs(std_map @ delta.T).max()
    assert drift <= 1e-9 * np.abs(std_map).max() * 500
    report(4, f"npgd null-space drift over {rep.update_steps} steps",
           time.time() - t0, 120)


def test_criterion_5_attack_contracts():
    t0 = time.time()
    for case in range(100):
        rng = np.random.default_rng([20240005, case])
        model = init_model((6, 10, 2), case)
        clamp = (-2.0, 2.0) if case % 2 == 0 else None
        x = rng.standard_normal((4, 6))
        if clamp:
            x = np.clip(x, *clamp)
        labels = rng.integers(0, 2, 4)
        eps = float(rng.uniform(0.0, 1.0))
        spec = AttackSpec(epsilon=eps, step_size=float(rng.uniform(0.01, 0.8)),
                          steps=int(rng.integers(0, 4)),
                          random_start_scale=float(rng.uniform(0.0, 0.05)),
                          value_clamp=clamp)
        if case % 3 == 0:
            proj = null_projector_svd(rng.standard_normal((2, 10)))
            gen = lambda seed: npda_generate(model, proj, x, labels, spec, seed=seed)
        else:
            gen = lambda seed: pgd_attack(model, x, labels, spec, seed=seed)
        adv = gen(case)
        assert np.abs(adv - x).max() <= eps + 1e-12          # ball containment
        if clamp:
            assert adv.min() >= clamp[0] and adv.max() <= clamp[1]
        assert np.array_equal(adv, gen(case))                 # determinism
        zero_spec = AttackSpec(epsilon=0.0, step_size=spec.step_size,
                               steps=spec.steps,
                               random_start_scale=spec.random_start_scale,
                               value_clamp=clamp)
        assert np.array_equal(
            pgd_attack(model, x, labels, zero_spec, seed=case), x)  # eps = 0
    report(5, "attack contracts, 100 seeded cases", time.time() - t0, 30)


def test_criterion_6_desk_scale_tradeoff(benchmark, std_model):
    t0 = time.time()
    train_set, test_set = benchmark
    std_eval = std_model["eval"]
    assert std_eval.clean_error <= 0.01  # (i)

    npgd_spec = TrainSpec(method="npgd", loss_selector="ce",
                          std_model_path=std_model["path"], epochs=20,
                          learning_rate=0.05, batch_size=64, seed=1,
                          attack=TRAIN_ATTACK)
    npgd_eval = evaluate(train(train_set, npgd_spec).model, test_set,
                         EVAL_ATTACK, seed=[0, 13])
    assert abs(npgd_eval.clean_error - std_eval.clean_error) <= 0.01  # (ii)
    assert npgd_eval.pgd_error <= std_eval.pgd_error - 0.10

    npda_spec = TrainSpec(method="npda", loss_selector="trades", beta=1.5,
                          std_model_path=std_model["path"], epochs=20,
                          learning_rate=0.1, batch_size=64, seed=1,
                          attack=TRAIN_ATTACK)
    npda_eval = evaluate(train(train_set, npda_spec).model, test_set,
                         EVAL_ATTACK, seed=[0, 13])
    assert abs(npda_eval.clean_error - std_eval.clean_error) <= 0.01  # (iii)
    assert npda_eval.pgd_error <= std_eval.pgd_error - 0.05

    print(f"  std clean {std_eval.clean_error:.3f} pgd {std_eval.pgd_error:.3f}; "
          f"npgd clean {npgd_eval.clean_error:.3f} pgd {npgd_eval.pgd_error:.3f}; "
          f"npda clean {npda_eval.clean_error:.3f} pgd {npda_eval.pgd_error:.3f}")
    report(6, "desk-scale robustness/generalization trade-off",
           time.time() - t0, 600)


def test_criterion_7_beta_monotone_trend(benchmark, std_model):
    t0 = time.time()
    train_set, test_set = benchmark
    robust = []
    for beta in (0.5, 1.5, 5.0):
        spec = TrainSpec(method="npgd", loss_selector="trades", beta=beta,
                         std_model_path=std_model["path"], epochs=120,
                         learning_rate=0.01, batch_size=512, seed=1,
                         attack=TRAIN_ATTACK)
        ev = evaluate(train(train_set, spec).model, test_set, EVAL_ATTACK,
                      seed=[0, 13])
        robust.append(ev.pgd_error)
    increases = [b - a for a, b in zip(robust, robust[1:]) if b > a]
    assert len(increases) <= 1  # at most one inversion
    assert all(v <= 0.01 for v in increases)  # and it stays within one point
    print(f"  robust errors across beta 0.5/1.5/5: "
          f"{[round(v, 3) for v in robust]}")
    report(7, "beta sweep monotone trend", time.time() - t0, 900)


def test_criterion_8_reproducibility(tmp_path):
    t0 = time.time()
    out = tmp_path / "repro"
    config = {
        "seed": 21,
        "out_dir": str(out),
        "dataset": {"kind": "blobs", "n_train": 200, "n_test": 100, "dim": 8,
                    "classes": 2, "separation": 5.0},
        "model": {"dims": [8, 16, 2]},
        "std_train": {"loss_selector": "ce", "learning_rate": 0.1,
                      "batch_size": 32, "epochs": 3},
        "train": {"method": "npgd", "loss_selector": "trades", "beta": 1.0,
                  "learning_rate": 0.05, "batch_size": 32, "epochs": 2,
                  "attack": {"epsilon": 1.5, "step_size": 0.3, "steps": 5}},
        "eval_attack": {"epsilon": 1.5, "step_size": 0.375, "steps": 5},
        "sweep": {"parameter": "beta", "values": [0.5, 1.5, 5.0]},
        "landscape": {"mode": "adversarial", "resolution": 5},
    }
    import json
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    run_experiment(cfg_path)
    files = sorted(p for p in out.rglob("*") if p.is_file())
    assert files, "first run produced no artifacts"
    before = {p: p.read_bytes() for p in files}
    run_experiment(cfg_path)
    after_files = sorted(p for p in out.rglob("*") if p.is_file())
    assert files == after_files
    for p, blob in before.items():
        assert p.read_bytes() == blob, f"{p} differs between identical runs"
    report(8, "byte-identical reruns", time.time() - t0, 600)
