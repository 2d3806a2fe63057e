import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullspace_at.attacks import (AttackSpec, npda_generate,
                                  npda_penultimate_direction, pgd_attack)
from nullspace_at.losses import cross_entropy
from nullspace_at.model import (LayerParams, NetworkModel, forward, init_model,
                                save_model)
from nullspace_at.numerics import null_projector_svd, seeded_gaussian
from nullspace_at.trainers import TrainSpec, train_standard
from nullspace_at.harness.data import make_blobs


def linear_model(weight, bias=None):
    w = np.asarray(weight, dtype=np.float64)
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return NetworkModel(backbone=[], last_layer=LayerParams(w, b, "identity"))


# ------------------------------------------------------------- pgd_attack

def test_pgd_noop_spec_returns_input_exactly():
    model = init_model((4, 6, 2), 0)
    x = seeded_gaussian(5, 4, 1, 1.0)
    spec = AttackSpec(epsilon=1.0, step_size=0.1, steps=0, random_start_scale=0.0)
    assert np.array_equal(pgd_attack(model, x, [0, 1, 0, 1, 0], spec, seed=7), x)


def test_pgd_zero_epsilon_collapses_ball():
    model = init_model((4, 6, 2), 0)
    x = seeded_gaussian(5, 4, 2, 1.0)
    spec = AttackSpec(epsilon=0.0, step_size=0.5, steps=5)
    adv = pgd_attack(model, x, [0, 1, 0, 1, 0], spec, seed=7)
    assert np.array_equal(adv, x)


def test_pgd_one_step_matches_hand_gradient():
    # y = (2x, -x); cross-entropy gradient at x=0.5 with label 0 computed by hand
    model = linear_model([[2.0], [-1.0]])
    x = np.array([[0.5]])
    logits = np.array([[1.0, -0.5]])
    p = np.exp(logits[0]) / np.exp(logits[0]).sum()
    hand_grad = (p[0] - 1.0) * 2.0 + p[1] * (-1.0)
    spec = AttackSpec(epsilon=10.0, step_size=0.25, steps=1, random_start_scale=0.0)
    adv = pgd_attack(model, x, [0], spec, seed=0)
    assert np.allclose(adv, x + 0.25 * np.sign(hand_grad), atol=1e-15)


def test_pgd_deterministic_per_seed():
    model = init_model((6, 8, 3), 1)
    x = seeded_gaussian(4, 6, 3, 1.0)
    labels = [0, 1, 2, 0]
    spec = AttackSpec(epsilon=0.5, step_size=0.1, steps=4)
    a = pgd_attack(model, x, labels, spec, seed=42)
    b = pgd_attack(model, x, labels, spec, seed=42)
    c = pgd_attack(model, x, labels, spec, seed=43)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("seed", range(10))
def test_pgd_ball_and_clamp_containment(seed):
    rng = np.random.default_rng([200, seed])
    model = init_model((5, 7, 2), seed)
    # valid data lives inside the clamp; containment is asserted from there
    x = np.clip(rng.standard_normal((6, 5)), -1.5, 1.5)
    eps = float(rng.uniform(0.01, 1.0))
    spec = AttackSpec(epsilon=eps, step_size=float(rng.uniform(0.01, 1.0)),
                      steps=int(rng.integers(1, 6)),
                      random_start_scale=float(rng.uniform(0, 0.1)),
                      value_clamp=(-1.5, 1.5))
    adv = pgd_attack(model, x, rng.integers(0, 2, 6), spec, seed=seed)
    assert np.abs(adv - x).max() <= eps + 1e-12
    assert adv.min() >= -1.5 and adv.max() <= 1.5


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2), st.floats(0, 1), st.integers(0, 4), st.integers(0, 10 ** 6))
def test_pgd_ball_containment_property(eps, step, steps, seed):
    model = init_model((3, 4, 2), 9)
    x = seeded_gaussian(3, 3, seed, 1.0)
    spec = AttackSpec(epsilon=eps, step_size=step, steps=steps)
    adv = pgd_attack(model, x, [0, 1, 0], spec, seed=seed)
    assert np.abs(adv - x).max() <= eps + 1e-12


def test_pgd_trades_selector_needs_no_labels_signal():
    # trades selector ascends KL against the clean reference logits
    model = init_model((4, 6, 2), 2)
    x = seeded_gaussian(5, 4, 4, 1.0)
    spec = AttackSpec(epsilon=0.5, step_size=0.1, steps=3)
    adv = pgd_attack(model, x, [0, 0, 1, 1, 0], spec, loss_selector="trades", seed=1)
    assert np.abs(adv - x).max() <= 0.5 + 1e-12


def test_attack_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec(epsilon=-1.0, step_size=0.1, steps=1)
    with pytest.raises(ValueError):
        AttackSpec(epsilon=0.1, step_size=-0.1, steps=1)
    with pytest.raises(ValueError):
        AttackSpec(epsilon=0.1, step_size=0.1, steps=-1)
    with pytest.raises(ValueError):
        AttackSpec(epsilon=0.1, step_size=0.1, steps=1, value_clamp=(1.0, -1.0))


# ---------------------------------------- npda direction and generation

def test_npda_direction_zero_projector():
    # full-rank square last layer leaves no null space: direction must vanish
    model = init_model((5, 3, 3), 0)
    proj = null_projector_svd(model.last_layer.weight)
    assert proj.source_rank == proj.dim
    tr = forward(model, seeded_gaussian(4, 5, 1, 1.0))
    g = npda_penultimate_direction(model, proj, tr, [0, 1, 2, 0])
    assert np.abs(g).max() < 1e-12


def test_npda_direction_identity_projector_is_unprojected_gradient():
    model = init_model((5, 8, 2), 1)
    proj = null_projector_svd(np.zeros((2, 8)))  # zero map: projector is I
    assert np.array_equal(proj.p, np.eye(8))
    x = seeded_gaussian(4, 5, 2, 1.0)
    tr = forward(model, x)
    labels = [0, 1, 1, 0]
    g = npda_penultimate_direction(model, proj, tr, labels)
    lg = cross_entropy(tr.logits, labels).logit_grad
    assert np.array_equal(g, lg @ model.last_layer.weight)


def test_npda_direction_rows_annihilated():
    model = init_model((6, 12, 2), 3)
    std_map = seeded_gaussian(2, 12, 9, 1.0)
    proj = null_projector_svd(std_map)
    tr = forward(model, seeded_gaussian(8, 6, 4, 1.0))
    g = npda_penultimate_direction(model, proj, tr, [0, 1] * 4)
    assert np.abs(std_map @ g.T).max() <= 1e-10 * np.abs(std_map).max()


def test_npda_direction_dim_mismatch():
    model = init_model((6, 12, 2), 3)
    proj = null_projector_svd(seeded_gaussian(2, 10, 9, 1.0))
    tr = forward(model, seeded_gaussian(4, 6, 4, 1.0))
    with pytest.raises(ValueError, match="dimension"):
        npda_penultimate_direction(model, proj, tr, [0, 1, 0, 1])


def test_npda_generate_zero_projector_moves_only_by_random_start():
    model = init_model((5, 3, 3), 0)
    proj = null_projector_svd(model.last_layer.weight)  # zero projector
    x = seeded_gaussian(4, 5, 5, 1.0)
    labels = [0, 1, 2, 0]
    spec = AttackSpec(epsilon=10.0, step_size=0.3, steps=4)
    spec0 = AttackSpec(epsilon=10.0, step_size=0.3, steps=0)
    moved = npda_generate(model, proj, x, labels, spec, seed=11)
    start_only = npda_generate(model, proj, x, labels, spec0, seed=11)
    assert np.array_equal(moved, start_only)
    assert not np.array_equal(moved, x)  # the random start itself is nonzero


def test_npda_linear_backbone_exactness():
    # identity backbone, sign off: the perturbation lies in the null space of
    # the reference map, so reference logits must not move
    std = init_model((10, 3), 7)
    proj = null_projector_svd(std.last_layer.weight)
    x = seeded_gaussian(6, 10, 8, 1.0)
    labels = [0, 1, 2, 0, 1, 2]
    spec = AttackSpec(epsilon=100.0, step_size=0.5, steps=1,
                      random_start_scale=0.0, use_sign=False)
    adv = npda_generate(std, proj, x, labels, spec, seed=0)
    # one step: displacement equals step_size times the projected direction
    tr = forward(std, x)
    g = npda_penultimate_direction(std, proj, tr, labels)
    assert np.allclose(adv - x, 0.5 * g, atol=1e-15)
    assert np.abs(std.last_layer.weight @ (adv - x).T).max() < 1e-10
    clean_logits = forward(std, x).logits
    adv_logits = forward(std, adv).logits
    assert np.abs(adv_logits - clean_logits).max() < 1e-10


def test_npda_linear_backbone_exactness_multi_step():
    std = init_model((12, 2), 13)
    proj = null_projector_svd(std.last_layer.weight)
    x = seeded_gaussian(5, 12, 14, 1.0)
    labels = [0, 1, 0, 1, 0]
    spec = AttackSpec(epsilon=50.0, step_size=0.7, steps=5,
                      random_start_scale=0.0, use_sign=False)
    adv = npda_generate(std, proj, x, labels, spec, seed=0)
    delta = np.abs(forward(std, adv).logits - forward(std, x).logits)
    assert delta.max() < 1e-9


def test_npda_nonlinear_backbone_containment():
    model = init_model((6, 16, 2), 4)
    std_map = model.last_layer.weight
    proj = null_projector_svd(std_map)
    x = seeded_gaussian(7, 6, 15, 1.0)
    spec = AttackSpec(epsilon=0.3, step_size=0.1, steps=5, value_clamp=(-2.0, 2.0))
    adv = npda_generate(model, proj, x, [0, 1, 0, 1, 0, 1, 0], spec, seed=3)
    assert np.abs(adv - x).max() <= 0.3 + 1e-12
    assert adv.min() >= -2.0 and adv.max() <= 2.0


def test_npda_deterministic_per_seed():
    model = init_model((6, 16, 2), 4)
    proj = null_projector_svd(model.last_layer.weight)
    x = seeded_gaussian(5, 6, 16, 1.0)
    labels = [0, 1, 0, 1, 0]
    spec = AttackSpec(epsilon=0.5, step_size=0.1, steps=3)
    a = npda_generate(model, proj, x, labels, spec, seed=5)
    b = npda_generate(model, proj, x, labels, spec, seed=5)
    assert np.array_equal(a, b)


def test_npda_direction_hook_sees_every_step():
    model = init_model((6, 16, 2), 4)
    proj = null_projector_svd(model.last_layer.weight)
    x = seeded_gaussian(5, 6, 17, 1.0)
    seen = []
    spec = AttackSpec(epsilon=0.5, step_size=0.1, steps=4)
    npda_generate(model, proj, x, [0, 1, 0, 1, 0], spec, seed=5,
                  direction_hook=lambda g: seen.append(g.shape))
    assert seen == [(5, 16)] * 4


# ------------------------------------------------------------ effectiveness

@pytest.fixture(scope="module")
def trained_blob_model(tmp_path_factory):
    data = make_blobs(1024, 10, 2, 4.0, seed=303)
    spec = TrainSpec(method="standard", model_dims=(10, 16, 2), epochs=10,
                     learning_rate=0.1, batch_size=64, seed=5)
    report = train_standard(data, spec)
    return report.model, data


def test_pgd_strictly_increases_loss_on_trained_model(trained_blob_model):
    model, data = trained_blob_model
    x = data.inputs[:512]
    labels = data.labels[:512]
    spec = AttackSpec(epsilon=1.0, step_size=0.25, steps=10)
    adv = pgd_attack(model, x, labels, spec, seed=99)
    clean_loss = cross_entropy(forward(model, x).logits, labels).value
    adv_loss = cross_entropy(forward(model, adv).logits, labels).value
    assert adv_loss > clean_loss
