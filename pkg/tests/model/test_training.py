from dataclasses import replace

import numpy as np
import pytest
import torch

from shapefrag.codec import FragmentToken
from shapefrag.drivers import checkpoint as ckpt
from shapefrag.errors import Diverged, EmptyInput, NumericError, OverlengthPrefix
from shapefrag.fragments import Control
from shapefrag.geom import voxelize
from shapefrag.model.batching import IGNORE, collate
from shapefrag.model.config import OptimConfig
from shapefrag.model.network import build_model
from shapefrag.model.sampling import generate
from shapefrag.model.training import (
    CHECKPOINT,
    LOSS_CURVE,
    augment,
    grad,
    loss,
    lr_factor,
    make_samples,
    position_loss,
    random_motion,
    train,
)

A = FragmentToken(5, (30, 31, 32), (60, 32, 33, 34))
B = FragmentToken(6, (33, 32, 31), (50, 40, 30, 35))
C = FragmentToken(7, (28, 35, 30), (55, 20, 41, 33))
SHORT = [Control.BOS, A, Control.EOS]
BRANCHED = [Control.BOS, A, Control.BOB, B, Control.EOB, Control.BOB, C, Control.EOB, Control.EOS]


@pytest.fixture
def grid(tiny_config, toluene):
    return voxelize(toluene.centered(), tiny_config.grid(), clip=True)


@pytest.fixture
def batch(tiny_config, grid):
    return collate([(grid, SHORT), (grid, BRANCHED)], tiny_config)


def test_collate_shifts_and_pads(batch, tiny_config):
    assert batch.inputs.c.shape == (2, len(BRANCHED) - 1)
    assert batch.inputs.c[0].tolist()[:2] == [int(Control.BOS), 5]
    assert batch.inputs.c[0, 2:].tolist() == [int(Control.PAD)] * (len(BRANCHED) - 3)
    assert batch.targets.c[0].tolist()[:2] == [5, int(Control.EOS)]
    assert set(batch.targets.c[0, 2:].tolist()) == {IGNORE}
    assert batch.padding[0].tolist() == [False, False] + [True] * (len(BRANCHED) - 3)
    # poses of control targets are ignored, fragment targets keep theirs
    assert batch.targets.p[1, 1].tolist() == [IGNORE] * 3
    assert batch.targets.p[1, 2].tolist() == list(B.Pc)
    assert batch.targets.r[1, 0].tolist() == list(A.Rc)
    # control inputs use the extra "no pose" bins
    assert batch.inputs.p[1, 0].tolist() == [tiny_config.b_t] * 3
    assert batch.grids.shape == (2, 8, 8, 8)


def test_collate_rejects_overlong(tiny_config, grid):
    long = [Control.BOS] + [A] * tiny_config.max_len + [Control.EOS]
    with pytest.raises(OverlengthPrefix):
        collate([(grid, long)], tiny_config)


def test_position_loss_masks(batch, tiny_config):
    model = build_model(tiny_config, seed=0)
    logits = model(batch.grids, batch.inputs, batch.padding)
    per_position = position_loss(logits, batch)
    assert per_position.shape == batch.padding.shape
    assert torch.all(per_position[batch.padding] == 0)
    # zero-initialised heads: uniform distributions
    v, bt, br = tiny_config.vocab_size, tiny_config.b_t, tiny_config.b_r
    fragment_term = np.log(v) + 3 * np.log(bt) + 4 * np.log(br)
    assert per_position[0, 0].item() == pytest.approx(fragment_term, rel=1e-5)
    assert per_position[0, 1].item() == pytest.approx(np.log(v), rel=1e-5)
    # 4 fragment targets and 6 control targets
    expected = (4 * fragment_term + 6 * np.log(v)) / 10
    assert loss(batch, model).item() == pytest.approx(expected, rel=1e-5)


def test_loss_detects_non_finite(batch, tiny_config):
    model = build_model(tiny_config, seed=0)
    with torch.no_grad():
        model.head_c.bias.fill_(float("nan"))
    with pytest.raises(NumericError, match="batch 0"):
        loss(batch, model)


def test_gradient_matches_finite_differences(tiny_config, grid):
    config = replace(tiny_config, layers_enc=2, layers_dec=2, zero_init_heads=False)
    model = build_model(config, seed=4).double()
    batch = collate([(grid, SHORT), (grid, BRANCHED)], config).to(torch.float64)
    grads = grad(batch, model)
    rng = np.random.default_rng(0)
    named = [(n, p) for n, p in model.named_parameters() if n != "fragment_emb.weight"]
    # embedding rows of symbols that occur in the batch
    coords = [("fragment_emb.weight", (row, 3)) for row in (5, 6, 7, int(Control.BOB))]
    while len(coords) < 200:
        name, p = named[int(rng.integers(len(named)))]
        coords.append((name, tuple(int(rng.integers(s)) for s in p.shape)))
    params = dict(model.named_parameters())
    eps = 1e-6
    for name, index in coords:
        p = params[name]
        with torch.no_grad():
            original = p[index].item()
            p[index] = original + eps
            up = loss(batch, model).item()
            p[index] = original - eps
            down = loss(batch, model).item()
            p[index] = original
        numeric = (up - down) / (2 * eps)
        assert grads[name][index].item() == pytest.approx(numeric, rel=1e-3, abs=1e-7), name


def test_grad_covers_every_parameter(batch, tiny_config):
    model = build_model(tiny_config, seed=0)
    grads = grad(batch, model)
    assert set(grads) == {n for n, _ in model.named_parameters()}


def test_lr_schedule():
    assert lr_factor(1, 10) == pytest.approx(0.1)
    assert lr_factor(10, 10) == 1.0
    assert lr_factor(40, 10) == pytest.approx(0.5)
    values = [lr_factor(s, 10) for s in range(1, 100)]
    peak = values.index(max(values))
    assert values[: peak + 1] == sorted(values[: peak + 1])
    assert values[peak:] == sorted(values[peak:], reverse=True)


def test_augment(toluene):
    rng = np.random.default_rng(0)
    moved = augment(toluene, rng, 2.0)
    d0 = np.linalg.norm(toluene.coords[:, None] - toluene.coords[None], axis=-1)
    d1 = np.linalg.norm(moved.coords[:, None] - moved.coords[None], axis=-1)
    assert np.allclose(d0, d1)
    assert not np.allclose(moved.coords, toluene.coords)
    still = augment(toluene, rng, 0.0)
    assert np.allclose(still.coords, toluene.coords)
    shift = np.asarray(random_motion(np.random.default_rng(1), 2.0).translation)
    assert np.all(np.abs(shift) <= 2.0)


def test_make_samples_skips_unknown(base, benzene, vocab, rules, tiny_config, caplog):
    samples = make_samples([base[0], benzene], vocab, rules, tiny_config)
    assert len(samples) == 1
    assert "Skipping benzene" in caplog.text
    assert np.allclose(samples[0].molecule.centroid(), 0.0, atol=1e-9)


def test_training_sample_draw(base, vocab, rules, tiny_config):
    (sample,) = make_samples(base[:1], vocab, rules, tiny_config)
    grid, seq = sample.draw(np.random.default_rng(0), tiny_config, OptimConfig())
    assert grid.spec == tiny_config.grid()
    assert seq[0] == Control.BOS and seq[-1] == Control.EOS
    assert grid.count > 0


def test_train_requires_data(tiny_config):
    with pytest.raises(EmptyInput):
        train([], tiny_config)


def test_divergence_is_checkpointed(tmp_path, batch, tiny_config, grid):
    model = build_model(tiny_config, seed=0)
    with torch.no_grad():
        model.head_p.bias.fill_(float("inf"))
    opt = OptimConfig(steps=3, batch_size=2, warmup=1)
    with pytest.raises(Diverged, match="step 1") as exc:
        train([(grid, SHORT)], tiny_config, opt, workdir=tmp_path, model=model)
    assert exc.value.step == 1
    assert (tmp_path / CHECKPOINT).is_file()


@pytest.mark.slow
def test_training_halves_the_loss(tmp_path, base, vocab, rules, tiny_config):
    samples = make_samples(base[:8], vocab, rules, tiny_config)
    opt = OptimConfig(
        lr=3e-3,
        warmup=20,
        steps=300,
        batch_size=8,
        eps=0.0,
        translation_range=0.0,
        checkpoint_every=100,
    )
    result = train(samples, tiny_config, opt, workdir=tmp_path)
    losses = [value for _, value, _ in result.curve]
    assert len(losses) == 300
    assert np.mean(losses[-10:]) < 0.5 * losses[0]

    assert result.checkpoint == tmp_path / CHECKPOINT
    model, meta = ckpt.load(result.checkpoint)
    assert meta["step"] == 300
    assert model.config == tiny_config
    curve = (tmp_path / LOSS_CURVE).read_text().splitlines()
    assert curve[0] == "step,loss,lr" and len(curve) == 301


@pytest.mark.slow
def test_single_sample_is_memorised(tiny_config, grid):
    opt = OptimConfig(lr=3e-3, warmup=20, steps=500, batch_size=1)
    result = train([(grid, BRANCHED)], tiny_config, opt)
    first, last = result.curve[0][1], result.curve[-1][1]
    assert last < 0.1 * first
    # a tiny nucleus threshold keeps only the most probable symbol
    greedy = generate(grid, result.model, 1, p=1e-9, rng=np.random.default_rng(0))
    assert greedy.sequences == [BRANCHED]
