import json

import numpy as np
import pytest

from sea.adapter import adapter_apply, adapter_backward_cached
from sea.errors import ConfigError, EmptyDatasetError, NonFiniteGradientError, StepOutOfRangeError
from sea.losses import generation_loss
from sea.synth import SyntheticCorpusSpec, generate_synthetic_corpus
from sea.toylm import build_model_input
from sea.trainer import (
    FrozenStack,
    TrainConfig,
    TrainState,
    adamw_update,
    batch_for_step,
    build_frozen_stack,
    cosine_lr,
    init_train_state,
    load_checkpoint,
    pretrain_step,
    run_pretraining,
    save_checkpoint,
    _caption_supervision,
)


@pytest.fixture(scope="module")
def tiny_corpus():
    return generate_synthetic_corpus(
        SyntheticCorpusSpec(
            vocab_size=10, d_v=8, d_llm=12, grid_height=4, grid_width=4,
            images=6, noise_sigma=0.05, seed=21,
        )
    )


def tiny_config(**overrides):
    base = dict(seed=21, total_steps=6, warmup_steps=2, base_lr=5e-3,
                batch_size=2, checkpoint_every=2)
    base.update(overrides)
    return TrainConfig(**base)


class TestCosineLr:
    def test_warmup_junction(self):
        cfg = TrainConfig(total_steps=100, warmup_steps=10, base_lr=0.5)
        assert cosine_lr(10, cfg) == pytest.approx(0.5)

    def test_zero_at_end(self):
        cfg = TrainConfig(total_steps=100, warmup_steps=10, base_lr=0.5)
        assert abs(cosine_lr(100, cfg)) < 1e-12

    def test_half_at_decay_midpoint(self):
        cfg = TrainConfig(total_steps=110, warmup_steps=10, base_lr=0.4)
        assert cosine_lr(60, cfg) == pytest.approx(0.2)

    def test_warmup_is_linear_from_zero(self):
        cfg = TrainConfig(total_steps=100, warmup_steps=4, base_lr=1.0)
        assert [cosine_lr(s, cfg) for s in range(4)] == [0.0, 0.25, 0.5, 0.75]

    def test_out_of_range(self):
        cfg = TrainConfig(total_steps=10, warmup_steps=0)
        with pytest.raises(StepOutOfRangeError):
            cosine_lr(11, cfg)
        with pytest.raises(StepOutOfRangeError):
            cosine_lr(-1, cfg)


class TestAdamW:
    def _scalar_state(self, p=1.0):
        return TrainState(
            params={"p": np.float64(p)},
            m={"p": np.zeros(())},
            v={"p": np.zeros(())},
            step=0,
            arch="linear",
        )

    def test_zero_grad_zero_decay_no_change(self):
        cfg = TrainConfig(weight_decay=0.0)
        state = adamw_update(self._scalar_state(), {"p": np.zeros(())}, lr=0.1, config=cfg)
        assert float(state.params["p"]) == 1.0
        assert state.step == 1

    def test_first_step_moves_by_lr(self):
        cfg = TrainConfig(weight_decay=0.0)
        state = adamw_update(self._scalar_state(), {"p": np.float64(1.0)}, lr=0.1, config=cfg)
        # bias correction makes the first update ~ lr * sign(g)
        assert float(state.params["p"]) == pytest.approx(0.9, abs=1e-6)

    def test_pure_decay_term(self):
        cfg = TrainConfig(weight_decay=0.1)
        state = adamw_update(self._scalar_state(), {"p": np.zeros(())}, lr=0.1, config=cfg)
        assert float(state.params["p"]) == pytest.approx(0.99, abs=1e-12)

    def test_non_finite_gradient_preserves_state(self):
        cfg = TrainConfig()
        state = self._scalar_state()
        with pytest.raises(NonFiniteGradientError):
            adamw_update(state, {"p": np.float64(np.nan)}, lr=0.1, config=cfg)
        assert float(state.params["p"]) == 1.0
        assert state.step == 0

    def test_missing_gradient_rejected(self):
        cfg = TrainConfig()
        with pytest.raises(NonFiniteGradientError):
            adamw_update(self._scalar_state(), {}, lr=0.1, config=cfg)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ConfigError):
            TrainConfig(total_steps=10, warmup_steps=11)
        with pytest.raises(ConfigError):
            TrainConfig(base_lr=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(lambda_weight=-1.0)

    def test_paper_anchored_defaults(self):
        cfg = TrainConfig()
        assert cfg.top_n == 10
        assert cfg.window_k == 2
        assert cfg.adapter_arch == "mlp2"
        log_tau0 = float(init_train_state(cfg, 4, 6).params["log_tau"])
        assert log_tau0 == 0.0


class TestPretrainStep:
    def test_metrics_and_progress(self, tiny_corpus):
        cfg = tiny_config()
        frozen = build_frozen_stack(tiny_corpus, cfg)
        state = init_train_state(cfg, 8, 12)
        batch = batch_for_step(tiny_corpus, 0, cfg)
        new_state, metrics = pretrain_step(batch, state, cfg, frozen)
        assert new_state.step == 1
        assert set(metrics) == {"step", "loss", "loss_g", "loss_a", "tau", "lr", "pairs"}
        assert metrics["loss"] == pytest.approx(
            metrics["loss_g"] + cfg.lambda_weight * metrics["loss_a"]
        )

    def test_empty_label_sets_fall_back_to_generation(self, tiny_corpus):
        cfg = tiny_config()
        frozen = build_frozen_stack(tiny_corpus, cfg)
        empty = {
            gid: [type(s)(s.patch_index, (), s.capacity) for s in sets]
            for gid, sets in frozen.label_sets.items()
        }
        frozen_empty = FrozenStack(
            lm=frozen.lm, lm_word_features=frozen.lm_word_features, label_sets=empty
        )
        state = init_train_state(cfg, 8, 12)
        _, metrics = pretrain_step(batch_for_step(tiny_corpus, 0, cfg), state, cfg, frozen_empty)
        assert metrics["pairs"] == 0
        assert metrics["loss"] == metrics["loss_g"]

    def test_combined_gradient_is_sum_of_parts(self, tiny_corpus):
        # grad(L) must equal grad(L_g) + lambda * grad(L_a) computed separately
        lam = 0.7
        cfg = tiny_config(lambda_weight=lam)
        frozen = build_frozen_stack(tiny_corpus, cfg)
        state = init_train_state(cfg, 8, 12)
        batch = batch_for_step(tiny_corpus, 0, cfg)

        ref_g = _generation_only_grads(batch, state, frozen)
        ref_a = _alignment_only_grads(batch, state, cfg, frozen)
        combined_state, _ = pretrain_step(batch, state, cfg, frozen)

        state_g = adamw_update(state, _pad_log_tau(ref_g), cosine_lr(0, cfg), cfg)
        expected = {
            k: np.asarray(ref_g.get(k, 0.0)) + lam * np.asarray(ref_a.get(k, 0.0))
            for k in state.params
        }
        manual = adamw_update(state, expected, cosine_lr(0, cfg), cfg)
        for k in state.params:
            assert np.allclose(
                np.asarray(combined_state.params[k]), np.asarray(manual.params[k]), atol=1e-6
            )
        assert state_g is not None  # separate path exercised


def _pad_log_tau(grads):
    out = dict(grads)
    out.setdefault("log_tau", np.float64(0.0))
    return out


def _generation_only_grads(batch, state, frozen):
    """Reference generation-path gradients, reimplemented independently."""
    params = state.adapter_params()
    grads = {k: np.zeros_like(np.asarray(v), dtype=np.float64) for k, v in state.params.items() if k != "log_tau"}
    for grid, caption in batch:
        visual, cache = adapter_apply(params, grid.features)
        mi = build_model_input(visual, caption, frozen.lm.table)
        logits, lm_cache = frozen.lm.forward(mi)
        targets, mask = _caption_supervision(mi.boundary, caption, frozen.lm.vocab_size)
        lg = generation_loss(logits, targets, mask)
        dinputs = frozen.lm.backward_to_input(lm_cache, lg.gradients["logits"])
        pg, _ = adapter_backward_cached(params, cache, dinputs[: mi.boundary])
        for k, g in pg.items():
            grads[k] += g / len(batch)
    return grads


def _alignment_only_grads(batch, state, cfg, frozen):
    from sea.losses import alignment_loss
    from sea.rng import Rng
    from sea.sampling import build_alignment_batch

    params = state.adapter_params()
    rng = Rng(cfg.seed).stream("train", state.step)
    pairs = build_alignment_batch(
        [g for g, _ in batch], [frozen.label_sets[g.image_id] for g, _ in batch],
        cfg.window_k, rng,
    )
    if not pairs:
        return {}
    x = np.stack([p.feature for p in pairs])
    visual, cache = adapter_apply(params, x)
    la = alignment_loss(visual, frozen.lm_word_features[[p.word_id for p in pairs]], state.temperature())
    pg, _ = adapter_backward_cached(params, cache, la.gradients["visual_tokens"])
    pg["log_tau"] = la.gradients["log_tau"]
    return pg


class TestRunPretraining:
    def test_empty_dataset(self, tiny_corpus, tmp_path):
        empty = generate_synthetic_corpus(
            SyntheticCorpusSpec(vocab_size=4, d_v=4, d_llm=8, grid_height=2,
                                grid_width=2, images=1, noise_sigma=0.0, seed=1)
        )
        empty.grids = []
        with pytest.raises(EmptyDatasetError):
            run_pretraining(tiny_config(), empty, tmp_path / "run")

    def test_zero_steps_checkpoint_equals_init(self, tiny_corpus, tmp_path):
        cfg = tiny_config(total_steps=0, warmup_steps=0)
        state, ckpt = run_pretraining(cfg, tiny_corpus, tmp_path / "run")
        init = init_train_state(cfg, 8, 12)
        loaded = load_checkpoint(ckpt, cfg.adapter_arch)
        assert loaded.step == 0
        for k in init.params:
            assert np.array_equal(np.asarray(loaded.params[k]), np.asarray(init.params[k]))

    def test_rerun_reproduces_checkpoint_bytes(self, tiny_corpus, tmp_path):
        cfg = tiny_config()
        _, ckpt_a = run_pretraining(cfg, tiny_corpus, tmp_path / "a")
        _, ckpt_b = run_pretraining(cfg, tiny_corpus, tmp_path / "b")
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()
        metrics_a = (tmp_path / "a" / "metrics.jsonl").read_text()
        metrics_b = (tmp_path / "b" / "metrics.jsonl").read_text()
        assert metrics_a == metrics_b

    def test_resume_midpoint_equals_uninterrupted(self, tiny_corpus, tmp_path):
        cfg = tiny_config(total_steps=6, checkpoint_every=3)
        _, final_full = run_pretraining(cfg, tiny_corpus, tmp_path / "full")
        mid = tmp_path / "full" / "ckpt_000003.sea"
        assert mid.exists()
        _, final_resumed = run_pretraining(
            cfg, tiny_corpus, tmp_path / "resumed", resume_from=mid
        )
        assert final_full.read_bytes() == final_resumed.read_bytes()

    def test_lambda_zero_matches_generation_only_loop(self, tiny_corpus, tmp_path):
        cfg = tiny_config(lambda_weight=0.0, total_steps=4)
        state, _ = run_pretraining(cfg, tiny_corpus, tmp_path / "lz")

        # independent generation-only loop: never touches the alignment path
        frozen = build_frozen_stack(tiny_corpus, cfg)
        manual = init_train_state(cfg, 8, 12)
        for step in range(cfg.total_steps):
            batch = batch_for_step(tiny_corpus, step, cfg)
            grads = _pad_log_tau(_generation_only_grads(batch, manual, frozen))
            manual = adamw_update(manual, grads, cosine_lr(step, cfg), cfg)
        for k in state.params:
            assert np.asarray(state.params[k]).tobytes() == np.asarray(manual.params[k]).tobytes()

    def test_frozen_components_unchanged(self, tiny_corpus, tmp_path):
        cfg = tiny_config(total_steps=3)
        frozen = build_frozen_stack(tiny_corpus, cfg)
        before = frozen.content_hash(tiny_corpus.grids)
        run_pretraining(cfg, tiny_corpus, tmp_path / "run")
        assert frozen.content_hash(tiny_corpus.grids) == before

    def test_metrics_log_schema(self, tiny_corpus, tmp_path):
        cfg = tiny_config(total_steps=2)
        run_pretraining(cfg, tiny_corpus, tmp_path / "run")
        lines = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 2
        record = json.loads(lines[0])
        assert set(record) == {"step", "loss", "loss_g", "loss_a", "tau", "lr", "pairs"}


class TestCheckpointIO:
    def test_round_trip(self, tiny_corpus, tmp_path):
        cfg = tiny_config()
        state = init_train_state(cfg, 8, 12)
        path = tmp_path / "s.sea"
        save_checkpoint(path, state)
        back = load_checkpoint(path, cfg.adapter_arch)
        assert back.step == state.step
        for group in ("params", "m", "v"):
            for k, v in getattr(state, group).items():
                assert np.array_equal(np.asarray(getattr(back, group)[k]), np.asarray(v))
