import pytest
import torch

from pxrec.corpus import generate_synthetic_corpus, load_corpus, split_dataset
from pxrec.decoding import generate_corpus
from pxrec.lm import LmConfig
from pxrec.model import ExplanationModel
from pxrec.mtl import joint_loss_positive
from pxrec.trainer import (CheckpointError, EarlyStopper, TrainConfig,
                           TrainingError, gradient_check, load_checkpoint,
                           save_checkpoint, train, validate)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "c.tsv"
    generate_synthetic_corpus(path, 15, 15, 120, seed=21)
    records, features = load_corpus(path)
    return records, features


def tiny_config(**overrides):
    defaults = dict(batch_size=16, max_epochs=3, patience=5, seed=0,
                    embedding_dim=16, n_layers=1, n_heads=2, ff_dim=32,
                    max_seq_len=16, learning_rate=0.003)
    defaults.update(overrides)
    return TrainConfig(**defaults)


class TestTrainConfig:
    def test_paper_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 0.001
        assert config.batch_size == 128
        assert config.max_epochs == 50
        assert config.patience == 5

    @pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0),
                                        dict(max_epochs=0),
                                        dict(patience=0)])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config"):
            TrainConfig.from_dict({"learnign_rate": 0.1})


class TestEarlyStopper:
    def test_patience_arithmetic(self):
        # monitor sequence [3,2,2,2,2,2,2]: stop after the 7th epoch,
        # best checkpoint from epoch 2
        stopper = EarlyStopper(patience=5)
        stopped_at = None
        for epoch, value in enumerate([3, 2, 2, 2, 2, 2, 2], start=1):
            stopper.update(value)
            if stopper.should_stop:
                stopped_at = epoch
                break
        assert stopped_at == 7
        assert stopper.best_step == 2
        assert stopper.best == 2

    def test_improvement_resets_patience(self):
        stopper = EarlyStopper(patience=2)
        for value in [5, 5, 4, 4]:
            stopper.update(value)
        assert not stopper.should_stop


class TestTrainLoop:
    def test_log_structure_and_determinism(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        a = train(tiny_config(), records, split)
        b = train(tiny_config(), records, split)
        assert a.log == b.log
        assert len(a.log) == 3
        for entry in a.log:
            assert set(entry) == {"epoch", "train_loss", "val_loss", "L_S",
                                  "L_R", "lambda_S", "lambda_R"}

    def test_early_stop_bound(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        result = train(tiny_config(max_epochs=40, patience=2), records, split)
        best_epoch = result.checkpoint.epoch
        # never more than best-epoch + patience epochs, nor more than max
        assert len(result.log) <= best_epoch + 2
        assert len(result.log) <= 40

    def test_best_checkpoint_property(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        result = train(tiny_config(max_epochs=8), records, split)
        best = result.checkpoint.best_val_loss
        assert best == min(e["val_loss"] for e in result.log)


class TestValidate:
    def test_empty_returns_none(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        result = train(tiny_config(max_epochs=1), records, split)
        model = result.checkpoint.build_model()
        assert validate(model, result.checkpoint.config, [],
                        result.checkpoint.vocab, {}, {}) is None

    def test_components_recombine_to_joint(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        result = train(tiny_config(max_epochs=2), records, split)
        ckpt = result.checkpoint
        model = ckpt.build_model()
        val_records = [records[i] for i in split.validation]
        out = validate(model, ckpt.config, val_records, ckpt.vocab,
                       ckpt.user_index, ckpt.item_index)
        recombined = joint_loss_positive(
            out["loss_s"], out["loss_r"] * ckpt.config.rating_loss_scale,
            model.task_weights.weight_s.detach(),
            model.task_weights.weight_r.detach(),
        )
        assert out["joint"] == pytest.approx(float(recombined), abs=1e-9)

    def test_validation_on_training_data_matches(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        result = train(tiny_config(max_epochs=2), records, split)
        ckpt = result.checkpoint
        model = ckpt.build_model()
        train_records = [records[i] for i in split.train]
        a = validate(model, ckpt.config, train_records, ckpt.vocab,
                     ckpt.user_index, ckpt.item_index)
        b = validate(model, ckpt.config, train_records, ckpt.vocab,
                     ckpt.user_index, ckpt.item_index)
        assert a == b


class TestCheckpointRoundTrip:
    def test_bit_exact_tensors_and_metadata(self, corpus, tmp_path):
        records, _ = corpus
        split = split_dataset(records, seed=2)
        result = train(tiny_config(max_epochs=1), records, split)
        path = tmp_path / "model.pxr"
        save_checkpoint(result.checkpoint, path)
        loaded = load_checkpoint(path)
        assert loaded.config == result.checkpoint.config
        assert loaded.vocab == result.checkpoint.vocab
        assert loaded.user_ids == result.checkpoint.user_ids
        assert loaded.item_ids == result.checkpoint.item_ids
        assert loaded.epoch == result.checkpoint.epoch
        assert set(loaded.tensors) == set(result.checkpoint.tensors)
        for name, arr in result.checkpoint.tensors.items():
            assert arr.tobytes() == loaded.tensors[name].tobytes()

    def test_generations_identical_after_reload(self, corpus, tmp_path):
        records, _ = corpus
        split = split_dataset(records, seed=2)
        result = train(tiny_config(max_epochs=1), records, split)
        path = tmp_path / "model.pxr"
        save_checkpoint(result.checkpoint, path)
        loaded = load_checkpoint(path)
        pairs = [(k % 15, (k * 3) % 15) for k in range(10)]
        original = generate_corpus(result.checkpoint.build_model(),
                                   result.checkpoint.vocab, pairs)
        reloaded = generate_corpus(loaded.build_model(), loaded.vocab, pairs)
        assert original == reloaded

    def test_corrupted_magic(self, corpus, tmp_path):
        records, _ = corpus
        split = split_dataset(records, seed=2)
        result = train(tiny_config(max_epochs=1), records, split)
        path = tmp_path / "model.pxr"
        save_checkpoint(result.checkpoint, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, corpus, tmp_path):
        records, _ = corpus
        split = split_dataset(records, seed=2)
        result = train(tiny_config(max_epochs=1), records, split)
        path = tmp_path / "model.pxr"
        save_checkpoint(result.checkpoint, path)
        data = path.read_bytes()
        path.write_bytes(data[:-100])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_version_mismatch(self, corpus, tmp_path):
        records, _ = corpus
        split = split_dataset(records, seed=2)
        ckpt = train(tiny_config(max_epochs=1), records, split).checkpoint
        ckpt.version = 99
        path = tmp_path / "model.pxr"
        save_checkpoint(ckpt, path)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)


class TestGradientCheck:
    def test_quadratic_toy(self):
        class Toy(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.theta = torch.nn.Parameter(torch.tensor(1.5, dtype=torch.float64))

        toy = Toy()
        report = gradient_check(toy, lambda: (toy.theta - 0.5) ** 2, epsilon=1e-6)
        assert report["theta"] < 1e-8

    def test_requires_double_precision(self):
        config = LmConfig(vocab_size=8, hidden_dim=8, n_layers=1, n_heads=2,
                          ff_dim=16, max_len=8)
        model = ExplanationModel(2, 2, config)
        with pytest.raises(ValueError, match="float64"):
            gradient_check(model, lambda: torch.tensor(0.0))

    def test_weight_parameters_match_closed_form(self):
        from pxrec.mtl import positive_weight_grad

        torch.manual_seed(0)
        config = LmConfig(vocab_size=8, hidden_dim=8, n_layers=1, n_heads=2,
                          ff_dim=16, max_len=8)
        model = ExplanationModel(2, 2, config).double()
        with torch.no_grad():
            model.task_weights.weight_s.fill_(0.8)
            model.task_weights.weight_r.fill_(1.3)

        def loss_fn():
            ls, lr = model.task_losses([0, 1], [1, 0], [4.0, 2.0], [[4, 5], [6]])
            return joint_loss_positive(ls, lr, model.task_weights.weight_s,
                                       model.task_weights.weight_r)

        model.zero_grad()
        loss_fn().backward()
        with torch.no_grad():
            ls, lr = model.task_losses([0, 1], [1, 0], [4.0, 2.0], [[4, 5], [6]])
        expected_s = positive_weight_grad(float(ls), 0.8)
        expected_r = positive_weight_grad(float(lr), 1.3)
        assert float(model.task_weights.weight_s.grad) == pytest.approx(expected_s, rel=1e-6)
        assert float(model.task_weights.weight_r.grad) == pytest.approx(expected_r, rel=1e-6)


class TestAbort:
    def test_non_finite_loss_names_epoch_and_batch(self, corpus):
        records, _ = corpus
        split = split_dataset(records, seed=1)
        # an infinite rating-loss multiplier makes the first joint loss
        # non-finite deterministically
        config = tiny_config(rating_loss_scale=float("inf"))
        with pytest.raises(TrainingError, match="epoch 1, batch 0"):
            train(config, records, split)
