import dataclasses
import os
import subprocess
import sys

import numpy as np
import pytest

from dccaret_cli import datagen
from dccaret_cli import encoders
from dccaret_cli import trainer
from dccaret_cli.errors import (DivergedError, EmptyDatasetError, FormatError, InsufficientSamplesError,
                                InvalidConfigError, NumericError)


SRC_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src')

RELOAD_SCRIPT = '''
import sys
import numpy as np
from dccaret_cli import trainer
ckpt = trainer.load_checkpoint(sys.argv[1])
np.save(sys.argv[3], ckpt.project('x', ckpt.encoder_x.encode(np.load(sys.argv[2]))))
'''


def _assert_refit_whitens(ckpt, ds):
    idx = ds.split_indices('train')
    px = ckpt.cca.project_x(ckpt.encoder_x.encode(ds.view_x, idx))
    py = ckpt.cca.project_y(ckpt.encoder_y.encode(ds.view_y, idx))
    np.testing.assert_allclose(np.var(px, axis=0, ddof=1), np.ones(ckpt.cca.k), atol=1e-3)
    np.testing.assert_allclose(np.var(py, axis=0, ddof=1), np.ones(ckpt.cca.k), atol=1e-3)
    cross = (px - px.mean(axis=0)).T @ (py - py.mean(axis=0)) / (idx.size - 1)
    np.testing.assert_allclose(cross, np.diag(ckpt.cca.corrs), atol=1e-3)


@pytest.fixture(scope='module')
def linear_ds():
    return datagen.gen_linear_gaussian(1000, 2, (0.8, 0.5), 6, 5, seed=4)


@pytest.fixture(scope='module')
def linear_cfg():
    return trainer.TrainConfig(batch_size=100, lr0=0.01, epochs=6, halve_every=3, h=2,
                               encoder_x='mlp', encoder_y='mlp', seed=3, validate_every=1)


class TestSchedule:

    def test_learning_rate_halves(self):
        assert trainer.learning_rate(0.1, 25, 0) == 0.1
        assert trainer.learning_rate(0.1, 25, 24) == 0.1
        assert trainer.learning_rate(0.1, 25, 25) == 0.05
        assert trainer.learning_rate(0.1, 25, 50) == 0.025

    def test_epoch_permutation(self):
        a = trainer.epoch_permutation(0, 3, 50)
        np.testing.assert_array_equal(a, trainer.epoch_permutation(0, 3, 50))
        np.testing.assert_array_equal(np.sort(a), np.arange(50))
        assert not np.array_equal(a, trainer.epoch_permutation(0, 4, 50))
        assert not np.array_equal(a, trainer.epoch_permutation(1, 3, 50))

    def test_zero_momentum_is_plain_sgd(self, rng):
        a = rng.standard_normal((6, 3))
        b = rng.standard_normal(6)
        params = {'w': np.zeros(3)}
        plain = np.zeros(3)
        opt = trainer.MomentumSGD(0.0)
        for _ in range(20):
            opt.step(params, {'w': a.T @ (a @ params['w'] - b)}, 0.05)
            plain = plain - 0.05 * (a.T @ (a @ plain - b))
        np.testing.assert_array_equal(params['w'], plain)

    def test_momentum_sgd(self):
        params = {'w': np.array([1.0, -2.0])}
        grads = {'w': np.array([0.5, 1.0])}
        opt = trainer.MomentumSGD(0.9)
        opt.step(params, grads, 0.1)
        np.testing.assert_allclose(params['w'], [0.95, -2.1])
        opt.step(params, grads, 0.1)
        np.testing.assert_allclose(params['w'], [1.0 - 2.9 * 0.05, -2.0 - 2.9 * 0.1])


class TestTrainConfig:

    def test_defaults(self):
        cfg = trainer.TrainConfig()
        assert (cfg.batch_size, cfg.lr0, cfg.momentum, cfg.halve_every) == (100, 0.1, 0.9, 25)
        assert (cfg.epochs, cfg.validate_every) == (30, 10)

    @pytest.mark.parametrize('kwargs', [
        {'h': 0}, {'batch_size': 5, 'h': 8}, {'lr0': 0.0}, {'momentum': 1.0},
        {'halve_every': 0}, {'epochs': -1}, {'eps': 0.0}, {'seed': -1}, {'validate_every': 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidConfigError):
            trainer.TrainConfig(**kwargs)


class TestTrain:

    def test_zero_epochs(self, untrained_checkpoint):
        assert untrained_checkpoint.history == []
        assert untrained_checkpoint.epoch == 0
        assert untrained_checkpoint.cca.k == 4
        assert set(untrained_checkpoint.normalization) == {'mean_x', 'std_x', 'mean_y', 'std_y'}

    def test_loss_decreases(self, linear_ds, linear_cfg):
        ckpt = trainer.train(linear_ds, linear_cfg)
        assert len(ckpt.history) == 6
        assert ckpt.history[-1].loss < ckpt.history[0].loss
        assert [rec.lr for rec in ckpt.history] == [0.01, 0.01, 0.01, 0.005, 0.005, 0.005]
        assert all(np.isfinite(rec.val_corr) for rec in ckpt.history)

    def test_validate_every(self, linear_ds, linear_cfg):
        ckpt = trainer.train(linear_ds, dataclasses.replace(linear_cfg, epochs=7, validate_every=3))
        checked = [rec.epoch for rec in ckpt.history if np.isfinite(rec.val_corr)]
        assert checked == [2, 5, 6]

    def test_threads_do_not_change_the_result(self, linear_ds, linear_cfg):
        cfg = dataclasses.replace(linear_cfg, epochs=2)
        a = trainer.checkpoint_bytes(trainer.train(linear_ds, cfg))
        b = trainer.checkpoint_bytes(trainer.train(linear_ds, cfg, nproc=4))
        assert a == b

    def test_refit_whitens_training_features(self, untrained_checkpoint, small_snippets, linear_ds, linear_cfg):
        _assert_refit_whitens(untrained_checkpoint, small_snippets)
        _assert_refit_whitens(trainer.train(linear_ds, dataclasses.replace(linear_cfg, epochs=2)), linear_ds)

    def test_deterministic(self, linear_ds, linear_cfg):
        a = trainer.checkpoint_bytes(trainer.train(linear_ds, linear_cfg))
        b = trainer.checkpoint_bytes(trainer.train(linear_ds, linear_cfg))
        assert a == b

    def test_identical_views_saturate(self):
        base = datagen.gen_linear_gaussian(1000, 3, (0.5, 0.5, 0.5), 6, 6, seed=9)
        ds = datagen.MultiViewDataset(base.view_x, base.view_x.copy(), base.piece_ids, base.positions,
                                      base.splits, base.normalization)
        cfg = trainer.TrainConfig(epochs=0, h=3, eps=1e-6, encoder_x='mlp', encoder_y='mlp')
        ckpt = trainer.train(ds, cfg, encoder_x=encoders.init('mlp', (6,), 3, seed=5),
                             encoder_y=encoders.init('mlp', (6,), 3, seed=5))
        assert trainer.evaluate_correlation(ckpt, ds, 'valid') > 3 - 1e-3

    def test_batch_larger_than_train_split(self, linear_ds):
        with pytest.raises(InsufficientSamplesError):
            trainer.train(linear_ds, trainer.TrainConfig(batch_size=900, epochs=1, h=2, encoder_x='mlp',
                                                         encoder_y='mlp'))

    def test_missing_split(self, linear_ds):
        ds = linear_ds.subset(linear_ds.split_indices('train'))
        with pytest.raises(EmptyDatasetError):
            trainer.train(ds, trainer.TrainConfig(epochs=1, h=2))

    def test_divergence(self, linear_ds, linear_cfg, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericError('view x features contains NaN or Inf')
        monkeypatch.setattr(trainer, 'dcca_loss', broken)
        with pytest.raises(DivergedError) as e:
            trainer.train(linear_ds, linear_cfg)
        assert (e.value.epoch, e.value.batch) == (0, 0)
        assert e.value.exit_code == 3


class TestCheckpoint:

    def test_save_load_save(self, tmp_path, linear_ds, linear_cfg):
        ckpt = trainer.train(linear_ds, dataclasses.replace(linear_cfg, epochs=2))
        fname = tmp_path / 'model.dcck'
        trainer.save_checkpoint(ckpt, fname)
        loaded = trainer.load_checkpoint(fname)
        assert trainer.checkpoint_bytes(loaded) == fname.read_bytes()
        assert loaded.config == ckpt.config
        assert loaded.history == ckpt.history
        assert loaded.normalization == ckpt.normalization
        x = linear_ds.view_x[:10]
        np.testing.assert_array_equal(loaded.encoder_x.encode(x), ckpt.encoder_x.encode(x))
        np.testing.assert_array_equal(loaded.cca.proj_y, ckpt.cca.proj_y)

    def test_reload_in_fresh_process(self, tmp_path, untrained_checkpoint, small_snippets):
        fname = tmp_path / 'model.dcck'
        trainer.save_checkpoint(untrained_checkpoint, fname)
        x = small_snippets.view_x[:9]
        np.save(tmp_path / 'x.npy', x)
        env = dict(os.environ)
        env['PYTHONPATH'] = os.pathsep.join(p for p in (SRC_DIR, env.get('PYTHONPATH')) if p)
        subprocess.run([sys.executable, '-c', RELOAD_SCRIPT, str(fname), str(tmp_path / 'x.npy'),
                        str(tmp_path / 'z.npy')], check=True, env=env)
        expected = untrained_checkpoint.project('x', untrained_checkpoint.encoder_x.encode(x))
        np.testing.assert_array_equal(np.load(tmp_path / 'z.npy'), expected)

    def test_corrupt_files(self, tmp_path, untrained_checkpoint):
        data = trainer.checkpoint_bytes(untrained_checkpoint)
        flipped = bytearray(data)
        flipped[len(data) // 2] ^= 0xff
        cases = {'flipped': bytes(flipped), 'truncated': data[:len(data) - 7],
                 'magic': b'XXXX' + data[4:], 'version': data[:4] + b'\x09\x00' + data[6:],
                 'trailing': data + b'\x00', 'empty': b''}
        for name, payload in cases.items():
            fname = tmp_path / name
            fname.write_bytes(payload)
            with pytest.raises(FormatError):
                trainer.load_checkpoint(fname)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            trainer.load_checkpoint(tmp_path / 'nope.dcck')


class TestEvaluateCorrelation:

    def test_bounded_by_h(self, untrained_checkpoint, small_snippets):
        corr = trainer.evaluate_correlation(untrained_checkpoint, small_snippets, 'test')
        assert 0.0 <= corr <= 4.0
