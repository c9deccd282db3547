import numpy as np
import pytest

from dccaret_cli import datagen
from dccaret_cli import encoders
from dccaret_cli import trainer
from dccaret_cli.__main__ import main


# small image-like views that the desk preset can still pool twice
SMALL_X = (1, 8, 16)
SMALL_Y = (1, 12, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def small_snippets():
    return datagen.gen_nonlinear_snippets(10, 20, latent_dim=3, noise=0.1, seed=3,
                                          shape_x=SMALL_X, shape_y=SMALL_Y, textures=6,
                                          split_pieces=(6, 2, 2))


@pytest.fixture(scope='session')
def duplicate_snippets():
    """Identical views: one map for both, no noise."""
    return datagen.gen_nonlinear_snippets(10, 20, latent_dim=3, noise=0.0, seed=5,
                                          shape_x=SMALL_X, shape_y=SMALL_X, textures=6,
                                          split_pieces=(6, 2, 2), shared_map=True)


@pytest.fixture(scope='session')
def untrained_checkpoint(small_snippets):
    cfg = trainer.TrainConfig(batch_size=40, epochs=0, h=4, encoder_x='desk', encoder_y='desk')
    return trainer.train(small_snippets, cfg)


@pytest.fixture(scope='session')
def duplicate_checkpoint(duplicate_snippets):
    """Checkpoint whose two encoders are the same network."""
    cfg = trainer.TrainConfig(batch_size=40, epochs=0, h=4, encoder_x='desk', encoder_y='desk')
    enc_x = encoders.init('desk', SMALL_X, 4, seed=11)
    enc_y = encoders.init('desk', SMALL_X, 4, seed=11)
    return trainer.train(duplicate_snippets, cfg, encoder_x=enc_x, encoder_y=enc_y)


@pytest.fixture
def cli(tmp_path, capsys):
    """Run the command line in-process with logs, history and config kept in tmp_path.

    Returns ``(exit_code, stdout)``.
    """
    def run(*argv):
        argv = [str(a) for a in argv]
        argv += ['--logs-home', str(tmp_path / 'logs'),
                 '--history-file', str(tmp_path / 'history.yaml'),
                 '--config', str(tmp_path / 'dccaret.conf')]
        capsys.readouterr()
        try:
            main(argv)
            code = 0
        except SystemExit as e:
            code = e.code if isinstance(e.code, int) else 1
        return code, capsys.readouterr().out
    return run
