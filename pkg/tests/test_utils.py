import argparse

import numpy as np
import pytest
import yaml

from dccaret_cli import config
from dccaret_cli import utils
from dccaret_cli.errors import FormatError


class TestBinary:

    def test_block_and_tensor(self):
        inner = utils.BinaryWriter()
        inner.string('desk')
        inner.tensor(np.arange(6.0).reshape(2, 3))
        w = utils.BinaryWriter()
        w.raw(b'TEST')
        w.u16(1)
        w.block(inner.getvalue())

        r = utils.BinaryReader(w.getvalue(), 'sample')
        assert utils.check_magic(r, b'TEST', (1, )) == 1
        body = utils.BinaryReader(r.block('body'), 'sample [body]')
        assert body.string() == 'desk'
        np.testing.assert_array_equal(body.tensor(), np.arange(6.0).reshape(2, 3))
        body.expect_end()
        r.expect_end()

    def test_crc_mismatch_names_section(self):
        w = utils.BinaryWriter()
        w.block(b'payload')
        data = bytearray(w.getvalue())
        data[9] ^= 0x01
        with pytest.raises(FormatError, match='body'):
            utils.BinaryReader(bytes(data), 'sample').block('body')

    def test_truncation(self):
        with pytest.raises(FormatError, match='truncated'):
            utils.BinaryReader(b'\x01\x00', 'sample').u32()

    def test_trailing_bytes(self):
        r = utils.BinaryReader(b'\x01\x02', 'sample')
        r.u8()
        with pytest.raises(FormatError, match='trailing'):
            r.expect_end()

    def test_wrong_version(self):
        w = utils.BinaryWriter()
        w.raw(b'TEST')
        w.u16(7)
        with pytest.raises(FormatError, match='version'):
            utils.check_magic(utils.BinaryReader(w.getvalue()), b'TEST', (1, ))


class TestFiles:

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        fname = tmp_path / 'out.bin'
        utils.atomic_write(fname, b'abc')
        assert fname.read_bytes() == b'abc'
        assert list(tmp_path.iterdir()) == [fname]

    def test_sha256(self, tmp_path):
        fname = tmp_path / 'out.bin'
        fname.write_bytes(b'abc')
        assert utils.sha256_file(fname) == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'

    def test_history_appends(self, tmp_path):
        fname = tmp_path / 'history.yaml'
        utils.save_history(str(fname), {'command': 'train'})
        utils.save_history(str(fname), {'command': 'evaluate'})
        history = yaml.safe_load(fname.read_text())
        assert [e['command'] for e in history] == ['train', 'evaluate']
        assert 'date' in history[0]

    def test_history_recovers_from_unreadable_file(self, tmp_path):
        fname = tmp_path / 'history.yaml'
        fname.write_text('- [unbalanced\n')
        utils.save_history(str(fname), {'command': 'index'})
        assert yaml.safe_load(fname.read_text())[0]['command'] == 'index'


class TestConfig:

    def test_write_defaults_and_read_back(self, tmp_path):
        fname = str(tmp_path / 'dccaret.conf')
        config.write(fname)
        values = config.config_to_list(fname, ('train', ))
        assert '--epochs=30' in values
        assert '--lr0=0.1' in values
        # required options without a default stay commented out
        assert not any(v.startswith('--data=') for v in values)

    def test_write_args_only_to_given_sections(self, tmp_path):
        fname = str(tmp_path / 'run.conf')
        args = argparse.Namespace(epochs=3, out='m.dcck', seed=5)
        config.write(fname, args, sections=('general', 'train'))
        assert '--epochs=3' in config.config_to_list(fname, ('train', ))
        assert '--seed=5' in config.config_to_list(fname, ('general', ))
        assert '--out=m.dcck' not in config.config_to_list(fname, ('gen-data', ))

    def test_missing_file(self, tmp_path):
        assert config.config_to_list(str(tmp_path / 'nope.conf')) == []

    @pytest.mark.parametrize('argv, expected', [
        (['train', '--config', 'a.conf'], 'a.conf'),
        (['train', '--config=b.conf'], 'b.conf'),
        (['train'], config.CONFIG_FILE_NAME),
    ])
    def test_get_config_name(self, argv, expected):
        assert config.get_config_name(argv) == expected
