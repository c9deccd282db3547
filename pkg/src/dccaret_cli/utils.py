# #########################################################################
# Copyright (c) 2022, UChicago Argonne, LLC. All rights reserved.         #
#                                                                         #
# Copyright 2022. UChicago Argonne, LLC. This software was produced       #
# under U.S. Government contract DE-AC02-06CH11357 for Argonne National   #
# Laboratory (ANL), which is operated by UChicago Argonne, LLC for the    #
# U.S. Department of Energy. The U.S. Government has rights to use,       #
# reproduce, and distribute this software.  NEITHER THE GOVERNMENT NOR    #
# UChicago Argonne, LLC MAKES ANY WARRANTY, EXPRESS OR IMPLIED, OR        #
# ASSUMES ANY LIABILITY FOR THE USE OF THIS SOFTWARE.  If software is     #
# modified to produce derivative works, such modified software should     #
# be clearly marked, so as not to confuse it with the version available   #
# from ANL.                                                               #
#                                                                         #
# Additionally, redistribution and use in source and binary forms, with   #
# or without modification, are permitted provided that the following      #
# conditions are met:                                                     #
#                                                                         #
#     * Redistributions of source code must retain the above copyright    #
#       notice, this list of conditions and the following disclaimer.     #
#                                                                         #
#     * Redistributions in binary form must reproduce the above copyright #
#       notice, this list of conditions and the following disclaimer in   #
#       the documentation and/or other materials provided with the        #
#       distribution.                                                     #
#                                                                         #
#     * Neither the name of UChicago Argonne, LLC, Argonne National       #
#       Laboratory, ANL, the U.S. Government, nor the names of its        #
#       contributors may be used to endorse or promote products derived   #
#       from this software without specific prior written permission.     #
#                                                                         #
# THIS SOFTWARE IS PROVIDED BY UChicago Argonne, LLC AND CONTRIBUTORS     #
# "AS IS" AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT       #
# LIMITED TO, THE IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS       #
# FOR A PARTICULAR PURPOSE ARE DISCLAIMED. IN NO EVENT SHALL UChicago     #
# Argonne, LLC OR CONTRIBUTORS BE LIABLE FOR ANY DIRECT, INDIRECT,        #
# INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL DAMAGES (INCLUDING,    #
# BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR SERVICES;        #
# LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER        #
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT      #
# LIABILITY, OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN       #
# ANY WAY OUT OF THE USE OF THIS SOFTWARE, EVEN IF ADVISED OF THE         #
# POSSIBILITY OF SUCH DAMAGE.                                             #
# #########################################################################

import io
import os
import zlib
import struct
import hashlib
import datetime

import yaml
import numpy as np

from dccaret_cli import log
from dccaret_cli.errors import FormatError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['BinaryWriter', 'BinaryReader', 'crc32', 'sha256_file', 'atomic_write',
           'read_file', 'check_magic', 'save_history']

_U8 = struct.Struct('<B')
_U16 = struct.Struct('<H')
_U32 = struct.Struct('<I')
_U64 = struct.Struct('<Q')
_F64 = struct.Struct('<d')


def crc32(data):
    return zlib.crc32(data) & 0xffffffff


def sha256_file(fname):
    """Hex SHA-256 digest of a file, read in 1 MiB chunks."""
    digest = hashlib.sha256()
    with open(fname, 'rb') as fid:
        for chunk in iter(lambda: fid.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


class BinaryWriter():
    '''
    Little-endian encoder for the DCCK, DCIX and MVDS file formats.
    '''

    def __init__(self):
        self._buf = io.BytesIO()

    def raw(self, data):
        self._buf.write(data)

    def u8(self, value):
        self._buf.write(_U8.pack(value))

    def u16(self, value):
        self._buf.write(_U16.pack(value))

    def u32(self, value):
        self._buf.write(_U32.pack(value))

    def u64(self, value):
        self._buf.write(_U64.pack(value))

    def f64(self, value):
        self._buf.write(_F64.pack(value))

    def string(self, text):
        data = text.encode('utf-8')
        self.u32(len(data))
        self._buf.write(data)

    def shape(self, shape):
        self.u8(len(shape))
        for dim in shape:
            self.u32(dim)

    def tensor(self, array, dtype='<f8'):
        """Rank, dims and the C-ordered payload of *array*."""
        array = np.ascontiguousarray(array, dtype=dtype)
        self.shape(array.shape)
        self._buf.write(array.tobytes())

    def block(self, payload):
        """Length-prefixed payload followed by its CRC32."""
        self.u64(len(payload))
        self._buf.write(payload)
        self.u32(crc32(payload))

    def getvalue(self):
        return self._buf.getvalue()


class BinaryReader():
    '''
    Decoder matching :class:`BinaryWriter`. Any short read raises
    :class:`FormatError` naming *what* was being read.
    '''

    def __init__(self, data, what='file'):
        self._data = memoryview(data)
        self._pos = 0
        self.what = what

    @property
    def pos(self):
        return self._pos

    def remaining(self):
        return len(self._data) - self._pos

    def take(self, n):
        if n < 0 or self._pos + n > len(self._data):
            raise FormatError('%s is truncated (wanted %d bytes at offset %d, %d left)'
                              % (self.what, n, self._pos, self.remaining()))
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def _unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))[0]

    def u8(self):
        return self._unpack(_U8)

    def u16(self):
        return self._unpack(_U16)

    def u32(self):
        return self._unpack(_U32)

    def u64(self):
        return self._unpack(_U64)

    def f64(self):
        return self._unpack(_F64)

    def string(self):
        n = self.u32()
        try:
            return bytes(self.take(n)).decode('utf-8')
        except UnicodeDecodeError as e:
            raise FormatError('%s holds invalid UTF-8 text: %s' % (self.what, e))

    def shape(self):
        rank = self.u8()
        return tuple(self.u32() for _ in range(rank))

    def tensor(self, dtype='<f8'):
        shape = self.shape()
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        chunk = self.take(count * dtype.itemsize)
        return np.frombuffer(chunk, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))

    def block(self, name='block'):
        """Payload of a block written by :meth:`BinaryWriter.block`, CRC checked."""
        n = self.u64()
        payload = bytes(self.take(n))
        stored = self.u32()
        if crc32(payload) != stored:
            raise FormatError('%s: checksum failure in %s section' % (self.what, name))
        return payload

    def expect_end(self):
        if self.remaining():
            raise FormatError('%s has %d trailing bytes' % (self.what, self.remaining()))


def check_magic(reader, magic, versions):
    """Validate *magic* and return the format version read after it."""
    found = bytes(reader.take(len(magic)))
    if found != magic:
        raise FormatError('%s: bad magic %r (expected %r)' % (reader.what, found, magic))
    version = reader.u16()
    if version not in versions:
        raise FormatError('%s: unsupported format version %d' % (reader.what, version))
    return version


def read_file(fname):
    try:
        with open(fname, 'rb') as fid:
            return fid.read()
    except FileNotFoundError:
        raise FormatError('No such file: %s' % fname)


def atomic_write(fname, data):
    """Write *data* to a sibling temp file and move it over *fname*."""
    tmp = '%s.tmp' % fname
    try:
        with open(tmp, 'wb') as fid:
            fid.write(data)
        os.replace(tmp, fname)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def save_history(history_file, entry):
    """Append *entry* (plus a timestamp) to the YAML run history."""
    entry = dict(entry)
    entry.setdefault('date', datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S'))
    history = []
    if os.path.exists(history_file):
        try:
            with open(history_file) as f:
                history = yaml.safe_load(f) or []
        except yaml.YAMLError:
            log.warning('Could not parse existing %s, starting fresh' % history_file)
            history = []
    history.append(entry)
    with open(history_file, 'w') as f:
        yaml.safe_dump(history, f, default_flow_style=False, allow_unicode=True)
    log.info('History saved to %s' % history_file)
