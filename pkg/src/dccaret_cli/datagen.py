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

"""Synthetic paired-view datasets and the MVDS dataset file.

Two generators stand in for rendered sheet snippets and spectrogram
excerpts:

* :func:`gen_linear_gaussian` - flat vector views with population canonical
  correlations known in closed form (CCA oracle).
* :func:`gen_nonlinear_snippets` - image-like views driven by a smooth
  per-piece latent curve through two fixed random nonlinear maps, so a
  learnable cross-modal correspondence exists.

Views are stored as float32 (in memory and on disk) and promoted to
float64 batch by batch by the encoders. Both views are normalized to zero
mean and unit variance with statistics of the training split.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from dccaret_cli import log
from dccaret_cli import utils
from dccaret_cli.errors import DimensionError, EmptyDatasetError, FormatError, RangeError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['MultiViewDataset', 'SPLITS', 'IMAGE_SHAPE', 'SPECTROGRAM_SHAPE',
           'gen_linear_gaussian', 'gen_nonlinear_snippets', 'save_dataset', 'load_dataset']

SPLITS = ('train', 'valid', 'test')
# sheet snippet 40 x 100 pixels; spectrogram excerpt of 100 frames with 136 bins
IMAGE_SHAPE = (1, 40, 100)
SPECTROGRAM_SHAPE = (1, 136, 100)

DATASET_MAGIC = b'MVDS'
DATASET_VERSION = 1
_META_DTYPE = np.dtype([('piece', '<u8'), ('position', '<u8'), ('split', 'u1')])
_CHUNK = 512


@dataclass
class MultiViewDataset:
    view_x: np.ndarray
    view_y: np.ndarray
    piece_ids: np.ndarray
    positions: np.ndarray
    splits: np.ndarray
    normalization: dict = field(default_factory=dict)
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.view_x.shape[0]
        for name in ('view_y', 'piece_ids', 'positions', 'splits'):
            if getattr(self, name).shape[0] != n:
                raise DimensionError('%s has %d samples, view_x has %d' % (name, getattr(self, name).shape[0], n))

    @property
    def n(self):
        return self.view_x.shape[0]

    @property
    def shape_x(self):
        return tuple(self.view_x.shape[1:])

    @property
    def shape_y(self):
        return tuple(self.view_y.shape[1:])

    def split_indices(self, name):
        if name not in SPLITS:
            raise RangeError('unknown split %r, expected one of %s' % (name, ', '.join(SPLITS)))
        return np.flatnonzero(self.splits == SPLITS.index(name))

    def subset(self, indices):
        indices = np.asarray(indices)
        return MultiViewDataset(self.view_x[indices], self.view_y[indices], self.piece_ids[indices],
                                self.positions[indices], self.splits[indices],
                                dict(self.normalization), dict(self.descriptor))


def _check_split_counts(n_units, split_counts):
    if split_counts is None:
        n_test = n_units // 5
        n_valid = n_units // 5
        return n_units - n_valid - n_test, n_valid, n_test
    counts = tuple(int(c) for c in split_counts)
    if len(counts) != 3 or min(counts) < 0 or sum(counts) != n_units:
        raise RangeError('split counts %s must be three nonnegative numbers summing to %d' % (counts, n_units))
    return counts


def _split_codes(unit_counts, repeat=1):
    codes = np.repeat(np.arange(3, dtype=np.uint8), unit_counts)
    return np.repeat(codes, repeat)


def _normalize(views, train_mask):
    """Scale *views* in place to zero mean / unit variance over the train rows."""
    rows = np.flatnonzero(train_mask) if np.any(train_mask) else np.arange(views.shape[0])
    total = 0.0
    total_sq = 0.0
    count = 0
    for i in range(0, rows.size, _CHUNK):
        chunk = views[rows[i:i + _CHUNK]].astype(np.float64)
        total += chunk.sum()
        total_sq += np.square(chunk).sum()
        count += chunk.size
    mean = total / count
    std = float(np.sqrt(max(total_sq / count - mean * mean, 0.0)))
    if std == 0.0:
        std = 1.0
    for i in range(0, views.shape[0], _CHUNK):
        views[i:i + _CHUNK] = ((views[i:i + _CHUNK].astype(np.float64) - mean) / std).astype(np.float32)
    return float(mean), std


def _random_orthonormal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def gen_linear_gaussian(n, h, corrs, d_x, d_y, seed, split_counts=None):
    """Flat views whose population canonical correlations are exactly *corrs*.

    Each shared latent z_i drives channel i of both views as
    ``sqrt(c_i) z_i + sqrt(1 - c_i) e_i`` (independent noise e), which
    gives corr(x_i, y_i) = c_i; the remaining channels are pure noise and
    each view is rotated by a random orthonormal matrix.
    """
    corrs = np.asarray(corrs, dtype=np.float64).ravel()
    if n < 1:
        raise EmptyDatasetError('cannot generate an empty dataset')
    if corrs.size != h:
        raise RangeError('expected %d correlations, got %d' % (h, corrs.size))
    if h > min(d_x, d_y):
        raise RangeError('h=%d exceeds view dimensions (%d, %d)' % (h, d_x, d_y))
    if np.any(corrs < 0) or np.any(corrs >= 1):
        raise RangeError('correlations must lie in [0, 1), got %s' % corrs.tolist())

    rng = np.random.default_rng(seed)
    a = np.sqrt(corrs)
    b = np.sqrt(1.0 - corrs)
    z = rng.standard_normal((n, h))
    x = np.hstack([a * z + b * rng.standard_normal((n, h)), rng.standard_normal((n, d_x - h))])
    y = np.hstack([a * z + b * rng.standard_normal((n, h)), rng.standard_normal((n, d_y - h))])
    x = x @ _random_orthonormal(rng, d_x).T
    y = y @ _random_orthonormal(rng, d_y).T

    if split_counts is None:
        n_train = int(round(0.8 * n))
        n_valid = int(round(0.1 * n))
        split_counts = (n_train, n_valid, n - n_train - n_valid)
    splits = _split_codes(_check_split_counts(n, split_counts))

    view_x = x.astype(np.float32)
    view_y = y.astype(np.float32)
    mean_x, std_x = _normalize(view_x, splits == 0)
    mean_y, std_y = _normalize(view_y, splits == 0)
    descriptor = {'kind': 'linear', 'seed': int(seed),
                  'params': {'n': int(n), 'h': int(h), 'corrs': corrs.tolist(),
                             'd_x': int(d_x), 'd_y': int(d_y), 'split_counts': list(split_counts)}}
    log.info('generated linear-Gaussian dataset: n=%d d_x=%d d_y=%d corrs=%s' % (n, d_x, d_y, corrs.tolist()))
    return MultiViewDataset(view_x, view_y, np.arange(n, dtype=np.int64), np.zeros(n, dtype=np.int64), splits,
                            {'mean_x': mean_x, 'std_x': std_x, 'mean_y': mean_y, 'std_y': std_y}, descriptor)


class _SnippetMap():
    '''
    Fixed random nonlinear map latent -> snippet: random projection, tanh,
    then projection onto a bank of random oriented gratings, reshaped to
    the snippet grid.
    '''

    def __init__(self, rng, latent_dim, textures, shape):
        self.shape = tuple(shape)
        c, h, w = self.shape
        self.w1 = rng.standard_normal((textures, latent_dim)) * (1.5 / np.sqrt(latent_dim))
        self.b1 = 0.3 * rng.standard_normal(textures)
        radius = rng.uniform(0.08, 0.4, size=textures)
        angle = rng.uniform(0.0, np.pi, size=textures)
        phase = rng.uniform(0.0, 2 * np.pi, size=(textures, c))
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing='ij')
        arg = (radius * np.sin(angle))[:, None, None] * yy + (radius * np.cos(angle))[:, None, None] * xx
        bank = np.sqrt(2.0) * np.cos(2 * np.pi * arg[:, None] + phase[:, :, None, None])
        self.bank = bank.reshape(textures, -1)

    def __call__(self, z):
        amplitude = 1.0 + np.tanh(z @ self.w1.T + self.b1)
        return (amplitude @ self.bank).reshape((z.shape[0],) + self.shape)


def _latent_curves(rng, n_positions, latent_dim, stride, harmonics=3):
    t = np.arange(n_positions) * stride / float(n_positions * stride)
    freq = rng.uniform(0.5, 3.0, size=(latent_dim, harmonics))
    phase = rng.uniform(0.0, 2 * np.pi, size=(latent_dim, harmonics))
    coef = rng.standard_normal((latent_dim, harmonics)) * np.sqrt(2.0 / harmonics)
    waves = np.sin(2 * np.pi * freq[None] * t[:, None, None] + phase[None])
    return np.sum(coef[None] * waves, axis=-1)


def gen_nonlinear_snippets(pieces, snippets_per_piece, latent_dim=4, noise=0.1, seed=0,
                           shape_x=IMAGE_SHAPE, shape_y=SPECTROGRAM_SHAPE, textures=16, stride=1,
                           split_pieces=None, shared_map=False):
    """Paired image-like snippets of *pieces* pieces.

    Per piece a smooth latent curve is sampled over snippet positions
    ``0, stride, 2*stride, ...``; each position's latent goes through one
    fixed map per view plus i.i.d. Gaussian noise of std *noise*. Pieces
    are assigned whole to train/valid/test (default 60/20/20 %).
    """
    shape_x = tuple(int(d) for d in shape_x)
    shape_y = tuple(int(d) for d in shape_y)
    if pieces < 1 or snippets_per_piece < 1:
        raise RangeError('pieces and snippets_per_piece must be at least 1')
    if latent_dim < 1 or textures < 1 or stride < 1:
        raise RangeError('latent_dim, textures and stride must be at least 1')
    if noise < 0:
        raise RangeError('noise must be nonnegative, got %r' % noise)
    if len(shape_x) != 3 or len(shape_y) != 3 or min(shape_x + shape_y) < 1:
        raise RangeError('snippet shapes must be (C, H, W) with positive sizes')
    if shared_map and shape_x != shape_y:
        raise RangeError('shared_map requires identical view shapes')
    counts = _check_split_counts(pieces, split_pieces)

    rng = np.random.default_rng(seed)
    map_x = _SnippetMap(rng, latent_dim, textures, shape_x)
    map_y = map_x if shared_map else _SnippetMap(rng, latent_dim, textures, shape_y)

    n = pieces * snippets_per_piece
    view_x = np.empty((n,) + shape_x, dtype=np.float32)
    view_y = np.empty((n,) + shape_y, dtype=np.float32)
    for p in range(pieces):
        z = _latent_curves(rng, snippets_per_piece, latent_dim, stride)
        rows = slice(p * snippets_per_piece, (p + 1) * snippets_per_piece)
        vx = map_x(z)
        vy = map_y(z)
        if noise > 0:
            vx = vx + noise * rng.standard_normal(vx.shape)
            vy = vy + noise * rng.standard_normal(vy.shape)
        view_x[rows] = vx
        view_y[rows] = vy

    splits = _split_codes(counts, snippets_per_piece)
    mean_x, std_x = _normalize(view_x, splits == 0)
    mean_y, std_y = _normalize(view_y, splits == 0)
    piece_ids = np.repeat(np.arange(pieces, dtype=np.int64), snippets_per_piece)
    positions = np.tile(np.arange(snippets_per_piece, dtype=np.int64) * stride, pieces)
    descriptor = {'kind': 'nonlinear', 'seed': int(seed),
                  'params': {'pieces': int(pieces), 'snippets_per_piece': int(snippets_per_piece),
                             'latent_dim': int(latent_dim), 'noise': float(noise),
                             'shape_x': list(shape_x), 'shape_y': list(shape_y), 'textures': int(textures),
                             'stride': int(stride), 'split_pieces': list(counts), 'shared_map': bool(shared_map)}}
    log.info('generated %d snippet pairs from %d pieces (train/valid/test pieces %s)' % (n, pieces, counts))
    return MultiViewDataset(view_x, view_y, piece_ids, positions, splits,
                            {'mean_x': mean_x, 'std_x': std_x, 'mean_y': mean_y, 'std_y': std_y}, descriptor)


def dataset_bytes(ds):
    header = utils.BinaryWriter()
    header.u32(ds.n)
    header.shape(ds.shape_x)
    header.shape(ds.shape_y)
    for key in ('mean_x', 'std_x', 'mean_y', 'std_y'):
        header.f64(ds.normalization.get(key, 0.0 if key.startswith('mean') else 1.0))
    header.string(json.dumps(ds.descriptor, sort_keys=True))

    meta = np.empty(ds.n, dtype=_META_DTYPE)
    meta['piece'] = ds.piece_ids
    meta['position'] = ds.positions
    meta['split'] = ds.splits

    w = utils.BinaryWriter()
    w.raw(DATASET_MAGIC)
    w.u16(DATASET_VERSION)
    w.block(header.getvalue())
    w.block(np.ascontiguousarray(ds.view_x, dtype='<f4').tobytes())
    w.block(np.ascontiguousarray(ds.view_y, dtype='<f4').tobytes())
    w.block(meta.tobytes())
    return w.getvalue()


def save_dataset(ds, fname):
    utils.atomic_write(fname, dataset_bytes(ds))
    log.info('Dataset saved to %s' % fname)


def _view_from_block(payload, n, shape, what):
    expected = n * int(np.prod(shape, dtype=np.int64)) * 4
    if len(payload) != expected:
        raise FormatError('%s holds %d bytes, expected %d' % (what, len(payload), expected))
    return np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape((n,) + shape)


def load_dataset(fname):
    what = str(fname)
    r = utils.BinaryReader(utils.read_file(fname), what)
    utils.check_magic(r, DATASET_MAGIC, (DATASET_VERSION,))
    header = utils.BinaryReader(r.block('header'), '%s [header]' % what)
    n = header.u32()
    shape_x = header.shape()
    shape_y = header.shape()
    normalization = {key: header.f64() for key in ('mean_x', 'std_x', 'mean_y', 'std_y')}
    try:
        descriptor = json.loads(header.string())
    except ValueError as e:
        raise FormatError('%s: bad generator descriptor: %s' % (what, e))
    header.expect_end()

    view_x = _view_from_block(r.block('view_x'), n, shape_x, '%s [view_x]' % what)
    view_y = _view_from_block(r.block('view_y'), n, shape_y, '%s [view_y]' % what)
    payload = r.block('metadata')
    r.expect_end()
    if len(payload) != n * _META_DTYPE.itemsize:
        raise FormatError('%s [metadata] holds %d bytes, expected %d' % (what, len(payload), n * _META_DTYPE.itemsize))
    meta = np.frombuffer(payload, dtype=_META_DTYPE)
    splits = meta['split'].astype(np.uint8)
    if n and splits.max() >= len(SPLITS):
        raise FormatError('%s [metadata] has an unknown split code' % what)
    return MultiViewDataset(view_x, view_y, meta['piece'].astype(np.int64), meta['position'].astype(np.int64),
                            splits, normalization, descriptor)
