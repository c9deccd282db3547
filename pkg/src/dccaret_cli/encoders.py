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

"""View-specific feature mappings: small convolutional / dense networks in numpy.

An encoder is a list of :class:`LayerSpec` tokens::

    conv3-M   3x3 convolution, padding 1, M maps
    conv1-M   1x1 linear convolution, M maps
    bn        batch normalization (per channel / per feature)
    elu       exponential linear unit, alpha = 1
    mp2       2x2 max pooling, floor on odd sizes
    gap       global average pooling
    dense-U   fully connected layer with U units (flattens its input)

A valid configuration ends with ``gap`` or ``dense`` producing exactly
``h`` features and has no activation after its last linear layer.
Everything runs in float64 and the backward pass is exact for the
train-mode forward, batch-statistics terms of BN included.
Image batches come in as (B, C, H, W); the layers work on channels-last
copies so every convolution is a single matrix product.
"""

import itertools
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dccaret_cli.errors import DimensionError, InvalidConfigError, StateError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['LayerSpec', 'Encoder', 'ForwardCache', 'PRESETS', 'parse_config', 'format_config',
           'resolve_config', 'trace_shapes', 'init', 'forward', 'backward']

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
ELU_ALPHA = 1.0

LINEAR_KINDS = ('conv3', 'conv1', 'dense')
SIZED_KINDS = ('conv3', 'conv1', 'dense')
KINDS = ('conv3', 'conv1', 'bn', 'elu', 'mp2', 'gap', 'dense')


def _vgg_block(maps):
    return 'conv3-{0},bn,elu,conv3-{0},bn,elu,mp2'.format(maps)


PRESETS = {
    'desk': 'conv3-8,bn,elu,mp2,conv3-16,bn,elu,mp2,conv1-{h},bn,gap',
    'paper-table1': ','.join(_vgg_block(m) for m in (16, 32, 64, 64)) + ',conv1-{h},bn,gap',
    'mlp': 'dense-64,bn,elu,dense-{h}',
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    size: int = 0

    def __str__(self):
        return '%s-%d' % (self.kind, self.size) if self.kind in SIZED_KINDS else self.kind


def parse_config(text):
    """Parse a comma-separated layer list into :class:`LayerSpec` objects."""
    specs = []
    for token in (t.strip().lower() for t in text.split(',')):
        if not token:
            continue
        kind, _, size = token.partition('-')
        if kind not in KINDS:
            raise InvalidConfigError('unknown layer %r in encoder config' % token)
        if kind in SIZED_KINDS:
            try:
                size = int(size)
            except ValueError:
                raise InvalidConfigError('layer %r needs a positive size, e.g. %s-16' % (token, kind))
            if size < 1:
                raise InvalidConfigError('layer %r needs a positive size' % token)
            specs.append(LayerSpec(kind, size))
        else:
            if size:
                raise InvalidConfigError('layer %r takes no size' % token)
            specs.append(LayerSpec(kind))
    if not specs:
        raise InvalidConfigError('empty encoder config')
    return specs


def format_config(specs):
    return ','.join(str(s) for s in specs)


def resolve_config(name, h, input_shape=None):
    """Turn a preset name (or ``auto``, or a literal layer list) into specs."""
    if name == 'auto':
        if input_shape is None:
            raise InvalidConfigError('encoder preset auto needs the input shape')
        name = 'desk' if len(input_shape) == 3 else 'mlp'
    text = PRESETS.get(name, name).format(h=h)
    return parse_config(text)


def trace_shapes(specs, input_shape, h):
    """Per-layer output shapes (without batch axis); validates the config."""
    shape = tuple(int(d) for d in input_shape)
    if not shape or min(shape) < 1 or len(shape) not in (1, 3):
        raise InvalidConfigError('input shape must be (C, H, W) or (F,), got %s' % (shape,))
    shapes = []
    for i, spec in enumerate(specs):
        if spec.kind in ('conv3', 'conv1', 'mp2', 'gap') and len(shape) != 3:
            raise InvalidConfigError('layer %d (%s) needs a (C, H, W) input, got %s' % (i, spec, shape))
        if spec.kind in ('conv3', 'conv1'):
            shape = (spec.size,) + shape[1:]
        elif spec.kind == 'mp2':
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
            if min(shape) < 1:
                raise InvalidConfigError('layer %d (mp2) reduces a spatial dimension to 0' % i)
        elif spec.kind == 'gap':
            shape = (shape[0],)
        elif spec.kind == 'dense':
            shape = (spec.size,)
        shapes.append(shape)

    if specs[-1].kind not in ('gap', 'dense'):
        raise InvalidConfigError('encoder config must end with gap or dense, ends with %s' % specs[-1])
    if shapes[-1] != (h,):
        raise InvalidConfigError('encoder produces %s features, expected h=%d' % (shapes[-1], h))
    last_linear = max((i for i, s in enumerate(specs) if s.kind in LINEAR_KINDS), default=None)
    if last_linear is None:
        raise InvalidConfigError('encoder config has no conv or dense layer')
    if any(s.kind == 'elu' for s in specs[last_linear + 1:]):
        raise InvalidConfigError('no activation may follow the final projection layer')
    return shapes


class _Conv():
    '''
    Stride-1 convolution on channels-last activations, computed as one
    matrix product over im2col patches. The weight keeps the
    ``(maps, in_channels, k, k)`` layout.
    '''

    def __init__(self, spec, in_channels, bias):
        self.spec = spec
        self.k = 3 if spec.kind == 'conv3' else 1
        self.pad = self.k // 2
        self.params = OrderedDict(weight=np.zeros((spec.size, in_channels, self.k, self.k)))
        if bias:
            self.params['bias'] = np.zeros(spec.size)
        self.buffers = OrderedDict()
        self.input_grad = True

    def init_params(self, rng):
        w = self.params['weight']
        limit = np.sqrt(6.0 / (w.shape[1] * self.k * self.k))
        w[...] = rng.uniform(-limit, limit, size=w.shape)

    def _cols(self, x):
        b, h, w, c = x.shape
        if self.k == 1:
            return x.reshape(b * h * w, c)
        p, k = self.pad, self.k
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        # (b, h, w, c, k, k) windows, flattened in weight order
        return sliding_window_view(xp, (k, k), axis=(1, 2)).reshape(b * h * w, c * k * k)

    def forward(self, x, train):
        b, h, w, _ = x.shape
        cols = self._cols(x)
        out = cols @ self.params['weight'].reshape(self.spec.size, -1).T
        if 'bias' in self.params:
            out += self.params['bias']
        return out.reshape(b, h, w, -1), (cols, x.shape) if train else None

    def backward(self, cache, dy):
        cols, xshape = cache
        b, h, w, c = xshape
        k, p = self.k, self.pad
        weight = self.params['weight']
        d2 = dy.reshape(-1, self.spec.size)
        grads = OrderedDict(weight=(d2.T @ cols).reshape(weight.shape))
        if 'bias' in self.params:
            grads['bias'] = d2.sum(axis=0)
        if not self.input_grad:
            return None, grads
        dcols = d2 @ weight.reshape(self.spec.size, -1)
        if k == 1:
            return dcols.reshape(xshape), grads
        dcols = dcols.reshape(b, h, w, c, k, k)
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, c))
        for i, j in itertools.product(range(k), range(k)):
            dxp[:, i:i + h, j:j + w, :] += dcols[..., i, j]
        return dxp[:, p:p + h, p:p + w, :], grads


class _Dense():

    def __init__(self, spec, in_features, bias):
        self.spec = spec
        self.params = OrderedDict(weight=np.zeros((in_features, spec.size)))
        if bias:
            self.params['bias'] = np.zeros(spec.size)
        self.buffers = OrderedDict()
        self.input_grad = True

    def init_params(self, rng):
        w = self.params['weight']
        limit = np.sqrt(6.0 / w.shape[0])
        w[...] = rng.uniform(-limit, limit, size=w.shape)

    def forward(self, x, train):
        if x.ndim == 4:
            # flatten in (C, H, W) order
            x2 = x.transpose(0, 3, 1, 2).reshape(x.shape[0], -1)
        else:
            x2 = x.reshape(x.shape[0], -1)
        out = x2 @ self.params['weight']
        if 'bias' in self.params:
            out += self.params['bias']
        return out, (x2, x.shape) if train else None

    def backward(self, cache, dy):
        flat, xshape = cache
        grads = OrderedDict(weight=flat.T @ dy)
        if 'bias' in self.params:
            grads['bias'] = dy.sum(axis=0)
        if not self.input_grad:
            return None, grads
        dx = dy @ self.params['weight'].T
        if len(xshape) == 4:
            b, h, w, c = xshape
            return dx.reshape(b, c, h, w).transpose(0, 2, 3, 1), grads
        return dx.reshape(xshape), grads


class _BatchNorm():
    '''
    Normalizes each channel (the last axis) over all other axes. Running
    statistics use the biased batch variance so eval mode reproduces
    train mode on a batch the statistics have converged to.
    '''

    def __init__(self, spec, channels):
        self.spec = spec
        self.params = OrderedDict(gamma=np.ones(channels), beta=np.zeros(channels))
        self.buffers = OrderedDict(running_mean=np.zeros(channels), running_var=np.ones(channels))

    def init_params(self, rng):
        pass

    def forward(self, x, train):
        x2 = x.reshape(-1, x.shape[-1])
        if train:
            mean = x2.mean(axis=0)
            xhat = x2 - mean
            var = np.mean(np.square(xhat), axis=0)
            self.buffers['running_mean'] *= BN_MOMENTUM
            self.buffers['running_mean'] += (1.0 - BN_MOMENTUM) * mean
            self.buffers['running_var'] *= BN_MOMENTUM
            self.buffers['running_var'] += (1.0 - BN_MOMENTUM) * var
        else:
            xhat = x2 - self.buffers['running_mean']
            var = self.buffers['running_var']
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat *= inv_std
        out = xhat * self.params['gamma']
        out += self.params['beta']
        return out.reshape(x.shape), (xhat, inv_std) if train else None

    def backward(self, cache, dy):
        xhat, inv_std = cache
        dy2 = dy.reshape(xhat.shape)
        n = xhat.shape[0]
        grads = OrderedDict(gamma=np.sum(dy2 * xhat, axis=0), beta=dy2.sum(axis=0))
        dxhat = dy2 * self.params['gamma']
        sum_dxhat = dxhat.sum(axis=0)
        sum_dxhat_xhat = np.sum(dxhat * xhat, axis=0)
        dx = dxhat
        dx *= n
        dx -= sum_dxhat
        dx -= xhat * sum_dxhat_xhat
        dx *= inv_std / n
        return dx.reshape(dy.shape), grads


class _Elu():

    def __init__(self, spec):
        self.spec = spec
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def init_params(self, rng):
        pass

    def forward(self, x, train):
        neg = np.minimum(x, 0.0)
        np.expm1(neg, out=neg)
        if ELU_ALPHA != 1.0:
            neg *= ELU_ALPHA
        out = np.maximum(x, 0.0)
        out += neg
        if not train:
            return out, None
        # derivative: 1 where x > 0, alpha * exp(x) = neg + alpha elsewhere
        slope = neg
        slope += ELU_ALPHA
        if ELU_ALPHA != 1.0:
            slope[x > 0] = 1.0
        return out, slope

    def backward(self, cache, dy):
        return dy * cache, OrderedDict()


class _MaxPool():
    '''
    2x2 max pooling, floor on odd sizes; ties go to the first of the
    window positions in row-major order.
    '''

    OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))

    def __init__(self, spec):
        self.spec = spec
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def init_params(self, rng):
        pass

    @staticmethod
    def _quarters(x):
        h2, w2 = x.shape[1] // 2, x.shape[2] // 2
        return [x[:, i:2 * h2:2, j:2 * w2:2, :] for i, j in _MaxPool.OFFSETS]

    def forward(self, x, train):
        q = self._quarters(x)
        out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        if not train:
            return out, None
        choice = np.full(out.shape, 3, dtype=np.uint8)
        for pos in (2, 1, 0):
            choice[q[pos] == out] = pos
        return out, (choice, x.shape)

    def backward(self, cache, dy):
        choice, xshape = cache
        dx = np.zeros(xshape)
        for pos, view in enumerate(self._quarters(dx)):
            view[...] = np.where(choice == pos, dy, 0.0)
        return dx, OrderedDict()


class _GlobalAvgPool():

    def __init__(self, spec):
        self.spec = spec
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def init_params(self, rng):
        pass

    def forward(self, x, train):
        return x.mean(axis=(1, 2)), x.shape if train else None

    def backward(self, cache, dy):
        b, h, w, c = cache
        return np.broadcast_to(dy[:, None, None, :] / (h * w), cache), OrderedDict()


def _build_layer(spec, in_shape, next_spec):
    bias = next_spec is None or next_spec.kind != 'bn'
    if spec.kind in ('conv3', 'conv1'):
        return _Conv(spec, in_shape[0], bias)
    if spec.kind == 'dense':
        return _Dense(spec, int(np.prod(in_shape)), bias)
    if spec.kind == 'bn':
        return _BatchNorm(spec, in_shape[0])
    if spec.kind == 'elu':
        return _Elu(spec)
    if spec.kind == 'mp2':
        return _MaxPool(spec)
    return _GlobalAvgPool(spec)


@dataclass
class ForwardCache:
    owner: object
    version: int
    batch_size: int
    layers: list


class Encoder():
    '''
    One view's feature mapping (f or g): layer stack, learned parameters
    and BN running statistics.
    '''

    def __init__(self, config, input_shape, h):
        self.config = list(config)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.h = int(h)
        shapes = trace_shapes(self.config, self.input_shape, self.h)
        in_shapes = [self.input_shape] + shapes[:-1]
        nexts = self.config[1:] + [None]
        self.layers = [_build_layer(s, shp, n) for s, shp, n in zip(self.config, in_shapes, nexts)]
        if hasattr(self.layers[0], 'input_grad'):
            self.layers[0].input_grad = False
        self._version = 0

    @property
    def config_text(self):
        return format_config(self.config)

    @property
    def version(self):
        return self._version

    def _named(self, attr):
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for name, arr in getattr(layer, attr).items():
                out['%02d.%s.%s' % (i, layer.spec.kind, name)] = arr
        return out

    def parameters(self):
        """Ordered name -> array mapping; the arrays are the live parameters."""
        return self._named('params')

    def buffers(self):
        return self._named('buffers')

    def n_params(self):
        return int(sum(a.size for a in self.parameters().values()))

    def state_arrays(self):
        state = self.parameters()
        state.update(self.buffers())
        return state

    def load_state(self, arrays):
        state = self.state_arrays()
        if list(arrays) != list(state):
            raise StateError('encoder state names do not match the config')
        for name, arr in arrays.items():
            if state[name].shape != arr.shape:
                raise StateError('encoder state %s has shape %s, expected %s'
                                 % (name, arr.shape, state[name].shape))
            state[name][...] = arr
        self.touch()

    def touch(self):
        """Mark parameters as changed; caches from earlier forwards go stale."""
        self._version += 1

    def forward(self, batch, mode='eval'):
        if mode not in ('train', 'eval'):
            raise ValueError('mode must be train or eval, got %r' % mode)
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise DimensionError('encoder expects batches of shape (B, %s), got %s'
                                 % (', '.join(str(d) for d in self.input_shape), x.shape))
        train = mode == 'train'
        if train and x.shape[0] < 2:
            raise DimensionError('train-mode forward needs a batch of at least 2 samples')
        if x.ndim == 4:
            x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, train)
            caches.append(c)
        cache = ForwardCache(self, self._version, x.shape[0], caches if train else None)
        return x, cache

    def backward(self, cache, grad_out):
        if cache.owner is not self or cache.version != self._version or cache.layers is None:
            raise StateError('forward cache is stale or was not produced by a train-mode forward of this encoder')
        dy = np.asarray(grad_out, dtype=np.float64)
        if dy.shape != (cache.batch_size, self.h):
            raise StateError('grad_out has shape %s, cache expects %s' % (dy.shape, (cache.batch_size, self.h)))
        grads = OrderedDict()
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            dy, layer_grads = layer.backward(cache.layers[i], dy)
            for name, g in layer_grads.items():
                grads['%02d.%s.%s' % (i, layer.spec.kind, name)] = g
        return OrderedDict((name, grads[name]) for name in self.parameters())

    def encode(self, views, indices=None, batch_size=256, nproc=1):
        """Eval-mode features of ``views`` (or of ``views[indices]``), chunk by chunk.

        With ``nproc`` > 1 the chunks are shared round-robin between threads;
        numpy releases the GIL inside the matrix products.
        """
        n = len(views) if indices is None else len(indices)
        out = np.zeros((n, self.h))
        starts = list(range(0, n, batch_size))
        errors = []

        def encode_chunks(k):
            try:
                for i in starts[k::nproc]:
                    sel = slice(i, i + batch_size) if indices is None else indices[i:i + batch_size]
                    out[i:i + batch_size] = self.forward(views[sel], 'eval')[0]
            except Exception as e:  # re-raised in the calling thread
                errors.append(e)

        nproc = max(1, min(int(nproc), len(starts)))
        if nproc == 1:
            encode_chunks(0)
        else:
            procs = []
            for k in range(nproc):
                proc = threading.Thread(target=encode_chunks, args=(k, ))
                procs.append(proc)
                proc.start()
            for proc in procs:
                proc.join()
        if errors:
            raise errors[0]
        return out


def init(config, input_shape, h, seed):
    """Build an encoder and draw He-uniform weights from ``seed``."""
    if isinstance(config, str):
        config = resolve_config(config, h, input_shape)
    enc = Encoder(config, input_shape, h)
    rng = np.random.default_rng(seed)
    for layer in enc.layers:
        layer.init_params(rng)
    return enc


def forward(enc, batch, mode='eval'):
    return enc.forward(batch, mode)


def backward(enc, cache, grad_out):
    return enc.backward(cache, grad_out)
