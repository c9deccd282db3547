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

import json
import math
import threading
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from dccaret_cli import log
from dccaret_cli import utils
from dccaret_cli import encoders
from dccaret_cli.cca import CcaModel, fit_cca
from dccaret_cli.dcca import dcca_loss
from dccaret_cli.errors import (ConvergenceError, DccaError, DegenerateBatchError, DivergedError,
                                EmptyDatasetError, FormatError, InsufficientSamplesError,
                                InvalidConfigError, NotPositiveDefiniteError, NumericError)

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['TrainConfig', 'EpochRecord', 'Checkpoint', 'MomentumSGD', 'learning_rate',
           'epoch_permutation', 'train', 'evaluate_correlation', 'save_checkpoint', 'load_checkpoint']

CHECKPOINT_MAGIC = b'DCCK'
CHECKPOINT_VERSION = 1
SECTION_NAMES = ('encoder-x', 'encoder-y', 'cca', 'config', 'history')
# relative ridge of the final CCA refit on the training features
REFIT_EPS = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    lr0: float = 0.1
    momentum: float = 0.9
    halve_every: int = 25
    epochs: int = 30
    eps: float = 1e-3
    seed: int = 0
    h: int = 8
    encoder_x: str = 'auto'
    encoder_y: str = 'auto'
    validate_every: int = 10

    def __post_init__(self):
        if self.h < 1:
            raise InvalidConfigError('h must be positive, got %d' % self.h)
        if self.batch_size < self.h + 1:
            raise InvalidConfigError('batch_size (%d) must be at least h + 1 (%d)' % (self.batch_size, self.h + 1))
        if not self.lr0 > 0:
            raise InvalidConfigError('lr0 must be positive, got %r' % self.lr0)
        if not 0 <= self.momentum < 1:
            raise InvalidConfigError('momentum must be in [0, 1), got %r' % self.momentum)
        if self.halve_every < 1:
            raise InvalidConfigError('halve_every must be at least 1, got %d' % self.halve_every)
        if self.epochs < 0:
            raise InvalidConfigError('epochs must be nonnegative, got %d' % self.epochs)
        if not self.eps > 0:
            raise InvalidConfigError('eps must be positive, got %r' % self.eps)
        if self.seed < 0:
            raise InvalidConfigError('seed must be nonnegative, got %d' % self.seed)
        if self.validate_every < 1:
            raise InvalidConfigError('validate_every must be at least 1, got %d' % self.validate_every)

    def validates(self, epoch):
        """Whether the validation correlation is computed after *epoch*."""
        return (epoch + 1) % self.validate_every == 0 or epoch == self.epochs - 1


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_corr: float
    lr: float


@dataclass
class Checkpoint:
    encoder_x: encoders.Encoder
    encoder_y: encoders.Encoder
    cca: CcaModel
    config: TrainConfig
    epoch: int = 0
    history: list = field(default_factory=list)
    normalization: dict = field(default_factory=dict)

    def encoder(self, view):
        return self.encoder_x if view == 'x' else self.encoder_y

    def project(self, view, features):
        return self.cca.project_x(features) if view == 'x' else self.cca.project_y(features)


def learning_rate(lr0, halve_every, epoch):
    """Step schedule: ``lr0 * 0.5 ** (epoch // halve_every)``."""
    return lr0 * 0.5 ** (epoch // halve_every)


def epoch_permutation(seed, epoch, n):
    """Shuffle order for one epoch from a counter-based (Philox) generator."""
    key = np.array([seed, epoch], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).permutation(n)


class MomentumSGD():
    '''
    Plain (non-Nesterov) momentum: ``v <- m*v - lr*g``, ``theta <- theta + v``.
    Parameters are updated in place.
    '''

    def __init__(self, momentum):
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads, lr):
        for name, p in params.items():
            v = self.velocity.get(name)
            if v is None:
                v = self.velocity[name] = np.zeros_like(p)
            v *= self.momentum
            v -= lr * grads[name]
            p += v


def _split(dataset, name):
    idx = dataset.split_indices(name)
    if idx.size == 0:
        raise EmptyDatasetError('dataset has no %s split' % name)
    return idx


def _run_views(nproc, run_x, run_y):
    """Call both view functions, the x one in a worker thread when ``nproc`` > 1."""
    if nproc < 2:
        return run_x(), run_y()
    out = [None, None]
    errors = []

    def run(k, fn):
        try:
            out[k] = fn()
        except Exception as e:  # re-raised in the calling thread
            errors.append(e)

    proc = threading.Thread(target=run, args=(0, run_x))
    proc.start()
    run(1, run_y)
    proc.join()
    if errors:
        raise errors[0]
    return out[0], out[1]


def _encode_views(encoder_x, encoder_y, dataset, idx, nproc):
    half = max(1, nproc // 2)
    return _run_views(nproc,
                      lambda: encoder_x.encode(dataset.view_x, idx, nproc=half),
                      lambda: encoder_y.encode(dataset.view_y, idx, nproc=half))


def _total_correlation(encoder_x, encoder_y, dataset, idx, eps, nproc=1):
    fx, gy = _encode_views(encoder_x, encoder_y, dataset, idx, nproc)
    return float(np.sum(fit_cca(fx, gy, eps).corrs))


def train(dataset, cfg, encoder_x=None, encoder_y=None, nproc=1):
    """Train both encoders on the DCCA loss and refit CCA on the training split.

    Encoders default to ``cfg.encoder_x`` / ``cfg.encoder_y`` initialized
    from ``cfg.seed`` and ``cfg.seed + 1``. With ``nproc`` > 1 the two views
    run in separate threads; results do not depend on ``nproc``.
    """
    train_idx = _split(dataset, 'train')
    valid_idx = _split(dataset, 'valid')
    if train_idx.size < cfg.batch_size:
        raise InsufficientSamplesError('training split has %d samples, batch size is %d'
                                       % (train_idx.size, cfg.batch_size))
    if encoder_x is None:
        encoder_x = encoders.init(cfg.encoder_x, dataset.shape_x, cfg.h, cfg.seed)
    if encoder_y is None:
        encoder_y = encoders.init(cfg.encoder_y, dataset.shape_y, cfg.h, cfg.seed + 1)
    log.info('encoder x: %s (%d parameters)', encoder_x.config_text, encoder_x.n_params())
    log.info('encoder y: %s (%d parameters)', encoder_y.config_text, encoder_y.n_params())

    validate = valid_idx.size >= cfg.h + 1
    if not validate:
        log.warning('validation split has %d samples, need %d for a CCA fit; val_corr not tracked'
                    % (valid_idx.size, cfg.h + 1))

    opt_x = MomentumSGD(cfg.momentum)
    opt_y = MomentumSGD(cfg.momentum)
    n_batches = train_idx.size // cfg.batch_size
    history = []
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg.lr0, cfg.halve_every, epoch)
        order = train_idx[epoch_permutation(cfg.seed, epoch, train_idx.size)]
        losses = []
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            (fx, cache_x), (gy, cache_y) = _run_views(nproc,
                                                      lambda: encoder_x.forward(dataset.view_x[idx], 'train'),
                                                      lambda: encoder_y.forward(dataset.view_y[idx], 'train'))
            try:
                res = dcca_loss(fx, gy, cfg.eps)
            except (NumericError, DegenerateBatchError, NotPositiveDefiniteError, ConvergenceError) as e:
                log.error(str(e))
                raise DivergedError(epoch, b, float('nan'))
            if not math.isfinite(res.loss):
                raise DivergedError(epoch, b, res.loss)
            _run_views(nproc,
                       lambda: opt_x.step(encoder_x.parameters(), encoder_x.backward(cache_x, res.grad_fx), lr),
                       lambda: opt_y.step(encoder_y.parameters(), encoder_y.backward(cache_y, res.grad_gy), lr))
            encoder_x.touch()
            encoder_y.touch()
            losses.append(res.loss)

        val_corr = float('nan')
        if validate and cfg.validates(epoch):
            try:
                val_corr = _total_correlation(encoder_x, encoder_y, dataset, valid_idx, cfg.eps, nproc)
            except DccaError as e:
                log.warning('validation correlation failed at epoch %d: %s' % (epoch, e))
        record = EpochRecord(epoch, float(np.mean(losses)), val_corr, lr)
        history.append(record)
        log.info('epoch=%d loss=%.6f val_corr=%.6f lr=%g' % (record.epoch, record.loss, record.val_corr, record.lr))

    fx, gy = _encode_views(encoder_x, encoder_y, dataset, train_idx, nproc)
    model = fit_cca(fx, gy, REFIT_EPS, relative=True)
    log.info('CCA refit on %d training pairs: total correlation %.4f' % (train_idx.size, np.sum(model.corrs)))
    return Checkpoint(encoder_x=encoder_x, encoder_y=encoder_y, cca=model, config=cfg,
                      epoch=cfg.epochs, history=history, normalization=dict(dataset.normalization))


def evaluate_correlation(ckpt, dataset, split, nproc=1):
    """Total correlation of eval-mode features under a CCA fit on *split*."""
    idx = _split(dataset, split)
    return _total_correlation(ckpt.encoder_x, ckpt.encoder_y, dataset, idx, ckpt.config.eps, nproc)


def _encode_encoder(enc):
    w = utils.BinaryWriter()
    w.string(enc.config_text)
    w.shape(enc.input_shape)
    w.u32(enc.h)
    state = enc.state_arrays()
    w.u32(len(state))
    for name, arr in state.items():
        w.string(name)
        w.tensor(arr)
    return w.getvalue()


def _decode_encoder(payload, what):
    r = utils.BinaryReader(payload, what)
    config_text = r.string()
    input_shape = r.shape()
    h = r.u32()
    arrays = {}
    for _ in range(r.u32()):
        name = r.string()
        arrays[name] = r.tensor()
    r.expect_end()
    try:
        enc = encoders.Encoder(encoders.parse_config(config_text), input_shape, h)
        enc.load_state(arrays)
    except DccaError as e:
        raise FormatError('%s: %s' % (what, e))
    return enc


def _encode_cca(model):
    w = utils.BinaryWriter()
    for arr in (model.mean_x, model.mean_y, model.proj_x, model.proj_y, model.corrs):
        w.tensor(arr)
    w.f64(model.regularizer)
    return w.getvalue()


def _decode_cca(payload, what):
    r = utils.BinaryReader(payload, what)
    mean_x, mean_y, proj_x, proj_y, corrs = (r.tensor() for _ in range(5))
    regularizer = r.f64()
    r.expect_end()
    return CcaModel(mean_x, mean_y, proj_x, proj_y, corrs, regularizer)


def _encode_config(ckpt):
    text = json.dumps({'train': asdict(ckpt.config), 'epoch': ckpt.epoch,
                       'normalization': ckpt.normalization}, sort_keys=True)
    w = utils.BinaryWriter()
    w.string(text)
    return w.getvalue()


def _decode_config(payload, what):
    r = utils.BinaryReader(payload, what)
    text = r.string()
    r.expect_end()
    try:
        doc = json.loads(text)
        known = {f.name for f in fields(TrainConfig)}
        cfg = TrainConfig(**{k: v for k, v in doc['train'].items() if k in known})
        return cfg, int(doc['epoch']), dict(doc['normalization'])
    except (ValueError, KeyError, TypeError, DccaError) as e:
        raise FormatError('%s: bad config section: %s' % (what, e))


def _encode_history(history):
    w = utils.BinaryWriter()
    w.u32(len(history))
    for rec in history:
        w.u32(rec.epoch)
        w.f64(rec.loss)
        w.f64(rec.val_corr)
        w.f64(rec.lr)
    return w.getvalue()


def _decode_history(payload, what):
    r = utils.BinaryReader(payload, what)
    history = [EpochRecord(r.u32(), r.f64(), r.f64(), r.f64()) for _ in range(r.u32())]
    r.expect_end()
    return history


def checkpoint_bytes(ckpt):
    w = utils.BinaryWriter()
    w.raw(CHECKPOINT_MAGIC)
    w.u16(CHECKPOINT_VERSION)
    for payload in (_encode_encoder(ckpt.encoder_x), _encode_encoder(ckpt.encoder_y),
                    _encode_cca(ckpt.cca), _encode_config(ckpt), _encode_history(ckpt.history)):
        w.block(payload)
    return w.getvalue()


def save_checkpoint(ckpt, fname):
    utils.atomic_write(fname, checkpoint_bytes(ckpt))
    log.info('Checkpoint saved to %s' % fname)


def load_checkpoint(fname):
    r = utils.BinaryReader(utils.read_file(fname), str(fname))
    utils.check_magic(r, CHECKPOINT_MAGIC, (CHECKPOINT_VERSION,))
    payloads = {name: r.block(name) for name in SECTION_NAMES}
    r.expect_end()
    cfg, epoch, normalization = _decode_config(payloads['config'], '%s [config]' % fname)
    return Checkpoint(encoder_x=_decode_encoder(payloads['encoder-x'], '%s [encoder-x]' % fname),
                      encoder_y=_decode_encoder(payloads['encoder-y'], '%s [encoder-y]' % fname),
                      cca=_decode_cca(payloads['cca'], '%s [cca]' % fname),
                      config=cfg, epoch=epoch,
                      history=_decode_history(payloads['history'], '%s [history]' % fname),
                      normalization=normalization)
