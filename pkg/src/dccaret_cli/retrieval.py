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

"""Cross-modal retrieval in the shared CCA space.

An index holds CCA-projected embeddings of one modality (``image`` for
view x, the sheet snippets; ``audio`` for view y, the spectrogram
excerpts). Queries from the other modality are ranked by cosine distance
with ties broken by ascending snippet id.
"""

from dataclasses import dataclass

import numpy as np

from dccaret_cli import log
from dccaret_cli import utils
from dccaret_cli.errors import (BoundsError, DegenerateVectorError, DimensionError, EmptyDatasetError,
                                FormatError, InsufficientSamplesError, NumericError, RangeError)

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['MODALITIES', 'DIRECTIONS', 'SnippetRecord', 'SnippetIndex', 'RankingResult', 'RetrievalReport',
           'cosine_distance', 'build_index', 'query', 'rank_targets', 'recall_at_k', 'median_rank',
           'evaluate_retrieval', 'format_report', 'save_index', 'load_index']

MODALITIES = ('image', 'audio')
# direction -> (indexed modality, query modality)
DIRECTIONS = {'audio-to-sheet': ('image', 'audio'),
              'sheet-to-audio': ('audio', 'image')}
RECALL_KS = (1, 5, 10)

INDEX_MAGIC = b'DCIX'
INDEX_VERSION = 1


def _norm(v, name):
    n = float(np.linalg.norm(v))
    if not n > 0:
        raise DegenerateVectorError('%s has zero norm' % name)
    return n


def cosine_distance(a, b):
    """``1 - a.b / (|a| |b|)``, clipped to [0, 2]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError('vectors have different lengths: %d vs %d' % (a.size, b.size))
    cos = float(np.dot(a, b)) / (_norm(a, 'first vector') * _norm(b, 'second vector'))
    return 1.0 - min(1.0, max(-1.0, cos))


@dataclass(frozen=True)
class SnippetRecord:
    snippet_id: int
    piece_id: int
    position: int
    embedding: np.ndarray


class SnippetIndex():
    '''
    Immutable embedding table of M snippets of one modality.

    Records with a zero embedding are kept but sit at cosine distance 1
    from every query.
    '''

    def __init__(self, snippet_ids, piece_ids, positions, embeddings, modality):
        if modality not in MODALITIES:
            raise RangeError('unknown modality %r, expected one of %s' % (modality, ', '.join(MODALITIES)))
        embeddings = np.array(embeddings, dtype=np.float64)
        if embeddings.ndim != 2:
            raise DimensionError('embeddings must be a 2-D array, got %d-D' % embeddings.ndim)
        m = embeddings.shape[0]
        if m < 1:
            raise EmptyDatasetError('an index needs at least one snippet')
        if not np.all(np.isfinite(embeddings)):
            raise NumericError('index embeddings contain NaN or Inf')
        self.snippet_ids = np.array(snippet_ids, dtype=np.int64)
        self.piece_ids = np.array(piece_ids, dtype=np.int64)
        self.positions = np.array(positions, dtype=np.int64)
        for name in ('snippet_ids', 'piece_ids', 'positions'):
            if getattr(self, name).shape != (m,):
                raise DimensionError('%s must have %d entries' % (name, m))
        if np.unique(self.snippet_ids).size != m:
            raise RangeError('snippet ids must be unique within an index')
        self.embeddings = embeddings
        self.modality = modality
        norms = np.linalg.norm(embeddings, axis=1)
        self._unit = np.divide(embeddings, norms[:, None], out=np.zeros_like(embeddings), where=norms[:, None] > 0)
        for arr in (self.snippet_ids, self.piece_ids, self.positions, self.embeddings, self._unit):
            arr.setflags(write=False)

    def __len__(self):
        return self.embeddings.shape[0]

    @property
    def h(self):
        return self.embeddings.shape[1]

    @property
    def records(self):
        return [SnippetRecord(int(s), int(p), int(q), e)
                for s, p, q, e in zip(self.snippet_ids, self.piece_ids, self.positions, self.embeddings)]

    def distances(self, q):
        """Cosine distance from *q* to every record, in index order."""
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.size != self.h:
            raise DimensionError('query has length %d, index embeddings have %d' % (q.size, self.h))
        if not np.all(np.isfinite(q)):
            raise NumericError('query contains NaN or Inf')
        cos = self._unit @ (q / _norm(q, 'query'))
        return 1.0 - np.clip(cos, -1.0, 1.0)

    def position_of(self, snippet_id):
        hits = np.flatnonzero(self.snippet_ids == snippet_id)
        if hits.size == 0:
            raise BoundsError('snippet %d is not in the index' % snippet_id)
        return int(hits[0])


@dataclass(frozen=True)
class RankingResult:
    query_id: object
    snippet_ids: np.ndarray
    distances: np.ndarray
    rank_of_target: int = None


def _rank_of(d, ids, j):
    """1-based place of record *j* in the (distance, snippet id) order."""
    return 1 + int(np.count_nonzero(d < d[j]) + np.count_nonzero((d == d[j]) & (ids < ids[j])))


def query(index, q, k, target_id=None, query_id=None):
    """Top-*k* records by ascending cosine distance to *q*."""
    m = len(index)
    if not 1 <= k <= m:
        raise BoundsError('k=%d outside [1, %d]' % (k, m))
    d = index.distances(q)
    ids = index.snippet_ids
    if k < m:
        kth = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= kth)
    else:
        cand = np.arange(m)
    top = cand[np.lexsort((ids[cand], d[cand]))][:k]
    rank = None if target_id is None else _rank_of(d, ids, index.position_of(target_id))
    return RankingResult(query_id, ids[top].copy(), d[top].copy(), rank)


def rank_targets(index, queries, target_ids, tolerance=None):
    """Rank of each query's target; with *tolerance*, also the relaxed ranks.

    The relaxed rank counts any record of the target's piece whose position
    is within *tolerance* of the target position as a hit.
    """
    queries = np.asarray(queries, dtype=np.float64)
    target_ids = np.asarray(target_ids)
    if queries.ndim != 2 or queries.shape[0] != target_ids.shape[0]:
        raise DimensionError('need one target id per query row')
    ids = index.snippet_ids
    ranks = np.empty(len(target_ids), dtype=np.int64)
    relaxed = np.empty(len(target_ids), dtype=np.int64) if tolerance is not None else None
    for i, (q, t) in enumerate(zip(queries, target_ids)):
        d = index.distances(q)
        j = index.position_of(t)
        ranks[i] = _rank_of(d, ids, j)
        if relaxed is not None:
            near = np.flatnonzero((index.piece_ids == index.piece_ids[j])
                                  & (np.abs(index.positions - index.positions[j]) <= tolerance))
            best = near[np.lexsort((ids[near], d[near]))[0]]
            relaxed[i] = _rank_of(d, ids, best)
    return ranks if relaxed is None else (ranks, relaxed)


def recall_at_k(ranks, k):
    """Percentage of ranks that are at most *k*."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EmptyDatasetError('recall needs at least one rank')
    return 100.0 * np.count_nonzero(ranks <= k) / ranks.size


def median_rank(ranks):
    """Lower median of the ranks."""
    ranks = np.sort(np.asarray(ranks))
    if ranks.size == 0:
        raise EmptyDatasetError('median rank needs at least one rank')
    return int(ranks[(ranks.size - 1) // 2])


def _embed(encoder, project, snippets, batch_size=256, nproc=1):
    return project(encoder.encode(snippets, batch_size=batch_size, nproc=nproc))


def build_index(encoder, cca, snippets, piece_ids, positions, modality, snippet_ids=None, nproc=1):
    """Embed *snippets* (eval-mode forward, then CCA projection) into an index.

    ``image`` snippets go through the view-x projection, ``audio`` snippets
    through the view-y projection.
    """
    if modality not in MODALITIES:
        raise RangeError('unknown modality %r, expected one of %s' % (modality, ', '.join(MODALITIES)))
    snippets = np.asarray(snippets)
    if snippets.shape[1:] != encoder.input_shape:
        raise DimensionError('snippets have shape %s, encoder expects %s'
                             % (snippets.shape[1:], encoder.input_shape))
    if snippets.shape[0] < 1:
        raise EmptyDatasetError('no snippets to index')
    project = cca.project_x if modality == 'image' else cca.project_y
    if snippet_ids is None:
        snippet_ids = np.arange(snippets.shape[0])
    embeddings = _embed(encoder, project, snippets, nproc=nproc)
    log.info('indexed %d %s snippets (h=%d)' % (embeddings.shape[0], modality, embeddings.shape[1]))
    return SnippetIndex(snippet_ids, piece_ids, positions, embeddings, modality)


def _view_parts(ckpt, dataset, modality):
    if modality == 'image':
        return ckpt.encoder_x, ckpt.cca.project_x, dataset.view_x
    return ckpt.encoder_y, ckpt.cca.project_y, dataset.view_y


@dataclass(frozen=True)
class RetrievalReport:
    direction: str
    split: str
    m: int
    r_at_1: float
    r_at_5: float
    r_at_10: float
    mr: int
    ranks: np.ndarray
    relaxed: dict = None


def evaluate_retrieval(ckpt, dataset, split, direction, limit=1000, tolerance=None, nproc=1):
    """R@1/5/10 and MR for one direction over the first *limit* pairs of *split*.

    ``audio-to-sheet`` indexes the image view and queries with the paired
    audio snippets, ``sheet-to-audio`` the reverse.
    """
    if direction not in DIRECTIONS:
        raise RangeError('unknown direction %r, expected one of %s' % (direction, ', '.join(DIRECTIONS)))
    if limit < 1:
        raise RangeError('limit must be at least 1, got %d' % limit)
    if tolerance is not None and tolerance < 0:
        raise RangeError('tolerance must be nonnegative, got %r' % tolerance)
    idx = dataset.split_indices(split)
    if idx.size == 0:
        raise EmptyDatasetError('dataset has no %s split' % split)
    if idx.size < 2:
        raise InsufficientSamplesError('retrieval evaluation needs at least 2 pairs, %s has %d' % (split, idx.size))
    if limit > idx.size:
        log.warning('limit %d exceeds the %s split size, using %d pairs' % (limit, split, idx.size))
    idx = idx[:limit]

    target_modality, query_modality = DIRECTIONS[direction]
    encoder, project, views = _view_parts(ckpt, dataset, target_modality)
    index = build_index(encoder, ckpt.cca, views[idx], dataset.piece_ids[idx], dataset.positions[idx],
                        target_modality, snippet_ids=idx, nproc=nproc)
    encoder, project, views = _view_parts(ckpt, dataset, query_modality)
    queries = _embed(encoder, project, views[idx], nproc=nproc)

    result = rank_targets(index, queries, idx, tolerance)
    ranks, relaxed_ranks = result if tolerance is not None else (result, None)
    relaxed = None
    if relaxed_ranks is not None:
        relaxed = {'tolerance': tolerance, 'ranks': relaxed_ranks, 'mr': median_rank(relaxed_ranks)}
        relaxed.update({'r_at_%d' % k: recall_at_k(relaxed_ranks, k) for k in RECALL_KS})
    return RetrievalReport(direction=direction, split=split, m=int(idx.size),
                           r_at_1=recall_at_k(ranks, 1), r_at_5=recall_at_k(ranks, 5),
                           r_at_10=recall_at_k(ranks, 10), mr=median_rank(ranks), ranks=ranks, relaxed=relaxed)


def format_report(report):
    """One ``key=value`` line; field order is fixed."""
    line = 'direction=%s r_at_1=%.2f r_at_5=%.2f r_at_10=%.2f mr=%d m=%d' % (
        report.direction, report.r_at_1, report.r_at_5, report.r_at_10, report.mr, report.m)
    if report.relaxed is not None:
        line += ' relaxed_r_at_1=%.2f relaxed_r_at_5=%.2f relaxed_r_at_10=%.2f relaxed_mr=%d' % (
            report.relaxed['r_at_1'], report.relaxed['r_at_5'], report.relaxed['r_at_10'], report.relaxed['mr'])
    return line


def _record_dtype(h):
    return np.dtype([('snippet_id', '<u8'), ('piece_id', '<u8'), ('position', '<u8'), ('embedding', '<f8', (h,))])


def index_bytes(index):
    records = np.empty(len(index), dtype=_record_dtype(index.h))
    records['snippet_id'] = index.snippet_ids
    records['piece_id'] = index.piece_ids
    records['position'] = index.positions
    records['embedding'] = index.embeddings
    w = utils.BinaryWriter()
    w.raw(INDEX_MAGIC)
    w.u16(INDEX_VERSION)
    w.u32(len(index))
    w.u32(index.h)
    w.u8(MODALITIES.index(index.modality))
    w.raw(records.tobytes())
    body = w.getvalue()
    return body + utils.crc32(body).to_bytes(4, 'little')


def save_index(index, fname):
    utils.atomic_write(fname, index_bytes(index))
    log.info('Index saved to %s' % fname)


def load_index(fname):
    data = utils.read_file(fname)
    if len(data) < 4:
        raise FormatError('%s is truncated' % fname)
    body = data[:-4]
    if utils.crc32(body) != int.from_bytes(data[-4:], 'little'):
        raise FormatError('%s: checksum failure' % fname)
    r = utils.BinaryReader(body, str(fname))
    utils.check_magic(r, INDEX_MAGIC, (INDEX_VERSION,))
    m = r.u32()
    h = r.u32()
    tag = r.u8()
    if tag >= len(MODALITIES):
        raise FormatError('%s: unknown modality tag %d' % (fname, tag))
    dtype = _record_dtype(h)
    records = np.frombuffer(r.take(m * dtype.itemsize), dtype=dtype)
    r.expect_end()
    try:
        return SnippetIndex(records['snippet_id'], records['piece_id'], records['position'],
                            records['embedding'], MODALITIES[tag])
    except (RangeError, EmptyDatasetError, NumericError, DimensionError) as e:
        raise FormatError('%s: %s' % (fname, e))
