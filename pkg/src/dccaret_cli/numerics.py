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

"""Dense linear-algebra kernels used by CCA and the DCCA objective.

All routines work on float64 ``numpy`` arrays and delegate the heavy
lifting to LAPACK through :mod:`numpy.linalg`. On top of that they fix an
ordering (descending) and a sign convention (largest-magnitude entry of
every eigen/singular vector is nonnegative) so results are reproducible.
"""

from dataclasses import dataclass

import numpy as np

from dccaret_cli.errors import (ConvergenceError, DimensionError, NotPositiveDefiniteError,
                                NumericError, PreconditionError)

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['EigDecomposition', 'as_matrix', 'check_finite', 'sym_eig', 'inv_sqrt_spd', 'svd']

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class EigDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def as_matrix(a, name='matrix'):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError('%s must be 2-D, got shape %s' % (name, a.shape))
    return a


def check_finite(a, name='matrix'):
    if not np.all(np.isfinite(a)):
        raise NumericError('%s contains NaN or Inf' % name)
    return a


def _fix_signs(vectors):
    """Flip columns so the largest-magnitude entry of each is nonnegative."""
    if vectors.size == 0:
        return vectors, np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs, signs


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = check_finite(as_matrix(a))
    if a.shape[0] != a.shape[1]:
        raise DimensionError('sym_eig needs a square matrix, got %s' % (a.shape,))
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) >= SYMMETRY_TOL * scale:
        raise PreconditionError('sym_eig input is not symmetric (max asymmetry %.3g)'
                                % np.max(np.abs(a - a.T)))
    sym = 0.5 * (a + a.T)
    try:
        w, q = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError('symmetric eigendecomposition did not converge: %s' % e)
    order = np.argsort(-w, kind='stable')
    w = w[order]
    q, _ = _fix_signs(q[:, order])
    return EigDecomposition(w, q)


def inv_sqrt_spd(a, floor=1e-12):
    """Q diag(max(lambda, floor)^-1/2) Q^T for a symmetric PSD matrix.

    Eigenvalues in [-10*floor, floor) are round-off and get clamped;
    anything more negative is rejected.
    """
    if not floor > 0:
        raise PreconditionError('floor must be positive, got %r' % floor)
    eig = sym_eig(a)
    w = eig.eigenvalues
    if w.size and w[-1] < -10.0 * floor:
        raise NotPositiveDefiniteError('matrix is not positive semidefinite (eigenvalue %.3g)' % w[-1])
    q = eig.eigenvectors
    out = (q * np.maximum(w, floor) ** -0.5) @ q.T
    return 0.5 * (out + out.T)


def svd(a):
    """Thin SVD ``a = u diag(d) v^T`` with d descending and v (not v^T) returned."""
    a = check_finite(as_matrix(a))
    try:
        u, d, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError('SVD did not converge: %s' % e)
    # LAPACK already sorts d descending
    u, signs = _fix_signs(u)
    v = vt.T * signs
    return u, d, v
