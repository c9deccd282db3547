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

"""DCCA objective: negative total canonical correlation of a minibatch.

With centered features F, G, ridge-regularized covariances Sx, Sy, and
``T = Sx^-1/2 Sxy Sy^-1/2 = U diag(d) V^T`` the gradient of ``sum(d)`` is::

    dXY = Sx^-1/2 U V^T Sy^-1/2
    dXX = -1/2 Sx^-1/2 U diag(d) U^T Sx^-1/2
    d sum(d) / dF = (2 F dXX + G dXY^T) / (N - 1)

and symmetrically for G. Both terms have zero column means, so the same
expression is the gradient with respect to the uncentered batch.
"""

from dataclasses import dataclass

import numpy as np

from dccaret_cli import cca
from dccaret_cli import log
from dccaret_cli import numerics
from dccaret_cli.errors import DegenerateBatchError, DimensionError, InsufficientSamplesError, PreconditionError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['DccaLossResult', 'dcca_loss']

REPEATED_SV_TOL = 1e-10


@dataclass(frozen=True)
class DccaLossResult:
    loss: float
    grad_fx: np.ndarray
    grad_gy: np.ndarray
    corrs: np.ndarray
    repeated_singular_values: bool = False


def dcca_loss(fx, gy, eps=cca.DEFAULT_EPS):
    """Loss ``-sum(d)`` and its exact gradients for a minibatch of features."""
    fx = numerics.check_finite(numerics.as_matrix(fx, 'view x features'), 'view x features')
    gy = numerics.check_finite(numerics.as_matrix(gy, 'view y features'), 'view y features')
    if fx.shape[0] != gy.shape[0]:
        raise DimensionError('views have different batch sizes: %d vs %d' % (fx.shape[0], gy.shape[0]))
    n = fx.shape[0]
    h = max(fx.shape[1], gy.shape[1])
    if n < h + 1:
        raise InsufficientSamplesError('DCCA loss needs at least %d samples, got %d' % (h + 1, n))
    if not eps > 0:
        raise PreconditionError('eps must be positive, got %r' % eps)

    fbar, _ = cca.center(fx)
    gbar, _ = cca.center(gy)
    for name, c in (('view x', fbar), ('view y', gbar)):
        if not np.any(c):
            raise DegenerateBatchError('%s batch has all-identical rows' % name)

    sx_is = numerics.inv_sqrt_spd(cca.covariance(fbar, eps), cca.DEFAULT_FLOOR)
    sy_is = numerics.inv_sqrt_spd(cca.covariance(gbar, eps), cca.DEFAULT_FLOOR)
    t = sx_is @ cca.cross_covariance(fbar, gbar) @ sy_is
    u, d, v = numerics.svd(t)

    d_xy = sx_is @ u @ v.T @ sy_is
    d_xx = -0.5 * sx_is @ (u * d) @ u.T @ sx_is
    d_yy = -0.5 * sy_is @ (v * d) @ v.T @ sy_is

    # loss is -sum(d)
    grad_fx = -(2.0 * fbar @ d_xx + gbar @ d_xy.T) / (n - 1)
    grad_gy = -(2.0 * gbar @ d_yy + fbar @ d_xy) / (n - 1)

    repeated = bool(d.size > 1 and np.min(np.abs(np.diff(d))) < REPEATED_SV_TOL)
    if repeated:
        log.debug('DCCA batch has (nearly) repeated singular values; gradient is not unique')
    return DccaLossResult(loss=-float(np.sum(d)), grad_fx=grad_fx, grad_gy=grad_gy,
                          corrs=d, repeated_singular_values=repeated)
