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

"""Classical CCA on top-layer features.

Samples are rows, features are columns. Covariances are ridge-regularized
(``Sigma + eps*I``) and both views are projected by right-multiplication
with their normalized projection matrices::

    T = Sx^-1/2 Sxy Sy^-1/2 = U diag(d) V^T
    proj_x = Sx^-1/2 U,  proj_y = Sy^-1/2 V

which makes the cross-covariance of the projected training features
``diag(d)``.
"""

from dataclasses import dataclass

import numpy as np

from dccaret_cli import numerics
from dccaret_cli.errors import DimensionError, InsufficientSamplesError, PreconditionError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['CcaModel', 'DEFAULT_EPS', 'center', 'covariance', 'cross_covariance', 'compute_t',
           'total_correlation', 'fit_cca', 'project_x', 'project_y']

DEFAULT_EPS = 1e-3
DEFAULT_FLOOR = 1e-12
CENTER_TOL = 1e-8


@dataclass(frozen=True)
class CcaModel:
    mean_x: np.ndarray
    mean_y: np.ndarray
    proj_x: np.ndarray
    proj_y: np.ndarray
    corrs: np.ndarray
    regularizer: float

    def __post_init__(self):
        for arr in (self.mean_x, self.mean_y, self.proj_x, self.proj_y, self.corrs):
            arr.setflags(write=False)

    @property
    def k(self):
        return self.corrs.shape[0]

    def project_x(self, fx):
        return _project(fx, self.mean_x, self.proj_x, 'view x')

    def project_y(self, gy):
        return _project(gy, self.mean_y, self.proj_y, 'view y')


def _project(f, mean, proj, name):
    f = numerics.as_matrix(f, name)
    if f.shape[1] != mean.shape[0]:
        raise DimensionError('%s features have %d columns, model expects %d'
                             % (name, f.shape[1], mean.shape[0]))
    return (f - mean) @ proj


def center(f):
    """Subtract column means; returns ``(centered, mean)``."""
    f = numerics.as_matrix(f, 'features')
    if f.shape[0] < 2:
        raise InsufficientSamplesError('centering needs at least 2 samples, got %d' % f.shape[0])
    mean = f.mean(axis=0)
    return f - mean, mean


def covariance(centered, eps=0.0):
    """``centered^T centered / (N-1) + eps*I``."""
    centered = numerics.as_matrix(centered, 'centered features')
    n = centered.shape[0]
    if n < 2:
        raise InsufficientSamplesError('covariance needs at least 2 samples, got %d' % n)
    if eps < 0:
        raise PreconditionError('eps must be nonnegative, got %r' % eps)
    _check_centered(centered)
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += eps
    return cov


def cross_covariance(cx, cy):
    cx = numerics.as_matrix(cx, 'view x')
    cy = numerics.as_matrix(cy, 'view y')
    if cx.shape[0] != cy.shape[0]:
        raise DimensionError('views have different sample counts: %d vs %d' % (cx.shape[0], cy.shape[0]))
    if cx.shape[0] < 2:
        raise InsufficientSamplesError('cross-covariance needs at least 2 samples')
    _check_centered(cx)
    _check_centered(cy)
    return cx.T @ cy / (cx.shape[0] - 1)


def _check_centered(c):
    scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
    worst = float(np.max(np.abs(c.mean(axis=0)))) if c.size else 0.0
    if worst >= CENTER_TOL * scale:
        raise PreconditionError('features are not centered (max column mean %.3g)' % worst)


def compute_t(sx, sxy, sy, floor=DEFAULT_FLOOR):
    return numerics.inv_sqrt_spd(sx, floor) @ sxy @ numerics.inv_sqrt_spd(sy, floor)


def total_correlation(t):
    """Trace norm of *t*, i.e. the sum of its singular values."""
    _, d, _ = numerics.svd(t)
    return float(np.sum(d))


def _ridge(centered, eps, relative):
    if not relative:
        return eps
    scale = float(np.sum(np.square(centered))) / ((centered.shape[0] - 1) * centered.shape[1])
    return eps * scale if scale > 0 else eps


def fit_cca(fx, gy, eps=DEFAULT_EPS, components=None, relative=False):
    """Fit CCA on paired features ``fx`` (N x dx) and ``gy`` (N x dy).

    With ``relative`` the ridge of each view is ``eps`` times its mean
    feature variance (``eps * tr(Sigma) / d``) instead of ``eps`` itself.
    """
    fx = numerics.check_finite(numerics.as_matrix(fx, 'view x'), 'view x')
    gy = numerics.check_finite(numerics.as_matrix(gy, 'view y'), 'view y')
    if fx.shape[0] != gy.shape[0]:
        raise DimensionError('views have different sample counts: %d vs %d' % (fx.shape[0], gy.shape[0]))
    n = fx.shape[0]
    dim = max(fx.shape[1], gy.shape[1])
    if n < dim + 1:
        raise InsufficientSamplesError('fit_cca needs at least %d samples, got %d' % (dim + 1, n))
    if not eps > 0:
        raise PreconditionError('eps must be positive, got %r' % eps)

    cx, mean_x = center(fx)
    cy, mean_y = center(gy)
    sx_is = numerics.inv_sqrt_spd(covariance(cx, _ridge(cx, eps, relative)), DEFAULT_FLOOR)
    sy_is = numerics.inv_sqrt_spd(covariance(cy, _ridge(cy, eps, relative)), DEFAULT_FLOOR)
    t = sx_is @ cross_covariance(cx, cy) @ sy_is
    u, d, v = numerics.svd(t)

    k = d.shape[0] if components is None else int(components)
    if not 1 <= k <= d.shape[0]:
        raise PreconditionError('components must be in [1, %d], got %r' % (d.shape[0], components))
    return CcaModel(mean_x=mean_x, mean_y=mean_y,
                    proj_x=sx_is @ u[:, :k], proj_y=sy_is @ v[:, :k],
                    corrs=d[:k].copy(), regularizer=float(eps))


def project_x(model, fx):
    return model.project_x(fx)


def project_y(model, gy):
    return model.project_y(gy)
