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

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from dccaret_cli import log
from dccaret_cli.errors import EmptyDatasetError

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = ['plot_training', ]


def plot_training(history, fname, ranks=None, title=None):
    """Loss and validation correlation per epoch; optional target-rank histogram.

    *history* is a list of epoch records (``epoch``, ``loss``, ``val_corr``,
    ``lr``); *ranks* are 1-based target ranks of a retrieval evaluation.
    """
    if not history and ranks is None:
        raise EmptyDatasetError('nothing to plot: no training history and no ranks')
    log.info('Plot training curves')
    ncols = 2 if ranks is not None else 1
    fig = plt.figure(constrained_layout=True, figsize=(6 * ncols, 4))
    grid = fig.add_gridspec(1, ncols)

    ax = fig.add_subplot(grid[0])
    if history:
        epochs = [rec.epoch for rec in history]
        ax.plot(epochs, [rec.loss for rec in history], color='tab:blue', label='train loss')
        ax.set_xlabel('epoch')
        ax.set_ylabel('loss (-total correlation)')
        ax2 = ax.twinx()
        # val_corr is NaN on the epochs without a validation pass
        checked = [rec for rec in history if np.isfinite(rec.val_corr)]
        ax2.plot([rec.epoch for rec in checked], [rec.val_corr for rec in checked], color='tab:orange',
                 marker='o', label='val total corr')
        ax2.set_ylabel('validation total correlation')
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [line.get_label() for line in lines], loc='center right')
    else:
        ax.text(0.5, 0.5, 'no epochs trained', ha='center', va='center', transform=ax.transAxes)
    if title:
        ax.set_title(title)

    if ranks is not None:
        ranks = np.asarray(ranks)
        log.info('Plot rank histogram over %d queries' % ranks.size)
        ax = fig.add_subplot(grid[1])
        bins = np.unique(np.round(np.logspace(0, np.log10(max(int(ranks.max()), 2)), 30)))
        ax.hist(ranks, bins=np.append(bins, bins[-1] + 1))
        ax.set_xscale('log')
        ax.set_xlabel('rank of target')
        ax.set_ylabel('queries')

    plt.savefig(fname, bbox_inches='tight', dpi=150)
    plt.close(fig)
    log.info('Figure saved to %s' % fname)
