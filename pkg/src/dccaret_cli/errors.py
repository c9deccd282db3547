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

"""Exception hierarchy shared by the library and the command line.

Every error carries the process exit code the CLI should use: 2 for
usage and validation problems, 3 for runtime failures.
"""

__author__ = "dccaret-cli developers"
__copyright__ = "Copyright (c) 2022, UChicago Argonne, LLC."
__docformat__ = 'restructuredtext en'
__all__ = [
    'DccaError', 'ValidationError', 'DimensionError', 'InsufficientSamplesError',
    'PreconditionError', 'RangeError', 'EmptyDatasetError', 'BoundsError',
    'DegenerateVectorError', 'InvalidConfigError', 'ConvergenceError',
    'NotPositiveDefiniteError', 'NumericError', 'DegenerateBatchError',
    'StateError', 'DivergedError', 'FormatError',
]

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class DccaError(RuntimeError):
    exit_code = EXIT_RUNTIME


class ValidationError(DccaError):
    exit_code = EXIT_USAGE


class DimensionError(ValidationError):
    pass


class InsufficientSamplesError(ValidationError):
    pass


class PreconditionError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class BoundsError(ValidationError):
    pass


class DegenerateVectorError(ValidationError):
    pass


class InvalidConfigError(ValidationError):
    pass


class ConvergenceError(DccaError):
    pass


class NotPositiveDefiniteError(DccaError):
    pass


class NumericError(DccaError):
    pass


class DegenerateBatchError(DccaError):
    pass


class StateError(DccaError):
    pass


class DivergedError(DccaError):

    def __init__(self, epoch, batch, loss):
        super().__init__('training diverged at epoch %d batch %d (loss=%r)' % (epoch, batch, loss))
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class FormatError(DccaError):
    pass
