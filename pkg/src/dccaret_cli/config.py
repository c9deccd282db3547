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

import os
import pathlib
import argparse
import configparser

from collections import OrderedDict

from dccaret_cli import log

LOGS_HOME = os.path.join(str(pathlib.Path.home()), 'logs')
CONFIG_FILE_NAME = os.path.join(str(pathlib.Path.home()), 'logs', 'dccaret.conf')
HISTORY_FILE_NAME = os.path.join(str(pathlib.Path.home()), '.dccaret')

SECTIONS = OrderedDict()


SECTIONS['general'] = {
    'config': {
        'default': CONFIG_FILE_NAME,
        'type': str,
        'help': "File name of configuration file",
        'metavar': 'FILE'},
    'logs-home': {
        'default': LOGS_HOME,
        'type': str,
        'help': "Log file directory",
        'metavar': 'PATH'},
    'history-file': {
        'default': HISTORY_FILE_NAME,
        'type': str,
        'help': "YAML file collecting one entry per gen-data, train, index and evaluate run",
        'metavar': 'FILE'},
    'verbose': {
        'default': False,
        'help': 'Verbose output',
        'action': 'store_true'},
    'seed': {
        'default': 0,
        'type': int,
        'help': "Seed for all randomness of the run (data generation, initialization, shuffling)"},
    'nproc': {
        'default': 4,
        'type': int,
        'help': "Number of threads used to encode snippets and to run the two views"},
}

SECTIONS['gen-data'] = {
    'out': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Output dataset file (MVDS)",
        'metavar': 'FILE'},
    'kind': {
        'default': 'nonlinear',
        'type': str,
        'help': "Generator: paired image/spectrogram-like snippets or flat Gaussian views with known correlations",
        'choices': ['nonlinear', 'linear']},
    'pieces': {
        'default': 100,
        'type': int,
        'help': "nonlinear: number of pieces (60/20/20 %% train/valid/test)"},
    'snippets-per-piece': {
        'default': 50,
        'type': int,
        'help': "nonlinear: snippets sampled along each piece"},
    'latent-dim': {
        'default': 4,
        'type': int,
        'help': "nonlinear: dimension of the shared latent curve"},
    'noise': {
        'default': 0.1,
        'type': float,
        'help': "nonlinear: std of the i.i.d. noise added to both views"},
    'stride': {
        'default': 1,
        'type': int,
        'help': "nonlinear: position step between consecutive snippets of a piece"},
    'textures': {
        'default': 16,
        'type': int,
        'help': "nonlinear: number of random gratings each view map mixes"},
    'image-shape': {
        'default': '1,40,100',
        'type': str,
        'help': "nonlinear: C,H,W of the sheet-image view"},
    'audio-shape': {
        'default': '1,136,100',
        'type': str,
        'help': "nonlinear: C,H,W of the spectrogram view"},
    'shared-map': {
        'default': False,
        'help': 'nonlinear: use one map for both views (requires equal shapes)',
        'action': 'store_true'},
    'n': {
        'default': 10000,
        'type': int,
        'help': "linear: number of samples (80/10/10 %% train/valid/test)"},
    'corrs': {
        'default': '0.9,0.5,0.1',
        'type': str,
        'help': "linear: comma separated population canonical correlations"},
    'dim-x': {
        'default': 16,
        'type': int,
        'help': "linear: dimension of view x"},
    'dim-y': {
        'default': 16,
        'type': int,
        'help': "linear: dimension of view y"},
}

SECTIONS['train'] = {
    'data': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Dataset file (MVDS)",
        'metavar': 'FILE'},
    'out': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Output checkpoint file (DCCK)",
        'metavar': 'FILE'},
    'epochs': {
        'default': 30,
        'type': int,
        'help': "Number of training epochs"},
    'validate-every': {
        'default': 10,
        'type': int,
        'help': "Compute the validation correlation every this many epochs (and after the last one)"},
    'batch-size': {
        'default': 100,
        'type': int,
        'help': "Minibatch size; the last incomplete batch of an epoch is dropped"},
    'lr0': {
        'default': 0.1,
        'type': float,
        'help': "Initial learning rate"},
    'momentum': {
        'default': 0.9,
        'type': float,
        'help': "SGD momentum"},
    'halve-every': {
        'default': 25,
        'type': int,
        'help': "Halve the learning rate every this many epochs"},
    'eps': {
        'default': 1e-3,
        'type': float,
        'help': "Ridge regularizer added to both covariance estimates"},
    'h': {
        'default': 8,
        'type': int,
        'help': "Dimension of the correlated latent space"},
    'encoder-x': {
        'default': 'auto',
        'type': str,
        'help': "Image encoder: desk, paper-table1, mlp, auto or a comma separated layer list"},
    'encoder-y': {
        'default': 'auto',
        'type': str,
        'help': "Audio encoder: desk, paper-table1, mlp, auto or a comma separated layer list"},
}

SECTIONS['index'] = {
    'ckpt': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Checkpoint file (DCCK)",
        'metavar': 'FILE'},
    'data': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Dataset file (MVDS)",
        'metavar': 'FILE'},
    'modality': {
        'default': 'image',
        'type': str,
        'help': "Modality to index: image (sheet snippets, view x) or audio (spectrogram excerpts, view y)",
        'choices': ['image', 'audio']},
    'split': {
        'default': 'test',
        'type': str,
        'help': "Dataset split to index",
        'choices': ['train', 'valid', 'test']},
    'limit': {
        'default': 0,
        'type': int,
        'help': "Index only the first LIMIT snippets of the split (0: all)"},
    'out': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Output index file (DCIX)",
        'metavar': 'FILE'},
}

SECTIONS['query'] = {
    'ckpt': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Checkpoint file (DCCK)",
        'metavar': 'FILE'},
    'index': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Index file (DCIX)",
        'metavar': 'FILE'},
    'input': {
        'default': None,
        'type': str,
        'help': "Query snippet of the other modality as a .npy file, in raw (unnormalized) units",
        'metavar': 'FILE'},
    'data': {
        'default': None,
        'type': str,
        'help': "Take the query snippet from this dataset file instead of --input",
        'metavar': 'FILE'},
    'split': {
        'default': 'test',
        'type': str,
        'help': "Split of --data holding the query sample",
        'choices': ['train', 'valid', 'test']},
    'sample': {
        'default': 0,
        'type': int,
        'help': "Position of the query sample within --split of --data"},
    'k': {
        'default': 10,
        'type': int,
        'help': "Number of results to print"},
}

SECTIONS['evaluate'] = {
    'ckpt': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Checkpoint file (DCCK)",
        'metavar': 'FILE'},
    'data': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Dataset file (MVDS)",
        'metavar': 'FILE'},
    'split': {
        'default': 'test',
        'type': str,
        'help': "Dataset split to evaluate",
        'choices': ['train', 'valid', 'test']},
    'direction': {
        'default': 'both',
        'type': str,
        'help': "Retrieval direction",
        'choices': ['audio-to-sheet', 'sheet-to-audio', 'both']},
    'limit': {
        'default': 1000,
        'type': int,
        'help': "Number of candidate snippets (first LIMIT pairs of the split)"},
    'tolerance': {
        'default': None,
        'type': int,
        'help': "Also report relaxed metrics counting snippets of the target piece within this many positions as hits"},
}

SECTIONS['plot'] = {
    'ckpt': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Checkpoint file (DCCK)",
        'metavar': 'FILE'},
    'out': {
        'default': None,
        'required': True,
        'type': str,
        'help': "Output figure file, e.g. curves.png",
        'metavar': 'FILE'},
    'data': {
        'default': None,
        'type': str,
        'help': "When set, add a histogram of target ranks evaluated on this dataset",
        'metavar': 'FILE'},
    'split': {
        'default': 'test',
        'type': str,
        'help': "Split used for the rank histogram",
        'choices': ['train', 'valid', 'test']},
    'direction': {
        'default': 'audio-to-sheet',
        'type': str,
        'help': "Retrieval direction used for the rank histogram",
        'choices': ['audio-to-sheet', 'sheet-to-audio']},
    'limit': {
        'default': 1000,
        'type': int,
        'help': "Number of candidate snippets for the rank histogram"},
}

COMMAND_SECTIONS = ('gen-data', 'train', 'index', 'query', 'evaluate', 'plot')
NICE_NAMES = ('General', 'Data generation', 'Training', 'Indexing', 'Query', 'Evaluation', 'Plot')


def get_config_name(argv):
    """Get the command line --config option."""
    name = CONFIG_FILE_NAME
    for i, arg in enumerate(argv):
        if arg.startswith('--config'):
            if arg == '--config':
                return argv[i + 1] if i + 1 < len(argv) else name
            name = arg.split('--config')[1]
            if name[0] == '=':
                name = name[1:]
            return name

    return name


def command_position(argv, commands):
    """Index of the first *argv* token naming one of *commands*, or None."""
    skip = False
    for i, arg in enumerate(argv):
        if skip:
            skip = False
        elif arg == '--config':
            skip = True
        elif arg in commands:
            return i
    return None


def parse_known_args(parser, argv, sections_of=None, commands=None):
    """
    Parse arguments from file and then override by the ones specified on the
    command line. The first token of ``argv`` found in ``commands`` selects
    the subparser (``argv[0]`` when no command list is given); the config
    file values of the sections ``sections_of(command)`` lists are inserted
    right after it.
    """
    pos = 0 if commands is None else command_position(argv, commands)
    if len(argv) > 0 and pos is not None:
        cmd = argv[pos]
        sections = sections_of(cmd) if sections_of else tuple(SECTIONS)
        config_values = config_to_list(get_config_name(argv), sections)
        values = list(argv[:pos + 1]) + config_values + list(argv[pos + 1:])
    else:
        values = list(argv)

    return parser.parse_known_args(values)[0]


def config_to_list(config_name=CONFIG_FILE_NAME, sections=None):
    """
    Read arguments from config file and convert them to a list of keys and
    values as sys.argv does when they are specified on the command line.
    *config_name* is the file name of the config file.
    """
    result = []
    config = configparser.ConfigParser()

    if not config.read([config_name]):
        return []

    for section in (sections if sections is not None else SECTIONS):
        if section not in SECTIONS:
            continue
        for name, opts in ((n, o) for n, o in SECTIONS[section].items() if config.has_option(section, n)):
            if name == 'config':
                continue
            value = config.get(section, name)

            if value != '' and value != 'None':
                action = opts.get('action', None)

                if action == 'store_true' and value == 'True':
                    # Only the key is on the command line for this action
                    result.append('--{}'.format(name))

                if not action == 'store_true':
                    result.append('--{}={}'.format(name, value))

    return result


class Params(object):
    def __init__(self, sections=()):
        self.sections = sections + ('general', )

    def add_parser_args(self, parser):
        for section in self.sections:
            for name in sorted(SECTIONS[section]):
                opts = SECTIONS[section][name]
                parser.add_argument('--{}'.format(name), **opts)

    def add_arguments(self, parser):
        self.add_parser_args(parser)
        return parser


def write(config_file, args=None, sections=None):
    """
    Write *config_file* with values from *args* if they are specified,
    otherwise use the defaults. If *sections* are specified, write values from
    *args* only to those sections, use the defaults on the remaining ones.
    """
    config = configparser.ConfigParser()

    for section in SECTIONS:
        config.add_section(section)
        for name, opts in SECTIONS[section].items():
            if args and sections and section in sections and hasattr(args, name.replace('-', '_')):
                value = getattr(args, name.replace('-', '_'))
            else:
                value = opts['default']
            value = '' if value is None else value

            prefix = '# ' if value == '' else ''

            if name != 'config':
                config.set(section, prefix + name, str(value))

    with open(config_file, 'w') as f:
        config.write(f)


def log_values(args, sections=None):
    """Log all values set in the args namespace.
    Arguments are grouped according to their section and logged alphabetically.
    """
    args = args.__dict__

    log.warning('status start')
    for section, name in zip(SECTIONS, NICE_NAMES):
        if sections is not None and section not in sections:
            continue
        entries = sorted(
            (k for k in args.keys() if k.replace('_', '-') in SECTIONS[section]))
        if entries:
            log.info(name)

            for entry in entries:
                value = args[entry] if args[entry] is not None else "-"
                if value is False:
                    log.warning("  {:<20} {}".format(entry, value))
                else:
                    log.info("  {:<20} {}".format(entry, value))

    log.warning('status end')


def show_config(config_file):
    """Log the command sections stored in *config_file*, section by section."""
    config = configparser.ConfigParser()
    if not config.read([config_file]):
        log.warning('no configuration file at %s, run: dccaret init' % config_file)
        return
    log.warning('config file %s' % config_file)
    for section, name in zip(SECTIONS, NICE_NAMES):
        if section == 'general' or not config.has_section(section):
            continue
        log.info(name)
        for key, value in config.items(section):
            if key.startswith('#'):
                continue
            log.info("  {:<20} {}".format(key, value))
