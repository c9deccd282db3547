import os
import sys
import logging
import argparse

from datetime import datetime

import numpy as np

from dccaret_cli import log
from dccaret_cli import utils
from dccaret_cli import config
from dccaret_cli import datagen
from dccaret_cli import trainer
from dccaret_cli import retrieval
from dccaret_cli.errors import BoundsError, DccaError, DimensionError, DivergedError, InvalidConfigError, RangeError


def init(args):
    if not os.path.exists(str(args.config)):
        config.write(args.config)
        log.info('Configuration file created at %s' % args.config)
    else:
        log.error("{0} already exists".format(args.config))


def run_status(args):
    config.log_values(args, sections=('general', ))
    config.show_config(args.config)


def _parse_list(text, kind, what):
    try:
        return tuple(kind(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise RangeError('cannot parse %s from %r' % (what, text))


def _provenance(args, fname, section):
    config.write(fname + '.conf', args, sections=('general', section))


def run_gen_data(args):
    if args.kind == 'linear':
        corrs = _parse_list(args.corrs, float, 'correlations')
        ds = datagen.gen_linear_gaussian(args.n, len(corrs), corrs, args.dim_x, args.dim_y, args.seed)
    else:
        ds = datagen.gen_nonlinear_snippets(
            args.pieces, args.snippets_per_piece, latent_dim=args.latent_dim, noise=args.noise, seed=args.seed,
            shape_x=_parse_list(args.image_shape, int, 'image shape'),
            shape_y=_parse_list(args.audio_shape, int, 'audio shape'),
            textures=args.textures, stride=args.stride, shared_map=args.shared_map)
    datagen.save_dataset(ds, args.out)
    _provenance(args, args.out, 'gen-data')
    sha = utils.sha256_file(args.out)
    print('n=%d' % ds.n)
    print('sha=%s' % sha)
    utils.save_history(args.history_file, {'command': 'gen-data', 'artifact': os.path.abspath(args.out),
                                           'sha256': sha, 'kind': args.kind, 'n': ds.n, 'seed': args.seed})


def run_train(args):
    ds = datagen.load_dataset(args.data)
    cfg = trainer.TrainConfig(batch_size=args.batch_size, lr0=args.lr0, momentum=args.momentum,
                              halve_every=args.halve_every, epochs=args.epochs, eps=args.eps, seed=args.seed,
                              h=args.h, encoder_x=args.encoder_x, encoder_y=args.encoder_y,
                              validate_every=args.validate_every)
    log.info('batch_size=%d lr0=%g momentum=%g halve_every=%d epochs=%d eps=%g h=%d'
             % (cfg.batch_size, cfg.lr0, cfg.momentum, cfg.halve_every, cfg.epochs, cfg.eps, cfg.h))
    try:
        ckpt = trainer.train(ds, cfg, nproc=args.nproc)
    except DivergedError:
        for fname in (args.out, args.out + '.conf'):
            if os.path.exists(fname):
                os.remove(fname)
        raise
    trainer.save_checkpoint(ckpt, args.out)
    _provenance(args, args.out, 'train')
    last = ckpt.history[-1] if ckpt.history else None
    utils.save_history(args.history_file, {
        'command': 'train', 'artifact': os.path.abspath(args.out), 'sha256': utils.sha256_file(args.out),
        'dataset': os.path.abspath(args.data), 'epochs': cfg.epochs, 'seed': cfg.seed,
        'final_loss': None if last is None else float(last.loss),
        'final_val_corr': None if last is None else float(last.val_corr),
        'train_corr': float(np.sum(ckpt.cca.corrs))})


def _split_rows(ds, split, limit):
    idx = ds.split_indices(split)
    if limit and limit < idx.size:
        idx = idx[:limit]
    elif limit > idx.size:
        log.warning('limit %d exceeds the %s split size, using %d snippets' % (limit, split, idx.size))
    return idx


def run_index(args):
    if args.limit < 0:
        raise RangeError('limit must be nonnegative, got %d' % args.limit)
    ckpt = trainer.load_checkpoint(args.ckpt)
    ds = datagen.load_dataset(args.data)
    idx = _split_rows(ds, args.split, args.limit)
    encoder = ckpt.encoder_x if args.modality == 'image' else ckpt.encoder_y
    views = ds.view_x if args.modality == 'image' else ds.view_y
    index = retrieval.build_index(encoder, ckpt.cca, views[idx], ds.piece_ids[idx], ds.positions[idx],
                                  args.modality, snippet_ids=idx, nproc=args.nproc)
    retrieval.save_index(index, args.out)
    _provenance(args, args.out, 'index')
    utils.save_history(args.history_file, {'command': 'index', 'artifact': os.path.abspath(args.out),
                                           'sha256': utils.sha256_file(args.out), 'modality': args.modality,
                                           'split': args.split, 'm': len(index)})


def _query_sample(args, ckpt, view):
    """Normalized query snippet of *view* plus its dataset id when known."""
    if args.data is not None:
        ds = datagen.load_dataset(args.data)
        idx = ds.split_indices(args.split)
        if not 0 <= args.sample < idx.size:
            raise BoundsError('sample %d outside the %s split of %d pairs' % (args.sample, args.split, idx.size))
        row = idx[args.sample]
        sample = ds.view_x[row] if view == 'x' else ds.view_y[row]
        return sample[None].astype(np.float64), int(row)
    if args.input is None:
        raise InvalidConfigError('query needs --input or --data')
    try:
        sample = np.load(args.input).astype(np.float64)
    except (OSError, ValueError) as e:
        raise InvalidConfigError('cannot read %s: %s' % (args.input, e))
    shape = ckpt.encoder(view).input_shape
    if sample.shape == shape:
        sample = sample[None]
    if sample.shape != (1,) + shape:
        raise DimensionError('query sample has shape %s, the %s encoder expects %s'
                             % (sample.shape, 'image' if view == 'x' else 'audio', shape))
    mean = ckpt.normalization.get('mean_%s' % view, 0.0)
    std = ckpt.normalization.get('std_%s' % view, 1.0)
    return (sample - mean) / std, None


def run_query(args):
    ckpt = trainer.load_checkpoint(args.ckpt)
    index = retrieval.load_index(args.index)
    # queries come from the modality the index does not hold
    view = 'y' if index.modality == 'image' else 'x'
    sample, target = _query_sample(args, ckpt, view)
    q = ckpt.project(view, ckpt.encoder(view).forward(sample, 'eval')[0])[0]
    if target is not None and target not in set(index.snippet_ids.tolist()):
        target = None
    result = retrieval.query(index, q, args.k, target_id=target)
    for rank, sid in enumerate(result.snippet_ids, start=1):
        j = index.position_of(sid)
        print('%d %d %d %d %.6f' % (rank, sid, index.piece_ids[j], index.positions[j], result.distances[rank - 1]))
    if result.rank_of_target is not None:
        log.info('paired snippet %d is ranked %d of %d' % (target, result.rank_of_target, len(index)))


def run_evaluate(args):
    ckpt = trainer.load_checkpoint(args.ckpt)
    ds = datagen.load_dataset(args.data)
    directions = list(retrieval.DIRECTIONS) if args.direction == 'both' else [args.direction]
    entry = {'command': 'evaluate', 'checkpoint': os.path.abspath(args.ckpt), 'dataset': os.path.abspath(args.data),
             'split': args.split}
    for direction in directions:
        report = retrieval.evaluate_retrieval(ckpt, ds, args.split, direction, args.limit, args.tolerance,
                                             nproc=args.nproc)
        print(retrieval.format_report(report))
        entry[direction] = {'r_at_1': report.r_at_1, 'r_at_5': report.r_at_5, 'r_at_10': report.r_at_10,
                            'mr': report.mr, 'm': report.m}
    utils.save_history(args.history_file, entry)


def run_plot(args):
    from dccaret_cli import plots

    ckpt = trainer.load_checkpoint(args.ckpt)
    ranks = None
    if args.data is not None:
        ds = datagen.load_dataset(args.data)
        ranks = retrieval.evaluate_retrieval(ckpt, ds, args.split, args.direction, args.limit,
                                             nproc=args.nproc).ranks
    plots.plot_training(ckpt.history, args.out, ranks=ranks, title=os.path.basename(args.ckpt))


CMD_PARSERS = [
    ('init',     init,         (),             "Create configuration file"),
    ('status',   run_status,   (),             "Show the resolved general options and the config file"),
    ('gen-data', run_gen_data, ('gen-data', ), "Generate a synthetic paired-view dataset"),
    ('train',    run_train,    ('train', ),    "Train both view encoders with the DCCA objective"),
    ('index',    run_index,    ('index', ),    "Embed one modality of a dataset split into a retrieval index"),
    ('query',    run_query,    ('query', ),    "Rank indexed snippets for a query of the other modality"),
    ('evaluate', run_evaluate, ('evaluate', ), "Report R@1, R@5, R@10 and median rank"),
    ('plot',     run_plot,     ('plot', ),     "Plot training curves and a target-rank histogram"),
]


def _sections_of(cmd):
    for name, _, sections, _ in CMD_PARSERS:
        if name == cmd:
            return sections + ('general', )
    return ('general', )


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)

    parser = argparse.ArgumentParser(prog='dccaret')
    parser.add_argument('--config', **config.SECTIONS['general']['config'])
    subparsers = parser.add_subparsers(title="Commands", metavar='')

    for cmd, func, sections, text in CMD_PARSERS:
        cmd_params = config.Params(sections=sections)
        cmd_parser = subparsers.add_parser(
            cmd, help=text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        cmd_parser = cmd_params.add_arguments(cmd_parser)
        cmd_parser.set_defaults(_func=func, _cmd=cmd)

    args = config.parse_known_args(parser, argv, _sections_of, [c[0] for c in CMD_PARSERS])
    if not hasattr(args, '_func'):
        parser.print_usage(sys.stderr)
        sys.stderr.write('Missing command selection. For options run: dccaret -h\n')
        sys.exit(2)

    # make sure logs directory exists
    if not os.path.exists(args.logs_home):
        os.makedirs(args.logs_home)
    lfname = os.path.join(args.logs_home, 'dccaret_' +
                          datetime.strftime(datetime.now(), "%Y-%m-%d_%H_%M_%S") + '.log')
    log.setup_custom_logger(lfname, level=logging.DEBUG if args.verbose else logging.INFO)
    log.info("Started dccaret %s" % args._cmd)
    log.info("Saving log at %s" % lfname)

    try:
        args._func(args)
    except DccaError as e:
        log.error(str(e))
        sys.exit(e.exit_code)


if __name__ == '__main__':
    main()
