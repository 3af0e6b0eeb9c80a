"""Command-line entry point: ``freeprop <subcommand> [--config FILE] [--set section.key=value ...]``."""
import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

from .core.context import RunContext
from .core.enums import AblationAxis, Subcommand
from .core.errors import ConfigError, DatasetError, FreepropError, InvalidArgumentError
from .data.synthdata import Scene, generate_dataset, read_dataset, read_scene, scene_id, write_dataset
from .events.decorators import CHECKPOINT_SAVED, EPOCH_END, STEP_END, on_event
from .events.manager import EventManager
from .pipeline.ablation import run_ablation
from .pipeline.checkpoint import load_checkpoint, save_checkpoint
from .pipeline.evaluation import evaluate
from .pipeline.model import ModelParams, forward
from .pipeline.training import train
from .render.heatmaps import export_csp_masks, export_point_similarity, export_query_overlays, export_similarity_maps
from .utils.config import ConfigManager, LoggingConfig, RunConfig
from .utils.logging import ROOT_LOGGER, setup_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
LOG_FILE = 'freeprop.log'


class TrainingReporter:
    """Relays training events to the console."""

    def __init__(self, ctx: RunContext):
        self.ctx = ctx

    @on_event(STEP_END, every=10)
    def report_step(self, step: int, epoch: int, loss, grad_norm: float) -> None:
        logger.info(f'Step {step} (epoch {epoch}): loss {loss.total:.5f}, grad norm {grad_norm:.4f}')

    @on_event(EPOCH_END)
    def report_epoch(self, step: int, epoch: int, loss) -> None:
        self.ctx.info(f'epoch {epoch}: total {loss.total:.5f} reg {loss.reg:.4f} cls {loss.cls:.4f} rt {loss.rt:.4f} ctr {loss.ctr:.4f}')

    @on_event(CHECKPOINT_SAVED)
    def report_checkpoint(self, step: int, epoch: int, path: str) -> None:
        logger.info(f'Checkpoint for epoch {epoch}: {path}')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='freeprop', description='Prompt-free region proposals on synthetic scenes.')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run configuration')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE', help='override one configuration value')
    common.add_argument('--out', help='output directory (overrides paths.out_dir)')
    common.add_argument('--log-level', help='console and file log level (overrides logging.level)')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser(Subcommand.GEN_DATA.value, parents=[common], help='write a synthetic dataset')
    gen.add_argument('--split', choices=('train', 'eval'), default='train', help='eval writes the held-out scenes that follow the training range')

    sub.add_parser(Subcommand.TRAIN.value, parents=[common], help='train and checkpoint every epoch')
    sub.add_parser(Subcommand.EVAL.value, parents=[common], help='AR report on the held-out scenes')

    propose = sub.add_parser(Subcommand.PROPOSE.value, parents=[common], help='ranked boxes for one scene')
    propose.add_argument('--scene', required=True, help='scene id or index')

    ablate = sub.add_parser(Subcommand.ABLATE.value, parents=[common], help='sweep one axis')
    ablate.add_argument('--axis', required=True, choices=[a.value for a in AblationAxis])

    heatmap = sub.add_parser(Subcommand.HEATMAP.value, parents=[common], help='similarity maps, cascade masks and query overlays')
    heatmap.add_argument('--scene', required=True, help='scene id or index')
    heatmap.add_argument('--point', help='normalized x,y for the point-feature similarity map')
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f'paths.out_dir={args.out}')
    if args.log_level:
        overrides.append(f'logging.level={args.log_level}')
    return ConfigManager(args.config, overrides).resolve()


def _configure_logging(run: RunConfig) -> None:
    log_file = run.logging.file or os.path.join(run.paths.out_dir, LOG_FILE)
    setup_logger(ROOT_LOGGER, LoggingConfig(level=run.logging.level, file=log_file))


def _eval_scenes(run: RunConfig) -> List[Scene]:
    if run.paths.eval_dir:
        return read_dataset(run.paths.eval_dir, workers=run.eval.workers)
    return generate_dataset(run.scene, count=run.eval.held_out, first_index=run.scene.first_index + run.scene.count, workers=run.eval.workers)


def _train_scenes(run: RunConfig) -> List[Scene]:
    scenes = read_dataset(run.paths.data_dir, workers=run.train.workers)
    if not scenes:
        raise DatasetError(None, f'no scenes in {os.path.abspath(run.paths.data_dir)}; run gen-data first')
    return scenes


def _load_params(run: RunConfig) -> ModelParams:
    if run.paths.checkpoint:
        return load_checkpoint(run.paths.checkpoint)
    logger.warning(f'No checkpoint configured; using the untrained model for seed {run.train.seed}')
    return ModelParams.init(run.model, run.train.seed)


def _find_scene(run: RunConfig, reference: str) -> Scene:
    try:
        index: Optional[int] = int(reference)
    except ValueError:
        index = None
    if index is not None and index < 0:
        raise InvalidArgumentError(f'scene index must be non-negative, got {index}')
    data_dir = run.paths.data_dir
    if os.path.isdir(data_dir):
        for sid in dict.fromkeys([reference] if index is None else [scene_id(index), reference]):
            scene = read_scene(data_dir, sid)
            if scene is not None:
                return scene
    if index is None:
        raise DatasetError(reference, 'scene not found in the dataset directory')
    return generate_dataset(run.scene, count=1, first_index=index)[0]


def _parse_point(text: str) -> Tuple[float, float]:
    try:
        x, y = (float(part) for part in text.split(','))
    except ValueError:
        raise InvalidArgumentError(f'--point must look like x,y, got {text!r}')
    return x, y


def cmd_gen_data(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    if args.split == 'eval':
        directory = run.paths.eval_dir or f'{run.paths.data_dir.rstrip(os.sep)}_eval'
        scenes = generate_dataset(run.scene, count=run.eval.held_out, first_index=run.scene.first_index + run.scene.count, workers=run.train.workers)
    else:
        directory = args.out or run.paths.data_dir
        scenes = generate_dataset(run.scene, workers=run.train.workers)
    path = write_dataset(scenes, directory, workers=run.train.workers)
    ctx.success(f'{len(scenes)} scenes written to {path}')


def cmd_train(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    scenes = _train_scenes(run)
    events = EventManager()
    events.register_object(TrainingReporter(ctx))
    ctx.write_json('config.json', run.to_dict())
    result = train(scenes, run.train, run.model, run.csp, run.loss, checkpoint_dir=ctx.path('checkpoints'), events=events)
    ctx.write_json('loss_log.json', result.loss_log())
    final = save_checkpoint(result.params, ctx.path('model.pfrp'))
    ctx.success(f'trained {run.train.epochs} epochs; final loss {result.epochs[-1].total:.5f}; model at {final}')


def cmd_eval(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    params = _load_params(run)
    report = evaluate(params, _eval_scenes(run), run.model, run.csp, run.eval)
    path = ctx.write_json('eval.json', report.to_dict())
    for budget, recall in sorted(report.by_budget.items()):
        ctx.info(f'AR@{budget}: {recall.ar:.4f}  AR_s {recall.ar_small}  AR_m {recall.ar_medium}  AR_l {recall.ar_large}')
    ctx.success(f'report written to {path}')


def cmd_propose(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    scene = _find_scene(run, args.scene)
    params = _load_params(run)
    result = forward(scene.image, params, run.model, run.csp)
    path = ctx.write_json(f'proposals_{scene.id}.json', {'scene': scene.id, 'proposals': [p.to_dict() for p in result.proposals]})
    ctx.success(f'{len(result.proposals)} proposals written to {path}')


def cmd_ablate(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    table = run_ablation(AblationAxis(args.axis), run, _train_scenes(run), _eval_scenes(run))
    path = ctx.write_json(f'ablate_{args.axis}.json', table.to_dict())
    budget = max(run.eval.budgets)
    for value, ar in table.summary(budget):
        ctx.info(f'{args.axis}={value}: AR@{budget} {ar:.4f}')
    ctx.success(f'{len(table.rows)} rows written to {path}')


def cmd_heatmap(run: RunConfig, ctx: RunContext, args: argparse.Namespace) -> None:
    scene = _find_scene(run, args.scene)
    params = _load_params(run)
    result = forward(scene.image, params, run.model, run.csp)
    out_dir = ctx.path('heatmaps', scene.id)
    written = export_similarity_maps(result, params, out_dir)
    written += export_csp_masks(scene.image, result.masks, result.levels, out_dir)
    written += list(export_query_overlays(scene.image, result, run.model.num_queries, out_dir).values())
    if args.point:
        written += export_point_similarity(result, _parse_point(args.point), out_dir)
    ctx.success(f'{len(written)} figures written to {out_dir}')


COMMANDS = {
    Subcommand.GEN_DATA: cmd_gen_data,
    Subcommand.TRAIN: cmd_train,
    Subcommand.EVAL: cmd_eval,
    Subcommand.PROPOSE: cmd_propose,
    Subcommand.ABLATE: cmd_ablate,
    Subcommand.HEATMAP: cmd_heatmap,
}


def run(argv: Optional[Sequence[str]]=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logger(ROOT_LOGGER, LoggingConfig(level=args.log_level or 'INFO'))
    try:
        config = _resolve(args)
    except ConfigError as e:
        logger.error(f'Configuration error: {e}')
        print(f'❌ configuration error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    _configure_logging(config)
    ctx = RunContext(config.paths.out_dir)
    try:
        COMMANDS[Subcommand(args.command)](config, ctx, args)
    except ConfigError as e:
        logger.error(f'Configuration error: {e}', exc_info=True)
        ctx.error(f'configuration error: {e}')
        return EXIT_CONFIG
    except (FreepropError, OSError) as e:
        logger.error(f"Command '{args.command}' failed: {e}", exc_info=True)
        ctx.error(f'{type(e).__name__}: {e}')
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == '__main__':
    main()
