"""
CLI interface for SecLand
Handles command-line argument parsing and the generate/analyze/train/evaluate/report workflow
"""

import functools
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from . import __version__
from .baselines import CONFIG_SECTIONS, list_methods
from .baselines.als import AlsConfig
from .baselines.evaluate import MODES as BASELINE_MODES, run_baselines
from .baselines.vae import VaeConfig
from .core.detector import DetectorConfig
from .core.model import TrainedModel
from .core.predictor import PredictorConfig
from .core.subspace import MODES as SUBSPACE_MODES, AnalysisConfig, compare_2d_3d, default_primary_configs, \
    subspace_data_from_dataset
from .core.trainer import MODE_LABELS, MODES, TrainConfig, effective_label_ratio, run_ablation, train
from .eval.correlation import CORRELATION_FIELDS, correlation_stats
from .eval.evaluate import detect_frames, evaluate_model
from .eval.pckh import RESULT_FIELDS, TABLE_THRESHOLDS, default_thresholds
from .eval.report import TABLE_FILES, report_tables
from .synth.dataset import HEADER_FILE, INDEX_FILE, RIG_FILE, Dataset, GenerateConfig, generate_dataset, \
    load_dataset
from .ui import (
    console, create_enhanced_progress, create_pckh_table, create_results_table, create_subspace_table,
    print_enhanced_banner, print_error, print_help_enhancement, print_run_summary, set_color,
)
from .utils.config import load_config_file, output_root, resolve_section
from .utils.errors import ConfigError, SeclandError
from .utils.helpers import default_threads, format_duration, parse_list
from .utils.logger import setup_logger
from .utils.output import OutputManager

RESULTS_FILE = 'results.csv'
MAX_THREADS = 256


@dataclass
class RunConfig:
    """Options shared by every subcommand; written to config.json as `options`"""

    command: str
    output_dir: str
    seed: Optional[int] = None
    threads: int = 1
    dataset: Optional[str] = None
    config_file: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)


class Session:
    """Per-invocation state: logger, config file sections and the output directory"""

    def __init__(self, command: str, options: Dict[str, Any], dataset: Optional[str] = None,
                 inputs: Optional[List[str]] = None):
        self.started = time.monotonic()
        self.silent = options['silent']
        set_color(not options['no_color'])
        self.logger = setup_logger(options['verbose'], options['log_file'], command=command)
        if not self.silent:
            print_enhanced_banner()

        threads = options['threads'] if options['threads'] is not None else default_threads()
        if threads < 1:
            raise ConfigError(f"Thread count must be at least 1, got {threads}")
        if threads > MAX_THREADS:
            self.logger.warning(f"Thread count limited to {MAX_THREADS}")
            threads = MAX_THREADS

        self.file_config = load_config_file(options['config_file'])
        output_dir = Path(options['output_dir']) if options['output_dir'] else output_root() / command
        self.run = RunConfig(command, str(output_dir), options['seed'], threads, dataset, options['config_file'])
        self.output = OutputManager(output_dir, command, [p for p in ([dataset] + list(inputs or [])) if p])

    @property
    def threads(self) -> int:
        return self.run.threads

    def section(self, cls, name: str, overrides: Optional[Dict[str, Any]] = None):
        merged = dict(overrides or {})
        if self.run.seed is not None and 'seed' in cls.__dataclass_fields__:
            merged.setdefault('seed', self.run.seed)
        return resolve_section(cls, self.file_config, name, merged)

    def say(self, message: str):
        if not self.silent:
            console.print(message)

    def finish(self, sections: Dict[str, Any], **extra: Any):
        self.run.extra = extra
        self.output.save_config({name: asdict(value) if hasattr(value, '__dataclass_fields__') else value
                                 for name, value in sections.items()}, asdict(self.run))
        self.output.write_manifest()
        elapsed = format_duration(time.monotonic() - self.started)
        self.logger.info(f"{self.run.command} finished in {elapsed}")
        self.say(f"[blue]Outputs written to: {self.output.output_dir} ({elapsed})[/blue]")


def common_options(func: Callable) -> Callable:
    """Options every subcommand accepts"""
    options = [
        click.option('-c', '--config', 'config_file', type=click.Path(dir_okay=False),
                     help='🧾 JSON config file of named sections (flags override it)'),
        click.option('-o', '--output', 'output_dir',
                     help='💾 Output directory (default: $SECLAND_OUTPUT_ROOT/<command>)'),
        click.option('--seed', type=int, default=None, help='🎲 Master seed'),
        click.option('--threads', type=int, default=None,
                     help='⚡ Worker threads (default: available cores)'),
        click.option('-v', '--verbose', is_flag=True, default=False, help='📊 Enable detailed verbose logging'),
        click.option('--log-file', help='📋 Custom log file path for detailed logs'),
        click.option('--silent', is_flag=True, default=False, help='🔇 Suppress banner and non-essential output'),
        click.option('--no-color', is_flag=True, default=False, help='🎨 Disable colored terminal output'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _split_options(kwargs: Dict[str, Any]) -> Dict[str, Any]:
    names = ('config_file', 'output_dir', 'seed', 'threads', 'verbose', 'log_file', 'silent', 'no_color')
    return {name: kwargs.pop(name) for name in names}


def handle_errors(func: Callable) -> Callable:
    """Map structured errors to exit codes"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SeclandError as e:
            print_error(e.to_dict())
            logging.getLogger('secland').debug("Command failed", exc_info=True)
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            console.print("\n[yellow]Interrupted by user[/yellow]")
            sys.exit(130)
        except Exception as e:
            print_error({'error': type(e).__name__, 'message': str(e)})
            logging.getLogger('secland').error(f"Unexpected failure: {e}", exc_info=True)
            sys.exit(1)
    return wrapper


def _dataset_option(func: Callable) -> Callable:
    return click.option('-d', '--dataset', required=True, type=click.Path(exists=True, file_okay=False),
                        help='📁 Dataset directory written by `secland generate`')(func)


def _train_overrides(mode, phase1_steps, phase2_steps, batch_size, learning_rate, lambda_labeled, label_ratio):
    return {
        'mode': mode, 'phase1_steps': phase1_steps, 'phase2_steps': phase2_steps, 'batch_size': batch_size,
        'learning_rate': learning_rate, 'lambda_labeled': lambda_labeled, 'label_ratio': label_ratio,
    }


def _training_options(func: Callable) -> Callable:
    options = [
        click.option('--phase1-steps', type=int, default=None, help='🏋️ Supervised pretraining steps'),
        click.option('--phase2-steps', type=int, default=None, help='🔁 Semi-supervised refinement steps'),
        click.option('--batch-size', type=int, default=None, help='📦 Batch size (default: 10)'),
        click.option('--learning-rate', type=float, default=None, help='📉 Base learning rate (default: 1e-4)'),
        click.option('--lambda-labeled', type=float, default=None, help='⚖️ Weight of the labeled loss'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load(session: Session, path: str) -> Dataset:
    dataset = load_dataset(path)
    session.logger.info(f"Loaded {len(dataset.frames)} frames from {path}")
    return dataset


@click.group(invoke_without_command=True, context_settings=dict(help_option_names=['-h', '--help']))
@click.option('--examples', is_flag=True, default=False, help='📚 Show usage examples and exit')
@click.version_option(__version__, prog_name='secland')
@click.pass_context
def cli(ctx: click.Context, examples: bool):
    """
    SecLand - learn secondary landmarks from primary landmarks and multiview geometry

    \b
    🚀 QUICK START EXAMPLES:

    \b
    # Synthetic data, 4 cameras, 1:10 secondary labels
    secland generate -o data/synth --seed 7

    \b
    # Train and evaluate the full objective
    secland train -d data/synth --mode full -o runs/full
    secland evaluate -d data/synth -m runs/full/final.json -o runs/full/eval

    \b
    📚 For more examples: secland --examples
    """
    if examples:
        print_help_enhancement()
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@cli.command()
@common_options
@click.option('--frames', type=int, default=None, help='🎞️ Training frames (default: 1000)')
@click.option('--test-frames', type=int, default=None, help='🧪 Held-out test frames (default: 200)')
@click.option('--label-ratio', type=float, default=None, help='🏷️ Fraction of frames with secondary labels')
@click.option('--primary-ratio', type=float, default=None, help='🏷️ Fraction of frames with primary labels')
@click.option('--cameras', type=int, default=None, help='📷 Number of cameras in the ring (default: 4)')
@click.option('--image-size', type=int, default=None, help='🖼️ Square image size in pixels (default: 64)')
@handle_errors
def generate(frames, test_frames, label_ratio, primary_ratio, cameras, image_size, **kwargs):
    """Render a synthetic multiview dataset with D_Z / D_X / D_X^U splits"""
    session = Session('generate', _split_options(kwargs))
    file_generate = dict(session.file_config.get('generate', {}))
    for nested in ('rig', 'render', 'pose_model'):
        if nested in session.file_config:
            file_generate[nested] = {**file_generate.get(nested, {}), **session.file_config[nested]}
    rig = dict(file_generate.get('rig', {}))
    if cameras is not None:
        rig['num_cameras'] = cameras
    if image_size is not None:
        rig['image_size'] = image_size
    file_generate['rig'] = rig
    config = resolve_section(GenerateConfig, {'generate': file_generate}, 'generate', {
        'frames': frames, 'test_frames': test_frames, 'label_ratio': label_ratio,
        'primary_ratio': primary_ratio, 'seed': session.run.seed,
    })

    total = config.frames + config.test_frames
    session.say(f"[green]Generating {total} frames with {config.rig.num_cameras} cameras...[/green]")
    if session.silent:
        root = generate_dataset(session.output.output_dir, config, threads=session.threads)
    else:
        progress = create_enhanced_progress()
        with progress:
            task = progress.add_task("🎞️ Rendering frames...", total=total, status="")
            root = generate_dataset(session.output.output_dir, config, threads=session.threads,
                                    progress=lambda n: progress.update(task, advance=n))
    # Image payloads are covered by the index checksums
    for name in (HEADER_FILE, INDEX_FILE, RIG_FILE):
        session.output.track(root / name)
    session.finish({'generate': config})
    dataset = load_dataset(root)
    counts = dataset.to_split().counts
    if not session.silent:
        print_run_summary("Dataset", {**counts, 'cameras': len(dataset.cameras), 'path': str(root)})


@cli.command('analyze-subspace')
@common_options
@_dataset_option
@click.option('--modes', default='2d,3d', help='📐 Comma separated subset of 2d,3d')
@click.option('--num-bases', type=int, default=None, help='🧮 Number of bases B (default: variance rule)')
@click.option('--configs', 'config_names', default=None,
              help='⚙️ Comma separated primary configurations (default: all)')
@click.option('--per-view', is_flag=True, default=None, help='📷 Fit one 2D basis per camera')
@handle_errors
def analyze_subspace(dataset, modes, num_bases, config_names, per_view, **kwargs):
    """Compare secondary reconstruction from primaries in 2D and 3D shared spaces"""
    session = Session('analyze-subspace', _split_options(kwargs), dataset)
    config = session.section(AnalysisConfig, 'analysis', {'num_bases': num_bases, 'per_view': per_view})
    selected_modes = parse_list(modes, str.lower, SUBSPACE_MODES)
    if not selected_modes:
        raise ConfigError("Select at least one of 2d,3d")
    data = _load(session, dataset)
    configs = default_primary_configs(data.skeleton.primary_names)
    if config_names:
        wanted = parse_list(config_names, str, [c.name for c in configs])
        configs = [c for c in configs if c.name in wanted]

    report = compare_2d_3d(subspace_data_from_dataset(data), configs, config.num_bases,
                           data.skeleton.secondary_names, selected_modes, config)
    session.output.save_csv('subspace_landmarks.csv', report.rows)
    session.output.save_csv('subspace_summary.csv', report.summary)
    session.output.save_json('subspace_bases.json', {'num_bases': report.num_bases, 'skipped': report.skipped})
    session.finish({'analysis': config}, modes=selected_modes, configs=[c.name for c in configs])
    if not session.silent:
        console.print(create_subspace_table(report.summary))


@cli.command('train')
@common_options
@_dataset_option
@click.option('--mode', type=click.Choice(MODES, case_sensitive=False), default=None,
              help='🧪 Objective: supervised | triangulation | geometric | full')
@_training_options
@click.option('--label-ratio', type=float, default=None,
              help='🏷️ Keep secondary labels on this fraction of frames (at most the dataset ratio)')
@click.option('--init', 'init_checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='📦 Start from this model checkpoint')
@handle_errors
def train_command(dataset, mode, phase1_steps, phase2_steps, batch_size, learning_rate, lambda_labeled,
                  label_ratio, init_checkpoint, **kwargs):
    """Pretrain on labeled data, then refine with multiview self-supervision"""
    session = Session('train', _split_options(kwargs), dataset, [init_checkpoint] if init_checkpoint else None)
    config = session.section(TrainConfig, 'train', _train_overrides(
        mode, phase1_steps, phase2_steps, batch_size, learning_rate, lambda_labeled, label_ratio))
    detector_config = session.section(DetectorConfig, 'detector')
    predictor_config = session.section(PredictorConfig, 'predictor')
    data = _load(session, dataset)
    model = TrainedModel.load(init_checkpoint) if init_checkpoint else None

    total = config.phase1_steps + config.phase2_steps
    session.say(f"[green]Training {config.mode_label} for {total} steps...[/green]")
    if session.silent:
        result = train(config, data.to_split(), data.skeleton, detector_config, predictor_config,
                       session.output.output_dir, model)
    else:
        progress = create_enhanced_progress()
        with progress:
            task = progress.add_task("🏋️ Training...", total=total, status="")

            def report(step: int, row: Dict[str, Any]):
                progress.update(task, advance=1, status=f"phase {row['phase']} loss {row['objective']:.4g}")

            result = train(config, data.to_split(), data.skeleton, detector_config, predictor_config,
                           session.output.output_dir, model, report)
    for path in result.checkpoints.values():
        session.output.track(path)
    if result.log_path:
        session.output.track(result.log_path)
    session.finish({'train': config, 'detector': detector_config, 'predictor': predictor_config})
    if not session.silent:
        summary = {'mode': config.mode_label, 'steps': result.steps}
        summary.update({key: result.last_row[key] for key in ('objective', 'pairs', 'skipped_pairs')
                        if key in result.last_row})
        print_run_summary("Training", summary)


@cli.command('evaluate')
@common_options
@_dataset_option
@click.option('-m', '--checkpoint', required=True, type=click.Path(exists=True, dir_okay=False),
              help='📦 Model checkpoint (final.json)')
@click.option('--thresholds', default=None, help='🎯 Comma separated PCKh thresholds (default: 0.05..1.0 grid)')
@click.option('--correlation', is_flag=True, default=False,
              help='🔗 Also compute self/cross feature correlations on test frames')
@click.option('--batch-size', type=int, default=32, help='📦 Images per forward pass')
@handle_errors
def evaluate_command(dataset, checkpoint, thresholds, correlation, batch_size, **kwargs):
    """Score a trained model with PCKh on the test frames"""
    session = Session('evaluate', _split_options(kwargs), dataset, [checkpoint])
    model = TrainedModel.load(checkpoint)
    data = _load(session, dataset)
    split = data.to_split()
    grid = tuple(parse_list(thresholds, float)) or default_thresholds()
    result = evaluate_model(model, split.test, grid, batch_size)

    train_meta = model.meta.get('train', {})
    ratio = train_meta.get('label_ratio')
    context = {
        'source': 'evaluate',
        'method': 'secland',
        'mode': train_meta.get('mode', ''),
        'label_ratio': ratio if ratio is not None else effective_label_ratio(split),
        'primaries': 'detected',
    }
    session.output.save_csv(RESULTS_FILE, result.rows(**context), RESULT_FIELDS)
    session.output.save_json('frames.json', {'frame_ids': result.frame_ids, 'skipped': result.skipped_frames})

    extra = {'checkpoint': checkpoint, 'thresholds': list(grid)}
    if correlation:
        stats = correlation_stats(model, split.test, data.cameras)
        session.output.save_csv('correlations.csv', stats.records, CORRELATION_FIELDS)
        session.output.save_json('correlation_summary.json', stats.summary())
        extra['correlation'] = stats.summary()
    session.finish({}, **extra)

    if not session.silent:
        shown = [t for t in TABLE_THRESHOLDS if t in grid] or list(grid[:3])
        console.print(create_pckh_table(result, shown, f"PCKh ({MODE_LABELS.get(context['mode'], 'model')})"))
        if correlation:
            print_run_summary("Feature correlation", extra['correlation'])


@cli.command('ablate')
@common_options
@_dataset_option
@click.option('--modes', default='all', help='🧪 Comma separated training modes, or "all"')
@click.option('--ratios', default=None, help='🏷️ Comma separated label ratios (default: the dataset ratio)')
@_training_options
@handle_errors
def ablate(dataset, modes, ratios, phase1_steps, phase2_steps, batch_size, learning_rate, lambda_labeled,
           **kwargs):
    """Train and evaluate every mode x label-ratio combination on one dataset"""
    session = Session('ablate', _split_options(kwargs), dataset)
    selected = list(MODES) if modes.strip().lower() == 'all' else parse_list(modes, str.lower, MODES)
    ratio_list = parse_list(ratios, float) or [None]
    base = session.section(TrainConfig, 'train', _train_overrides(
        None, phase1_steps, phase2_steps, batch_size, learning_rate, lambda_labeled, None))
    grid = [TrainConfig.from_dict({**base.to_dict(), 'mode': mode, 'label_ratio': ratio})
            for ratio in ratio_list for mode in selected]
    detector_config = session.section(DetectorConfig, 'detector')
    predictor_config = session.section(PredictorConfig, 'predictor')
    data = _load(session, dataset)

    session.say(f"[green]Running {len(grid)} training runs with {session.threads} threads...[/green]")
    rows = run_ablation(grid, data.to_split(), data.skeleton, detector_config, predictor_config,
                        session.output.output_dir / 'runs', session.threads, show_progress=not session.silent)
    session.output.save_csv(RESULTS_FILE, rows, RESULT_FIELDS)
    session.finish({'train': base, 'detector': detector_config, 'predictor': predictor_config},
                   modes=selected, ratios=ratio_list)
    if not session.silent:
        console.print(create_results_table(rows, "Ablation"))


@cli.command('baselines')
@common_options
@_dataset_option
@click.option('--methods', default=','.join(list_methods()), help='🧩 Comma separated methods: als,bals,vae')
@click.option('--modes', default='2d,3d', help='📐 Comma separated subset of 2d,3d')
@click.option('-m', '--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='📦 Model checkpoint: adds detected-primary queries and the model\'s own rows')
@handle_errors
def baselines(dataset, methods, modes, checkpoint, **kwargs):
    """Impute secondary landmarks with ALS, BALS and a VAE for comparison"""
    session = Session('baselines', _split_options(kwargs), dataset, [checkpoint] if checkpoint else None)
    names = parse_list(methods, str.lower, list_methods())
    selected_modes = parse_list(modes, str.lower, BASELINE_MODES)
    section_types = {'als': AlsConfig, 'vae': VaeConfig}
    sections = {section: session.section(section_types[section], section)
                for section in sorted({CONFIG_SECTIONS[name] for name in names})}
    configs = {name: sections[CONFIG_SECTIONS[name]] for name in names}
    data = _load(session, dataset)
    split = data.to_split()

    detections = None
    model_rows: List[Dict[str, Any]] = []
    if checkpoint:
        model = TrainedModel.load(checkpoint)
        detections = detect_frames(model, split.test)
        train_meta = model.meta.get('train', {})
        result = evaluate_model(model, split.test, TABLE_THRESHOLDS)
        model_rows = result.rows(source='baselines', method='secland', mode=train_meta.get('mode', ''),
                                 label_ratio=effective_label_ratio(split), primaries='detected')

    rows = run_baselines(split, data.skeleton, names, selected_modes, configs, detections,
                         TABLE_THRESHOLDS, session.threads, show_progress=not session.silent)
    rows = model_rows + rows
    session.output.save_csv(RESULTS_FILE, rows, RESULT_FIELDS)
    session.finish(sections, methods=names, modes=selected_modes, checkpoint=checkpoint)
    if not session.silent:
        console.print(create_results_table(rows, "Baselines"))


@cli.command('report')
@common_options
@click.argument('sources', nargs=-1, type=click.Path(exists=True))
@handle_errors
def report(sources, **kwargs):
    """Merge result CSVs into table-shaped CSVs and PCKh curves"""
    session = Session('report', _split_options(kwargs), inputs=list(sources))
    bundle = report_tables(sources, session.output.output_dir)
    for name in TABLE_FILES.values():
        session.output.track(session.output.path(name))
    session.finish({}, sources=[str(p) for p in bundle.sources])
    if not session.silent:
        summary = {name: len(rows) for name, rows in bundle.tables.items()}
        summary['missing runs'] = len(bundle.gaps)
        print_run_summary("Report", summary, "bright_yellow" if bundle.empty or bundle.gaps else "bright_green")


def main():
    cli(prog_name='secland')


if __name__ == "__main__":
    main()
