import argparse
import logging
import shlex
import sys
from contextlib import contextmanager
from itertools import chain
from pathlib import Path
from textwrap import dedent, wrap
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, pipeline
from .assembler import rejection_report
from .codec import PoseBins
from .config import apply_defaults, read_config
from .drivers import checkpoint as ckpt
from .drivers import sdf, tokens, toml, voxl
from .drivers import vocab as vocab_io
from .fragmenter import DEFAULT_TABLE, Fragmenter
from .fragments import DEFAULT_MAX_SIZE, build_vocab
from .model.config import ModelConfig, OptimConfig
from .model.sampling import generate
from .model.training import make_samples, train
from .sketch import SketchParams
from .types import CLIChoice

_logger = logging.getLogger(__package__)


@contextmanager
def critical_logging():
    """Make sure the logging level is set even before parsing the CLI args"""
    try:
        yield
    except Exception:
        if "-vv" in sys.argv or "--very-verbose" in sys.argv:
            setup_logging(logging.DEBUG)
        raise


COMMON: Dict[str, dict] = {
    "config": dict(
        flags=("-c", "--config"),
        default=None,
        help="configuration file (`key = value` lines, `[<command>]` sections)",
    ),
    "verbose": dict(
        flags=("-v", "--verbose"),
        dest="loglevel",
        action="store_const",
        const=logging.INFO,
        help="set logging level to INFO",
    ),
    "very_verbose": dict(
        flags=("-vv", "--very-verbose"),
        dest="loglevel",
        action="store_const",
        const=logging.DEBUG,
        help="set logging level to DEBUG",
    ),
}

SEED = dict(flags=("--seed",), type=int, default=0, help="master random seed")
RULES = dict(
    flags=("-r", "--rules"),
    default=DEFAULT_TABLE,
    help="fragmentation rule table. Available tables:\n",
)
OUTPUT_DIR = dict(flags=("-o", "--output-dir"), type=Path, required=True, help="output directory")
CHECKPOINT = dict(flags=("--checkpoint",), type=Path, required=True, help="model checkpoint")
VOCAB = dict(flags=("--vocab",), type=Path, required=True, help="vocabulary directory")
POCKET = dict(
    flags=("--pocket",),
    type=Path,
    help="pocket cavity (.voxl) or SDF with the pocket atoms",
)
LIGAND = dict(flags=("--ligand",), type=Path, help="SDF with a reference ligand")
N_SHAPES = dict(flags=("--n-shapes",), type=int, default=10, help="shapes sketched in a pocket")
VMIN = dict(flags=("--vmin",), type=float, default=250.0, help="minimum shape volume (Å³)")
VMAX = dict(flags=("--vmax",), type=float, default=500.0, help="maximum shape volume (Å³)")
N = dict(flags=("-n", "--n"), type=int, default=100, help="molecules sampled per shape")
TOP_P = dict(flags=("--top-p",), type=float, default=0.95, help="nucleus sampling threshold")
BATCH = dict(flags=("--batch-size",), type=int, default=64, help="sequences decoded together")
SCORER = dict(
    flags=("--scorer",),
    default=None,
    help="scorer command line (SDF on stdin, one score per line on stdout)",
)
TIMEOUT = dict(flags=("--timeout",), type=float, default=60.0, help="scorer timeout (s)")
THRESHOLD = dict(
    flags=("--threshold",),
    type=float,
    default=None,
    help="keep molecules scoring at most this value",
)
SUCCESS = dict(
    flags=("--success-threshold",),
    type=float,
    default=None,
    help="score counted as a success (defaults to --threshold)",
)
TRAIN_KEYS = dict(
    flags=("--train-keys",),
    type=Path,
    default=None,
    help="file with the molecule keys of the training corpus (for novelty)",
)
BOX_CENTER = dict(
    flags=("--box-center",),
    type=float,
    nargs=3,
    metavar=("X", "Y", "Z"),
    default=None,
    help="centre of the pocket box (SDF pockets, atom bounding box by default)",
)
BOX_SIZE = dict(
    flags=("--box-size",),
    type=float,
    default=None,
    help="edge of the pocket box in Å (SDF pockets, atom bounding box by default)",
)


META: Dict[str, Dict[str, dict]] = {
    "corpus": {
        "size": dict(flags=("--size",), type=int, default=5000, help="molecules to synthesize"),
        "base": dict(
            flags=("--base",),
            type=Path,
            default=None,
            help="SDF with the base molecules (built-in library by default)",
        ),
        "rules": RULES,
        "max_vocab": dict(
            flags=("--max-vocab",), type=int, default=DEFAULT_MAX_SIZE, help="vocabulary size"
        ),
        "max_nodes": dict(
            flags=("--max-nodes",),
            type=int,
            default=pipeline.MAX_TREE_NODES,
            help="maximum fragments per molecule",
        ),
        "check_roundtrip": dict(
            flags=("--check-roundtrip",),
            action="store_true",
            help="fragment and reassemble every molecule, reporting failures",
        ),
        "seed": SEED,
        "output_dir": OUTPUT_DIR,
    },
    "train": {
        "corpus": dict(flags=("--corpus",), type=Path, required=True, help="training SDF"),
        "vocab": VOCAB,
        "steps": dict(flags=("--steps",), type=int, default=OptimConfig.steps),
        "batch_size": dict(flags=("--batch-size",), type=int, default=OptimConfig.batch_size),
        "lr": dict(flags=("--lr",), type=float, default=OptimConfig.lr, help="peak learning rate"),
        "warmup": dict(flags=("--warmup",), type=int, default=OptimConfig.warmup),
        "translation_range": dict(
            flags=("--translation-range",),
            type=float,
            default=OptimConfig.translation_range,
            help="augmentation shift per axis (Å), 0 disables augmentation",
        ),
        "dim": dict(flags=("--dim",), type=int, default=ModelConfig.dim),
        "layers": dict(
            flags=("--layers",),
            type=int,
            default=ModelConfig.layers_enc,
            help="encoder/decoder depth",
        ),
        "heads": dict(flags=("--heads",), type=int, default=ModelConfig.heads),
        "checkpoint_every": dict(
            flags=("--checkpoint-every",), type=int, default=OptimConfig.checkpoint_every
        ),
        "seed": SEED,
        "output_dir": OUTPUT_DIR,
    },
    "sketch": {
        "pocket": POCKET,
        "ligand": LIGAND,
        "n_shapes": N_SHAPES,
        "vmin": VMIN,
        "vmax": VMAX,
        "box_center": BOX_CENTER,
        "box_size": BOX_SIZE,
        "pitch": dict(
            flags=("--pitch",), type=float, default=ModelConfig.pitch, help="voxel edge (Å)"
        ),
        "extent": dict(
            flags=("--extent",), type=int, default=ModelConfig.extent, help="voxels per axis"
        ),
        "seed": SEED,
        "output_dir": OUTPUT_DIR,
    },
    "generate": {
        "checkpoint": CHECKPOINT,
        "shapes": dict(flags=("--shapes",), type=Path, nargs="+", required=True, help="VOXL files"),
        "n": N,
        "top_p": TOP_P,
        "batch_size": BATCH,
        "seed": SEED,
        "output_dir": OUTPUT_DIR,
    },
    "assemble": {
        "vocab": VOCAB,
        "tokens": dict(
            flags=("--tokens",), type=Path, nargs="+", required=True, help="token files"
        ),
        "shapes": dict(
            flags=("--shapes",),
            type=Path,
            nargs="+",
            default=None,
            help="shapes the token files were sampled for (one per file), used to place "
            "the molecules in the shape frame",
        ),
        "checkpoint": dict(
            flags=("--checkpoint",),
            type=Path,
            default=None,
            help="model checkpoint providing the pose bins (defaults otherwise)",
        ),
        "output_dir": OUTPUT_DIR,
    },
    "eval": {
        "molecules": dict(flags=("--molecules",), type=Path, required=True, help="SDF to evaluate"),
        "scorer": SCORER,
        "timeout": TIMEOUT,
        "threshold": THRESHOLD,
        "success_threshold": SUCCESS,
        "train_keys": TRAIN_KEYS,
        "rules": RULES,
        "plot_histogram": dict(
            flags=("--plot-histogram",),
            type=Path,
            default=None,
            help="write the score distribution as CSV to this path",
        ),
        "output_file": dict(
            flags=("-o", "--output-file"),
            default="-",
            type=argparse.FileType("w"),
            help="file where to write the metrics TOML (`stdout` by default)",
        ),
    },
    "design": {
        "checkpoint": CHECKPOINT,
        "vocab": VOCAB,
        "pocket": POCKET,
        "ligand": LIGAND,
        "n_shapes": N_SHAPES,
        "vmin": VMIN,
        "vmax": VMAX,
        "box_center": BOX_CENTER,
        "box_size": BOX_SIZE,
        "n": N,
        "top_p": TOP_P,
        "batch_size": BATCH,
        "workers": dict(
            flags=("--workers",), type=int, default=1, help="shapes processed in parallel"
        ),
        "scorer": SCORER,
        "timeout": TIMEOUT,
        "threshold": THRESHOLD,
        "success_threshold": SUCCESS,
        "train_keys": TRAIN_KEYS,
        "seed": SEED,
        "output_dir": OUTPUT_DIR,
    },
}

DESCRIPTIONS = {
    "corpus": "synthesize a training corpus and its fragment vocabulary",
    "train": "train the shape-to-fragments model",
    "sketch": "sketch molecular shapes from a pocket or a ligand",
    "generate": "sample fragment sequences for shapes",
    "assemble": "assemble and sanitize molecules from fragment sequences",
    "eval": "score, filter and compute metrics for generated molecules",
    "design": "run the complete design pipeline",
}

EXCLUSIVE = {"sketch": ("pocket", "ligand"), "design": ("pocket", "ligand")}


def __meta__(command: str, tables: Sequence[CLIChoice]) -> Dict[str, dict]:
    """'Hyper parameters' to instruct :mod:`argparse` how to create the CLI"""
    meta = {k: v.copy() for k, v in META[command].items()}
    if "rules" in meta:
        meta["rules"]["help"] += _choices_help(tables, lambda x: x.help_text.strip())
        meta["rules"]["choices"] = [t.name for t in tables]
    return meta


def build_parser(
    tables: Sequence[CLIChoice],
) -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    description = "Shape-conditioned fragment-based molecule design"
    parser = argparse.ArgumentParser(description=description, formatter_class=Formatter)
    parser.add_argument("-V", "--version", action="version", version=f"{__package__} {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    for opts in COMMON.values():
        opts = opts.copy()
        common.add_argument(*opts.pop("flags", ()), **opts)
    common.set_defaults(loglevel=logging.WARNING)

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    commands = {}
    for command, help in DESCRIPTIONS.items():
        cmd = sub.add_parser(
            command, help=help, description=help, parents=[common], formatter_class=Formatter
        )
        exclusive = EXCLUSIVE.get(command, ())
        group = cmd.add_mutually_exclusive_group(required=True) if exclusive else None
        for name, opts in __meta__(command, tables).items():
            target = group if name in exclusive else cmd
            target.add_argument(*opts.pop("flags", ()), **opts)  # type: ignore[union-attr]
        cmd.set_defaults(func=COMMANDS[command])
        commands[command] = cmd
    return parser, commands


def parse_args(args: Sequence[str], tables: Sequence[CLIChoice] = ()) -> argparse.Namespace:
    """Parse command line parameters

    Args:
      args: command line parameters as list of strings (for example  ``["--help"]``).

    Returns: command line parameters namespace
    """
    tables = tables or list(Fragmenter().tables.values())
    parser, commands = build_parser(tables)
    command = next((a for a in args if a in commands), None)
    if command:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("-c", "--config", default=None)
        known, _ = pre.parse_known_args(args)
        values = read_config(known.config, command) if known.config else {}
        apply_defaults(commands[command], values)
    return parser.parse_args(args)


def setup_logging(loglevel: int):
    """Setup basic logging

    Args:
      loglevel: minimum loglevel for emitting messages
    """
    logformat = "[%(levelname)s] %(message)s"
    logging.basicConfig(level=loglevel, stream=sys.stderr, format=logformat)


@contextmanager
def exceptions2exit():
    try:
        yield
    except Exception as ex:
        _logger.error(f"{ex.__class__.__name__}: {ex}")
        _logger.debug("Please check the following information:", exc_info=True)
        raise SystemExit(1)


@exceptions2exit()
def run(args: Sequence[str] = ()):
    """Entry point of the ``shapefrag`` command.

    Args:
      args (List[str]): command line parameters as list of strings
          (for example  ``["design", "--ligand", "ligand.sdf", ...]``).
    """
    with critical_logging():
        args = args or sys.argv[1:]
        params = parse_args(args)
    setup_logging(params.loglevel)
    params.func(params)


# ---- Subcommands ----


def corpus(params: argparse.Namespace):
    rules = Fragmenter().table(params.rules)
    base = sdf.load(params.base) if params.base else None
    rng = np.random.default_rng(params.seed)
    mols = pipeline.synth_corpus(params.size, rng, rules, base, max_nodes=params.max_nodes)
    out: Path = params.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sdf.dump(mols, out / "corpus.sdf")
    pipeline.write_keys(pipeline.corpus_keys(mols), out / "train_keys.txt")
    vocab = build_vocab(mols, rules, params.max_vocab)
    vocab_io.dump(vocab, out / "vocab")
    if params.check_roundtrip:
        ok, failures = pipeline.roundtrip_check(mols, vocab, rules, ModelConfig().bins)
        lines = ["name\tstage\tdetail\tdiagnosis"]
        lines.extend("\t".join(f) for f in failures)
        (out / "roundtrip.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        level = logging.WARNING if failures else logging.INFO
        _logger.log(level, f"Roundtrip: {ok} of {len(mols)} molecules recovered")
    _logger.info(f"{len(mols)} molecules, {len(vocab.entries)} fragments written to {out}")


def train_model(params: argparse.Namespace):
    vocab = vocab_io.load(params.vocab)
    rules = Fragmenter().table(vocab.rule_table or DEFAULT_TABLE)
    config = ModelConfig(
        vocab_size=len(vocab),
        dim=params.dim,
        layers_enc=params.layers,
        layers_dec=params.layers,
        heads=params.heads,
    )
    opt = OptimConfig(
        lr=params.lr,
        warmup=params.warmup,
        steps=params.steps,
        batch_size=params.batch_size,
        seed=params.seed,
        translation_range=params.translation_range,
        checkpoint_every=params.checkpoint_every,
    )
    samples = make_samples(sdf.load(params.corpus), vocab, rules, config)
    result = train(samples, config, opt, workdir=params.output_dir)
    _logger.info(f"Checkpoint written to {result.checkpoint}")


def _sketch_params(params: argparse.Namespace) -> SketchParams:
    return SketchParams(
        v_min=params.vmin, v_max=params.vmax, n_shapes=params.n_shapes, seed=params.seed
    )


def _box(params: argparse.Namespace) -> Tuple[Optional[Tuple[float, ...]], Optional[float]]:
    center = tuple(params.box_center) if params.box_center is not None else None
    return center, params.box_size


def sketch(params: argparse.Namespace):
    mode = "ligand" if params.ligand else "pocket"
    source = params.ligand or params.pocket
    sketch_params, box = _sketch_params(params), _box(params)
    grids, report = pipeline.sketch_shapes(
        source, mode, sketch_params, params.pitch, params.extent, *box
    )
    out: Path = params.output_dir
    pipeline.write_shapes(grids, out / "shapes")
    if report is not None:
        (out / "sketch.tsv").write_text(report.manifest(), encoding="utf-8")
    _logger.info(f"{len(grids)} shapes written to {out / 'shapes'}")


def generate_sequences(params: argparse.Namespace):
    model, _ = ckpt.load(params.checkpoint)
    out: Path = params.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(params.shapes):
        rng = np.random.default_rng([params.seed, i])
        result = generate(voxl.load(path), model, params.n, params.top_p, rng, params.batch_size)
        tokens.dump(result.sequences, out / f"{Path(path).stem}.tok")
        _logger.info(f"{path}: {len(result)} sequences ({result.dropped} dropped)")


def assemble_molecules(params: argparse.Namespace):
    vocab = vocab_io.load(params.vocab)
    bins = ckpt.load(params.checkpoint)[0].config.bins if params.checkpoint else PoseBins()
    shapes: List[Optional[Path]] = list(params.shapes or [])
    if shapes and len(shapes) != len(params.tokens):
        raise ValueError("--shapes needs exactly one shape per token file")
    shapes = shapes or [None] * len(params.tokens)
    kept, rejections = [], []
    for path, shape in zip(params.tokens, shapes):
        center = voxl.load(shape).spec.center if shape else (0.0, 0.0, 0.0)
        seqs = tokens.load(path)
        outcome = pipeline.assemble_sequences(seqs, vocab, bins, center, Path(path).stem)
        kept.extend(outcome.molecules)
        rejections.extend(outcome.rejections)
    out: Path = params.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sdf.dump(kept, out / "assembled.sdf")
    (out / "rejections.tsv").write_text(rejection_report(rejections), encoding="utf-8")
    _logger.info(f"{len(kept)} molecules kept, {len(rejections)} rejected")


def _scorer(params: argparse.Namespace) -> Optional[pipeline.ScorerSpec]:
    if not params.scorer:
        return None
    return pipeline.ScorerSpec(tuple(shlex.split(params.scorer)), timeout=params.timeout)


def _train_keys(params: argparse.Namespace) -> frozenset:
    return pipeline.read_keys(params.train_keys) if params.train_keys else frozenset()


def evaluate(params: argparse.Namespace):
    mols = sdf.load(params.molecules)
    scorer = _scorer(params)
    scores = None
    if scorer is not None:
        threshold = np.inf if params.threshold is None else params.threshold
        scores = pipeline.score_filter(mols, scorer, threshold).scores
        if params.plot_histogram:
            histogram = pipeline.score_histogram(scores)
            Path(params.plot_histogram).write_text(histogram, encoding="utf-8")
    success = params.threshold if params.success_threshold is None else params.success_threshold
    rules = Fragmenter().table(params.rules)
    report = pipeline.metrics(mols, scores, _train_keys(params), success, rules)
    params.output_file.write(toml.dumps(report.to_dict()))
    params.output_file.flush()


def design(params: argparse.Namespace):
    threshold = np.inf if params.threshold is None else params.threshold
    box_center, box_size = _box(params)
    design_params = pipeline.DesignParams(
        n_per_shape=params.n,
        top_p=params.top_p,
        seed=params.seed,
        sketch=_sketch_params(params),
        scorer=_scorer(params),
        threshold=float(threshold),
        success_threshold=params.success_threshold,
        train_keys=_train_keys(params),
        workers=params.workers,
        batch_size=params.batch_size,
        box_center=box_center,
        box_size=box_size,
    )
    manifest = pipeline.run_design(
        params.checkpoint,
        params.vocab,
        params.output_dir,
        design_params,
        ligand=params.ligand,
        pocket=params.pocket,
    )
    _logger.info(f"Run {manifest.run_id} {manifest.status}: {manifest.counts}")


COMMANDS: Dict[str, Callable[[argparse.Namespace], None]] = {
    "corpus": corpus,
    "train": train_model,
    "sketch": sketch,
    "generate": generate_sequences,
    "assemble": assemble_molecules,
    "eval": evaluate,
    "design": design,
}


class Formatter(argparse.RawTextHelpFormatter):
    # Since the stdlib does not specify what is the signature we need to implement in
    # order to create our own formatter, we are left no choice other then overwrite a
    # "private" method considered to be an implementation detail.

    def _split_lines(self, text, width):
        return list(chain.from_iterable(wrap(x, width) for x in text.splitlines()))


def _choices_help(choices: Sequence[CLIChoice], filt=lambda _: True) -> str:
    """``filt``: predicate function, only choices for which ``filt(c)`` is ``True`` will
    be included in the help text.
    """
    return "\n".join(_format_choice_help(c) for c in choices if filt(c))


def _flatten_str(text: str) -> str:
    if not text:
        return text
    text = " ".join(x.strip() for x in dedent(text).splitlines()).strip()
    text = text.rstrip(".,;").strip()
    return (text[0].lower() + text[1:]).strip()


def _format_choice_help(choice: CLIChoice) -> str:
    return f"- {choice.name!r}: {_flatten_str(choice.help_text)}."
