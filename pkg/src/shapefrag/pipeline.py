"""Design runs and their post-processing.

:func:`run_design` chains sketch → generate → delinearize → assemble → sanitize →
dedup → (optional) score filter → metrics and keeps every intermediate artifact under
the run directory, described by a :class:`RunManifest`.

The module also hosts :func:`synth_corpus`, which grows random fragment trees into
the synthetic molecules a desk-scale model is trained on.
"""

import logging
import math
import subprocess
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from . import building_blocks
from .assembler import Rejection, assemble, rejection_report, sanitize
from .codec import FragmentTree, PoseBins, TokenSequence, delinearize, encode_molecule
from .drivers import checkpoint as ckpt
from .drivers import sdf, tokens, toml, voxl
from .drivers import vocab as vocab_io
from .errors import (
    AssemblyError,
    CheckpointNotFound,
    EmptyInput,
    MalformedSequence,
    MultiComponent,
    PitchMismatch,
    ScorerProtocolError,
    TranslationOutOfRange,
    UnknownToken,
    VocabularyTooSmall,
)
from .fragmenter import DEFAULT_TABLE, Fragmenter
from .fragments import Fragment, FragmentVocab, base_key, build_vocab, fragment_keys
from .geom import Quaternion, RandomSource, VoxelGrid, compose, shape_tanimoto, voxelize
from .model.sampling import generate
from .molecule import Molecule, isomorphic, merge, molecule_key
from .rules import RuleTable, ring_atoms
from .sketch import (
    PocketShape,
    SketchParams,
    SketchReport,
    ligand_grid,
    pocket_box,
    pocket_from_atoms,
    sketch_from_ligand,
    sketch_from_pocket,
)

_logger = logging.getLogger(__name__)

MIN_VOCAB = 20
MAX_TREE_NODES = 8
JUNCTION_LENGTH = 1.5
"""Bond length (Å) used when joining fragments"""


# ---- Deduplication ----


def dedup(mols: Iterable[Molecule]) -> List[Molecule]:
    """Keep the first molecule of every molecular graph (conformation ignored)"""
    seen = set()
    out = []
    for m in mols:
        key = molecule_key(m)
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


# ---- External scoring ----


@dataclass(frozen=True)
class ScorerSpec:
    """External scorer: ``command`` reads SDF records on standard input and writes one
    decimal score per record on standard output (lower is better), exiting with 0.
    """

    command: Tuple[str, ...]
    timeout: float = 60.0
    batched: bool = True
    """Score everything in one call (falls back to one call per molecule on failure)"""

    def __post_init__(self):
        object.__setattr__(self, "command", tuple(self.command))
        if not self.command:
            raise ValueError("Scorer command cannot be empty")


class _ScorerFailed(Exception):
    pass


def _invoke(mols: Sequence[Molecule], scorer: ScorerSpec) -> List[float]:
    try:
        proc = subprocess.run(
            list(scorer.command),
            input=sdf.write_records(mols),
            capture_output=True,
            text=True,
            timeout=scorer.timeout,
            check=False,
        )
    except subprocess.TimeoutExpired:
        raise _ScorerFailed(f"timed out after {scorer.timeout} s") from None
    except OSError as ex:
        raise ScorerProtocolError(scorer.command, f"cannot be started ({ex})") from ex
    if proc.returncode != 0:
        raise _ScorerFailed(f"exit code {proc.returncode}: {proc.stderr.strip()[:200]}")

    lines = [line.strip() for line in proc.stdout.splitlines() if line.strip()]
    if len(lines) != len(mols):
        reason = f"{len(lines)} scores for {len(mols)} molecules"
        raise ScorerProtocolError(scorer.command, reason)
    scores = []
    for line in lines:
        try:
            value = float(line)
        except ValueError:
            raise ScorerProtocolError(scorer.command, f"{line!r} is not a number") from None
        if not math.isfinite(value):
            raise ScorerProtocolError(scorer.command, f"non-finite score {line!r}")
        scores.append(value)
    return scores


def score(mols: Sequence[Molecule], scorer: ScorerSpec) -> List[Optional[float]]:
    """Scores in input order; ``None`` marks molecules the scorer failed on"""
    if not mols:
        return []
    if scorer.batched:
        try:
            return list(_invoke(mols, scorer))
        except _ScorerFailed as ex:
            _logger.warning(f"Batched scoring failed ({ex}), scoring one molecule at a time")
    out: List[Optional[float]] = []
    for m in mols:
        try:
            out.append(_invoke([m], scorer)[0])
        except _ScorerFailed as ex:
            _logger.warning(f"{m.name or 'molecule'} left unscored: {ex}")
            out.append(None)
    return out


class ScoreFilterResult(NamedTuple):
    kept: List[Molecule]
    scores: List[Optional[float]]
    """Score of every input molecule (``None`` = unscored)"""

    @property
    def unscored(self) -> int:
        return sum(s is None for s in self.scores)


def score_filter(
    mols: Sequence[Molecule], scorer: ScorerSpec, threshold: float
) -> ScoreFilterResult:
    """Keep the molecules scoring at most ``threshold``; unscored ones are dropped"""
    scores = score(mols, scorer)
    kept = [m for m, s in zip(mols, scores) if s is not None and s <= threshold]
    result = ScoreFilterResult(kept, scores)
    if result.unscored:
        _logger.warning(f"{result.unscored} of {len(mols)} molecules could not be scored")
    return result


# ---- Metrics ----

PROD_TERMS = ("uniq", "nov", "succ", "div")


@dataclass
class MetricsReport:
    uniq: float
    nov: float
    div: float
    succ: Optional[float] = None
    """Only defined when a success threshold and scores are given"""
    prod: float = 0.0
    median_score: Optional[float] = None
    counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


def multiset_jaccard(a: Counter, b: Counter) -> float:
    """
    >>> multiset_jaccard(Counter("aab"), Counter("abc"))
    0.5
    """
    union = sum((a | b).values())
    return sum((a & b).values()) / union if union else 1.0


def diversity(mols: Sequence[Molecule], rules: RuleTable) -> float:
    """``1 -`` mean pairwise fragment-multiset Jaccard similarity (``0`` below two
    molecules)
    """
    if len(mols) < 2:
        return 0.0
    keys = [fragment_keys(m, rules) for m in mols]
    sims = [multiset_jaccard(keys[i], keys[j]) for i in range(len(keys)) for j in range(i)]
    return 1.0 - float(np.mean(sims))


def metrics(
    generated: Sequence[Molecule],
    scores: Optional[Sequence[Optional[float]]] = None,
    train_keys: Iterable[str] = (),
    success_threshold: Optional[float] = None,
    rules: Optional[RuleTable] = None,
    prod_terms: Sequence[str] = PROD_TERMS,
) -> MetricsReport:
    """Uniqueness, novelty, diversity and success of ``generated``.

    ``prod`` multiplies the ``prod_terms`` that are defined.
    """
    if not generated:
        raise EmptyInput("Computing metrics")
    rules = Fragmenter().table(DEFAULT_TABLE) if rules is None else rules
    train = set(train_keys)
    unique = dedup(generated)
    unique_keys = [molecule_key(m) for m in unique]
    novel = sum(k not in train for k in unique_keys)

    report = MetricsReport(
        uniq=len(unique) / len(generated),
        nov=novel / len(unique),
        div=diversity(unique, rules),
    )
    counts = {"total": len(generated), "unique": len(unique), "novel": novel}
    if scores is not None:
        scored = [s for s in scores if s is not None]
        counts["scored"] = len(scored)
        if scored:
            report.median_score = float(np.median(scored))
        if success_threshold is not None:
            hits = sum(s is not None and s <= success_threshold for s in scores)
            report.succ = hits / len(generated)
            counts["succeeded"] = hits
    report.counts = counts
    values = {"uniq": report.uniq, "nov": report.nov, "succ": report.succ, "div": report.div}
    report.prod = float(np.prod([values[t] for t in prod_terms if values[t] is not None]))
    return report


def score_histogram(scores: Iterable[Optional[float]], bins: int = 20) -> str:
    """Score distribution as ``low,high,count`` CSV rows (unscored entries ignored)"""
    values = np.array([s for s in scores if s is not None], dtype=np.float64)
    lines = ["low,high,count"]
    if values.size:
        counts, edges = np.histogram(values, bins=bins)
        rows = zip(edges[:-1].tolist(), edges[1:].tolist(), counts)
        lines.extend(f"{lo!r},{hi!r},{int(c)}" for lo, hi, c in rows)
    return "\n".join(lines) + "\n"


# ---- Synthetic corpus ----


def _align(v_from: np.ndarray, v_to: np.ndarray) -> Quaternion:
    """Rotation taking the unit vector ``v_from`` onto ``v_to``"""
    axis = np.cross(v_from, v_to)
    sin, cos = float(np.linalg.norm(axis)), float(np.dot(v_from, v_to))
    if sin < 1e-8:
        if cos > 0:
            return Quaternion.identity()
        helper = np.eye(3)[int(np.argmin(np.abs(v_from)))]
        return Quaternion.from_axis_angle(np.cross(v_from, helper), math.pi)
    return Quaternion.from_axis_angle(axis, math.atan2(sin, cos))


def ring_slots(f: Fragment) -> FrozenSet[int]:
    """Breakpoint slots sitting on a ring atom"""
    rings = ring_atoms(f.molecule())
    return frozenset(s for s, atom in enumerate(f.breakpoints) if atom in rings)


def attach(parent: Fragment, slot: int, child: Fragment, child_slot: int, spin: float) -> Fragment:
    """Pose ``child`` so that its breakpoint faces the parent breakpoint at
    :obj:`JUNCTION_LENGTH` along the parent exit, spun by ``spin`` about that exit.
    """
    exit_p = parent.world_exits()[slot]
    target = parent.world_coords()[parent.breakpoints[slot]] + JUNCTION_LENGTH * exit_p
    facing = _align(child.exits[child_slot], -exit_p)
    rotation = compose(facing, Quaternion.from_axis_angle(exit_p, spin))
    anchor = rotation.to_matrix() @ child.coords[child.breakpoints[child_slot]]
    return child.placed(rotation, target - anchor)


def _grow(
    pool: Sequence[Fragment], rings: Dict[str, FrozenSet[int]], rng: RandomSource, max_nodes: int
) -> Optional[Tuple[List[Fragment], List[Tuple[int, int, int, int]]]]:
    """Random tree of posed fragments; edges are ``(parent, slot, child, slot)``"""
    target = int(rng.integers(2, max_nodes + 1))
    nodes = [pool[int(rng.integers(len(pool)))]]
    open_slots = [(0, s) for s in range(len(nodes[0].breakpoints))]
    edges = []
    while open_slots:
        parent, slot = open_slots.pop(int(rng.integers(len(open_slots))))
        on_ring = slot in rings[nodes[parent].key]
        after = len(nodes) + 1 + len(open_slots)
        extra = 0 if after >= target else max_nodes - after
        options = []
        for f in pool:
            if len(f.breakpoints) - 1 > extra:
                continue
            slots = [t for t in range(len(f.breakpoints)) if on_ring or t in rings[f.key]]
            if slots:
                options.append((f, slots))
        if not options:
            return None
        child, slots = options[int(rng.integers(len(options)))]
        child_slot = slots[int(rng.integers(len(slots)))]
        spin = float(rng.uniform(0, 2 * math.pi))
        nodes.append(attach(nodes[parent], slot, child, child_slot, spin))
        idx = len(nodes) - 1
        edges.append((parent, slot, idx, child_slot))
        open_slots.extend((idx, t) for t in range(len(child.breakpoints)) if t != child_slot)
    return nodes, edges


def synth_corpus(
    size: int,
    rng: RandomSource,
    rules: Optional[RuleTable] = None,
    base: Optional[Sequence[Molecule]] = None,
    max_nodes: int = MAX_TREE_NODES,
    min_vocab: int = MIN_VOCAB,
) -> List[Molecule]:
    """Grow ``size`` molecules from random trees of 2 to ``max_nodes`` fragments.

    Fragments come from fragmenting ``base`` (the built-in library by default).
    Every junction involves a ring atom, so that fragmenting an output recovers the
    fragments it was grown from; candidates failing :func:`sanitize` or that check
    are redrawn.
    """
    if size <= 0:
        return []
    rules = Fragmenter().table(DEFAULT_TABLE) if rules is None else rules
    base = building_blocks.base_molecules() if base is None else base
    vocab = build_vocab(base, rules)
    pool = [f for f in vocab.entries if f.breakpoints]
    VocabularyTooSmall.check(len(pool), min_vocab)
    rings = {f.key: ring_slots(f) for f in pool}

    out: List[Molecule] = []
    budget = 100 * size
    attempts = 0
    while len(out) < size and attempts < budget:
        attempts += 1
        grown = _grow(pool, rings, rng, max_nodes)
        if grown is None:
            continue
        nodes, edges = grown
        offsets = np.cumsum([0] + [len(f) for f in nodes])
        bonds = [
            (
                int(offsets[p] + nodes[p].breakpoints[s]),
                int(offsets[c] + nodes[c].breakpoints[t]),
                1,
            )
            for p, s, c, t in edges
        ]
        m = merge([f.molecule(world=True) for f in nodes], bonds, f"synth-{len(out):05d}")
        if isinstance(sanitize(m), Rejection):
            continue
        if fragment_keys(m, rules) != Counter(base_key(f.key) for f in nodes):
            continue
        out.append(m.centered())
    if len(out) < size:
        _logger.warning(f"Only {len(out)} of {size} corpus molecules after {attempts} attempts")
    _logger.info(f"Synthesized {len(out)} molecules in {attempts} attempts")
    return out


def corpus_keys(mols: Iterable[Molecule]) -> FrozenSet[str]:
    return frozenset(molecule_key(m) for m in mols)


def write_keys(keys: Iterable[str], path: Union[str, Path]):
    Path(path).write_text("".join(f"{k}\n" for k in sorted(keys)), encoding="utf-8")


def read_keys(path: Union[str, Path]) -> FrozenSet[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(line.strip() for line in lines if line.strip())


# ---- Roundtrip check ----


class RoundtripFailure(NamedTuple):
    name: str
    stage: str
    """``encode``, ``assemble``, ``sanitize`` or ``isomorphism``"""
    detail: str
    diagnosis: str


def _reassembles(tree: FragmentTree, reference: Molecule, vocab: Optional[FragmentVocab]) -> bool:
    try:
        verdict = sanitize(assemble(tree, vocab).molecule)
    except AssemblyError:
        return False
    return not isinstance(verdict, Rejection) and isomorphic(verdict, reference)


def roundtrip(
    m: Molecule, vocab: FragmentVocab, rules: RuleTable, bins: PoseBins = PoseBins()
) -> Optional[RoundtripFailure]:
    """fragment → tree → tokens → assemble → sanitize; ``None`` when the result is
    isomorphic to ``m``.

    Failures are diagnosed by reassembling the tree with its exact (undiscretized)
    poses: if that works, the pose discretization is to blame, otherwise the order in
    which breakpoints are paired.
    """
    name = m.name or "molecule"
    centred = m.centered()
    try:
        tree, seq = encode_molecule(centred, vocab, rules, bins)
    except (MultiComponent, UnknownToken, TranslationOutOfRange) as ex:
        return RoundtripFailure(name, "encode", str(ex), "not encodable")

    stage, detail = "", ""
    try:
        verdict = sanitize(assemble(delinearize(seq, vocab, bins), vocab, name).molecule)
        if isinstance(verdict, Rejection):
            stage, detail = "sanitize", str(verdict)
        elif not isomorphic(verdict, m):
            stage, detail = "isomorphism", "reassembled graph differs"
    except AssemblyError as ex:
        stage, detail = "assemble", str(ex)
    if not stage:
        return None
    exact = _reassembles(tree, m, None)
    diagnosis = "pose discretization" if exact else "breakpoint pairing order"
    return RoundtripFailure(name, stage, detail, diagnosis)


def roundtrip_check(
    corpus: Sequence[Molecule], vocab: FragmentVocab, rules: RuleTable, bins: PoseBins = PoseBins()
) -> Tuple[int, List[RoundtripFailure]]:
    """Number of molecules surviving :func:`roundtrip`, plus the failures"""
    failures = []
    for m in corpus:
        failure = roundtrip(m, vocab, rules, bins)
        if failure is not None:
            _logger.warning(
                f"Roundtrip failed for {failure.name} at {failure.stage} "
                f"({failure.detail}); diagnosis: {failure.diagnosis}"
            )
            failures.append(failure)
    return len(corpus) - len(failures), failures


# ---- Design runs ----

STAGES = ("requested", "generated", "assembled", "sanitized", "deduped", "scored")


@dataclass(frozen=True)
class DesignParams:
    n_per_shape: int = 100
    top_p: float = 0.95
    seed: int = 0
    sketch: SketchParams = SketchParams()
    scorer: Optional[ScorerSpec] = None
    threshold: float = math.inf
    """Score filter cut-off"""
    success_threshold: Optional[float] = None
    train_keys: FrozenSet[str] = frozenset()
    workers: int = 1
    batch_size: int = 64
    box_center: Optional[Tuple[float, float, float]] = None
    """Centre of the pocket box (SDF pockets only)"""
    box_size: Optional[float] = None
    """Edge (Å) of the pocket box (SDF pockets only)"""


@dataclass
class RunManifest:
    run_id: str
    mode: str
    """``"ligand"`` or ``"pocket"``"""
    source: str
    checkpoint: str
    vocab: str
    sketch: Dict[str, Any] = field(default_factory=dict)
    sampling: Dict[str, Any] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    per_shape: List[Dict[str, Any]] = field(default_factory=list)
    status: str = "running"

    FILE = "manifest.toml"

    def is_monotone(self) -> bool:
        """Stage counts never grow along :obj:`STAGES`"""
        values = [self.counts[s] for s in STAGES if s in self.counts]
        return all(a >= b for a, b in zip(values, values[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "RunManifest":
        return cls(**doc)

    def dump(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / self.FILE
        toml.dump(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "RunManifest":
        return cls.from_dict(toml.load(Path(directory) / cls.FILE))


def _toml_safe(values: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for k, v in values.items():
        if v is None:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


@dataclass
class AssemblyOutcome:
    molecules: List[Molecule] = field(default_factory=list)
    """Sanitized molecules, in sequence order"""
    rejections: List[Tuple[str, Rejection]] = field(default_factory=list)
    assembled: int = 0


def assemble_sequences(
    sequences: Sequence[TokenSequence],
    vocab: FragmentVocab,
    bins: PoseBins = PoseBins(),
    center=(0.0, 0.0, 0.0),
    prefix: str = "mol",
) -> AssemblyOutcome:
    """Delinearize, assemble and sanitize every sequence, moving the molecules from the
    model frame to the shape frame (centred on ``center``)
    """
    outcome = AssemblyOutcome()
    for j, seq in enumerate(sequences):
        name = f"{prefix}-{j:05d}"
        try:
            tree = delinearize(seq, vocab, bins)
            assembled = assemble(tree, name=name).molecule
        except (MalformedSequence, UnknownToken, AssemblyError) as ex:
            _logger.debug(f"{name}: {ex}")
            continue
        outcome.assembled += 1
        verdict = sanitize(assembled.transformed(Quaternion.identity(), center))
        if isinstance(verdict, Rejection):
            outcome.rejections.append((name, verdict))
        else:
            outcome.molecules.append(verdict)
    return outcome


@dataclass
class _ShapeOutcome:
    grid: VoxelGrid
    sequences: List[TokenSequence]
    generated: int
    assembly: AssemblyOutcome


def _load_first(path: Union[str, Path]) -> Molecule:
    mols = sdf.load(path)
    if not mols:
        raise EmptyInput(f"Reading {path}")
    return mols[0]


def run_design(
    checkpoint: Union[str, Path],
    vocab_dir: Union[str, Path],
    workdir: Union[str, Path],
    params: DesignParams = DesignParams(),
    *,
    ligand: Optional[Union[str, Path]] = None,
    pocket: Optional[Union[str, Path]] = None,
) -> RunManifest:
    """Design molecules for a ``ligand`` (its own shape) or a ``pocket`` (sketched
    shapes; ``.voxl`` cavity grid or SDF with the pocket atoms).
    """
    CheckpointNotFound.check(checkpoint)
    if (ligand is None) == (pocket is None):
        raise ValueError("Exactly one of 'ligand' or 'pocket' is required")
    root = Path(workdir)
    for sub in ("shapes", "sequences"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    source = Path(ligand if ligand is not None else pocket)  # type: ignore[arg-type]
    manifest = RunManifest(
        run_id=root.name,
        mode="ligand" if ligand is not None else "pocket",
        source=str(source),
        checkpoint=str(checkpoint),
        vocab=str(vocab_dir),
        sampling={"n_per_shape": params.n_per_shape, "top_p": params.top_p, "seed": params.seed},
    )
    try:
        _design(manifest, root, source, params)
    except Exception as ex:
        manifest.status = f"failed: {ex.__class__.__name__}: {ex}"
        manifest.dump(root)
        raise
    manifest.status = "done"
    manifest.dump(root)
    _logger.info(f"Run {manifest.run_id}: {manifest.counts}")
    return manifest


def sketch_shapes(
    source: Union[str, Path],
    mode: str,
    params: SketchParams,
    pitch: float,
    extent: int,
    box_center: Optional[Sequence[float]] = None,
    box_size: Optional[float] = None,
) -> Tuple[List[VoxelGrid], Optional[SketchReport]]:
    """Input shapes of a run, on grids of ``extent`` cells of ``pitch`` Å centred on each
    shape: the ligand's own shape (``mode="ligand"``) or shapes sketched in a pocket.

    The pocket is either a ``.voxl`` cavity (whose pitch must be ``pitch``) or an SDF
    with its atoms, voxelized in the box given by ``box_center`` and ``box_size`` (the
    bounding box of the atoms by default).
    """
    source = Path(source)
    if mode == "ligand":
        ligand = _load_first(source)
        return [sketch_from_ligand(ligand, ligand_grid(ligand, pitch, extent))], None
    if source.suffix.lower() == ".voxl":
        cavity = PocketShape(voxl.load(source))
        PitchMismatch.check(cavity.spec.pitch, pitch)
    else:
        atoms = _load_first(source)
        cavity = pocket_from_atoms(atoms, pocket_box(atoms, pitch, box_center, box_size))
    report = sketch_from_pocket(cavity, replace(params, extent=extent))
    return report.grids, report


def write_shapes(grids: Sequence[VoxelGrid], directory: Union[str, Path]) -> List[Path]:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    paths = [root / f"shape-{i:03d}.voxl" for i in range(len(grids))]
    for grid, path in zip(grids, paths):
        voxl.dump(grid, path)
    return paths


def _sketch(
    manifest: RunManifest, root: Path, source: Path, params: DesignParams, config
) -> List[VoxelGrid]:
    box = (params.box_center, params.box_size)
    grids, report = sketch_shapes(
        source, manifest.mode, params.sketch, config.pitch, config.extent, *box
    )
    if report is None:
        manifest.sketch = {"kind": "ligand"}
        return grids
    (root / "sketch.tsv").write_text(report.manifest(), encoding="utf-8")
    manifest.outputs["sketch_report"] = "sketch.tsv"
    settings = {"kind": "pocket", "missing": report.missing, **asdict(params.sketch)}
    settings.update(box_center=params.box_center, box_size=params.box_size)
    manifest.sketch = _toml_safe(settings)
    return grids


def _design(manifest: RunManifest, root: Path, source: Path, params: DesignParams):
    model, _ = ckpt.load(manifest.checkpoint)
    vocab = vocab_io.load(manifest.vocab)
    config = model.config
    if len(vocab) != config.vocab_size:
        sizes = f"{len(vocab)} != {config.vocab_size}"
        raise ValueError(f"Vocabulary size does not match the model ({sizes})")
    rules = Fragmenter().table(vocab.rule_table or DEFAULT_TABLE)

    grids = _sketch(manifest, root, source, params, config)
    write_shapes(grids, root / "shapes")
    manifest.outputs["shapes"] = "shapes"
    manifest.counts["sketched"] = len(grids)
    manifest.counts["requested"] = len(grids) * params.n_per_shape

    def run_shape(i: int) -> _ShapeOutcome:
        grid = grids[i]
        rng = np.random.default_rng([params.seed, i])
        sampled = generate(grid, model, params.n_per_shape, params.top_p, rng, params.batch_size)
        seqs, center = sampled.sequences, grid.spec.center
        assembly = assemble_sequences(seqs, vocab, config.bins, center, f"shape{i:03d}")
        return _ShapeOutcome(grid, sampled.sequences, len(sampled), assembly)

    with ThreadPoolExecutor(max_workers=max(1, params.workers)) as pool:
        outcomes = list(pool.map(run_shape, range(len(grids))))

    sanitized: List[Molecule] = []
    rejections: List[Tuple[str, Rejection]] = []
    for i, out in enumerate(outcomes):
        tokens.dump(out.sequences, root / "sequences" / f"shape-{i:03d}.tok")
        mols = out.assembly.molecules
        sanitized.extend(mols)
        rejections.extend(out.assembly.rejections)
        overlap = [shape_tanimoto(out.grid, voxelize(m, out.grid.spec, clip=True)) for m in mols]
        row: Dict[str, Any] = {
            "shape": i,
            "generated": out.generated,
            "assembled": out.assembly.assembled,
            "sanitized": len(mols),
        }
        if overlap:
            row["shape_tanimoto"] = float(np.mean(overlap))
        manifest.per_shape.append(row)
    manifest.outputs["sequences"] = "sequences"
    manifest.counts["generated"] = sum(o.generated for o in outcomes)
    manifest.counts["assembled"] = sum(o.assembly.assembled for o in outcomes)
    manifest.counts["sanitized"] = len(sanitized)
    (root / "rejections.tsv").write_text(rejection_report(rejections), encoding="utf-8")
    sdf.dump(sanitized, root / "sanitized.sdf")
    manifest.outputs.update(rejections="rejections.tsv", sanitized="sanitized.sdf")

    deduped = dedup(sanitized)
    manifest.counts["deduped"] = len(deduped)
    sdf.dump(deduped, root / "deduped.sdf")
    manifest.outputs["deduped"] = "deduped.sdf"

    scores: Optional[List[Optional[float]]] = None
    if params.scorer is not None:
        filtered = score_filter(deduped, params.scorer, params.threshold)
        by_key = {molecule_key(m): s for m, s in zip(deduped, filtered.scores)}
        scores = [by_key.get(molecule_key(m)) for m in sanitized]
        manifest.counts["scored"] = len(filtered.kept)
        manifest.counts["unscored"] = filtered.unscored
        sdf.dump(filtered.kept, root / "scored.sdf")
        lines = ["name,score"] + [
            f"{m.name},{'' if s is None else repr(s)}" for m, s in zip(deduped, filtered.scores)
        ]
        (root / "scores.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest.outputs.update(scored="scored.sdf", scores="scores.csv")

    if sanitized:
        success = params.success_threshold
        if success is None and params.scorer is not None and math.isfinite(params.threshold):
            success = params.threshold
        report = metrics(sanitized, scores, params.train_keys, success, rules)
        toml.dump(report.to_dict(), root / "metrics.toml")
        manifest.outputs["metrics"] = "metrics.toml"
    else:
        _logger.warning("No molecule survived sanitization, metrics skipped")
