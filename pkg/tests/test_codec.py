import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapefrag.codec import (
    FragmentToken,
    FragmentTree,
    PoseBins,
    build_tree,
    delinearize,
    discretize_rotation,
    discretize_translation,
    encode_molecule,
    expected_length,
    is_balanced,
    linearize,
    rotation_error_bound,
    undiscretize_rotation,
    undiscretize_translation,
    validate_sequence,
)
from shapefrag.errors import (
    EmptyTree,
    InvalidRotation,
    MalformedSequence,
    TranslationOutOfRange,
    UnknownToken,
)
from shapefrag.fragments import Control, fragment
from shapefrag.geom import Quaternion, RigidMotion

BOS, EOS, BOB, EOB = Control.BOS, Control.EOS, Control.BOB, Control.EOB


def token(c, p=(32, 32, 32), r=(63, 32, 32, 32)):
    return FragmentToken(c, p, r)


def random_tree(vocab, rng, max_nodes=50, max_depth=8, spread=12.0):
    n = int(rng.integers(1, max_nodes + 1))
    depth = [0]
    children = [[]]
    for i in range(1, n):
        parents = [j for j in range(i) if depth[j] < max_depth]
        parent = parents[int(rng.integers(len(parents)))]
        children[parent].append(i)
        children.append([])
        depth.append(depth[parent] + 1)
    nodes = []
    for _ in range(n):
        entry = vocab.entries[int(rng.integers(len(vocab.entries)))]
        shift = rng.uniform(-spread, spread, size=3)
        nodes.append(entry.placed(Quaternion.random(rng), shift))
    return FragmentTree(nodes, children, 0)


# ---- Pose discretization ----


def test_translation_bins_edges():
    assert discretize_translation((-16.0, -16.0, -16.0)) == (0, 0, 0)
    assert discretize_translation((15.999, 0.0, 0.2)) == (63, 32, 32)
    assert undiscretize_translation((0, 32, 63)).tolist() == [-15.75, 0.25, 15.75]
    with pytest.raises(TranslationOutOfRange, match="outside"):
        discretize_translation((16.0, 0.0, 0.0))
    with pytest.raises(TranslationOutOfRange):
        discretize_translation((0.0, -16.5, 0.0))


def test_translation_error_bound():
    rng = np.random.default_rng(0)
    bins = PoseBins()
    points = rng.uniform(-16, 16, size=(10_000, 3))
    errors = [
        np.abs(undiscretize_translation(discretize_translation(p)) - p).max() for p in points
    ]
    assert max(errors) <= bins.translation_error == 0.25


def test_rotation_error_bound():
    rng = np.random.default_rng(1)
    bound = rotation_error_bound(64)
    assert bound < math.radians(4)
    worst = 0.0
    for _ in range(10_000):
        q = Quaternion.random(rng)
        back = undiscretize_rotation(discretize_rotation(q))
        worst = max(worst, q.angle_to(back))
    assert worst <= bound


def test_rotation_sign_is_canonical():
    q = Quaternion.from_axis_angle((1, 1, 0), 0.8)
    flipped = Quaternion(*(-c for c in q))
    assert discretize_rotation(q) == discretize_rotation(flipped)


def test_rotation_must_be_unit():
    with pytest.raises(InvalidRotation):
        discretize_rotation(Quaternion(1.0, 1.0, 0.0, 0.0))


def test_pose_bins_validation():
    with pytest.raises(ValueError, match="positive"):
        PoseBins(length=0.0)
    with pytest.raises(ValueError, match="Bin counts"):
        PoseBins(translation_bins=0)


# ---- Linear form ----


def chain_tree(vocab, n=3):
    nodes = [vocab.entries[i].placed(Quaternion.identity(), (0, 0, 0)) for i in range(n)]
    children = [[i + 1] for i in range(n - 1)] + [[]]
    return FragmentTree(nodes, children, 0)


def test_chain_is_inline(vocab):
    seq = linearize(chain_tree(vocab), vocab)
    assert seq[0] == BOS and seq[-1] == EOS
    assert [t.C for t in seq[1:-1]] == [5, 6, 7]
    assert not any(t in (BOB, EOB) for t in seq if isinstance(t, Control))


def test_branches_are_wrapped(vocab):
    nodes = [vocab.entries[i].placed(Quaternion.identity(), (0, 0, 0)) for i in range(4)]
    tree = FragmentTree(nodes, [[1, 2], [3], [], []], 0)
    seq = linearize(tree, vocab)
    layout = [t.C if isinstance(t, FragmentToken) else Control(t).name for t in seq]
    assert layout == ["BOS", 5, "BOB", 6, 8, "EOB", "BOB", 7, "EOB", "EOS"]
    assert len(seq) == expected_length(tree)
    assert is_balanced(seq)
    assert validate_sequence(seq) == 4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linearize_roundtrip(vocab, seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(vocab, rng)
    bins = PoseBins()
    seq = linearize(tree, vocab, bins)
    assert len(seq) == expected_length(tree)
    assert validate_sequence(seq) == len(tree)

    back = delinearize(seq, vocab, bins)
    assert back.structure() == tree.structure()
    bound = rotation_error_bound(bins.rotation_bins)
    for i, j in zip(tree.preorder(), back.preorder()):
        a, b = tree.nodes[i], back.nodes[j]
        assert np.abs(np.subtract(a.translation, b.translation)).max() <= bins.translation_error
        assert a.rotation.angle_to(b.rotation) <= bound + 1e-9


@pytest.mark.slow
def test_linearize_roundtrip_many_trees(vocab):
    rng = np.random.default_rng(11)
    bins = PoseBins()
    bound = rotation_error_bound(bins.rotation_bins)
    worst_angle = 0.0
    for _ in range(1000):
        tree = random_tree(vocab, rng)
        back = delinearize(linearize(tree, vocab, bins), vocab, bins)
        assert back.structure() == tree.structure()
        for i, j in zip(tree.preorder(), back.preorder()):
            a, b = tree.nodes[i], back.nodes[j]
            shift = np.abs(np.subtract(a.translation, b.translation)).max()
            assert shift <= bins.translation_error + 1e-9
            worst_angle = max(worst_angle, a.rotation.angle_to(b.rotation))
    assert worst_angle <= bound + 1e-9
    assert math.degrees(worst_angle) < 4.0


@pytest.mark.parametrize(
    "seq, match",
    [
        ([], "start with BOS"),
        ([EOS], "start with BOS"),
        ([BOS, BOB, EOS], "expected a fragment"),
        ([BOS, token(5)], "expected EOS, got end of sequence"),
        ([BOS, token(5), BOB, token(6), EOS], "unterminated branch"),
        ([BOS, token(5), EOS, EOS], "tokens after EOS"),
        ([BOS, token(5), EOB, EOS], "expected EOS, got EOB"),
    ],
)
def test_malformed_sequences(vocab, seq, match):
    with pytest.raises(MalformedSequence, match=match):
        validate_sequence(seq)
    with pytest.raises(MalformedSequence, match=match):
        delinearize(seq, vocab)


def test_empty_tree(vocab):
    with pytest.raises(EmptyTree):
        validate_sequence([BOS, EOS])
    with pytest.raises(EmptyTree):
        delinearize([BOS, EOS], vocab)


def test_delinearize_checks_vocab_and_bins(vocab):
    with pytest.raises(UnknownToken):
        delinearize([BOS, token(len(vocab)), EOS], vocab)
    with pytest.raises(UnknownToken):
        delinearize([BOS, token(int(Control.PAD)), EOS], vocab)
    with pytest.raises(MalformedSequence, match="translation bins"):
        delinearize([BOS, token(5, p=(64, 0, 0)), EOS], vocab)
    with pytest.raises(MalformedSequence, match="rotation bins"):
        delinearize([BOS, token(5, r=(0, 0, 0, -1)), EOS], vocab)


def test_single_branch_is_accepted(vocab):
    seq = [BOS, token(5), BOB, token(6), EOB, EOS]
    tree = delinearize(seq, vocab)
    assert tree.children[0] == [1]
    assert linearize(tree, vocab) == [BOS, token(5), token(6), EOS]


def test_is_balanced():
    assert is_balanced([BOS, BOB, EOB, BOB, BOB, EOB, EOB, EOS])
    assert not is_balanced([BOB])
    assert not is_balanced([EOB, BOB])


# ---- Trees from molecules ----


def test_build_tree_roots_at_terminal(biphenyl, rules):
    fragments, cuts = fragment(biphenyl, rules)
    tree = build_tree(fragments, cuts)
    assert len(tree) == len(fragments)
    assert tree.degree(tree.root) == 1
    terminals = [i for i in range(len(tree)) if tree.degree(i) == 1]
    assert fragments[tree.root].key == min(fragments[i].key for i in terminals)
    assert len(tree.edges()) == len(fragments) - 1
    assert set(tree.links) == set(tree.edges())


def test_build_tree_requires_fragments():
    with pytest.raises(EmptyTree):
        build_tree([], [])


def test_encode_molecule(toluene, vocab, rules):
    tree, seq = encode_molecule(toluene.centered(), vocab, rules)
    assert len(seq) == 4
    assert validate_sequence(seq) == 2
    assert {vocab[t.C].key for t in seq[1:-1]} == {f.key for f in tree.nodes}


def test_encode_molecule_out_of_range(toluene, vocab, rules):
    far = toluene.with_coords(toluene.coords + (40.0, 0.0, 0.0))
    with pytest.raises(TranslationOutOfRange):
        encode_molecule(far, vocab, rules)


def test_encode_molecule_unknown_fragment(benzene, vocab, rules):
    with pytest.raises(UnknownToken):
        encode_molecule(benzene, vocab, rules)


def test_transformed_tree(biphenyl, rules):
    fragments, cuts = fragment(biphenyl, rules)
    tree = build_tree(fragments, cuts)
    motion = RigidMotion(Quaternion.from_axis_angle((0, 0, 1), 0.5), (1.0, 0.0, -1.0))
    moved = tree.transformed(motion)
    assert moved.structure() == tree.structure()
    for a, b in zip(tree.nodes, moved.nodes):
        assert np.allclose(b.world_coords(), motion.apply(a.world_coords()))
