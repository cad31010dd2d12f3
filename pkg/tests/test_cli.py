import logging
import shlex
import sys
from unittest.mock import MagicMock

import pytest

from shapefrag import cli
from shapefrag.drivers import checkpoint as ckpt
from shapefrag.drivers import sdf, tokens, toml, voxl
from shapefrag.drivers import vocab as vocab_io
from shapefrag.fragmenter import Fragmenter
from shapefrag.model.network import build_model
from shapefrag.plugins import ErrorLoadingPlugin, builtin_plugins

SCORE_ALL = "import sys; n = sys.stdin.read().count('$$$$'); print('\\n'.join(['1.5'] * n))"


@pytest.fixture(scope="module")
def tables():
    return list(Fragmenter(builtin_plugins()).tables.values())


def test_parse_args(tables, tmp_path):
    args = f"design --ligand lig.sdf --checkpoint m.sfck --vocab v -o {tmp_path} -n 5".split()
    params = cli.parse_args(args, tables)
    assert params.command == "design"
    assert params.n == 5 and params.top_p == 0.95
    assert params.pocket is None
    assert params.func is cli.design
    assert params.loglevel == logging.WARNING


def test_pocket_and_ligand_are_exclusive(tables, capsys):
    args = "sketch --ligand a.sdf --pocket b.voxl -o out".split()
    with pytest.raises(SystemExit):
        cli.parse_args(args, tables)
    _, err = capsys.readouterr()
    assert "not allowed with argument" in err


def test_unknown_rule_table(tables, capsys):
    with pytest.raises(SystemExit):
        cli.parse_args("corpus -o out --rules nope".split(), tables)
    _, err = capsys.readouterr()
    assert "invalid choice: 'nope'" in err


def test_config_file_provides_defaults(tables, tmp_path, monkeypatch):
    monkeypatch.delenv("SHAPEFRAG_SEED", raising=False)
    config = tmp_path / "shapefrag.cfg"
    config.write_text(
        f"seed = 7\n\n[design]\ncheckpoint = m.sfck\nvocab = v\noutput-dir = {tmp_path}\n"
        "top-p = 0.8\nn = 12\n",
        encoding="utf-8",
    )
    params = cli.parse_args(["design", "-c", str(config), "--ligand", "l.sdf", "-n", "3"], tables)
    assert params.seed == 7
    assert params.top_p == 0.8
    assert params.n == 3  # flags win
    assert str(params.checkpoint) == "m.sfck"

    monkeypatch.setenv("SHAPEFRAG_SEED", "11")
    params = cli.parse_args(["design", "--config", str(config), "--ligand", "l.sdf"], tables)
    assert params.seed == 11 and params.n == 12


def test_critical_logging_sets_log_level_on_error(monkeypatch, caplog):
    spy = MagicMock()
    monkeypatch.setattr(sys, "argv", ["-vv"])
    monkeypatch.setattr(logging, "basicConfig", spy)
    with pytest.raises(ValueError):
        with cli.critical_logging():
            raise ValueError
    _args, kwargs = spy.call_args
    assert kwargs["level"] == logging.DEBUG


def test_critical_logging_does_nothing_if_no_argv(monkeypatch, caplog):
    spy = MagicMock()
    monkeypatch.setattr(sys, "argv", [])
    monkeypatch.setattr(logging, "basicConfig", spy)
    with pytest.raises(ValueError):
        with cli.critical_logging():
            raise ValueError
    assert spy.call_args is None


def test_exceptions2exit(caplog):
    with pytest.raises(SystemExit):
        with cli.exceptions2exit():
            raise ValueError("broken input")
    assert "ValueError: broken input" in caplog.text


def test_early_plugin_error(monkeypatch):
    err = MagicMock(side_effect=ErrorLoadingPlugin("fake"))
    monkeypatch.setattr("shapefrag.fragmenter.list_from_entry_points", err)

    # Remove all attached handlers, so `logging.basicConfig` can work
    for logger in (logging.getLogger(), logging.getLogger(cli.__package__)):
        monkeypatch.setattr(logger, "handlers", [])

    assert logger.getEffectiveLevel() in {logging.NOTSET, logging.WARNING}

    monkeypatch.setattr("sys.argv", ["shapefrag", "-vv"])
    with pytest.raises(SystemExit):
        cli.run()

    assert logger.getEffectiveLevel() == logging.DEBUG


def test_help(capsys):
    with pytest.raises(SystemExit):
        cli.run(["corpus", "--help"])
    out, _ = capsys.readouterr()
    text = " ".join(x.strip() for x in out.splitlines())
    assert "Available tables:" in text
    assert "- 'reduced': cut single bonds attached to rings" in text
    assert "- 'ring_only': only cut acyclic single bonds" in text


def test_version(capsys):
    with pytest.raises(SystemExit):
        cli.run(["--version"])
    out, _ = capsys.readouterr()
    assert out.startswith("shapefrag ")


def test_corpus_command(tmp_path):
    out = tmp_path / "corpus"
    cli.run(f"corpus --size 4 --max-nodes 3 --check-roundtrip --seed 2 -o {out}".split())
    assert len(sdf.load(out / "corpus.sdf")) == 4
    assert len((out / "train_keys.txt").read_text().split()) <= 4
    assert vocab_io.load(out / "vocab").rule_table == "reduced"
    report = (out / "roundtrip.tsv").read_text().splitlines()
    assert report[0] == "name\tstage\tdetail\tdiagnosis"


def test_sketch_generate_assemble_eval(tmp_path, toluene, vocab, tiny_config):
    sdf.dump([toluene], tmp_path / "ligand.sdf")
    vocab_io.dump(vocab, tmp_path / "vocab")
    ckpt.dump(build_model(tiny_config, seed=0), tmp_path / "model.sfck")

    cli.run(
        [
            "sketch",
            "--ligand",
            str(tmp_path / "ligand.sdf"),
            "--pitch",
            "2.0",
            "--extent",
            "8",
            "-o",
            str(tmp_path),
        ]
    )
    shape = tmp_path / "shapes" / "shape-000.voxl"
    assert voxl.load(shape).spec.extent == 8

    cli.run(
        f"generate --checkpoint {tmp_path / 'model.sfck'} --shapes {shape} -n 4 --seed 1 "
        f"-o {tmp_path / 'seqs'}".split()
    )
    sequences = tokens.load(tmp_path / "seqs" / "shape-000.tok")
    assert len(sequences) <= 4

    cli.run(
        f"assemble --vocab {tmp_path / 'vocab'} --tokens {tmp_path / 'seqs' / 'shape-000.tok'} "
        f"--shapes {shape} --checkpoint {tmp_path / 'model.sfck'} -o {tmp_path / 'mols'}".split()
    )
    assert (tmp_path / "mols" / "assembled.sdf").is_file()
    assert (tmp_path / "mols" / "rejections.tsv").read_text().startswith("id\treason")

    scorer = shlex.join([sys.executable, "-c", SCORE_ALL])
    metrics_file = tmp_path / "metrics.toml"
    histogram = tmp_path / "scores.csv"
    cli.run(
        [
            "eval",
            "--molecules",
            str(tmp_path / "ligand.sdf"),
            "--scorer",
            scorer,
            "--threshold",
            "2.0",
            "--plot-histogram",
            str(histogram),
            "-o",
            str(metrics_file),
        ]
    )
    report = toml.load(metrics_file)
    assert report["uniq"] == 1.0 and report["succ"] == 1.0
    assert report["median_score"] == 1.5
    assert histogram.read_text().splitlines()[0] == "low,high,count"


def test_assemble_needs_one_shape_per_file(tmp_path, vocab, caplog):
    vocab_io.dump(vocab, tmp_path / "vocab")
    tokens.dump([], tmp_path / "a.tok")
    tokens.dump([], tmp_path / "b.tok")
    args = [
        "assemble",
        "--vocab",
        str(tmp_path / "vocab"),
        "--tokens",
        str(tmp_path / "a.tok"),
        str(tmp_path / "b.tok"),
        "--shapes",
        str(tmp_path / "a.voxl"),
        "-o",
        str(tmp_path),
    ]
    with pytest.raises(SystemExit):
        cli.run(args)
    assert "one shape per token file" in caplog.text


def test_design_input_from_config_file(tables, tmp_path, monkeypatch):
    monkeypatch.delenv("SHAPEFRAG_SEED", raising=False)
    config = tmp_path / "shapefrag.cfg"
    config.write_text(
        f"[design]\nligand = l.sdf\ncheckpoint = m.sfck\nvocab = v\noutput-dir = {tmp_path}\n",
        encoding="utf-8",
    )
    params = cli.parse_args(["design", "-c", str(config)], tables)
    assert str(params.ligand) == "l.sdf" and params.pocket is None


def test_pocket_box_options(tables, tmp_path, monkeypatch):
    monkeypatch.delenv("SHAPEFRAG_SEED", raising=False)
    base = f"design --pocket p.sdf --checkpoint m.sfck --vocab v -o {tmp_path}".split()
    params = cli.parse_args(base, tables)
    assert params.box_center is None and params.box_size is None
    params = cli.parse_args(base + "--box-center 1 2 -3.5 --box-size 18".split(), tables)
    assert params.box_center == [1.0, 2.0, -3.5] and params.box_size == 18.0
    assert cli._box(params) == ((1.0, 2.0, -3.5), 18.0)

    config = tmp_path / "shapefrag.cfg"
    config.write_text("[sketch]\nbox-center = 4 5 6\nbox-size = 12\n", encoding="utf-8")
    args = ["sketch", "-c", str(config), "--pocket", "p.sdf", "-o", str(tmp_path)]
    params = cli.parse_args(args, tables)
    assert params.box_center == [4.0, 5.0, 6.0] and params.box_size == 12.0


def test_sketch_in_a_pocket_box(tmp_path, benzene):
    sdf.dump([benzene], tmp_path / "pocket.sdf")
    cli.run(
        f"sketch --pocket {tmp_path / 'pocket.sdf'} --box-center 0 0 4 --box-size 16 "
        f"--pitch 2.0 --extent 8 --n-shapes 2 -o {tmp_path}".split()
    )
    for i in range(2):
        spec = voxl.load(tmp_path / "shapes" / f"shape-{i:03d}.voxl").spec
        assert spec.extent == 8 and spec.pitch == 2.0
    assert (tmp_path / "sketch.tsv").read_text().startswith("shape\tseed_kind")
