import json

import pytest

from kgnn.cli import main
from kgnn.config import ConfigError, load_config

from conftest import FIXTURES

FIG1 = FIXTURES / "fig1"


def test_defaults_and_seed_fan_out():
    cfg = load_config(None, {"run.seed": "7"})
    assert cfg.train.seed == 7 and cfg.corpus.seed == 7 and cfg.corpus.world_seed == 7
    assert cfg.model.d_model == 64 and cfg.train.lr == 1e-3 and cfg.model.num_steps == 2


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[run]\nseed = 3\n[model]\nd_model = 16\ninverse_edges = no\nrelations = director, lyrics_by\n"
        "[train]\nnum_steps = 3\nmax_updates = 5\n[corpus]\nseed = 11\n[sweep]\nt_values = 0, 2\n"
        "[paths]\noutput_dir = out\n"
    )
    cfg = load_config(path, {"model.d_model": "8"})
    assert cfg.model.d_model == 8
    assert cfg.model.inverse_edges is False
    assert cfg.model.relations == ("director", "lyrics_by")
    assert cfg.model.max_steps == 3  # raised to fit train.num_steps
    assert cfg.train.max_updates == 5 and cfg.train.seed == 3
    assert cfg.corpus.seed == 11 and cfg.corpus.world_seed == 3
    assert cfg.sweep.t_values == (0, 2)
    assert str(cfg.path("output_dir")) == "out"


@pytest.mark.parametrize(
    "text, field",
    [
        ("[model]\nd_modle = 3\n", "model.d_modle"),
        ("[model]\nd_model = big\n", "model.d_model"),
        ("[train]\nnum_steps = -1\n", "train"),
        ("[model]\nuse_graph = maybe\n", "model.use_graph"),
        ("[extra]\nx = 1\n", "extra"),
        ("[paths]\nweights = a\n", "paths.weights"),
        ("[run]\nspeed = 1\n", "run.speed"),
        ("[corpus]\nparagraphs_per_question = 1\n", "corpus"),
    ],
)
def test_config_errors_name_the_field(tmp_path, text, field):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(path)


def test_missing_required_path():
    cfg = load_config()
    with pytest.raises(ConfigError, match="paths.corpus"):
        cfg.path("corpus")


def test_unknown_command_exits_2_with_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--bogus"])
    assert exc.value.code == 2


def test_invalid_config_value_exits_1_naming_field(capsys):
    assert main(["gradcheck", "--set", "model.d_model=zero"]) == 1
    assert "model.d_model" in capsys.readouterr().err


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] and payload["max_relative_error"] < 1e-4


def test_gradcheck_fails_above_tolerance(capsys):
    assert main(["gradcheck", "--tolerance", "1e-12"]) == 1


def _fig1_args():
    return ["--corpus", str(FIG1 / "corpus.jsonl"), "--entities", str(FIG1 / "entities.jsonl"), "--triples", str(FIG1 / "triples.tsv")]


def test_build_graph_on_fig1_fixture(capsys):
    assert main(["build-graph", "--id", "toy-bridge", *_fig1_args()]) == 0
    graph = json.loads(capsys.readouterr().out)
    kinds = {(e["kind"], e["dir"]) for e in graph["edges"]}
    assert ("coref", "forward") in kinds and ("lyrics_by", "forward") in kinds
    nodes = {n["id"]: (n["entity"], n["paragraph"]) for n in graph["nodes"]}
    coref = {(nodes[e["src"]], nodes[e["dst"]]) for e in graph["edges"] if e["kind"] == "coref"}
    assert coref == {(("wd", 0), ("wd", 1)), (("wd", 1), ("wd", 0))}  # one undirected co-reference link
    lyrics = {(nodes[e["src"]][0], nodes[e["dst"]][0]) for e in graph["edges"] if e["kind"] == "lyrics_by" and e["dir"] == "forward"}
    assert lyrics == {("wd", "mm")}  # one lyrics_by fact, from each Wildest Dreams node


def test_build_graph_unknown_id(capsys):
    assert main(["build-graph", "--id", "nope", *_fig1_args()]) == 1
    assert "nope" in capsys.readouterr().err


def test_missing_input_file_exits_1(tmp_path, capsys):
    assert main(["build-graph", "--id", "x", "--corpus", str(tmp_path / "none.jsonl"), "--entities", "a", "--triples", "b"]) == 1
    assert "paths.entities" in capsys.readouterr().err


GEN = ["--questions", "12", "--dev-questions", "6", "--paragraphs", "4", "--entities", "200", "--seed", "5"]


def test_gen_corpus_idempotent(tmp_path, capsys):
    for run in ("a", "b"):
        assert main(["gen-corpus", "--output-dir", str(tmp_path / run), *GEN]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"train.jsonl", "dev.jsonl", "entities.jsonl", "triples.tsv"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_eval_predict_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-corpus", "--output-dir", str(data), *GEN]) == 0
    common = ["--entities", str(data / "entities.jsonl"), "--triples", str(data / "triples.tsv"),
              "--set", "model.d_model=8", "--set", "model.word_dim=4", "--set", "model.char_dim=4",
              "--set", "model.char_filters=4", "--set", "train.batch_size=4"]
    ckpt = tmp_path / "model.json"
    capsys.readouterr()
    assert main(["train", "--corpus", str(data / "train.jsonl"), "--dev", str(data / "dev.jsonl"),
                 "--checkpoint", str(ckpt), "--epochs", "2", "--output-dir", str(tmp_path / "run"), *common]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["best_epoch"] in (1, 2) and ckpt.exists()
    log = (tmp_path / "run" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 2

    preds = tmp_path / "preds.jsonl"
    assert main(["predict", "--corpus", str(data / "dev.jsonl"), "--checkpoint", str(ckpt), "--predictions", str(preds), *common]) == 0
    rows = [json.loads(x) for x in preds.read_text().splitlines()]
    assert len(rows) == 6 and set(rows[0]) == {"id", "answer", "span", "sp"}
    capsys.readouterr()

    assert main(["eval", "--corpus", str(data / "dev.jsonl"), "--checkpoint", str(ckpt), *common]) == 0
    from_model = json.loads(capsys.readouterr().out)
    assert main(["eval", "--corpus", str(data / "dev.jsonl"), "--predictions", str(preds),
                 "--output-dir", str(tmp_path / "ev"), *common]) == 0
    from_file = json.loads(capsys.readouterr().out)
    for key in ("em", "f1", "sp_em", "sp_f1", "joint_em", "joint_f1"):
        assert from_model[key] == from_file[key]
        assert 0.0 <= from_file[key] <= 1.0
    assert json.loads((tmp_path / "ev" / "metrics.json").read_text())["count"] == 6


def test_eval_prediction_id_mismatch(tmp_path, capsys):
    preds = tmp_path / "p.jsonl"
    preds.write_text('{"id": "other", "answer": "x", "sp": []}\n')
    assert main(["eval", "--predictions", str(preds), *_fig1_args()]) == 1
    assert "mismatch" in capsys.readouterr().err


def test_sweep_layers_writes_all_formats(tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep-layers", "--output-dir", str(out), "--epochs", "1",
            "--set", "sweep.t_values=0,1", "--set", "sweep.train_questions=8", "--set", "sweep.dev_questions=4",
            "--set", "sweep.train_paragraphs=4", "--set", "corpus.num_entities=200",
            "--set", "model.d_model=8", "--set", "model.word_dim=4", "--set", "model.char_dim=4", "--set", "model.char_filters=4"]
    assert main(args) == 0
    for ext in ("json", "tsv", "txt", "png"):
        assert (out / f"layer_sweep.{ext}").stat().st_size > 0
    table = json.loads((out / "layer_sweep.json").read_text())
    assert [r["T"] for r in table["rows"]] == [0, 1]
    assert (out / "layer_sweep.tsv").read_text().splitlines()[0].split("\t")[0] == "T"
    assert (out / "layer_sweep.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_paragraphs_writes_all_formats(tmp_path, capsys):
    out = tmp_path / "sweep"
    args = ["sweep-paragraphs", "--output-dir", str(out), "--epochs", "1",
            "--set", "sweep.paragraph_counts=4,6", "--set", "sweep.train_questions=8",
            "--set", "sweep.paragraph_dev_questions=4", "--set", "sweep.train_paragraphs=4",
            "--set", "corpus.num_entities=200",
            "--set", "model.d_model=8", "--set", "model.word_dim=4", "--set", "model.char_dim=4", "--set", "model.char_filters=4"]
    assert main(args) == 0
    table = json.loads((out / "paragraph_sweep.json").read_text())
    assert [r["paragraphs"] for r in table["rows"]] == [4, 6]
    assert set(table["meta"]["degradation"]) == {"kgnn", "ablation"}
    assert (out / "paragraph_sweep.png").read_bytes()[:4] == b"\x89PNG"
    assert "kgnn_joint_f1" in capsys.readouterr().out
