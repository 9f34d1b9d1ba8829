import io
import json

import numpy as np
import pytest

from avtenet import cli
from avtenet.tensor import checkpoint as ckpt

TINY = "RvRa=3,RvFa=3,FvRa=3,FvFa=3"


def run(*argv, env=None):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out=out, env=env or {})
    return code, out.getvalue()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A tiny corpus plus one-epoch checkpoints for every component."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    code, _ = run("gen-data", "--out", data, "--counts", TINY, "--test-real", 6, "--test-fake", 6)
    assert code == 0
    for net in ("vn", "an", "avn-fused"):
        code, _ = run("train", "--network", net, "--data", data, "--out", root / f"{net}.ckpt",
                      "--epochs", 1)
        assert code == 0
    code, _ = run("train-ensemble", "--strategy", "ff", "--components", root / "vn.ckpt",
                  root / "an.ckpt", root / "avn-fused.ckpt", "--data", data, "--out", root / "ff.ckpt",
                  "--epochs", 2)
    assert code == 0
    return root


def components(root):
    return [root / "vn.ckpt", root / "an.ckpt", root / "avn-fused.ckpt"]


# -- parsing --------------------------------------------------------------

def test_unknown_flag_is_usage_error():
    assert run("train", "--network", "an", "--bogus", 1)[0] == 2


def test_missing_subcommand():
    assert run()[0] == 2


def test_missing_required_flag():
    assert run("train", "--network", "an")[0] == 2


def test_bad_network_name():
    assert run("train", "--network", "cnn", "--data", "x", "--out", "y")[0] == 2


def test_gradcheck_unknown_network():
    assert run("gradcheck", "--network", "xn")[0] == 2


def resolved(argv, env=None):
    args = cli.build_parser().parse_args(argv)
    return cli.resolve(args.command, args, env or {})


def test_precedence_flag_over_config_over_env(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# overlay\nseed = 7\nepochs=3  # trailing comment\n")
    base = ["train", "--network", "an", "--data", "d", "--out", "o", "--config", str(cfg)]
    s = resolved(base, {"AVTENET_SEED": "9"})
    assert (s["seed"], s["epochs"], s["lr"]) == (7, 3, 1e-3)
    assert resolved(base + ["--seed", "5"], {"AVTENET_SEED": "9"})["seed"] == 5


def test_env_seed_fallback():
    argv = ["gen-data", "--out", "d"]
    assert resolved(argv, {"AVTENET_SEED": "11"})["seed"] == 11
    assert resolved(argv)["seed"] == 42
    with pytest.raises(cli.CliError):
        resolved(argv, {"AVTENET_SEED": "eleven"})


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    assert run("gen-data", "--out", tmp_path / "d", "--config", cfg)[0] == 2


def test_config_rejects_bad_choice(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("network=cnn\n")
    assert run("train", "--data", "d", "--out", "o", "--config", cfg)[0] == 2


def test_missing_config_file(tmp_path):
    assert run("gen-data", "--out", tmp_path / "d", "--config", tmp_path / "none.cfg")[0] == 3


# -- gen-data -------------------------------------------------------------

def test_gen_data_counts(tmp_path):
    code, text = run("gen-data", "--out", tmp_path / "d", "--counts", "RvRa=10,RvFa=10,FvRa=10,FvFa=10",
                     "--test-real", 0, "--test-fake", 0)
    assert code == 0
    assert "records 60" in text  # 40 train plus 20 extra reals for class balance
    lines = (tmp_path / "d" / "manifest.jsonl").read_text().splitlines()
    train = [json.loads(line) for line in lines[1:] if json.loads(line)["split"] == "train"]
    assert len(train) == 40


def test_gen_data_refuses_non_empty_dir(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "keep.txt").write_text("x")
    assert run("gen-data", "--out", tmp_path / "d", "--counts", TINY)[0] == 3


def test_gen_data_force_is_idempotent(tmp_path):
    args = ("gen-data", "--out", tmp_path / "d", "--counts", TINY, "--test-real", 6, "--test-fake", 6)
    code, first = run(*args)
    (tmp_path / "d" / "notes.txt").write_text("mine")
    code, second = run(*args, "--force")
    assert code == 0 and first == second
    assert (tmp_path / "d" / "notes.txt").read_text() == "mine"


def test_gen_data_rejects_bad_counts(tmp_path):
    assert run("gen-data", "--out", tmp_path / "d", "--counts", "RvRa=x")[0] == 2
    assert run("gen-data", "--out", tmp_path / "d", "--test-fake", 7)[0] == 2


# -- train ----------------------------------------------------------------

def test_train_logs_epochs(workdir, tmp_path):
    code, text = run("train", "--network", "an", "--data", workdir / "data", "--out", tmp_path / "an.ckpt",
                     "--epochs", 2)
    assert code == 0
    lines = text.splitlines()
    assert lines[0].startswith("epoch 1 loss ") and lines[1].startswith("epoch 2 loss ")
    assert "sha256" in lines[-1]


def test_train_zero_epochs_equals_init(workdir, tmp_path):
    for tag in ("a", "b"):
        assert run("train", "--network", "an", "--data", workdir / "data", "--out", tmp_path / tag,
                   "--epochs", 0, "--seed", 3)[0] == 0
    from avtenet.nets import ANClassifier

    init = ANClassifier(random_state=3).initialize().state_arrays()
    saved = ckpt.load(tmp_path / "a")
    for name, arr in init.items():
        if ".meta." not in name:
            np.testing.assert_array_equal(saved[name], arr)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_train_missing_manifest(tmp_path):
    assert run("train", "--network", "an", "--data", tmp_path, "--out", tmp_path / "x")[0] == 3


def test_train_empty_set(tmp_path):
    assert run("gen-data", "--out", tmp_path / "d", "--counts", "RvRa=0", "--test-real", 6,
               "--test-fake", 6)[0] == 0
    assert run("train", "--network", "vn", "--data", tmp_path / "d", "--out", tmp_path / "x")[0] == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence(workdir, tmp_path):
    code, _ = run("train", "--network", "an", "--data", workdir / "data", "--out", tmp_path / "x",
                  "--lr", 1e300, "--epochs", 2)
    assert code == 5


# -- train-ensemble -------------------------------------------------------

def test_train_ensemble_reports_unchanged_components(workdir, tmp_path):
    before = [p.read_bytes() for p in components(workdir)]
    code, text = run("train-ensemble", "--strategy", "sf", "--components", *components(workdir),
                     "--data", workdir / "data", "--out", tmp_path / "sf.ckpt", "--epochs", 1)
    assert code == 0
    assert text.count(" unchanged") == 3
    assert [p.read_bytes() for p in components(workdir)] == before


@pytest.mark.parametrize("strategy", ["mv", "asf"])
def test_train_ensemble_fixed_rules(workdir, tmp_path, strategy):
    assert run("train-ensemble", "--strategy", strategy, "--components", *components(workdir),
               "--data", workdir / "data", "--out", tmp_path / "h.ckpt")[0] == 2


def test_train_ensemble_missing_component(workdir, tmp_path):
    paths = components(workdir)
    paths[1] = tmp_path / "missing.ckpt"
    assert run("train-ensemble", "--strategy", "ff", "--components", *paths,
               "--data", workdir / "data", "--out", tmp_path / "h.ckpt")[0] == 3


def test_train_ensemble_wrong_kinds(workdir, tmp_path):
    paths = [workdir / "vn.ckpt", workdir / "vn.ckpt", workdir / "an.ckpt"]
    assert run("train-ensemble", "--strategy", "ff", "--components", *paths,
               "--data", workdir / "data", "--out", tmp_path / "h.ckpt")[0] == 6


# -- eval -----------------------------------------------------------------

def test_eval_ensemble_markdown(workdir, tmp_path):
    code, text = run("eval", "--ensemble", "ff", "--ckpt", *components(workdir), workdir / "ff.ckpt",
                     "--data", workdir / "data", "--subset", "mixed-II", "--json", tmp_path / "r.json",
                     "--md", tmp_path / "r.md", "--dump-embeddings", tmp_path / "emb.ckpt")
    assert code == 0
    assert "| Real |" in text and "| Fake |" in text
    assert (tmp_path / "r.md").read_text() == text
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["strategy"] == "ff" and doc["subset"] == "mixed-II"
    emb = ckpt.load(tmp_path / "emb.ckpt")
    suffixes = {name.rsplit(".", 1)[1] for name in emb}
    assert suffixes == {"E_v", "E_a", "E_av", "E_ff"}
    assert len(emb) == 4 * 12


@pytest.mark.parametrize("strategy", ["mv", "asf"])
def test_eval_fixed_rules(workdir, strategy):
    code, text = run("eval", "--ensemble", strategy, "--ckpt", *components(workdir),
                     "--data", workdir / "data", "--subset", "both")
    assert code == 0 and f"AVTENet_{strategy}" in text


def test_eval_single_model(workdir):
    code, text = run("eval", "--model", "vn", "--ckpt", workdir / "vn.ckpt", "--data", workdir / "data",
                     "--subset", "audio-only")
    assert code == 0 and text.startswith("### vn on audio-only")


def test_eval_is_repeatable(workdir, tmp_path):
    for tag in ("a", "b"):
        run("eval", "--model", "an", "--ckpt", workdir / "an.ckpt", "--data", workdir / "data",
            "--json", tmp_path / tag)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_eval_unknown_subset(workdir):
    assert run("eval", "--model", "vn", "--ckpt", workdir / "vn.ckpt", "--data", workdir / "data",
               "--subset", "mixed-III")[0] == 2


def test_eval_kind_mismatch(workdir):
    assert run("eval", "--model", "an", "--ckpt", workdir / "vn.ckpt", "--data", workdir / "data")[0] == 6


def test_eval_needs_one_target(workdir):
    assert run("eval", "--ckpt", workdir / "vn.ckpt", "--data", workdir / "data")[0] == 2


def test_eval_ff_without_head(workdir):
    assert run("eval", "--ensemble", "ff", "--ckpt", *components(workdir),
               "--data", workdir / "data")[0] == 2


# -- describe -------------------------------------------------------------

def test_describe_counts_parameters(workdir, tmp_path):
    run("train", "--network", "vn", "--data", workdir / "data", "--out", tmp_path / "vn.ckpt", "--epochs", 0)
    code, text = run("describe", "--ckpt", tmp_path / "vn.ckpt")
    assert code == 0
    rows = dict(line.split() for line in text.splitlines())
    assert int(rows.pop("total")) == sum(int(v) for v in rows.values()) == 152002


def test_describe_empty_checkpoint(tmp_path):
    ckpt.save(tmp_path / "e.ckpt", {})
    assert run("describe", "--ckpt", tmp_path / "e.ckpt") == (0, "total 0\n")


def test_describe_bad_magic(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + bytes(8))
    assert run("describe", "--ckpt", tmp_path / "bad.ckpt")[0] == 3
    assert "bad magic" in capsys.readouterr().err


def test_describe_missing_file(tmp_path):
    assert run("describe", "--ckpt", tmp_path / "none.ckpt")[0] == 3


# -- gradcheck ------------------------------------------------------------

def test_gradcheck_passes():
    code, text = run("gradcheck", "--network", "an", "--seed", 1)
    assert code == 0
    assert text.startswith("max_rel_err ") and "<= 0.0001" in text


def test_gradcheck_sabotage_fails():
    code, text = run("gradcheck", "--network", "an", "--sabotage", 0.01)
    assert code == 1 and "> 0.0001" in text
