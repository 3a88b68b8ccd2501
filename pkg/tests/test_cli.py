import json

import pytest

from latentcard.cards import ConfigurationError
from latentcard.cli import main
from latentcard.config import RunConfig, dump_config, load_config

SMALL = ["--set", "embedding.n_transitions=400", "--set", "embedding.epochs=2",
         "--set", "embedding.batch_size=64", "--set", "agent.total_steps=120",
         "--set", "agent.episodes_per_iteration=4", "--set", "agent.batch_size=32",
         "--set", "agent.checkpoint_every=1"]


def run_pipeline(out, seed=1):
    out = str(out)
    assert main(["collect", "--out", out, "--seed", str(seed), *SMALL]) == 0
    assert main(["pretrain", "--out", out, "--seed", str(seed), "--dataset", f"{out}/dataset.bin", *SMALL]) == 0
    assert main(["train", "--out", out, "--seed", str(seed), "--embedding", f"{out}/embedding.bin", *SMALL]) == 0
    assert main(["battle", "--out", out, "--seed", str(seed), "--agent-a", f"{out}/agent.bin",
                 "--games", "10", *SMALL]) == 0


def _strip_clock(text):
    return [line.rsplit("\t", 1)[0] for line in text.splitlines()]


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")
    run_pipeline(a)
    run_pipeline(b)
    return a, b


def test_pipeline_outputs_and_manifests(two_runs):
    a, _ = two_runs
    for name in ("dataset.bin", "embedding.bin", "transition_model.bin", "pretrain_history.tsv",
                 "metrics.tsv", "agent.bin", "battle_report.tsv", "battle_games.jsonl", "config.ini"):
        assert (a / name).exists(), name
    manifest = json.loads((a / "manifest_pretrain.json").read_text())
    assert manifest["config_digest"] == load_config(a / "config.ini").digest()
    assert manifest["inputs"]["dataset"]["sha256"]
    assert manifest["seed"] == 1 and manifest["config"]["embedding"]["epochs"] == 2
    history = (a / "pretrain_history.tsv").read_text().splitlines()
    assert len(history) == 1 + 2 + 1            # header + epochs + initialization
    size = (a / "dataset.bin").stat().st_size
    assert size == 98 + 8 * 400 * (46 + 72 + 46)      # fixed header + float64 records
    assert (a / "checkpoints" / "agent_init.bin").exists()


def test_pipeline_bit_identical(two_runs):
    a, b = two_runs
    for name in ("dataset.bin", "embedding.bin", "transition_model.bin", "pretrain_history.tsv",
                 "agent.bin", "battle_report.tsv", "battle_games.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for ck in sorted((a / "checkpoints").iterdir()):
        assert ck.read_bytes() == (b / "checkpoints" / ck.name).read_bytes()
    assert _strip_clock((a / "metrics.tsv").read_text()) == _strip_clock((b / "metrics.tsv").read_text())


def test_train_baseline_without_embedding(tmp_path):
    assert main(["train", "--out", str(tmp_path), *SMALL, "--set", "agent.variant=full_eval_pool"]) == 0
    assert main(["battle", "--out", str(tmp_path), "--agent-a", str(tmp_path / "agent.bin"),
                 "--agent-b", "rule:greedy", "--games", "4"]) == 0


def test_latent_train_requires_embedding(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), *SMALL]) == 2
    assert "--embedding" in capsys.readouterr().err


def test_pretrain_rejects_other_environment(two_runs, tmp_path):
    a, _ = two_runs
    code = main(["pretrain", "--out", str(tmp_path), "--dataset", str(a / "dataset.bin"),
                 "--set", "env.hand_cap=8", *SMALL])
    assert code == 2


def test_battle_rejects_other_environment(two_runs, tmp_path):
    a, _ = two_runs
    code = main(["battle", "--out", str(tmp_path), "--agent-a", str(a / "agent.bin"),
                 "--games", "2", "--set", "env.round_limit=10"])
    assert code == 2


def test_unknown_config_keys_rejected(tmp_path):
    assert main(["collect", "--out", str(tmp_path), "--set", "embedding.colour=blue"]) == 2
    assert main(["collect", "--out", str(tmp_path), "--set", "nosuch.key=1"]) == 2
    ini = tmp_path / "c.ini"
    ini.write_text("[agent]\nvariant = latent\nsparkle = 3\n")
    assert main(["verify", "--config", str(ini)]) == 2
    with pytest.raises(ConfigurationError):
        load_config(None, ["agent.k=many"])


def test_verify_exit_codes(two_runs, tmp_path):
    a, _ = two_runs
    assert main(["verify"]) == 0
    assert main(["verify", "--checkpoint", str(a / "agent.bin")]) == 0
    bad = tmp_path / "bad.bin"
    bad.write_bytes((a / "agent.bin").read_bytes()[:200])
    assert main(["verify", "--checkpoint", str(bad)]) == 1


def test_config_precedence_and_digest(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[agent]\nk = 8\nsigma = 0.2\n[run]\nseed = 4\n")
    cfg = load_config(ini, ["agent.k=16"])
    assert cfg.agent.k == 16 and cfg.agent.sigma == 0.2 and cfg.run.seed == 4
    assert cfg.arena.n_games == 1000                  # untouched default
    reordered = tmp_path / "r.ini"
    reordered.write_text("[run]\nseed = 4\n[agent]\nsigma = 0.2\nk = 16\n")
    assert load_config(reordered).digest() == cfg.digest()
    assert load_config(None).digest() == RunConfig().digest()
    # dumping materializes every default and reloads to the same digest
    dumped = tmp_path / "d.ini"
    dumped.write_text(dump_config(cfg))
    assert load_config(dumped).digest() == cfg.digest()


def test_boolean_coercion():
    assert load_config(None, ["arena.alternate_seats=no"]).arena.alternate_seats is False
    with pytest.raises(ConfigurationError):
        load_config(None, ["arena.alternate_seats=maybe"])
