"""
Tests for the command-line front end.
"""

import json
import logging
import tempfile
from pathlib import Path

import pandas as pd
import pytest
import torch
import yaml

from tunable_graphgen import training
from tunable_graphgen.cli import (
    EXIT_DATA,
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_USAGE,
    main,
    parse_condition,
)
from tunable_graphgen.dataset import load_manifest, write_edge_list
from tunable_graphgen.training import LossBreakdown

TINY_CONFIG = {
    "feature_order": ["aspl"],
    "seed": 0,
    "dataset": {"source": "synthetic", "count": 20, "size_min": 4, "size_max": 6},
    "model": {
        "latent_dim": 4,
        "embedding_dim": 3,
        "encoder_hidden": 6,
        "decoder_hidden": 6,
        "estimator_pre_fc": 5,
        "estimator_hidden": 8,
        "kl_anneal_fraction": 0.0,
    },
    "train": {
        "batch_size": 8,
        "generator_epochs_per_phase": 1,
        "estimator_epochs_per_phase": 1,
        "alternate_iterations": 2,
        "learning_rate": 0.01,
        "log_every": 1,
    },
    "generation": {"conditions": [1.5, 2.0], "count": 3, "retry_factor": 2},
}


@pytest.fixture(autouse=True)
def drop_cli_handler():
    """main() installs a stderr handler; remove it after each test."""
    yield
    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, "tunable_graphgen", False)]:
        root.removeHandler(handler)


def write_config(directory: Path) -> Path:
    path = directory / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG))
    return path


@pytest.fixture(scope="module")
def pipeline():
    """Sample and train once for the tests that need a checkpoint."""
    with tempfile.TemporaryDirectory() as directory:
        root = Path(directory)
        config = write_config(root)
        manifest = root / "data" / "manifest.jsonl"
        assert main(["sample", "--synthetic", "--config", str(config), "--out", str(manifest)]) == 0
        run = root / "run"
        assert main(["train", "--manifest", str(manifest), "--config", str(config),
                     "--out", str(run)]) == 0
        yield {"root": root, "config": config, "manifest": manifest, "run": run}


def test_parse_condition():
    assert parse_condition("3") == 3.0
    assert parse_condition("aspl=3.0, clustering=0.2") == {"aspl": 3.0, "clustering": 0.2}


def test_sample_outputs(pipeline):
    manifest = load_manifest(pipeline["manifest"])
    assert len(manifest) == 20
    data_dir = pipeline["manifest"].parent
    assert (data_dir / "manifest.summary.json").exists()
    assert (data_dir / "run_config.yaml").exists()


def test_train_outputs(pipeline):
    run = pipeline["run"]
    names = sorted(p.name for p in (run / "checkpoints").iterdir())
    assert names == [
        "final.pt",
        "iter-1-estimator.pt",
        "iter-1-generator.pt",
        "iter-2-estimator.pt",
        "iter-2-generator.pt",
    ]
    trace = pd.read_csv(run / "trace.csv")
    assert trace["phase"].tolist() == ["generator", "estimator", "generator", "estimator"]
    assert len(pd.read_csv(run / "phase_hashes.csv")) == 8
    echoed = yaml.safe_load((run / "run_config.yaml").read_text())
    assert echoed["train"]["seed"] == 0
    assert echoed["model"]["max_nodes"] >= 5


def test_train_resume_matches(pipeline, temp_dir):
    """Resuming from the first estimator checkpoint reproduces the trace."""
    run = pipeline["run"]
    resumed = Path(temp_dir) / "resumed"
    code = main(["train", "--manifest", str(pipeline["manifest"]), "--config",
                 str(pipeline["config"]), "--out", str(resumed),
                 "--resume", str(run / "checkpoints" / "iter-1-estimator.pt")])
    assert code == EXIT_OK
    assert (resumed / "trace.csv").read_bytes() == (run / "trace.csv").read_bytes()


def test_generate_reports(pipeline, temp_dir):
    """One directory per condition; reruns write identical bytes."""
    checkpoint = pipeline["run"] / "checkpoints" / "final.pt"
    outputs = []
    for name in ("first", "second"):
        out = Path(temp_dir) / name
        assert main(["generate", "--checkpoint", str(checkpoint), "--config",
                     str(pipeline["config"]), "--out", str(out)]) == EXIT_OK
        outputs.append(out)
    for label in ("condition-1.5", "condition-2.0"):
        summary = json.loads((outputs[0] / label / "summary.json").read_text())
        assert summary["requested"] == 3
        assert summary["produced"] <= 3
        assert summary["sampled"] <= 6
        files = sorted(p.relative_to(outputs[0]) for p in (outputs[0] / label).iterdir())
        for relative in files:
            assert (outputs[1] / relative).read_bytes() == (outputs[0] / relative).read_bytes()
    assert (outputs[0] / "run_config.yaml").exists()


def test_generate_condition_override(pipeline, temp_dir):
    out = Path(temp_dir) / "gen"
    code = main(["generate", "--checkpoint", str(pipeline["run"] / "checkpoints" / "final.pt"),
                 "--conditions", "3.5", "--count", "1", "--argmax", "--out", str(out)])
    assert code == EXIT_OK
    assert [p.name for p in out.iterdir() if p.is_dir()] == ["condition-3.5"]


def test_evaluate_exact_graphs(temp_dir, k4, path3):
    """K4 copies hit target 1 exactly; a mixed set does not."""
    root = Path(temp_dir)
    for i in range(3):
        write_edge_list(k4, root / "exact" / f"graph-{i:04d}.edges")
    write_edge_list(k4, root / "mixed" / "graph-0000.edges")
    write_edge_list(path3, root / "mixed" / "graph-0001.edges")
    out = root / "eval"
    code = main(["evaluate", str(root / "exact"), str(root / "mixed"),
                 "--targets", "1.0", "--out", str(out)])
    assert code == EXIT_OK
    comparison = pd.read_csv(out / "comparison.csv")
    assert comparison["label"].tolist() == ["exact", "mixed"]
    assert comparison["mae"].tolist() == pytest.approx([0.0, 1 / 6])
    assert (out / "exact" / "features.csv").exists()
    assert (out / "mixed" / "kde.csv").exists()


def test_evaluate_without_targets(temp_dir, triangle):
    root = Path(temp_dir)
    write_edge_list(triangle, root / "graphs" / "graph-0000.edges")
    code = main(["evaluate", str(root / "graphs"), "--labels", "tri",
                 "--features", "aspl", "clustering", "--out", str(root / "eval")])
    assert code == EXIT_OK
    assert not (root / "eval" / "comparison.csv").exists()
    summary = json.loads((root / "eval" / "tri" / "summary.json").read_text())
    assert summary["stats"]["clustering"]["mean"] == 1.0


def test_exit_codes(temp_dir, capsys):
    root = Path(temp_dir)
    assert main(["sample", "--corpus", str(root / "missing.edges"),
                 "--out", str(root / "m.jsonl")]) == EXIT_DATA
    assert main(["sample", "--synthetic", "--count", "0",
                 "--out", str(root / "m.jsonl")]) == EXIT_DATA
    assert main(["generate", "--checkpoint", "x.pt", "--argmax", "--temperature", "0.5",
                 "--out", str(root)]) == EXIT_USAGE
    assert main(["generate", "--checkpoint", str(root / "x.pt"), "--out", str(root)]) == EXIT_DATA
    assert main(["evaluate", str(root / "nowhere"), "--out", str(root)]) == EXIT_DATA
    assert main(["train", "--manifest", "m.jsonl", "--config", str(root / "none.yaml"),
                 "--out", str(root)]) == EXIT_USAGE
    assert main(["sample", "--synthetic"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_train_divergence_exit(pipeline, temp_dir, monkeypatch):
    """A non-finite loss exits with the divergence code and keeps the trace."""
    def diverging(batch, model, noise, kl_weight, feature_loss_weight):
        return LossBreakdown(torch.tensor(float("nan"), requires_grad=True))

    monkeypatch.setattr(training, "generator_phase_loss", diverging)
    out = Path(temp_dir) / "diverged"
    code = main(["train", "--manifest", str(pipeline["manifest"]), "--config",
                 str(pipeline["config"]), "--out", str(out)])
    assert code == EXIT_DIVERGENCE
    assert (out / "trace.csv").exists()
    assert (out / "phase_hashes.csv").exists()


def test_sample_is_byte_identical(pipeline, temp_dir):
    """A second sample run with the same arguments rewrites the same bytes."""
    manifest = Path(temp_dir) / "again" / "manifest.jsonl"
    assert main(["sample", "--synthetic", "--config", str(pipeline["config"]),
                 "--out", str(manifest)]) == EXIT_OK
    assert manifest.read_bytes() == pipeline["manifest"].read_bytes()
    summary = manifest.with_suffix(".summary.json")
    assert summary.read_bytes() == pipeline["manifest"].with_suffix(".summary.json").read_bytes()


def test_train_on_corrupt_summary_exits_with_data_error(pipeline, temp_dir, capsys):
    manifest = Path(temp_dir) / "manifest.jsonl"
    manifest.write_bytes(pipeline["manifest"].read_bytes())
    original = pipeline["manifest"].with_suffix(".summary.json").read_text()
    manifest.with_suffix(".summary.json").write_text(original[: len(original) // 2])
    code = main(["train", "--manifest", str(manifest), "--config", str(pipeline["config"]),
                 "--out", str(Path(temp_dir) / "run")])
    assert code == EXIT_DATA
    assert "summary is not valid JSON" in capsys.readouterr().err
