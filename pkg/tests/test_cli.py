import json

import pytest

from cipherpipe.cli import main
from cipherpipe.segment import SegmentationParams

TEXT = ("she sells sea shells by the sea shore and the shells she sells are "
        "surely sea shells so if she sells shells then i am sure she sells "
        "sea shore shells").replace(" ", "")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Run the synth -> segment -> features chain once; later tests reuse it."""
    d = tmp_path_factory.mktemp("cli")
    (d / "plaintext.txt").write_text(TEXT)
    (d / "corpus.txt").write_text(TEXT * 3)
    (d / "seg_params.json").write_text(json.dumps(
        {"phi1": 25, "sigma1": 1.0, "sigma2": 3.0, "p": 0.95}))

    assert main(["synth", "--plaintext", str(d / "plaintext.txt"),
                 "--out", str(d / "synth"), "--seed", "5",
                 "--chars-per-line", "25"]) == 0
    assert main(["segment", "--page", str(d / "synth" / "page.png"),
                 "--seg-params", str(d / "seg_params.json"),
                 "--out", str(d / "manifest.json")]) == 0
    assert main(["features", "--page", str(d / "synth" / "page.png"),
                 "--manifest", str(d / "manifest.json"),
                 "--out", str(d / "features.json")]) == 0
    return d


class TestSynth:
    def test_artifacts_written(self, workdir):
        for name in ("page.png", "gold_manifest.json", "gold_transcription.json",
                     "key.json", "plaintext.txt"):
            assert (workdir / "synth" / name).exists(), name

    def test_gold_transcription_matches_plaintext_length(self, workdir):
        gold = json.loads((workdir / "synth" / "gold_transcription.json").read_text())
        assert len(gold["ids"]) == len(TEXT)


class TestSegmentAndFeatures:
    def test_manifest_covers_all_glyphs(self, workdir):
        manifest = json.loads((workdir / "manifest.json").read_text())
        assert len(manifest) == len(TEXT)

    def test_feature_file_shape(self, workdir):
        feats = json.loads((workdir / "features.json").read_text())
        assert feats["count"] == len(TEXT)
        assert len(feats["vectors"]) == feats["count"]


class TestDecipherChain:
    def test_cluster_lm_decipher3(self, workdir, capsys):
        d = workdir
        assert main(["cluster", "--features", str(d / "features.json"),
                     "--K", str(len(set(TEXT))), "--pca", "15",
                     "--restarts", "4", "--seed", "9",
                     "--out", str(d / "transcription.json"),
                     "--model-out", str(d / "gmm.json")]) == 0
        assert main(["lm-train", "--corpus", str(d / "corpus.txt"),
                     "--alphabet", "".join(sorted(set(TEXT))),
                     "--delta", "0.3", "--out", str(d / "lm.json")]) == 0
        assert main(["decipher3", "--transcription", str(d / "transcription.json"),
                     "--lm", str(d / "lm.json"), "--seed", "9",
                     "--restarts", "6", "--max-iters", "40",
                     "--out", str(d / "result3.json"),
                     "--channel-out", str(d / "channel.json"),
                     "--gold-plaintext", str(d / "plaintext.txt")]) == 0
        out = capsys.readouterr().out
        assert "NED vs gold:" in out
        result = json.loads((d / "result3.json").read_text())
        assert len(result["plaintext"]) == len(TEXT)
        assert (d / "channel.json").exists()

    def test_decipher2_with_scatter(self, workdir, capsys):
        d = workdir
        assert main(["decipher2", "--features", str(d / "features.json"),
                     "--transcription", str(d / "transcription.json"),
                     "--lm", str(d / "lm.json"), "--pca", "15",
                     "--seed", "9", "--restarts", "3", "--restarts3", "4",
                     "--out", str(d / "result2.json"),
                     "--scatter", str(d / "scatter.csv"),
                     "--gold-plaintext", str(d / "plaintext.txt")]) == 0
        assert "NED vs gold:" in capsys.readouterr().out
        rows = (d / "scatter.csv").read_text().strip().splitlines()
        assert len(rows) == 4  # header + one per restart

    def test_scatter_reemit(self, workdir):
        d = workdir
        diag = [{"seed": 0, "loglik": -10.5, "ned": 0.2},
                {"seed": 1, "loglik": -9.0, "ned": 0.1}]
        (d / "diag.json").write_text(json.dumps(diag))
        assert main(["scatter", "--diagnostics", str(d / "diag.json"),
                     "--out", str(d / "scatter2.csv")]) == 0
        rows = (d / "scatter2.csv").read_text().strip().splitlines()
        assert rows[0] == "seed,loglik,ned"
        assert rows[1] == "0,-10.5,0.2"


class TestEval:
    def test_eval_ned(self, workdir, tmp_path, capsys):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        a.write_text("kitten")
        b.write_text("sitting")
        assert main(["eval-ned", "--hypothesis", str(a), "--reference", str(b),
                     "--out", str(tmp_path / "ned.json")]) == 0
        assert "NED = 0.4286" in capsys.readouterr().out
        report = json.loads((tmp_path / "ned.json").read_text())
        assert report["score"] == pytest.approx(3 / 7)

    def test_eval_nedoa_worked_example(self, tmp_path, capsys):
        tr = tmp_path / "tr.json"
        tr.write_text(json.dumps({"ids": [0, 1, 2, 3, 3, 4, 5, 3, 6, 6, 7, 8],
                                  "K": 9}))
        gold = tmp_path / "gold.txt"
        gold.write_text("zodiackiller")
        assert main(["eval-nedoa", "--transcription", str(tr),
                     "--gold", str(gold), "--method", "em", "--seed", "0",
                     "--out", str(tmp_path / "nedoa.json")]) == 0
        report = json.loads((tmp_path / "nedoa.json").read_text())
        assert report["score"] == pytest.approx(1 / 12)
        assert report["mapping"]["3"] == "i"


class TestRunAndErrors:
    def test_run_subcommand(self, workdir, tmp_path, capsys):
        config = {
            "seed": 11,
            "lm": {"corpus": str(workdir / "corpus.txt"),
                   "alphabet": "".join(sorted(set(TEXT))), "delta": 0.3},
            "input": {"gold_transcription": str(workdir / "synth" / "gold_transcription.json"),
                      "gold_plaintext": str(workdir / "plaintext.txt")},
            "decipher": {"restarts": 4, "max_iters": 30},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        assert main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "run")]) == 0
        assert "run complete" in capsys.readouterr().out
        assert (tmp_path / "run" / "summary.json").exists()

    def test_run_seed_override(self, workdir, tmp_path):
        config = {
            "lm": {"corpus": str(workdir / "corpus.txt"),
                   "alphabet": "".join(sorted(set(TEXT))), "delta": 0.3},
            "input": {"gold_transcription": str(workdir / "synth" / "gold_transcription.json")},
            "decipher": {"restarts": 2, "max_iters": 20},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        # config has no seed: fails without the override, passes with it
        assert main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "r1")]) == 1
        assert main(["run", "--config", str(cfg_path), "--seed", "3",
                     "--out", str(tmp_path / "r2")]) == 0
        summary = json.loads((tmp_path / "r2" / "summary.json").read_text())
        assert summary["config"]["seed"] == 3

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["eval-ned", "--hypothesis", str(tmp_path / "nope.txt"),
                     "--reference", str(tmp_path / "nope.txt")]) == 2

    def test_pipeline_error_exits_1(self, tmp_path):
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps({"seed": 1, "lm": {}, "input": {}}))
        assert main(["run", "--config", str(cfg_path)]) == 1
