import csv
import json

import numpy as np
import pytest

from lexstress.cli import main
from lexstress.lexicon import make_alignment, write_alignment_file
from lexstress.model import load_checkpoint
from lexstress.prosody import AudioSignal, read_feature_file, write_wav
from lexstress.training import evaluate_loss, load_examples, read_manifest


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    (root / "train.json").write_text(json.dumps(
        {"n_words": 400, "n_speakers": 8, "error_rate": 0.1, "seed": 11, "name": "train"}))
    (root / "test.json").write_text(json.dumps(
        {"n_words": 150, "n_speakers": 3, "error_rate": 0.3, "seed": 12, "name": "test",
         "split": "test", "speaker_prefix": "te"}))
    assert run("synth-corpus", "--config", root / "train.json", "--out", root / "train") == 0
    assert run("synth-corpus", "--config", root / "test.json", "--out", root / "test") == 0
    return root


@pytest.fixture(scope="module")
def trained(corpus_dir):
    cfg = corpus_dir / "noatt.json"
    cfg.write_text(json.dumps({"attention": False, "epochs": 15, "patience": 5}))
    ckpt = corpus_dir / "models" / "noatt.json"
    assert run("train", "--manifest", corpus_dir / "train" / "manifest.json",
               "--config", cfg, "--out", ckpt, "--seed", 2) == 0
    return ckpt


class TestSynthCorpus:
    def test_byte_identical(self, corpus_dir, tmp_path):
        assert run("synth-corpus", "--config", corpus_dir / "train.json", "--out", tmp_path) == 0
        for name in ("train.alignments.jsonl", "train.features.jsonl", "manifest.json"):
            assert (tmp_path / name).read_bytes() == (corpus_dir / "train" / name).read_bytes()

    def test_summary_counts(self, corpus_dir, capsys, tmp_path):
        run("synth-corpus", "--config", corpus_dir / "test.json", "--out", tmp_path)
        row = capsys.readouterr().out.splitlines()[1].split()
        lines = (tmp_path / "test.alignments.jsonl").read_text().splitlines()
        assert int(row[2]) == len(lines) == 150

    def test_seed_flag_overrides_config(self, corpus_dir, tmp_path):
        run("synth-corpus", "--config", corpus_dir / "test.json", "--out", tmp_path / "a",
            "--seed", 99)
        a = (tmp_path / "a" / "test.alignments.jsonl").read_bytes()
        assert a != (corpus_dir / "test" / "test.alignments.jsonl").read_bytes()

    def test_unknown_key(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text(json.dumps({"n_words": 5, "colour": "red"}))
        assert run("synth-corpus", "--config", tmp_path / "bad.json", "--out", tmp_path) == 1
        err = capsys.readouterr().err
        assert "bad.json" in err and "colour" in err


class TestExtract:
    def write_fixture(self, tmp_path, rate=16000, freq=150.0):
        al = make_alignment("garage", "G ER0 AA1 ZH", [0.06, 0.09, 0.135, 0.06], start=0.05,
                            speaker_id="s1", realized=(0, 1))
        n = int(0.45 * rate)
        samples = 0.5 * np.sin(2 * np.pi * freq * np.arange(n) / rate)
        if rate == 16000:
            write_wav(tmp_path / "s1_garage.wav", AudioSignal(samples))
        else:
            import wave
            with wave.open(str(tmp_path / "s1_garage.wav"), "wb") as wf:
                wf.setnchannels(1)
                wf.setsampwidth(2)
                wf.setframerate(rate)
                wf.writeframes((samples * 32767).astype("<i2").tobytes())
        write_alignment_file([al, al], tmp_path / "al.jsonl")

    def test_tone_fixture(self, tmp_path):
        self.write_fixture(tmp_path)
        assert run("extract", "--wav-dir", tmp_path, "--alignments", tmp_path / "al.jsonl",
                   "--out", tmp_path / "f.jsonl") == 0
        feats = read_feature_file(tmp_path / "f.jsonl")
        assert len(feats) == 2
        np.testing.assert_allclose(feats[0].f0, 150.0, atol=2.0)

    def test_rejects_44k(self, tmp_path, capsys):
        self.write_fixture(tmp_path, rate=44100)
        assert run("extract", "--wav-dir", tmp_path, "--alignments", tmp_path / "al.jsonl",
                   "--out", tmp_path / "f.jsonl") == 1
        err = capsys.readouterr().err
        assert "s1_garage.wav" in err and "44100" in err and "resample" in err

    def test_missing_wav(self, tmp_path, capsys):
        self.write_fixture(tmp_path)
        (tmp_path / "s1_garage.wav").unlink()
        assert run("extract", "--wav-dir", tmp_path, "--alignments", tmp_path / "al.jsonl",
                   "--out", tmp_path / "f.jsonl") == 1
        assert "s1_garage.wav" in capsys.readouterr().err


class TestTrain:
    def test_outputs(self, trained):
        rows = list(csv.reader(open(trained.with_suffix(".loss.csv"))))
        assert rows[0] == ["epoch", "train_loss", "val_loss"]
        assert float(rows[2][1]) < float(rows[1][1])

    def test_checkpoint_reproduces_validation_loss(self, trained, corpus_dir):
        params, config, extra = load_checkpoint(trained)
        exs = load_examples(read_manifest(corpus_dir / "train" / "manifest.json"), "train")
        val = [ex for ex in exs if ex.speaker in set(extra["val_speakers"])]
        assert abs(evaluate_loss(params, val, config) - extra["val_loss"]) <= 1e-9

    def test_deterministic(self, trained, corpus_dir, tmp_path):
        out = tmp_path / "again.json"
        run("train", "--manifest", corpus_dir / "train" / "manifest.json",
            "--config", corpus_dir / "noatt.json", "--out", out, "--seed", 2)
        assert out.with_suffix(".loss.csv").read_bytes() == \
            trained.with_suffix(".loss.csv").read_bytes()
        a, _, _ = load_checkpoint(out)
        b, _, _ = load_checkpoint(trained)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])


class TestDetect:
    def rows(self, path):
        return list(csv.DictReader(open(path)))

    def test_row_per_word(self, trained, corpus_dir, tmp_path):
        assert run("detect", "--checkpoint", trained, "--manifest",
                   corpus_dir / "test" / "manifest.json", "--out", tmp_path / "d.csv") == 0
        assert len(self.rows(tmp_path / "d.csv")) == 150

    def test_threshold_one_flags_nothing(self, trained, corpus_dir, tmp_path):
        run("detect", "--checkpoint", trained, "--manifest", corpus_dir / "test" / "manifest.json",
            "--threshold", 1.0, "--out", tmp_path / "d.csv")
        assert all(r["flagged"] == "0" for r in self.rows(tmp_path / "d.csv"))

    def test_injected_error_flagged(self, trained, corpus_dir, tmp_path):
        from lexstress.augmentation import synthesize_word, write_corpus
        from lexstress.lexicon import load_lexicon
        from lexstress.training import TrainingExample
        lex = load_lexicon()
        al, feat = synthesize_word(lex["garage"], (1, 0), seed=3, word="garage",
                                   source="human", speaker_id="x")
        entry = write_corpus([TrainingExample(al, feat)], tmp_path, name="fx", split="test")
        (tmp_path / "m.json").write_text(json.dumps({"entries": [entry]}))
        run("detect", "--checkpoint", trained, "--manifest", tmp_path / "m.json",
            "--threshold", 0.5, "--out", tmp_path / "d.csv")
        row, = self.rows(tmp_path / "d.csv")
        assert row["canonical"] == "01" and row["flagged"] == "1"

    def test_bad_threshold(self, trained, corpus_dir, capsys):
        assert run("detect", "--checkpoint", trained, "--manifest",
                   corpus_dir / "test" / "manifest.json", "--threshold", 1.5) == 1


class TestEval:
    def test_one_curve_per_model(self, trained, corpus_dir, tmp_path):
        other = tmp_path / "copy.json"
        other.write_bytes(trained.read_bytes())
        assert run("eval", "--checkpoint", trained, other, "--manifest",
                   corpus_dir / "test" / "manifest.json", "--out", tmp_path / "ev") == 0
        assert sorted(p.name for p in (tmp_path / "ev").glob("pr_*.csv")) == \
            ["pr_copy.csv", "pr_noatt.csv"]
        svg = (tmp_path / "ev" / "pr_curves.svg").read_text()
        assert svg.count("<polyline") == 2
        report = json.loads((tmp_path / "ev" / "report.json").read_text())
        assert [m["model"] for m in report["models"]] == ["noatt", "copy"]

    def test_corrupt_checkpoint(self, trained, corpus_dir, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(trained.read_text().replace('"checksum": "', '"checksum": "0'))
        assert run("eval", "--checkpoint", bad, "--manifest",
                   corpus_dir / "test" / "manifest.json", "--out", tmp_path) == 1
        assert "bad.json" in capsys.readouterr().err


class TestAttentionAndGradcheck:
    def test_heatmap_has_k_rows(self, corpus_dir, tmp_path):
        cfg = tmp_path / "att.json"
        cfg.write_text(json.dumps({"epochs": 1}))
        ckpt = tmp_path / "att_model.json"
        run("train", "--manifest", corpus_dir / "train" / "manifest.json", "--config", cfg,
            "--out", ckpt)
        al = corpus_dir / "test" / "test.alignments.jsonl"
        ft = corpus_dir / "test" / "test.features.jsonl"
        k = len(json.loads(al.read_text().splitlines()[3])["canonical"])
        assert run("attention", "--checkpoint", ckpt, "--alignments", al, "--features", ft,
                   "--index", 3, "--out", tmp_path / "h.csv") == 0
        assert len((tmp_path / "h.csv").read_text().splitlines()) == k

    def test_gradcheck(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text(json.dumps({"n_configs": 2}))
        assert run("gradcheck", "--config", tmp_path / "g.json", "--seed", 1) == 0
        out = capsys.readouterr().out
        assert "gradcheck passed" in out and "FAIL" not in out
