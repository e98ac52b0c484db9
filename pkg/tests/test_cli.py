from __future__ import annotations

import json
import random

import pytest

from vicrit.cli import main
from vicrit.core import CorruptionRecord

from genutil import make_caption, make_record


@pytest.fixture()
def record_fixture(tmp_path):
    rec = make_record(random.Random(0))
    record_path = tmp_path / "record.json"
    record_path.write_text(json.dumps(rec.to_json()), encoding="utf-8")
    return rec, record_path


class TestVerify:
    def test_matching_fixture_exits_0(self, record_fixture, tmp_path, capsys):
        rec, record_path = record_fixture
        response_path = tmp_path / "resp.txt"
        response_path.write_text(
            f"<think>looking</think> \\boxed{{{rec.hallucinated_span.text}}}", encoding="utf-8"
        )
        code = main(["verify", "--record", str(record_path), "--response", str(response_path)])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out == {"r_answer": 1, "r_format": 1, "total": 1.0}

    def test_wrong_answer_still_exits_0(self, record_fixture, tmp_path, capsys):
        _, record_path = record_fixture
        response_path = tmp_path / "resp.txt"
        response_path.write_text("\\boxed{nonsense}", encoding="utf-8")
        code = main(["verify", "--record", str(record_path), "--response", str(response_path)])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["total"] == 0.0

    def test_missing_file_exits_1(self, tmp_path, capsys):
        code = main(["verify", "--record", str(tmp_path / "nope.json"), "--response", str(tmp_path / "nope.txt")])
        assert code == 1


class TestUsageErrors:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--record", "r", "--response", "x", "--bogus"])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestInject:
    def test_deterministic_output_files(self, tmp_path):
        rng = random.Random(1)
        captions = tmp_path / "caps.txt"
        captions.write_text("\n".join(make_caption(rng) for _ in range(8)) + "\n", encoding="utf-8")
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["inject", "--input", str(captions), "--seed", "7", "--out", str(out1)]) == 0
        assert main(["inject", "--input", str(captions), "--seed", "7", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        for line in out1.read_text("utf-8").splitlines():
            CorruptionRecord.from_json(json.loads(line))

    def test_jsonl_input_with_domains(self, tmp_path, capsys):
        rng = random.Random(2)
        captions = tmp_path / "caps.jsonl"
        rows = [
            json.dumps({"image_ref": f"img{i}", "caption": make_caption(rng), "image_domain": "natural"})
            for i in range(3)
        ]
        captions.write_text("\n".join(rows) + "\n", encoding="utf-8")
        assert main(["inject", "--input", str(captions), "--seed", "3"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        for line in lines:
            obj = json.loads(line)
            assert obj["image_domain"] == "natural"
            assert obj["image_ref"].startswith("img")

    def test_type_restriction(self, tmp_path, capsys):
        captions = tmp_path / "caps.txt"
        captions.write_text("There are seven birds above the wooden bridge near a red door.\n", encoding="utf-8")
        assert main(["inject", "--input", str(captions), "--seed", "1", "--types", "color"]) == 0
        (line,) = capsys.readouterr().out.strip().splitlines()
        assert json.loads(line)["hallucination_type"] == "color"


class TestTrainToy:
    def test_writes_trace(self, tmp_path, capsys):
        cfg = tmp_path / "train.toml"
        cfg.write_text("seed = 3\nsteps = 4\nnoise = 0.0\n", encoding="utf-8")
        out = tmp_path / "trace.jsonl"
        assert main(["train-toy", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text("utf-8").strip().splitlines()
        assert len(lines) == 4
        assert set(json.loads(lines[0])) == {"step", "mean_reward", "accuracy", "objective", "grad_norm"}

    def test_identical_configs_identical_traces(self, tmp_path):
        cfg = tmp_path / "train.toml"
        cfg.write_text("seed = 5\nsteps = 3\n", encoding="utf-8")
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["train-toy", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["train-toy", "--config", str(cfg), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_config_key_exits_1(self, tmp_path):
        cfg = tmp_path / "train.toml"
        cfg.write_text("sed = 5\n", encoding="utf-8")
        assert main(["train-toy", "--config", str(cfg)]) == 1


class TestChair:
    def test_formula_fixture(self, tmp_path, capsys):
        caps = tmp_path / "caps.jsonl"
        caps.write_text(
            json.dumps({"image_id": "i0", "caption": "a cat and a dog near a car and a tree"}) + "\n",
            encoding="utf-8",
        )
        gt = tmp_path / "gt.jsonl"
        gt.write_text(json.dumps({"image_id": "i0", "objects": ["cat", "dog", "tree"]}) + "\n", encoding="utf-8")
        lex = tmp_path / "lex.json"
        lex.write_text(json.dumps({"objects": ["cat", "dog", "car", "tree"]}), encoding="utf-8")
        assert main(["chair", "--captions", str(caps), "--ground-truth", str(gt), "--lexicon", str(lex)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out == {"chair_i": 0.25, "chair_s": 1.0, "n_images": 1}


class TestCorrelate:
    def test_csv_pairs(self, tmp_path, capsys):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text(
            "model,bench_acc,task_avg\nm0,1.0,0.0\nm1,3.0,1.0\nm2,5.0,2.0\n", encoding="utf-8"
        )
        assert main(["correlate", "--pairs", str(pairs)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["pearson_r"] == pytest.approx(1.0)
        assert out["n"] == 3


class TestServe:
    def test_print_config_has_hash(self, capsys):
        from vicrit.service import ServiceConfig

        assert main(["serve", "--print-config"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["config_hash"] == ServiceConfig().config_hash()
