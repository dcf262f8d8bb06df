import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from oracles import TOY
from pbrkit import cli
from pbrkit.dataio import load_csv, save_csv, synth_dirichlet
from pbrkit.kernels import GramMatrix

SMALL_GRID = ["--log2-c", "-2,2", "--log2-gamma", "-2,2", "--degrees", "1,2"]


def schema(name):
    return json.loads((resources.files("pbrkit") / "schemas" / f"{name}.schema.json").read_text())


def validated(path, name):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, schema(name))
    return doc


@pytest.fixture(scope="module")
def dataset_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.csv"
    save_csv(synth_dirichlet(3, 16, 12, concentration=200.0, seed=0), path)
    return path


class TestSchemas:
    def test_all_schemas_are_valid(self):
        names = sorted(p.name for p in (resources.files("pbrkit") / "schemas").iterdir())
        assert len(names) == 8
        for name in names:
            jsonschema.Draft202012Validator.check_schema(schema(name.split(".")[0]))


class TestToy:
    def test_table(self, tmp_path, capsys):
        out = tmp_path / "toy.json"
        assert cli.run(["toy", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "pbr" in text and "0.043763" in text and "0.044770" in text
        doc = validated(out, "toy")
        assert doc["distances"]["pbr"]["d_e"] == pytest.approx(TOY["pbr_de"], abs=1e-14)
        assert doc["distances"]["pbr"]["d_e"] < doc["distances"]["pbr"]["d_f"]
        for m in ("bd", "jd", "chi2", "hellinger", "hi", "l1brd"):
            assert doc["distances"][m]["d_f"] < doc["distances"][m]["d_e"]
        assert doc["histograms"]["f"] == [0.2] * 5


class TestDist:
    def test_identical_files_give_zero(self, tmp_path, capsys, dataset_csv):
        out = tmp_path / "d.json"
        assert cli.run(["dist", "--measure", "pbr", str(dataset_csv), str(dataset_csv),
                        "--out", str(out)]) == 0
        values = np.array(validated(out, "dist")["values"])
        assert values.shape == (36, 36)
        assert np.all(np.diag(values) == 0)

    def test_single_pair(self, tmp_path, capsys):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        a.write_text("1 15 24 32 2\n")
        b.write_text("3,15,26,33,52\n")
        assert cli.run(["dist", str(a), str(b)]) == 0
        assert capsys.readouterr().out.strip() == "pbr: 0.043763"

    def test_inline_vectors(self, capsys):
        assert cli.run(["dist", "--measure", "l1", "1,1", "1,3"]) == 0
        assert capsys.readouterr().out.strip() == "l1: 0.500000"

    def test_bd_disjoint_serializes_null(self, tmp_path):
        out = tmp_path / "d.json"
        assert cli.run(["dist", "--measure", "bd", "1,0", "0,1", "--out", str(out)]) == 0
        assert validated(out, "dist")["values"] == [[None]]

    def test_dimension_mismatch_is_data_error(self, capsys):
        assert cli.run(["dist", "1,2,3", "1,2"]) == 2
        assert "dimension" in capsys.readouterr().err

    def test_negative_is_data_error(self):
        assert cli.run(["dist", "1,2", "1 -2"]) == 2

    def test_missing_file(self, tmp_path):
        assert cli.run(["dist", str(tmp_path / "nope.csv"), "1,2"]) == 2

    def test_unknown_measure_is_usage_error(self, capsys):
        assert cli.run(["dist", "--measure", "emd", "1,2", "1,2"]) == 1
        assert "invalid choice" in capsys.readouterr().err


class TestGram:
    def test_binary_output(self, tmp_path, dataset_csv):
        out = tmp_path / "g.pbrg"
        assert cli.run(["gram", str(dataset_csv), "--gamma", "2", "--out", str(out)]) == 0
        g = GramMatrix.from_bytes(out.read_bytes())
        assert g.shape == (36, 36) and g.spec.gamma == 2.0
        np.testing.assert_array_equal(np.diag(g.values), 1.0)

    def test_json_with_pd_audit(self, tmp_path, capsys, dataset_csv):
        out = tmp_path / "g.json"
        assert cli.run(["gram", str(dataset_csv), "--kernel", "linear", "--check-pd",
                        "--out", str(out)]) == 0
        doc = validated(out, "gram")
        assert doc["kernel"] == {"kind": "linear"}
        assert "positive definite" in capsys.readouterr().out

    def test_rectangular(self, tmp_path, dataset_csv):
        other = tmp_path / "o.csv"
        save_csv(synth_dirichlet(2, 16, 3, concentration=5.0, seed=1), other)
        out = tmp_path / "g.json"
        assert cli.run(["gram", str(dataset_csv), "--cols", str(other), "--kernel", "poly",
                        "--degree", "2", "--out", str(out)]) == 0
        doc = validated(out, "gram")
        assert (doc["rows"], doc["cols"]) == (36, 6)

    @pytest.mark.parametrize("flags", [
        ["--kernel", "linear", "--gamma", "1"],
        ["--kernel", "poly", "--gamma", "1"],
        ["--degree", "2"],
        ["--threads", "0"],
    ])
    def test_inconsistent_flags(self, dataset_csv, flags):
        assert cli.run(["gram", str(dataset_csv), *flags]) == 1

    def test_invalid_gamma_is_data_error(self, dataset_csv):
        assert cli.run(["gram", str(dataset_csv), "--gamma", "-1"]) == 2


class TestSvm:
    def test_train_and_predict(self, tmp_path, capsys, dataset_csv):
        model = tmp_path / "m.json"
        assert cli.run(["svm-train", str(dataset_csv), "--C", "4", "--gamma", "1",
                        "--out", str(model)]) == 0
        assert "training macro accuracy: 100.00%" in capsys.readouterr().out
        validated(model, "svm_model")
        preds = tmp_path / "p.json"
        assert cli.run(["svm-predict", str(model), str(dataset_csv), "--train", str(dataset_csv),
                        "--out", str(preds)]) == 0
        doc = validated(preds, "svm_predictions")
        truth = load_csv(dataset_csv)
        assert doc["predictions"] == [truth.class_names[int(v)] for v in truth.labels]
        assert doc["macro_accuracy"] == 100.0

    def test_predict_with_wrong_training_file(self, tmp_path, dataset_csv):
        model = tmp_path / "m.json"
        assert cli.run(["svm-train", str(dataset_csv), "--out", str(model)]) == 0
        other = tmp_path / "o.csv"
        save_csv(synth_dirichlet(3, 16, 2, concentration=5.0, seed=1), other)
        assert cli.run(["svm-predict", str(model), str(other), "--train", str(other)]) == 2

    def test_unreadable_model(self, tmp_path, dataset_csv):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert cli.run(["svm-predict", str(bad), str(dataset_csv), "--train",
                        str(dataset_csv)]) == 2

    def test_predict_requires_train(self, tmp_path, dataset_csv):
        assert cli.run(["svm-predict", "m.json", str(dataset_csv)]) == 1


class TestTwoColumnTests:
    @pytest.fixture
    def columns(self, tmp_path):
        path = tmp_path / "cols.csv"
        rng = np.random.default_rng(0)
        rows = ["a,b,c"] + [f"{x:.17g},{y:.17g},{x + 1:.17g}" for x, y in rng.normal(size=(30, 2)).tolist()]
        path.write_text("\n".join(rows) + "\n")
        return path

    def test_ks(self, tmp_path, columns):
        out = tmp_path / "ks.json"
        assert cli.run(["ks", str(columns), "--cols", "a", "c", "--out", str(out)]) == 0
        doc = validated(out, "test_result")
        assert doc["test"] == "ks" and doc["p_value"] < 0.01

    def test_wilcoxon(self, tmp_path, columns):
        out = tmp_path / "w.json"
        assert cli.run(["wilcoxon", str(columns), "--cols", "0", "2", "--out", str(out)]) == 0
        doc = validated(out, "test_result")
        assert doc["statistic"] == 0 and doc["n_effective"] == 30

    def test_unknown_column(self, columns):
        assert cli.run(["ks", str(columns), "--cols", "a", "zz"]) == 1

    def test_wilcoxon_identical_columns(self, columns):
        assert cli.run(["wilcoxon", str(columns), "--cols", "a", "a"]) == 2


class TestAudit:
    def test_json_and_csv(self, tmp_path, capsys, dataset_csv):
        out = tmp_path / "a.json"
        assert cli.run(["audit", str(dataset_csv), "--seed", "3", "--pairs", "50",
                        "--alpha", "0.05", "--alpha", "0.01", "--out", str(out)]) == 0
        doc = validated(out, "audit")
        assert doc["alpha_levels"] == [0.05, 0.01] and doc["seed"] == 3
        csv_out = tmp_path / "a.csv"
        assert cli.run(["audit", str(dataset_csv), "--seed", "3", "--pairs", "50",
                        "--out", str(csv_out)]) == 0
        assert csv_out.read_text().splitlines()[0] == "alpha,percent_significant"

    def test_seed_required(self, dataset_csv):
        assert cli.run(["audit", str(dataset_csv)]) == 1


class TestBench:
    def args(self, data, *extra):
        return ["bench", str(data), "--seed", "7", "--train-per-class", "6", "--repeats", "3",
                "--methods", "pbr,hellinger,linear", *SMALL_GRID, *extra]

    def test_byte_identical_runs_and_threads(self, tmp_path, capsys, dataset_csv):
        outs = [tmp_path / f"r{k}.json" for k in range(3)]
        assert cli.run(self.args(dataset_csv, "--out", str(outs[0]))) == 0
        assert cli.run(self.args(dataset_csv, "--out", str(outs[1]))) == 0
        assert cli.run(self.args(dataset_csv, "--threads", "8", "--out", str(outs[2]))) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes() == outs[2].read_bytes()
        doc = validated(outs[0], "bench")
        assert doc["significance"]["baseline"] == "pbr"
        assert [m["name"] for m in doc["report"]["methods"]] == ["pbr", "hellinger", "linear"]

    def test_csv_summary(self, tmp_path, dataset_csv):
        out = tmp_path / "s.csv"
        assert cli.run(self.args(dataset_csv, "--out", str(out))) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "method,mean,std,sv_mean,flags" and len(lines) == 4

    @pytest.mark.parametrize("extra", [
        ["--methods", "pbr,emd"],
        ["--baseline", "chi2"],
        ["--log2-c", "a:b"],
        ["--log2-c", "0:4:0"],
    ])
    def test_usage_errors(self, dataset_csv, extra):
        assert cli.run(self.args(dataset_csv, *extra)) == 1

    def test_seed_required(self, dataset_csv):
        assert cli.run(["bench", str(dataset_csv), "--train-per-class", "5"]) == 1

    def test_too_few_per_class(self, dataset_csv):
        assert cli.run(self.args(dataset_csv, "--train-per-class", "12")) == 2


class TestSynth:
    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_deterministic(self, tmp_path, suffix):
        a, b = tmp_path / f"a{suffix}", tmp_path / f"b{suffix}"
        for path in (a, b):
            assert cli.run(["synth", "--seed", "4", "--classes", "2", "--dims", "5",
                            "--per-class", "3", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_required(self):
        assert cli.run(["synth"]) == 1

    def test_invalid_parameters(self):
        assert cli.run(["synth", "--seed", "1", "--classes", "1"]) == 2


class TestParser:
    def test_unknown_flag(self, capsys):
        assert cli.run(["toy", "--verbose"]) == 1
        assert "unrecognized arguments" in capsys.readouterr().err

    def test_no_command(self):
        assert cli.run([]) == 1

    @pytest.mark.parametrize("command", ["dist", "gram", "svm-train", "svm-predict", "ks",
                                         "wilcoxon", "audit", "bench", "toy", "synth"])
    def test_help_lists_flags(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.run([command, "--help"])
        assert exc.value.code == 0
        assert "--out" in capsys.readouterr().out

    def test_module_entry_point(self):
        import subprocess
        import sys
        res = subprocess.run([sys.executable, "-m", "pbrkit", "toy"], capture_output=True,
                             text=True, check=True)
        assert "pbr" in res.stdout
