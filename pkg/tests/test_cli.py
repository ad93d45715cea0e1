import csv
import json

import numpy as np
import pytest

from vbcentrality.centrality import eigenvector_centrality
from vbcentrality.cli import main
from vbcentrality.io import load_graph, load_observations
from vbcentrality.vbc import baseline_centrality


def run(*argv):
    return main(["--quiet", *map(str, argv)])


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def cycle_file(tmp_path):
    path = tmp_path / "cycle.csv"
    path.write_text("from,to,weight\na,b,1\nb,c,1\nc,a,1\n")
    return path


@pytest.fixture(scope="module")
def attr_files(tmp_path_factory):
    base = tmp_path_factory.mktemp("attr")
    paths = {k: base / f"{k}.csv" for k in ("graph", "obs", "attrs")}
    assert run("gen", "--kind", "attr", "--n", 20, "--d", 2, "--sigma2", 1.0, "--samples", 3,
               "--seed", 4, "--out", paths["graph"], "--observations", paths["obs"],
               "--attributes", paths["attrs"]) == 0
    return paths


class TestCentrality:
    def test_directed_cycle_uniform(self, tmp_path, cycle_file):
        out = tmp_path / "scores.json"
        assert run("centrality", cycle_file, "--out", out) == 0
        doc = read_json(out)
        np.testing.assert_allclose(list(doc["scores"].values()), 1 / np.sqrt(3), rtol=1e-10)
        assert doc["eigenvalue"] == pytest.approx(1.0)

    def test_metrics_against_itself(self, tmp_path, cycle_file):
        g = tmp_path / "g.csv"
        assert run("gen", "--kind", "er", "--n", 15, "--p", 0.3, "--out", g) == 0
        scores = tmp_path / "s.json"
        assert run("centrality", g, "--out", scores) == 0
        report = tmp_path / "m.json"
        assert run("metrics", scores, scores, "--k", 5, "--out", report) == 0
        doc = read_json(report)
        assert doc["kendall"] == 1.0 and doc["topk"] == 1.0

    def test_constant_scores_rejected(self, tmp_path, cycle_file):
        scores = tmp_path / "s.json"
        assert run("centrality", cycle_file, "--method", "degree", "--out", scores) == 0
        assert run("metrics", scores, scores) == 2

    def test_katz_beyond_radius_is_numerical(self, cycle_file):
        assert run("centrality", cycle_file, "--method", "katz", "--katz-a", 1.5) == 3

    def test_katz_needs_attenuation(self, cycle_file):
        assert run("centrality", cycle_file, "--method", "katz") == 2

    def test_degree_normalizations(self, tmp_path, cycle_file):
        out = tmp_path / "d.json"
        assert run("centrality", cycle_file, "--method", "degree", "--normalization", "raw",
                   "--out", out) == 0
        assert set(read_json(out)["scores"].values()) == {1.0}

    def test_missing_file(self, tmp_path):
        assert run("centrality", tmp_path / "absent.csv") == 2

    def test_bad_choice(self, cycle_file):
        assert run("centrality", cycle_file, "--method", "pagerank") == 2

    def test_unknown_command(self):
        assert run("frobnicate") == 2


class TestConfigHandling:
    def test_malformed_yaml(self, tmp_path, cycle_file):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("method: [eigen\n")
        assert run("--config", cfg, "centrality", cycle_file) == 2

    def test_unknown_key(self, tmp_path, cycle_file):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("bogus: 1\n")
        assert run("centrality", cycle_file, "--config", cfg) == 2

    def test_flag_overrides_file(self, tmp_path, cycle_file):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("method: katz\nkatz_a: 0.5\n")
        out = tmp_path / "o.json"
        assert run("centrality", cycle_file, "--config", cfg, "--out", out) == 0
        assert read_json(out)["method"] == "katz"
        assert run("centrality", cycle_file, "--config", cfg, "--method", "eigen",
                   "--out", out) == 0
        assert read_json(out)["method"] == "eigen"

    def test_exp_noise_without_networks(self):
        assert run("exp-noise") == 2


class TestFitVbc:
    def test_noise_free_recovery_and_reference(self, tmp_path):
        g, obs = tmp_path / "g.csv", tmp_path / "o.csv"
        assert run("gen", "--kind", "er", "--n", 30, "--p", 0.2, "--sigma2", 0, "--out", g,
                   "--observations", obs) == 0
        out = tmp_path / "fit.json"
        assert run("fit-vbc", obs, "--reference", g, "--out", out) == 0
        doc = read_json(out)
        assert doc["reference_kendall"] >= 0.99
        graph, index = load_graph(g)
        ref = eigenvector_centrality(graph).values
        labels = doc["nodes"]
        tau_scores = np.array([doc["scores"][lab] for lab in labels])
        assert np.corrcoef(tau_scores, ref[[index[lab] for lab in labels]])[0, 1] > 0.99

    def test_byte_identical(self, tmp_path, attr_files):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run("fit-vbc", attr_files["obs"], "--out", a) == 0
        assert run("fit-vbc", attr_files["obs"], "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file(self, tmp_path):
        assert run("fit-vbc", tmp_path / "absent.csv") == 2


@pytest.fixture(scope="module")
def model(attr_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    assert run("fit-vbcgp", attr_files["obs"], attr_files["attrs"], "--num-inducing", 5,
               "--kernel", "ard", "--out", out) == 0
    return out


class TestFitVbcGp:
    def test_predict_on_training_attributes(self, tmp_path, model, attr_files):
        out = tmp_path / "pred.json"
        assert run("predict", model, attr_files["attrs"], "--out", out) == 0
        fit, pred = read_json(model), read_json(out)
        labels = fit["nodes"]
        mean = np.array([pred["predictions"][lab]["mean"] for lab in labels])
        cached = np.array([fit["scores"][lab] for lab in labels])
        np.testing.assert_allclose(mean / np.linalg.norm(mean), cached, rtol=1e-10)

    def test_predictions_repeatable(self, tmp_path, model, attr_files):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run("predict", model, attr_files["attrs"], "--out", a) == 0
        assert run("predict", model, attr_files["attrs"], "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_attribute_dimension_mismatch(self, tmp_path, model):
        bad = tmp_path / "bad.csv"
        bad.write_text("node,f1\n0,0.5\n1,0.2\n")
        assert run("predict", model, bad) == 2

    def test_not_a_model(self, tmp_path, attr_files, cycle_file):
        doc = tmp_path / "x.json"
        doc.write_text('{"model": "vbc"}')
        assert run("predict", doc, attr_files["attrs"]) == 2

    def test_missing_attribute_row(self, tmp_path, attr_files):
        bad = tmp_path / "bad.csv"
        bad.write_text("node,f1,f2\n0,0.5,0.1\n")
        assert run("fit-vbcgp", attr_files["obs"], bad) == 2


class TestFullGp:
    def test_full_split_interpolates(self, tmp_path, attr_files):
        out = tmp_path / "fg.json"
        assert run("fullgp-baseline", attr_files["obs"], attr_files["attrs"],
                   "--train-fraction", 1.0, "--noise-var", 0, "--out", out) == 0
        doc = read_json(out)
        data, index = load_observations(attr_files["obs"], attr_files["attrs"])
        c_bl = baseline_centrality(data)
        got = np.array([doc["log_centrality"][lab] for lab in index.labels])
        np.testing.assert_allclose(got, np.log(c_bl), atol=1e-6)
        assert len(doc["train_nodes"]) == data.n

    def test_split_deterministic_per_seed(self, tmp_path, attr_files):
        docs = []
        for k, seed in enumerate((1, 1, 2)):
            out = tmp_path / f"fg{k}.json"
            assert run("fullgp-baseline", attr_files["obs"], attr_files["attrs"], "--seed", seed,
                       "--out", out) == 0
            docs.append(read_json(out))
        assert docs[0] == docs[1]
        assert docs[0]["train_nodes"] != docs[2]["train_nodes"]
        assert len(docs[0]["train_nodes"]) == 16

    def test_bad_fraction(self, attr_files):
        assert run("fullgp-baseline", attr_files["obs"], attr_files["attrs"],
                   "--train-fraction", 0) == 2


class TestExperiments:
    def test_exp_noise_rows(self, tmp_path):
        out = tmp_path / "noise.csv"
        assert run("exp-noise", "--networks", "er:12:0.4,ba:12:2", "--sigma2", "1,5",
                   "--samples", "1,2", "--seeds", 2, "--max-iter", 50, "--out", out) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["network", "sigma2", "Ns", "seed", "method", "kendall", "top10"]
        assert len(rows) - 1 == 2 * 2 * 2 * 2 * 2

    def test_exp_noise_truncated_config(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("networks: [er:12:0.4\n")
        assert run("exp-noise", "--config", cfg) == 2

    def test_exp_vaccine_small(self, tmp_path):
        curves, summary = tmp_path / "curves.csv", tmp_path / "summary.json"
        assert run("exp-vaccine", "--networks", 1, "--train-households", 12,
                   "--test-households", 15, "--runs", 3, "--num-inducing", 4,
                   "--max-iter", 30, "--initial-fraction", 0.1, "--out", curves, "--summary", summary) == 0
        doc = read_json(summary)
        for split in ("train", "test"):
            assert set(doc[split]["strategies"]) == {"none", "random", "vbcgp"}
        with open(curves, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {(r["split"], r["strategy"]) for r in rows} == {
            (s, k) for s in ("train", "test") for k in ("none", "random", "vbcgp")}

    def test_exp_vaccine_empty_test_population(self):
        assert run("exp-vaccine", "--test-households", 0) == 2

    def test_exp_vaccine_unknown_strategy(self):
        assert run("exp-vaccine", "--strategies", "none,magic") == 2


class TestGen:
    def test_requires_out(self):
        assert run("gen", "--kind", "er") == 2

    def test_observations_need_noise(self, tmp_path):
        assert run("gen", "--kind", "er", "--out", tmp_path / "g.csv",
                   "--observations", tmp_path / "o.csv") == 2

    def test_no_attributes_for_er(self, tmp_path):
        assert run("gen", "--kind", "er", "--out", tmp_path / "g.csv",
                   "--attributes", tmp_path / "a.csv") == 2

    def test_contact_population(self, tmp_path):
        g, obs = tmp_path / "g.csv", tmp_path / "o.csv"
        assert run("gen", "--kind", "contact", "--households", 10, "--out", g,
                   "--observations", obs, "--samples", 2) == 0
        graph, _ = load_graph(g)
        data, _ = load_observations(obs)
        assert len(data.weights) == 2 * graph.weights.nnz

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("gen", "--kind", "ba", "--n", 20, "--m", 2, "--seed", 3, "--out", a) == 0
        assert run("gen", "--kind", "ba", "--n", 20, "--m", 2, "--seed", 3, "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()
