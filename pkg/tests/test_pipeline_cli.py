import hashlib
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ceo import cli, pipeline
from ceo.corpus import load_corpus, read_evec, read_events
from ceo.datasets import bundled_corpus_dir, make_synthetic_corpus
from ceo.errors import CEOError, ConfigError
from ceo.metrics import dendrogram_purity
from ceo.naming import read_type_paths
from ceo.reprlearn import init_autoencoder, load_params
from ceo.tree import read_merge_list, read_newick

ARTIFACTS = (
    pipeline.ONTOLOGY_MERGES,
    pipeline.ONTOLOGY_NEWICK,
    pipeline.TYPEPATHS_FILE,
    pipeline.NAMES_FILE,
    pipeline.REPORT_FILE,
)


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    shutil.copytree(bundled_corpus_dir(), d)
    return d


def write_cfg(path, **values):
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir()) if p.is_file()}


class TestConfig:
    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as exc:
            pipeline.parse_config("clusterr = ward\n")
        assert exc.value.key == "clusterr" and exc.value.code == "E_CONFIG"
        assert "clusterr" in str(exc.value)

    def test_parse_values(self, tmp_path):
        cfg = pipeline.parse_config(
            "# comment\nevents = ev.jsonl\nrefine = yes\nk = 3\nhidden_dims = 8, 4\nlambda = 0.5\n"
            "naming.strategy = tfidf\nlatent_dim = none\n",
            base_dir=str(tmp_path),
        )
        assert cfg.events == str(tmp_path / "ev.jsonl")
        assert cfg.refine is True and cfg.k == 3 and cfg.hidden_dims == (8, 4)
        assert cfg.lam == 0.5 and cfg.naming_strategy == "tfidf" and cfg.latent_dim is None

    @pytest.mark.parametrize(
        "text, key",
        [
            ("k = three\n", "k"),
            ("k = 0\n", "k"),
            ("algorithm = dbscan\n", "algorithm"),
            ("seed = none\n", "seed"),
            ("salience_threshold = 2\n", "salience_threshold"),
            ("k = 2\nk = 3\n", "k"),
            ("naming.strategy = guess\n", "naming.strategy"),
        ],
    )
    def test_invalid_values(self, text, key):
        with pytest.raises(ConfigError) as exc:
            pipeline.parse_config(text)
        assert exc.value.key == key

    def test_overrides(self):
        cfg = pipeline.parse_config("seed = 1\n", overrides={"seed": 7})
        assert cfg.seed == 7
        with pytest.raises(ConfigError):
            pipeline.parse_config("", overrides={"bogus": 1})

    def test_every_field_has_a_key(self):
        keys = pipeline.config_keys()
        assert {"lambda", "naming.strategy", "output_dir", "threads"} <= set(keys)


class TestReport:
    def test_render_and_read(self, tmp_path):
        metrics = {"n_leaves": 4, "purity": 0.5, "p_at_k@5": 1.0}
        text = pipeline.render_report(metrics)
        head, table = text.split("\n\n")
        assert head.splitlines() == ["n_leaves=4", "purity=0.5", "p_at_k@5=1"]
        assert table.splitlines()[0].startswith("metric")
        (tmp_path / "r.txt").write_text(text)
        assert pipeline.read_report(tmp_path / "r.txt") == metrics


class TestPipeline:
    def test_bundled_run(self, corpus, tmp_path):
        out = tmp_path / "out"
        metrics = pipeline.run_pipeline(str(corpus / "pipeline.cfg"), {"output_dir": str(out)})
        assert metrics["purity"] >= 0.9
        assert set(ARTIFACTS) <= set(digest(out))
        report = pipeline.read_report(out / pipeline.REPORT_FILE)
        for key in ("purity", "dasgupta_cost", "ari", "bcubed_f1", "nmi", "rouge_l", "sim_dist", "auc"):
            assert key in report
        assert "p_at_k@5" in report and "r_at_k@10" in report

        d = read_merge_list(out / pipeline.ONTOLOGY_MERGES)
        gold = pipeline.read_gold(corpus / "gold.tsv")
        assert report["purity"] == pytest.approx(dendrogram_purity(d, gold))
        nwk, _ = read_newick(out / pipeline.ONTOLOGY_NEWICK)
        assert sorted(nwk.leaf_ids) == sorted(d.leaf_ids)
        paths = read_type_paths(out / pipeline.TYPEPATHS_FILE)
        assert set(paths) == set(d.leaf_ids)
        load_params(out / pipeline.MODEL_FILE)
        assert len(read_evec(out / pipeline.LATENT_FILE)) == d.n_leaves

    def test_deterministic_and_seed_sensitive(self, corpus, tmp_path):
        cfg = str(corpus / "pipeline.cfg")
        pipeline.run_pipeline(cfg, {"output_dir": str(tmp_path / "a")})
        pipeline.run_pipeline(cfg, {"output_dir": str(tmp_path / "b")})
        assert digest(tmp_path / "a") == digest(tmp_path / "b")
        pipeline.run_pipeline(cfg, {"output_dir": str(tmp_path / "c"), "seed": 5})
        pipeline.run_pipeline(cfg, {"output_dir": str(tmp_path / "d")})
        assert digest(tmp_path / "d") == digest(tmp_path / "a")
        assert digest(tmp_path / "c")[pipeline.LATENT_FILE] != digest(tmp_path / "a")[pipeline.LATENT_FILE]

    def test_inputs_untouched(self, corpus, tmp_path):
        before = digest(corpus)
        pipeline.run_pipeline(str(corpus / "pipeline.cfg"), {"output_dir": str(tmp_path / "o")})
        assert digest(corpus) == before

    def test_plain_embeddings_without_refinement(self, corpus, tmp_path):
        cfg = write_cfg(
            tmp_path / "plain.cfg",
            events=corpus / "events.jsonl",
            gold=corpus / "gold.tsv",
            algorithm="bisecting_kmeans",
            k=4,
            output_dir=tmp_path / "plain",
        )
        metrics = pipeline.run_pipeline(str(cfg))
        assert 0.0 <= metrics["purity"] <= 1.0 and "auc" not in metrics
        assert not (tmp_path / "plain" / pipeline.LATENT_FILE).exists()

    def test_filter_removing_everything(self, corpus, tmp_path):
        cfg = write_cfg(
            tmp_path / "f.cfg",
            events=corpus / "events.jsonl",
            salience_scores=corpus / "salience.tsv",
            salience_threshold=1.0,
            output_dir=tmp_path / "f",
        )
        assert max(pipeline.read_scores(corpus / "salience.tsv").values()) < 1.0
        with pytest.raises(CEOError) as exc:
            pipeline.run_pipeline(str(cfg))
        assert exc.value.code == "E_EMPTY"


class TestSubcommands:
    def test_cluster_then_evaluate(self, corpus, tmp_path):
        out = tmp_path / "c"
        cfg = write_cfg(tmp_path / "c.cfg", events=corpus / "events.jsonl", algorithm="ward", k=4, output_dir=out)
        d = pipeline.run_cluster(pipeline.load_config(cfg))
        lines = (out / pipeline.CLUSTERS_FILE).read_text().splitlines()
        assert len(lines) == d.n_leaves and len({ln.split("\t")[1] for ln in lines}) == 4

        ev_cfg = write_cfg(
            tmp_path / "e.cfg",
            merge_list=out / pipeline.ONTOLOGY_MERGES,
            gold=corpus / "gold.tsv",
            k=4,
            output_dir=tmp_path / "e",
        )
        metrics = pipeline.run_evaluate(pipeline.load_config(ev_cfg))
        assert {"purity", "dasgupta_cost", "ari", "bcubed_f1", "nmi"} <= set(metrics)
        assert metrics["purity"] == pytest.approx(dendrogram_purity(d, pipeline.read_gold(corpus / "gold.tsv")))

    def test_evaluate_without_k(self, tmp_path):
        (tmp_path / "m").write_text("a\tb\t1.0\t2\nc\td\t1.0\t2\n#0\t#1\t2.0\t4\n")
        (tmp_path / "g").write_text("a\tx\nb\tx\nc\ty\nd\ty\n")
        cfg = write_cfg(tmp_path / "e.cfg", merge_list="m", gold="g", output_dir="out")
        metrics = pipeline.run_evaluate(pipeline.load_config(cfg))
        assert metrics == {"n_leaves": 4, "purity": 1.0, "dasgupta_cost": 4.0}
        assert (tmp_path / "out" / pipeline.REPORT_FILE).exists()

    def test_refine_no_op(self, corpus, tmp_path):
        out = tmp_path / "r"
        cfg = write_cfg(
            tmp_path / "r.cfg",
            events=corpus / "events.jsonl",
            taxonomy=corpus / "taxonomy.tsv",
            taxonomy_embeddings=corpus / "taxonomy.evec",
            refine="true",
            epochs=0,
            latent_dim=3,
            hidden_dims="none",
            seed=11,
            output_dir=out,
        )
        cfg_obj = pipeline.load_config(cfg)
        cfg_obj.lam = 0.0
        table = pipeline.run_refine(cfg_obj)

        X = load_corpus(corpus / "events.jsonl").matrix()
        T = read_evec(corpus / "taxonomy.evec").matrix
        union = np.vstack([X, T])
        fresh = init_autoencoder(X.shape[1], 3, [4], seed=11)
        (w1, b1), (w2, b2) = fresh.encoder
        Z = (X - union.mean(0)) / union.std(0)
        Z = np.tanh(np.tanh(Z @ w1.T + b1) @ w2.T + b2)
        np.testing.assert_allclose(table.matrix, Z, atol=1e-12)
        np.testing.assert_allclose(read_evec(out / pipeline.LATENT_FILE).matrix, Z, atol=1e-6)
        assert (out / "history.tsv").read_text() == ""

    def test_label_salience(self, corpus, tmp_path):
        cfg = write_cfg(
            tmp_path / "l.cfg",
            events=corpus / "events.jsonl",
            summary_events=corpus / "summary.jsonl",
            output_dir=tmp_path / "l",
        )
        path = pipeline.run_label_salience(pipeline.load_config(cfg))
        labeled = read_events(path)
        assert len(labeled) == len(read_events(corpus / "events.jsonl"))
        assert {e.salience_label for e in labeled} == {True, False}

    def test_name(self, corpus, tmp_path):
        cfg = write_cfg(tmp_path / "c.cfg", events=corpus / "events.jsonl", output_dir=tmp_path / "c")
        pipeline.run_cluster(pipeline.load_config(cfg))
        cfg = write_cfg(
            tmp_path / "n.cfg",
            events=corpus / "events.jsonl",
            merge_list=tmp_path / "c" / pipeline.ONTOLOGY_MERGES,
            **{"naming.strategy": "tfidf", "naming.background": corpus / "background.tsv"},
            output_dir=tmp_path / "n",
        )
        names, paths = pipeline.run_name(pipeline.load_config(cfg))
        assert read_type_paths(tmp_path / "n" / pipeline.TYPEPATHS_FILE) == paths


class TestCLI:
    def test_run_ok(self, corpus, tmp_path, capsys):
        code = cli.main(["run", "--config", str(corpus / "pipeline.cfg"), "--output", str(tmp_path / "o")])
        assert code == 0
        assert "purity=" in capsys.readouterr().out

    def test_unknown_key_exit_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "bad.cfg", clusterr="ward")
        assert cli.main(["run", "--config", str(cfg)]) == 1
        assert "clusterr" in capsys.readouterr().err

    def test_usage_error_exit_1(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["explode", "--config", "x"])
        assert exc.value.code == 1

    def test_data_error_exit_2(self, tmp_path, capsys):
        (tmp_path / "ev.jsonl").write_text("{not json}\n")
        cfg = write_cfg(tmp_path / "d.cfg", events="ev.jsonl", output_dir="o")
        assert cli.main(["cluster", "--config", str(cfg)]) == 2
        assert "E_PARSE" in capsys.readouterr().err

    def test_missing_input_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path / "d.cfg", events="nope.jsonl", output_dir="o")
        assert cli.main(["cluster", "--config", str(cfg)]) == 2

    def test_module_entry_point(self, corpus, tmp_path):
        res = subprocess.run(
            [sys.executable, "-m", "ceo.cli", "evaluate", "--config", str(tmp_path / "missing.cfg")],
            capture_output=True,
            text=True,
        )
        assert res.returncode == 1


def test_regenerated_corpus_matches_bundle(tmp_path):
    make_synthetic_corpus(tmp_path, seed=0)
    assert digest(tmp_path) == digest(Path(bundled_corpus_dir()))
