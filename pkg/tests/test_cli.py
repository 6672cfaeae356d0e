import json

import pytest
from click.testing import CliRunner

from conftest import FIXTURES
from patientrag.cli import main
from patientrag.config import load_config
from patientrag.engine import Engine

EPIPEN_QUESTION = "How do I use the prescribed EpiPen in case of an emergency?"


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args, env=None):
    return runner.invoke(main, list(args), env=env, catch_exceptions=False)


def write_config(tmp_path, **extra):
    lines = [f"data_dir: {tmp_path / 'data'}"]
    lines += [f"{k}: {json.dumps(v)}" for k, v in extra.items()]
    path = tmp_path / "config.yaml"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestKappaCommand:
    def test_perfect_agreement_prints_one(self, runner):
        result = invoke(runner, "kappa", str(FIXTURES / "agreement_full.tsv"))
        assert result.exit_code == 0
        assert "1.000000000" in result.output

    def test_structured_output(self, runner):
        result = invoke(runner, "kappa", str(FIXTURES / "ratings_sample.tsv"),
                        "--format", "structured")
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["kappa"] == pytest.approx(1 / 3, abs=1e-12)
        assert payload["raters"] == 2

    def test_validation_failure_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("item\trater\tcategory\nq1\tr1\tyes\nq1\tr1\tno\n")
        result = runner.invoke(main, ["kappa", str(bad)])
        assert result.exit_code == 6


class TestOnboardAndAsk:
    def test_add_patient_then_ask(self, runner, tmp_path):
        config = write_config(tmp_path)
        result = invoke(runner, "--config", config, "add-patient",
                        str(FIXTURES / "epipen_transcript.txt"),
                        "--patient-id", "p1", "--meta", "specialty=Allergy / Immunology")
        assert result.exit_code == 0
        assert "patient p1 annotated" in result.output

        result = invoke(runner, "--config", config, "ingest-knowledge",
                        str(FIXTURES / "knowledge"))
        assert result.exit_code == 0
        assert "ingested 6 documents" in result.output

        result = invoke(runner, "--config", config, "ask", "p1", EPIPEN_QUESTION)
        assert result.exit_code == 0
        assert "Evidence:" in result.output
        assert "medical_knowledge" in result.output

    def test_ask_structured_payload(self, runner, tmp_path):
        config = write_config(tmp_path)
        invoke(runner, "--config", config, "add-patient",
               str(FIXTURES / "epipen_transcript.txt"), "--patient-id", "p1")
        invoke(runner, "--config", config, "ingest-knowledge", str(FIXTURES / "knowledge"))
        result = invoke(runner, "--config", config, "ask", "p1", EPIPEN_QUESTION,
                        "--format", "structured")
        payload = json.loads(result.output)
        assert payload["patient_id"] == "p1"
        assert payload["citations"]
        assert payload["medical_evidence"]

    def test_unknown_patient_exit_code(self, runner, tmp_path):
        config = write_config(tmp_path)
        result = runner.invoke(main, ["--config", config, "ask", "p404", "hello"])
        assert result.exit_code == 4

    def test_missing_config_exit_code(self, runner, tmp_path):
        result = runner.invoke(main, ["--config", str(tmp_path / "nope.yaml"),
                                      "ask", "p1", "q"])
        assert result.exit_code == 3

    def test_gen_questions(self, runner, tmp_path):
        config = write_config(tmp_path)
        invoke(runner, "--config", config, "add-patient",
               str(FIXTURES / "epipen_transcript.txt"), "--patient-id", "p1")
        result = invoke(runner, "--config", config, "gen-questions", "p1", "-n", "2")
        assert result.exit_code == 0
        assert result.output.count("?") >= 2

    def test_bad_meta_pair_is_validation_error(self, runner, tmp_path):
        config = write_config(tmp_path)
        result = runner.invoke(main, ["--config", config, "add-patient",
                                      str(FIXTURES / "epipen_transcript.txt"),
                                      "--meta", "notakeyvalue"])
        assert result.exit_code == 6


class TestEvalCommand:
    def test_mini_dataset_two_models(self, runner, tmp_path):
        config = write_config(tmp_path)
        invoke(runner, "--config", config, "add-patient",
               str(FIXTURES / "epipen_transcript.txt"), "--patient-id", "p1")
        invoke(runner, "--config", config, "ingest-knowledge", str(FIXTURES / "knowledge"))
        result = invoke(runner, "--config", config, "eval",
                        str(FIXTURES / "mini_dataset.tsv"), "--models", "mock-a,mock-b")
        assert result.exit_code == 0
        rows = [line for line in result.output.splitlines()
                if line.startswith("similarity")]
        assert len(rows) == 2
        assert "mock-a" in rows[0] and "mock-b" in rows[1]


class TestCliLibraryEquivalence:
    def test_identical_persisted_artifacts(self, runner, tmp_path):
        """The CLI is a veneer: the same inputs through the library produce
        byte-identical context files, stores, and traces."""
        cli_dir = tmp_path / "via_cli"
        lib_dir = tmp_path / "via_lib"
        config_path = tmp_path / "config.yaml"
        config_path.write_text(
            f"data_dir: {cli_dir}\ntracing: {{deterministic: true}}\n")

        invoke(runner, "--config", str(config_path), "add-patient",
               str(FIXTURES / "epipen_transcript.txt"), "--patient-id", "p1")
        invoke(runner, "--config", str(config_path), "ingest-knowledge",
               str(FIXTURES / "knowledge"))
        invoke(runner, "--config", str(config_path), "ask", "p1", EPIPEN_QUESTION)

        config = load_config(config_path, {"data_dir": str(lib_dir)})
        engine = Engine(config)
        engine.add_patient(
            (FIXTURES / "epipen_transcript.txt").read_text(), patient_id="p1")
        docs = []
        for path in sorted((FIXTURES / "knowledge").glob("*.txt")):
            docs.append({"text": path.read_text(), "title": path.stem,
                         "doc_id": path.stem, "format": "plain_text",
                         "source": "medical_textbook", "metadata": {}})
        engine.ingest_knowledge(docs)
        engine.ask("p1", EPIPEN_QUESTION)

        cli_files = sorted(p.relative_to(cli_dir) for p in cli_dir.rglob("*") if p.is_file())
        lib_files = sorted(p.relative_to(lib_dir) for p in lib_dir.rglob("*") if p.is_file())
        assert cli_files == lib_files
        for rel in cli_files:
            assert (cli_dir / rel).read_bytes() == (lib_dir / rel).read_bytes(), rel


class TestVersion:
    def test_version_flag(self, runner):
        result = invoke(runner, "--version")
        assert result.exit_code == 0
        assert "patientrag" in result.output
