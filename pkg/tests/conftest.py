from pathlib import Path

import pytest

from patientrag.config import EngineConfig
from patientrag.engine import Engine
from patientrag.templates import TemplateStore

ACCEPTANCE_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance" not in item.nodeid:
        return
    name = item.nodeid.split("::")[-1]
    if report.when == "call":
        ACCEPTANCE_RESULTS.append((name, report.outcome))
    elif report.when == "setup" and report.skipped:
        ACCEPTANCE_RESULTS.append((name, "skipped"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("Acceptance criteria:")
    for name, outcome in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"  {outcome.upper():7s} {name}")

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"

EPIPEN_QUESTION = "How do I use the prescribed EpiPen in case of an emergency?"


@pytest.fixture(scope="session")
def templates():
    return TemplateStore()


@pytest.fixture()
def epipen_transcript():
    return (FIXTURES / "epipen_transcript.txt").read_text(encoding="utf-8")


@pytest.fixture()
def knowledge_docs():
    docs = []
    for path in sorted((FIXTURES / "knowledge").glob("*.txt")):
        docs.append({"text": path.read_text(encoding="utf-8"), "title": path.stem,
                     "doc_id": path.stem})
    return docs


@pytest.fixture()
def mock_engine(tmp_path):
    """Engine with mock providers and an isolated data directory."""
    return Engine(EngineConfig(data_dir=tmp_path / "data"))


@pytest.fixture()
def seeded_engine(mock_engine, epipen_transcript, knowledge_docs):
    """Mock engine with the EpiPen patient onboarded and knowledge ingested."""
    mock_engine.add_patient(epipen_transcript, patient_id="p1",
                            metadata={"specialty": "Allergy / Immunology"})
    results = mock_engine.ingest_knowledge(knowledge_docs)
    assert all(r.status == "ok" for r in results)
    return mock_engine
