#!/usr/bin/env python3
"""Regenerate the committed replay fixtures under fixtures/replay/.

Runs the full onboarding + ingestion + ask flow once against curated chat
replies (annotation, final answer, question list) with rule-based extractive
compression, recording every embedding and chat request. The committed
fixtures then let the same flow replay offline and byte-identically.

Re-run this script whenever prompt templates, chunking defaults, retrieval
defaults, or the fixture corpus change:

    python3 scripts/build_replay_fixtures.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "src"))

from patientrag.config import EngineConfig  # noqa: E402
from patientrag.embedding import MockEmbeddingProvider, RecordingEmbeddingProvider  # noqa: E402
from patientrag.engine import Engine  # noqa: E402
from patientrag.llm import (  # noqa: E402
    MockChatProvider,
    RecordingChatProvider,
    ScriptedChatProvider,
)

FIXTURES = REPO_ROOT / "fixtures"
REPLAY_DIR = FIXTURES / "replay"

PATIENT_ID = "p1"
QUESTION = "How do I use the prescribed EpiPen in case of an emergency?"

ANNOTATION_REPLY = """\
Patient history and symptoms:
- The patient is a 34-year-old male referred for further allergy evaluation and treatment after an acute episode of perioral swelling of uncertain etiology, suspected to be a reaction to Keflex taken for a skin cellulitis at his dialysis shunt site.
- He has a history of grass allergies and environmental sensitivities, with a family history of heart disease, carcinoma, food allergies, and hypertension.

Executed diagnostics:
- RAST allergy testing was performed to identify specific food and environmental allergies.
- The patient was advised to discontinue cephalosporin antibiotics due to the suspected allergic reaction to Keflex.

Prescribed medications and further instructions:
- Current medications include Atenolol, sodium bicarbonate, Lovaza, and Dialyvite.
- An EpiPen was prescribed in the event of acute angioedema or an allergic reaction.
- In case of an allergic reaction, the patient should use the prescribed EpiPen and proceed directly to the emergency room for further evaluation and treatment.
"""

ANSWER_REPLY = (
    "To use the prescribed EpiPen in case of an emergency: remove the blue safety "
    "release cap, place the orange tip against the middle of the outer thigh, and "
    "push the auto-injector firmly against the thigh until it clicks. Hold it in "
    "place for several seconds without bending or twisting it; the injection can be "
    "given through clothing if necessary. Because you take atenolol, which can blunt "
    "the response to adrenaline, and because a second reaction can follow the first, "
    "proceed directly to the emergency room for further evaluation after "
    "administration of the EpiPen."
)

QUESTIONS_REPLY = (
    "1. How do I use the prescribed EpiPen in case of an emergency?\n"
    "2. What should I avoid while waiting for my RAST allergy test results?"
)

# Verbatim sentences of the usage document, so the compression validator accepts them.
USAGE_DOC_MARKER = "Place the orange tip against the middle of the outer thigh"
USAGE_COMPRESSION_REPLY = (
    "To use the EpiPen, remove the blue safety release cap while holding the device "
    "in your dominant hand. Place the orange tip against the middle of the outer "
    "thigh at a right angle to the leg. Push the auto-injector firmly against the "
    "thigh until it clicks, and hold it in place for several seconds without bending "
    "or twisting it. After administration of the adrenaline, massage the injection "
    "site for about ten seconds and seek immediate medical attention, because a "
    "second reaction can follow the first."
)


def knowledge_documents():
    docs = []
    for path in sorted((FIXTURES / "knowledge").glob("*.txt")):
        docs.append({"text": path.read_text(encoding="utf-8"), "title": path.stem,
                     "doc_id": path.stem})
    return docs


def run_flow(engine: Engine):
    transcript = (FIXTURES / "epipen_transcript.txt").read_text(encoding="utf-8")
    pid, context = engine.add_patient(
        transcript, patient_id=PATIENT_ID,
        metadata={"specialty": "Allergy / Immunology"})
    results = engine.ingest_knowledge(knowledge_documents())
    assert all(r.status == "ok" for r in results), results
    response = engine.ask(pid, QUESTION)
    questions = engine.generate_questions(pid, 2)
    return context, response, questions


def build(tmp_dir: Path):
    REPLAY_DIR.mkdir(parents=True, exist_ok=True)
    for name in ("chat.jsonl", "embeddings.jsonl"):
        (REPLAY_DIR / name).unlink(missing_ok=True)

    scripted = ScriptedChatProvider(
        [
            ("create a detailed summary by categories", ANNOTATION_REPLY),
            ("Patient Unique Context:", ANSWER_REPLY),
            ("numbered list, one question per line", QUESTIONS_REPLY),
            (USAGE_DOC_MARKER, USAGE_COMPRESSION_REPLY),
        ],
        fallback=MockChatProvider(),
        model_name="fixture-chat",
    )
    engine = Engine(
        EngineConfig(data_dir=tmp_dir / "record"),
        embedder=RecordingEmbeddingProvider(MockEmbeddingProvider(dimension=256),
                                            REPLAY_DIR / "embeddings.jsonl"),
        chat=RecordingChatProvider(scripted, REPLAY_DIR / "chat.jsonl"),
    )
    return run_flow(engine)


def verify(tmp_dir: Path):
    """Replay the recorded fixtures in a fresh data dir and sanity-check."""
    from patientrag.config import load_config

    overrides = {
        "data_dir": str(tmp_dir / "replay"),
        "embedding": {"mode": "replay", "fixture": str(REPLAY_DIR / "embeddings.jsonl")},
        "generation": {"mode": "replay", "fixture": str(REPLAY_DIR / "chat.jsonl")},
    }
    engine = Engine(load_config(None, overrides))
    context, response, questions = run_flow(engine)
    assert "perioral swelling" in context.history_and_symptoms
    assert "EpiPen" in response.answer
    retrieved_docs = {e.entry_id.split(":")[0] for e in response.medical_evidence}
    assert "adrenaline_autoinjector_usage" in retrieved_docs, retrieved_docs
    assert len(questions) == 2
    # second replay run over the same data dir must be byte-identical
    again = engine.ask(PATIENT_ID, QUESTION)
    assert again.answer.encode() == response.answer.encode()
    return response


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp_dir = Path(tmp)
        build(tmp_dir)
        response = verify(tmp_dir)
        shutil.rmtree(tmp_dir / "record", ignore_errors=True)
    chat_lines = (REPLAY_DIR / "chat.jsonl").read_text().count("\n")
    emb_lines = (REPLAY_DIR / "embeddings.jsonl").read_text().count("\n")
    print(f"wrote {REPLAY_DIR / 'chat.jsonl'} ({chat_lines} records)")
    print(f"wrote {REPLAY_DIR / 'embeddings.jsonl'} ({emb_lines} records)")
    print(f"verified replay: answer starts {response.answer[:60]!r}")


if __name__ == "__main__":
    main()
