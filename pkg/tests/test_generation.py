import pytest

from patientrag.errors import GenerationError, PatientNotFoundError, PipelineStageError
from patientrag.generation import (
    NO_MEDICAL_EVIDENCE_MARKER,
    NO_PATIENT_EVIDENCE_MARKER,
    assemble_context,
    generate_response,
)
from patientrag.llm import FailingChatProvider, QueueChatProvider
from patientrag.retrieval import Evidence
from patientrag.tracing import derive_trace_id


def ev(text, entry_id, origin="patient_context", dropped=False):
    return Evidence(origin, entry_id, text, text, 0.5, dropped=dropped)


class TestAssembleContext:
    def test_all_texts_in_order_query_last(self, templates):
        patient = [ev("patient chunk one", "p:0"), ev("patient chunk two", "p:1")]
        medical = [ev(f"medical text {i}", f"m:{i}", "medical_knowledge") for i in range(3)]
        context = assemble_context(patient, medical, "the final question", templates)
        rendered = context.rendered
        positions = [rendered.index(e.text) for e in patient + medical]
        assert positions == sorted(positions)
        # every patient text precedes every medical text
        assert max(rendered.index(e.text) for e in patient) < min(
            rendered.index(e.text) for e in medical)
        # the query is the final section
        assert rendered.rstrip().endswith("Question: the final question")

    def test_empty_medical_evidence_gets_marker(self, templates):
        patient = [ev("patient chunk", "p:0")]
        context = assemble_context(patient, [], "q", templates)
        assert NO_MEDICAL_EVIDENCE_MARKER in context.rendered
        assert "patient chunk" in context.rendered

    def test_both_empty_gets_both_markers(self, templates):
        context = assemble_context([], [], "q", templates)
        assert NO_PATIENT_EVIDENCE_MARKER in context.rendered
        assert NO_MEDICAL_EVIDENCE_MARKER in context.rendered
        assert context.cited_entry_ids() == []

    def test_dropped_evidence_excluded_from_render_and_citations(self, templates):
        patient = [ev("kept text", "p:0"), ev("dropped text", "p:1", dropped=True)]
        context = assemble_context(patient, [], "q", templates)
        assert "dropped text" not in context.rendered
        assert context.cited_entry_ids() == ["p:0"]

    def test_medical_documents_are_numbered(self, templates):
        medical = [ev("alpha", "m:0", "medical_knowledge"),
                   ev("beta", "m:1", "medical_knowledge")]
        context = assemble_context([], medical, "q", templates)
        assert "Document 1: alpha" in context.rendered
        assert "Document 2: beta" in context.rendered

    def test_empty_query_rejected(self, templates):
        with pytest.raises(ValueError):
            assemble_context([], [], "   ", templates)

    def test_deterministic(self, templates):
        patient = [ev("a", "p:0")]
        medical = [ev("b", "m:0", "medical_knowledge")]
        first = assemble_context(patient, medical, "q", templates).rendered
        second = assemble_context(patient, medical, "q", templates).rendered
        assert first == second


class TestGenerateResponse:
    def test_single_call_with_rendered_context(self, templates):
        chat = QueueChatProvider(["the answer"])
        context = assemble_context([ev("a", "p:0")], [], "q", templates)
        answer = generate_response(context, chat)
        assert answer == "the answer"
        assert len(chat.requests) == 1
        assert chat.requests[0][0]["content"] == context.rendered

    def test_empty_reply_is_error(self, templates):
        chat = QueueChatProvider(["   "])
        context = assemble_context([], [], "q", templates)
        with pytest.raises(GenerationError):
            generate_response(context, chat)


class TestAnswerPipeline:
    def test_end_to_end_with_mock_ports(self, seeded_engine):
        response = seeded_engine.ask("p1", "How do I use the prescribed EpiPen?")
        assert response.answer
        assert response.patient_id == "p1"
        assert response.citations
        assert response.trace_id == derive_trace_id(
            "p1", "How do I use the prescribed EpiPen?")
        # citations reference only entry ids present in the assembled context
        provided = {e.entry_id for e in response.patient_evidence if not e.dropped}
        provided |= {e.entry_id for e in response.medical_evidence if not e.dropped}
        assert set(response.citations) == provided

    def test_unknown_patient_is_stage_tagged(self, seeded_engine):
        with pytest.raises(PipelineStageError) as excinfo:
            seeded_engine.ask("p404", "anything")
        assert excinfo.value.stage == "patient_retrieval"
        assert isinstance(excinfo.value.cause, PatientNotFoundError)

    def test_generation_failure_is_stage_tagged(self, seeded_engine):
        pipeline = seeded_engine.pipeline(chat=FailingChatProvider())
        seeded_engine.config.retrieval.compression_enabled = False
        with pytest.raises(PipelineStageError) as excinfo:
            pipeline.answer_question("p1", "question")
        assert excinfo.value.stage == "generation"

    def test_compression_failure_is_stage_tagged(self, seeded_engine):
        pipeline = seeded_engine.pipeline(chat=FailingChatProvider())
        with pytest.raises(PipelineStageError) as excinfo:
            pipeline.answer_question("p1", "question")
        assert excinfo.value.stage == "compression"

    def test_repeat_run_is_byte_identical(self, seeded_engine):
        question = "Which tests were performed?"
        first = seeded_engine.ask("p1", question)
        second = seeded_engine.ask("p1", question)
        assert first.answer.encode() == second.answer.encode()
        assert first.rendered_context.encode() == second.rendered_context.encode()
        assert first.citations == second.citations

    def test_disabling_compression_changes_text_not_entry_ids(self, seeded_engine):
        question = "How do I use the prescribed EpiPen?"
        with_compression = seeded_engine.ask("p1", question)
        seeded_engine.config.retrieval.compression_enabled = False
        without_compression = seeded_engine.ask("p1", question)
        ids_with = [e.entry_id for e in with_compression.medical_evidence]
        ids_without = [e.entry_id for e in without_compression.medical_evidence]
        assert ids_with == ids_without
        assert all(not e.compressed for e in without_compression.medical_evidence)

    def test_trace_file_written_with_stages(self, seeded_engine):
        response = seeded_engine.ask("p1", "What are my medications?")
        trace_path = seeded_engine.data_dir / "traces" / f"{response.trace_id}.jsonl"
        content = trace_path.read_text()
        for stage in ("request", "patient_retrieval", "knowledge_retrieval",
                      "compression", "assembly", "generation"):
            assert f'"stage": "{stage}"' in content

    def test_empty_question_rejected(self, seeded_engine):
        with pytest.raises(ValueError):
            seeded_engine.ask("p1", "   ")
