import numpy as np
import pytest
from helpers import kappa_oracle, random_rating_matrix

from conftest import FIXTURES
from patientrag.annotator import AnnotatedPatientContext
from patientrag.embedding import MockEmbeddingProvider
from patientrag.errors import (
    DegenerateRatingsError,
    EvalRunError,
    MetricError,
    QuestionGenerationError,
)
from patientrag.evaluation import (
    EvalRow,
    LikertSheet,
    answer_correctness,
    answer_similarity,
    classify_claims,
    correctness_from_counts,
    decompose_claims,
    fleiss_kappa,
    generate_questions,
    load_eval_dataset,
    load_likert_sheet,
    load_rating_sheet,
    render_agreement_table,
    render_score_table,
    run_eval,
    summarize_likert,
)
from patientrag.llm import MockChatProvider, QueueChatProvider


@pytest.fixture()
def embedder():
    return MockEmbeddingProvider(dimension=128)


class TestAnswerSimilarity:
    def test_identical_texts_score_one(self, embedder):
        text = "Take the medication with food twice daily."
        assert answer_similarity(text, text, embedder) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_mock_embeddings_score_zero(self, embedder):
        # disjoint single-token texts hash to different buckets: exactly orthogonal
        assert answer_similarity("alpha", "bravo", embedder) == 0.0

    def test_matches_independent_cosine(self, embedder):
        from patientrag.embedding import cosine_similarity, mock_embedding
        a = "The patient should rest and hydrate."
        b = "Rest and fluids are recommended for the patient."
        expected = max(0.0, cosine_similarity(
            mock_embedding(a, 0, 128), mock_embedding(b, 0, 128)))
        assert answer_similarity(a, b, embedder) == pytest.approx(expected, abs=1e-12)

    def test_symmetry(self, embedder):
        rng = np.random.default_rng(1)
        words = ["fever", "cough", "rash", "dose", "tablet", "clinic", "nurse", "chart"]
        for _ in range(100):
            a = " ".join(rng.choice(words, size=5))
            b = " ".join(rng.choice(words, size=5))
            assert answer_similarity(a, b, embedder) == pytest.approx(
                answer_similarity(b, a, embedder), abs=1e-9)

    def test_empty_text_rejected(self, embedder):
        with pytest.raises(ValueError):
            answer_similarity("", "x", embedder)


class TestCorrectnessFromCounts:
    def test_hand_computed_blend(self):
        # F1 = 2/(2+0.5*(1+1)) = 2/3; 0.75*2/3 + 0.25*0.8 = 0.70
        score, f1 = correctness_from_counts(2, 1, 1, 0.8)
        assert f1 == pytest.approx(2 / 3, abs=1e-12)
        assert score == pytest.approx(0.70, abs=1e-9)

    def test_identity_case(self):
        score, f1 = correctness_from_counts(3, 0, 0, 1.0)
        assert f1 == 1.0
        assert score == 1.0

    def test_disjoint_claims_with_zero_similarity(self):
        score, f1 = correctness_from_counts(0, 4, 2, 0.0)
        assert f1 == 0.0
        assert score == 0.0

    def test_both_claim_sets_empty_defines_f1_as_one(self):
        score, f1 = correctness_from_counts(0, 0, 0, 0.5)
        assert f1 == 1.0
        assert score == pytest.approx(0.75 * 1.0 + 0.25 * 0.5)

    def test_one_sided_empty_is_zero_f1(self):
        _, f1 = correctness_from_counts(0, 0, 3, 1.0)
        assert f1 == 0.0

    def test_bounds_and_monotonicity_fuzz(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            tp = int(rng.integers(0, 20))
            fp = int(rng.integers(0, 20))
            fn = int(rng.integers(0, 20))
            sim = float(rng.uniform(0, 1))
            score, f1 = correctness_from_counts(tp, fp, fn, sim)
            assert 0.0 <= score <= 1.0
            assert 0.0 <= f1 <= 1.0
            higher, _ = correctness_from_counts(tp + 1, fp, fn, sim)
            assert higher >= score

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            correctness_from_counts(1, 0, 0, 0.5, weight=1.5)


class TestClaimPlumbing:
    def test_decompose_parses_lines_and_bullets(self, templates):
        chat = QueueChatProvider(["- claim one\n2. claim two\nclaim three"])
        claims = decompose_claims("text", chat, templates)
        assert claims == ["claim one", "claim two", "claim three"]

    def test_decompose_no_claims_sentinel(self, templates):
        chat = QueueChatProvider(["NO_CLAIMS"])
        assert decompose_claims("hmm", chat, templates) == []

    def test_decompose_reprompts_then_fails(self, templates):
        chat = QueueChatProvider(["", "   "])
        with pytest.raises(MetricError):
            decompose_claims("text", chat, templates)
        assert len(chat.requests) == 2

    def test_classify_counts_verdicts(self, templates):
        chat = QueueChatProvider(["SUPPORTED\nUNSUPPORTED\nSUPPORTED"])
        verdicts = classify_claims(["a", "b", "c"], "ref", chat, templates)
        assert verdicts == [True, False, True]

    def test_classify_unsupported_not_misread_as_supported(self, templates):
        chat = QueueChatProvider(["1. UNSUPPORTED\n2. UNSUPPORTED"])
        assert classify_claims(["a", "b"], "ref", chat, templates) == [False, False]

    def test_classify_arity_mismatch_reprompts_then_fails(self, templates):
        chat = QueueChatProvider(["SUPPORTED", "SUPPORTED\nSUPPORTED\nSUPPORTED"])
        with pytest.raises(MetricError):
            classify_claims(["a", "b"], "ref", chat, templates)

    def test_empty_claims_skip_the_model(self, templates):
        chat = QueueChatProvider([])
        assert classify_claims([], "ref", chat, templates) == []


class TestAnswerCorrectness:
    def test_identity_with_mock_decomposer(self, templates, embedder):
        text = "Use the device on the outer thigh. Seek medical attention afterwards."
        score, breakdown = answer_correctness(text, text, MockChatProvider(), embedder,
                                              templates)
        assert breakdown.tp == len(breakdown.generated_claims)
        assert breakdown.fp == 0 and breakdown.fn == 0
        assert score == pytest.approx(1.0, abs=1e-9)

    def test_scripted_counts_blend(self, templates, embedder):
        generated = "Claim A. Claim B. Claim C."
        truth = "Claim A. Claim D."
        chat = QueueChatProvider([
            "Claim A.\nClaim B.\nClaim C.",          # decompose generated
            "Claim A.\nClaim D.",                     # decompose truth
            "SUPPORTED\nUNSUPPORTED\nUNSUPPORTED",  # generated vs truth: TP=1 FP=2
            "SUPPORTED\nUNSUPPORTED",                # truth vs generated: FN=1
        ])
        score, breakdown = answer_correctness(generated, truth, chat, embedder, templates)
        assert (breakdown.tp, breakdown.fp, breakdown.fn) == (1, 2, 1)
        sim = answer_similarity(generated, truth, embedder)
        expected = 0.75 * (1 / (1 + 0.5 * 3)) + 0.25 * sim
        assert score == pytest.approx(expected, abs=1e-12)


class TestFleissKappa:
    def test_perfect_agreement_is_exactly_one(self):
        matrix = np.array([[4, 0], [0, 4], [4, 0], [4, 0]])
        kappa, stderr = fleiss_kappa(matrix)
        assert kappa == 1.0
        assert stderr > 0

    def test_derived_three_item_example(self):
        kappa, _ = fleiss_kappa(np.array([[2, 0], [1, 1], [0, 2]]))
        assert kappa == pytest.approx(1 / 3, abs=1e-12)

    def test_single_category_is_degenerate(self):
        with pytest.raises(DegenerateRatingsError):
            fleiss_kappa(np.array([[3, 0], [3, 0]]))

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            matrix = random_rating_matrix(rng)
            kappa, stderr = fleiss_kappa(matrix)
            oracle_kappa, oracle_stderr = kappa_oracle(matrix)
            assert kappa == pytest.approx(oracle_kappa, abs=1e-9)
            assert stderr == pytest.approx(oracle_stderr, abs=1e-9)

    def test_row_and_column_permutation_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            matrix = random_rating_matrix(rng)
            kappa, stderr = fleiss_kappa(matrix)
            rows = rng.permutation(matrix.shape[0])
            cols = rng.permutation(matrix.shape[1])
            permuted = matrix[rows][:, cols]
            kappa_p, stderr_p = fleiss_kappa(permuted)
            assert kappa_p == pytest.approx(kappa, abs=1e-12)
            assert stderr_p == pytest.approx(stderr, abs=1e-12)

    def test_validation_rejects_ragged_rows(self):
        with pytest.raises(ValueError):
            fleiss_kappa(np.array([[2, 0], [1, 2]]))

    def test_validation_rejects_single_item(self):
        with pytest.raises(ValueError):
            fleiss_kappa(np.array([[2, 2]]))


class TestRatingSheet:
    def test_full_agreement_fixture_scores_one(self):
        matrix, items, categories = load_rating_sheet(FIXTURES / "agreement_full.tsv")
        assert len(items) == 3
        assert categories == ["correct", "incorrect"]
        kappa, _ = fleiss_kappa(matrix)
        assert kappa == 1.0

    def test_sample_fixture_matches_derived_example(self):
        matrix, _, _ = load_rating_sheet(FIXTURES / "ratings_sample.tsv")
        assert matrix.tolist() == [[2, 0], [1, 1], [0, 2]]

    def test_duplicate_rating_rejected(self, tmp_path):
        sheet = tmp_path / "dup.tsv"
        sheet.write_text("item\trater\tcategory\nq1\tr1\tyes\nq1\tr1\tno\nq2\tr1\tyes\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_rating_sheet(sheet)

    def test_missing_column_rejected(self, tmp_path):
        sheet = tmp_path / "bad.tsv"
        sheet.write_text("item\trater\nq1\tr1\n")
        with pytest.raises(ValueError, match="category"):
            load_rating_sheet(sheet)


class TestLikert:
    def test_all_fives(self):
        sheet = LikertSheet({("q1", "r1"): 5, ("q1", "r2"): 5, ("q2", "r1"): 5})
        assert summarize_likert(sheet).mean == 5.0

    def test_hand_summed_mean(self):
        sheet = LikertSheet({("q1", "r1"): 4, ("q1", "r2"): 5, ("q1", "r3"): 5,
                             ("q1", "r4"): 5})
        summary = summarize_likert(sheet)
        assert summary.mean == pytest.approx(4.75)
        assert summary.per_rater == {"r1": 4.0, "r2": 5.0, "r3": 5.0, "r4": 5.0}
        assert summary.distribution[4] == 1 and summary.distribution[5] == 3

    def test_out_of_scale_score_names_cell(self):
        with pytest.raises(ValueError, match="q1.*r2"):
            LikertSheet({("q1", "r1"): 5, ("q1", "r2"): 6})

    def test_fixture_file_loads(self):
        sheet = load_likert_sheet(FIXTURES / "likert_sample.tsv")
        summary = summarize_likert(sheet)
        assert summary.count == 8
        assert summary.mean == pytest.approx(4.625)

    def test_per_specialty_breakdown(self):
        sheet = LikertSheet({("q1", "r1"): 5, ("q2", "r1"): 3})
        summary = summarize_likert(sheet, {"q1": "Allergy", "q2": "Podiatry"})
        assert summary.per_specialty == {"Allergy": 5.0, "Podiatry": 3.0}


@pytest.fixture()
def context():
    return AnnotatedPatientContext(
        patient_id="p1",
        history_and_symptoms="Perioral swelling after Keflex; grass allergies.",
        executed_diagnostics="RAST allergy testing performed.",
        medications_and_instructions="EpiPen prescribed for emergencies.",
    )


class TestGenerateQuestions:
    def test_clean_numbered_list(self, templates, context):
        chat = QueueChatProvider([
            "1. How should I use the EpiPen in an emergency?\n"
            "2. What did the RAST allergy testing show?"
        ])
        questions = generate_questions(context, 2, chat, templates)
        assert len(questions) == 2
        assert all(q.context_overlap for q in questions)

    def test_mock_provider_generates_n(self, templates, context):
        questions = generate_questions(context, 3, MockChatProvider(), templates)
        assert len(questions) == 3

    def test_too_few_questions_errors_after_reprompt(self, templates, context):
        chat = QueueChatProvider(["1. Only one?", "1. Still only one?"])
        with pytest.raises(QuestionGenerationError):
            generate_questions(context, 2, chat, templates)

    def test_extra_questions_truncated(self, templates, context):
        chat = QueueChatProvider(["1. EpiPen question?\n2. RAST question?\n3. extra?"])
        assert len(generate_questions(context, 2, chat, templates)) == 2

    def test_no_overlap_is_flagged(self, templates, context):
        chat = QueueChatProvider(["1. Completely unrelated zebra query?\n2. EpiPen?"])
        questions = generate_questions(context, 2, chat, templates)
        assert questions[0].context_overlap is False
        assert questions[1].context_overlap is True


class TestDataset:
    def test_mini_dataset_fixture_parses(self):
        rows = load_eval_dataset(FIXTURES / "mini_dataset.tsv")
        assert len(rows) == 2
        assert rows[0].patient_id == "p1"
        assert rows[0].question.startswith("How do I use the prescribed EpiPen")

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("question_id,patient_id\nq1,p1\n")
        with pytest.raises(ValueError, match="missing required columns"):
            load_eval_dataset(path)


def fake_answer_fn(chat, row):
    return f"Deterministic answer about {row.question}"


def make_rows(n):
    return [
        EvalRow(question_id=f"q{i}", patient_id="p1", specialty="General Medicine",
                question=f"Question number {i} about dose {i}?",
                ground_truth=f"Ground truth answer number {i} about dose {i}.")
        for i in range(n)
    ]


class TestRunEval:
    def test_four_row_report_with_recomputed_means(self, templates, embedder):
        rows = make_rows(4)
        report = run_eval(rows, [("mock-a", MockChatProvider("mock-a"))],
                          answer_fn=fake_answer_fn, embedder=embedder,
                          templates=templates)
        model = report.models[0]
        assert len(model.records) == 4
        assert model.exclusions == 0
        assert model.mean_similarity == sum(
            r.similarity_score for r in model.records) / 4
        assert model.mean_correctness == sum(
            r.correctness_score for r in model.records) / 4

    def test_empty_model_list_rejected(self, templates, embedder):
        with pytest.raises(ValueError):
            run_eval(make_rows(2), [], answer_fn=fake_answer_fn,
                     embedder=embedder, templates=templates)

    def test_two_models_in_declared_order(self, templates, embedder):
        report = run_eval(
            make_rows(2),
            [("mock-b", MockChatProvider("mock-b")), ("mock-a", MockChatProvider("mock-a"))],
            answer_fn=fake_answer_fn, embedder=embedder, templates=templates)
        assert [m.model_name for m in report.models] == ["mock-b", "mock-a"]

    def test_row_failures_are_excluded_not_fatal(self, templates, embedder):
        def flaky_answer_fn(chat, row):
            if row.question_id == "q1":
                raise ValueError("boom")
            return fake_answer_fn(chat, row)

        report = run_eval(make_rows(4), [("m", MockChatProvider())],
                          answer_fn=flaky_answer_fn, embedder=embedder,
                          templates=templates)
        model = report.models[0]
        assert model.exclusions == 1
        assert len(model.records) == 3
        assert model.errors[0]["question_id"] == "q1"

    def test_majority_failures_abort_the_run(self, templates, embedder):
        def broken_answer_fn(chat, row):
            raise ValueError("always broken")

        with pytest.raises(EvalRunError):
            run_eval(make_rows(4), [("m", MockChatProvider())],
                     answer_fn=broken_answer_fn, embedder=embedder, templates=templates)

    def test_parallel_run_matches_serial(self, templates, embedder):
        rows = make_rows(6)
        serial = run_eval(rows, [("m", MockChatProvider())], answer_fn=fake_answer_fn,
                          embedder=embedder, templates=templates, parallelism=1)
        parallel = run_eval(rows, [("m", MockChatProvider())], answer_fn=fake_answer_fn,
                            embedder=embedder, templates=templates, parallelism=4)
        assert serial.to_json() == parallel.to_json()

    def test_rendered_table_shape(self, templates, embedder):
        report = run_eval(
            make_rows(2),
            [("mock-a", MockChatProvider("mock-a")), ("mock-b", MockChatProvider("mock-b"))],
            answer_fn=fake_answer_fn, embedder=embedder, templates=templates)
        table = render_score_table(report)
        assert "Evaluation Framework" in table
        assert "Average Similarity Score" in table
        assert "Average Correctness Score" in table
        rows = [line for line in table.splitlines() if line.startswith(("similarity", "alt-similarity"))]
        assert len(rows) == 4  # 2 models x (similarity + alt-similarity)
        assert sum("mock-a" in r for r in rows) == 2
        assert "Excluded records" in table

    def test_agreement_table_shape(self):
        table = render_agreement_table(0.600708945, 0.029630951, 98, 4)
        assert "Kappa" in table and "Standard Error" in table
        assert "0.600708945" in table
