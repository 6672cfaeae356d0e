"""Evaluation: embedding similarity, claim-based correctness, inter-rater
agreement, Likert aggregation, synthetic question generation, and reports.

Kappa follows the standard multirater formulation (Fleiss 1971): with N items,
n raters per item, q categories and n_ij raters assigning item i to category j,

    P_i   = (sum_j n_ij^2 - n) / (n (n - 1))
    Pbar  = mean_i P_i
    p_j   = sum_i n_ij / (N n)
    Pbar_e = sum_j p_j^2
    kappa = (Pbar - Pbar_e) / (1 - Pbar_e)

The standard error uses the large-sample variance for overall kappa from
Fleiss, Nee & Landis (1979):

    var = 2 / (N n (n-1)) * [ (sum_j p_j (1-p_j))^2 - sum_j p_j (1-p_j) (1-2 p_j) ]
          / (sum_j p_j (1-p_j))^2
"""

from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotator import AnnotatedPatientContext
from .embedding import EmbeddingProvider, cosine_similarity, embed_batch
from .errors import (
    DegenerateRatingsError,
    EvalRunError,
    MetricError,
    PatientRagError,
    QuestionGenerationError,
)
from .llm import ChatProvider
from .templates import TemplateStore

DEFAULT_CORRECTNESS_WEIGHT = 0.75
NO_CLAIMS_SENTINEL = "NO_CLAIMS"


# ---------------------------------------------------------------------------
# answer similarity


def answer_similarity(generated: str, truth: str, embedder: EmbeddingProvider) -> float:
    """Cosine similarity of the two answer embeddings, mapped to [0, 1]."""
    if not generated.strip() or not truth.strip():
        raise ValueError("answer similarity requires two non-empty texts")
    gen_vec, truth_vec = embed_batch([generated, truth], embedder)
    value = cosine_similarity(gen_vec, truth_vec)
    return min(1.0, max(0.0, value))


# ---------------------------------------------------------------------------
# answer correctness


@dataclass
class ClaimBreakdown:
    generated_claims: list[str]
    truth_claims: list[str]
    tp: int
    fp: int
    fn: int
    f1: float
    similarity: float
    weight: float


def correctness_from_counts(tp: int, fp: int, fn: int, similarity: float,
                            weight: float = DEFAULT_CORRECTNESS_WEIGHT) -> tuple[float, float]:
    """Blend claim-level F1 with answer similarity; returns (score, f1).

    F1 = TP / (TP + 0.5 (FP + FN)), defined as 1 when all counts are zero so
    the boundary is total. Monotone non-decreasing in TP for fixed FP/FN.
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("claim counts must be non-negative")
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be within [0, 1]")
    similarity = min(1.0, max(0.0, similarity))
    denom = tp + 0.5 * (fp + fn)
    f1 = 1.0 if denom == 0 else tp / denom
    score = weight * f1 + (1.0 - weight) * similarity
    return min(1.0, max(0.0, score)), f1


def _parse_claim_lines(reply: str) -> list[str]:
    if reply.strip() == NO_CLAIMS_SENTINEL:
        return []
    claims = []
    for line in reply.splitlines():
        line = re.sub(r"^\s*(?:\d+[.)]\s*|[-*•]\s*)", "", line).strip()
        if line:
            claims.append(line)
    return claims


def decompose_claims(text: str, chat: ChatProvider, templates: TemplateStore) -> list[str]:
    """LLM decomposition of a text into atomic claims, one per line.

    One corrective re-prompt on an unparseable reply, then a metric error.
    """
    prompt = templates.render("claims_decompose", text=text)
    reply = chat.complete([{"role": "user", "content": prompt}], temperature=0.0)
    claims = _parse_claim_lines(reply)
    if claims or reply.strip() == NO_CLAIMS_SENTINEL:
        return claims
    retry = prompt + "\n\nReply with one claim per line and nothing else."
    reply = chat.complete([{"role": "user", "content": retry}], temperature=0.0)
    claims = _parse_claim_lines(reply)
    if claims or reply.strip() == NO_CLAIMS_SENTINEL:
        return claims
    raise MetricError("claim decomposition produced no parseable claims after re-prompt")


_VERDICT_RE = re.compile(r"\b(UNSUPPORTED|SUPPORTED)\b", re.IGNORECASE)


def _parse_verdicts(reply: str, expected: int) -> list[bool] | None:
    verdicts = []
    for line in reply.splitlines():
        match = _VERDICT_RE.search(line)
        if match:
            verdicts.append(match.group(1).upper() == "SUPPORTED")
    return verdicts if len(verdicts) == expected else None


def classify_claims(claims: list[str], reference: str, chat: ChatProvider,
                    templates: TemplateStore) -> list[bool]:
    """Per-claim supported/unsupported verdicts against a reference text."""
    if not claims:
        return []
    numbered = "\n".join(f"{i}. {c}" for i, c in enumerate(claims, start=1))
    prompt = templates.render("claims_classify", claims=numbered, reference=reference)
    reply = chat.complete([{"role": "user", "content": prompt}], temperature=0.0)
    verdicts = _parse_verdicts(reply, len(claims))
    if verdicts is None:
        retry = prompt + (
            f"\n\nYour previous reply did not contain exactly {len(claims)} verdicts. "
            f"Reply with exactly {len(claims)} lines, each SUPPORTED or UNSUPPORTED."
        )
        reply = chat.complete([{"role": "user", "content": retry}], temperature=0.0)
        verdicts = _parse_verdicts(reply, len(claims))
    if verdicts is None:
        raise MetricError(
            f"claim classification returned a reply without {len(claims)} verdicts"
        )
    return verdicts


def answer_correctness(
    generated: str,
    truth: str,
    chat: ChatProvider,
    embedder: EmbeddingProvider,
    templates: TemplateStore,
    weight: float = DEFAULT_CORRECTNESS_WEIGHT,
) -> tuple[float, ClaimBreakdown]:
    """Claim-level factual F1 blended with embedding similarity.

    TP: generated claims supported by the truth; FP: generated claims
    unsupported; FN: truth claims missing from the generated answer.
    """
    if not generated.strip() or not truth.strip():
        raise ValueError("answer correctness requires two non-empty texts")
    generated_claims = decompose_claims(generated, chat, templates)
    truth_claims = decompose_claims(truth, chat, templates)
    gen_verdicts = classify_claims(generated_claims, truth, chat, templates)
    truth_verdicts = classify_claims(truth_claims, generated, chat, templates)
    tp = sum(gen_verdicts)
    fp = len(gen_verdicts) - tp
    fn = len(truth_verdicts) - sum(truth_verdicts)
    similarity = answer_similarity(generated, truth, embedder)
    score, f1 = correctness_from_counts(tp, fp, fn, similarity, weight)
    return score, ClaimBreakdown(
        generated_claims=generated_claims,
        truth_claims=truth_claims,
        tp=tp, fp=fp, fn=fn, f1=f1, similarity=similarity, weight=weight,
    )


# ---------------------------------------------------------------------------
# inter-rater agreement


def validate_rating_matrix(matrix) -> np.ndarray:
    counts = np.asarray(matrix)
    if counts.ndim != 2:
        raise ValueError("rating matrix must be 2-D (items x categories)")
    if not np.issubdtype(counts.dtype, np.integer):
        if not np.all(counts == np.floor(counts)):
            raise ValueError("rating matrix must contain integer counts")
        counts = counts.astype(np.int64)
    if (counts < 0).any():
        raise ValueError("rating matrix counts must be non-negative")
    n_items, n_categories = counts.shape
    if n_items < 2 or n_categories < 2:
        raise ValueError("rating matrix needs at least 2 items and 2 categories")
    row_sums = counts.sum(axis=1)
    if len(set(row_sums.tolist())) != 1:
        raise ValueError("every item must be rated by the same number of raters")
    if row_sums[0] < 2:
        raise ValueError("at least 2 raters per item are required")
    return counts


def fleiss_kappa(matrix) -> tuple[float, float]:
    """Multirater kappa and its large-sample standard error.

    See the module docstring for the exact formulas. Raises when all ratings
    fall into one category (chance agreement is 1, kappa undefined).
    """
    counts = validate_rating_matrix(matrix).astype(np.float64)
    n_items = counts.shape[0]
    n = counts[0].sum()
    p_i = (np.square(counts).sum(axis=1) - n) / (n * (n - 1.0))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (n_items * n)
    p_bar_e = float(np.square(p_j).sum())
    if p_bar_e >= 1.0:
        raise DegenerateRatingsError(
            "all ratings fall into a single category; kappa is undefined"
        )
    kappa = (p_bar - p_bar_e) / (1.0 - p_bar_e)
    q_j = p_j * (1.0 - p_j)
    sum_q = float(q_j.sum())
    var = (2.0 / (n_items * n * (n - 1.0))) * (
        (sum_q ** 2 - float((q_j * (1.0 - 2.0 * p_j)).sum())) / (sum_q ** 2)
    )
    return float(kappa), float(math.sqrt(max(0.0, var)))


def load_rating_sheet(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a per-rater label sheet (item, rater, category rows) into counts.

    Returns (matrix, item_ids, categories) with items and categories in sorted
    order so the conversion is deterministic.
    """
    rows = _read_delimited(path, required=("item", "rater", "category"))
    seen: dict[tuple[str, str], str] = {}
    for row in rows:
        key = (row["item"], row["rater"])
        if key in seen:
            raise ValueError(f"duplicate rating for item {key[0]!r} by rater {key[1]!r}")
        seen[key] = row["category"]
    items = sorted({item for item, _ in seen})
    categories = sorted({c for c in seen.values()})
    if len(items) < 2 or len(categories) < 2:
        raise ValueError("rating sheet needs at least 2 items and 2 categories")
    cat_index = {c: j for j, c in enumerate(categories)}
    matrix = np.zeros((len(items), len(categories)), dtype=np.int64)
    for (item, _), category in seen.items():
        matrix[items.index(item), cat_index[category]] += 1
    return matrix, items, categories


# ---------------------------------------------------------------------------
# Likert aggregation

LIKERT_MIN, LIKERT_MAX = 1, 5


@dataclass
class LikertSheet:
    scores: dict[tuple[str, str], int]

    def __post_init__(self):
        for (item, rater), score in self.scores.items():
            if not isinstance(score, int) or not LIKERT_MIN <= score <= LIKERT_MAX:
                raise ValueError(
                    f"score for item {item!r} by rater {rater!r} is {score!r}; "
                    f"must be an integer in [{LIKERT_MIN}, {LIKERT_MAX}]"
                )


@dataclass
class LikertSummary:
    mean: float
    count: int
    per_rater: dict[str, float]
    distribution: dict[int, int]
    per_specialty: dict[str, float] = field(default_factory=dict)


def load_likert_sheet(path) -> LikertSheet:
    rows = _read_delimited(path, required=("item", "rater", "score"))
    scores: dict[tuple[str, str], int] = {}
    for row in rows:
        key = (row["item"], row["rater"])
        if key in scores:
            raise ValueError(f"duplicate score for item {key[0]!r} by rater {key[1]!r}")
        try:
            score = int(row["score"])
        except ValueError:
            raise ValueError(
                f"score for item {key[0]!r} by rater {key[1]!r} is not an integer: "
                f"{row['score']!r}"
            ) from None
        scores[key] = score
    if not scores:
        raise ValueError("likert sheet is empty")
    return LikertSheet(scores)


def summarize_likert(sheet: LikertSheet,
                     specialty_by_item: dict[str, str] | None = None) -> LikertSummary:
    """Arithmetic mean over all cells plus per-rater and score distributions."""
    if not sheet.scores:
        raise ValueError("likert sheet is empty")
    values = list(sheet.scores.values())
    mean = sum(values) / len(values)
    per_rater: dict[str, list[int]] = {}
    per_specialty: dict[str, list[int]] = {}
    distribution = {s: 0 for s in range(LIKERT_MIN, LIKERT_MAX + 1)}
    for (item, rater), score in sheet.scores.items():
        per_rater.setdefault(rater, []).append(score)
        distribution[score] += 1
        if specialty_by_item and item in specialty_by_item:
            per_specialty.setdefault(specialty_by_item[item], []).append(score)
    return LikertSummary(
        mean=mean,
        count=len(values),
        per_rater={r: sum(v) / len(v) for r, v in sorted(per_rater.items())},
        distribution=distribution,
        per_specialty={s: sum(v) / len(v) for s, v in sorted(per_specialty.items())},
    )


# ---------------------------------------------------------------------------
# synthetic question generation

_QUESTION_LINE_RE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")
_STOPWORDS = frozenset(
    "this that with from have been were thus they them their there which what when where "
    "should would could about into over under your yours patient doctor".split()
)


@dataclass
class GeneratedQuestion:
    text: str
    context_overlap: bool


def _content_words(text: str) -> set[str]:
    return {
        w for w in re.findall(r"[a-z0-9]+", text.lower())
        if len(w) >= 4 and w not in _STOPWORDS
    }


def generate_questions(
    context: AnnotatedPatientContext,
    n: int,
    chat: ChatProvider,
    templates: TemplateStore,
) -> list[GeneratedQuestion]:
    """Generate n patient-specific questions from a structured context.

    The reply must be a numbered list with at least n items (extras are
    dropped); each question is heuristically checked for content-word overlap
    with the context and flagged when it has none.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    context_text = context.serialize()
    prompt = templates.render("question_gen", n=str(n), context=context_text)
    reply = chat.complete([{"role": "user", "content": prompt}], temperature=0.0)
    questions = _parse_numbered(reply)
    if len(questions) < n:
        retry = prompt + (
            f"\n\nYour previous reply did not contain {n} questions. Reply with exactly "
            f"{n} questions as a numbered list, one per line."
        )
        reply = chat.complete([{"role": "user", "content": retry}], temperature=0.0)
        questions = _parse_numbered(reply)
    if len(questions) < n:
        raise QuestionGenerationError(
            f"expected {n} questions, got {len(questions)} after re-prompt"
        )
    context_words = _content_words(context_text)
    return [
        GeneratedQuestion(text=q, context_overlap=bool(_content_words(q) & context_words))
        for q in questions[:n]
    ]


def _parse_numbered(reply: str) -> list[str]:
    out = []
    for line in reply.splitlines():
        match = _QUESTION_LINE_RE.match(line)
        if match:
            out.append(match.group(1))
    return out


# ---------------------------------------------------------------------------
# dataset + evaluation run


@dataclass
class EvalRow:
    question_id: str
    patient_id: str
    specialty: str
    question: str
    ground_truth: str


@dataclass
class EvalRecord:
    question_id: str
    patient_id: str
    specialty: str
    question: str
    ground_truth_answer: str
    generated_answer: str
    model_name: str
    similarity_score: float
    correctness_score: float


@dataclass
class ModelReport:
    model_name: str
    records: list[EvalRecord]
    mean_similarity: float | None
    mean_correctness: float | None
    exclusions: int
    errors: list[dict] = field(default_factory=list)


@dataclass
class EvalReport:
    models: list[ModelReport]

    def to_dict(self) -> dict:
        return {
            "models": [
                {
                    "model_name": m.model_name,
                    "mean_similarity": m.mean_similarity,
                    "mean_correctness": m.mean_correctness,
                    "exclusions": m.exclusions,
                    "errors": m.errors,
                    "records": [r.__dict__ for r in m.records],
                }
                for m in self.models
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_eval_dataset(path) -> list[EvalRow]:
    rows = _read_delimited(
        path, required=("question_id", "patient_id", "specialty", "question", "ground_truth")
    )
    if not rows:
        raise ValueError(f"dataset {path} has no rows")
    return [
        EvalRow(
            question_id=r["question_id"],
            patient_id=r["patient_id"],
            specialty=r["specialty"],
            question=r["question"],
            ground_truth=r["ground_truth"],
        )
        for r in rows
    ]


def run_eval(
    dataset: list[EvalRow],
    models: list[tuple[str, ChatProvider]],
    *,
    answer_fn,
    embedder: EmbeddingProvider,
    templates: TemplateStore,
    weight: float = DEFAULT_CORRECTNESS_WEIGHT,
    parallelism: int = 1,
) -> EvalReport:
    """Run every dataset row through every model and score both metrics.

    ``answer_fn(chat, row) -> str`` produces the generated answer (the engine
    passes its pipeline here). Per-row failures are recorded and excluded from
    the means; the run only fails when more than half the rows of a model
    error out.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if not models:
        raise ValueError("at least one model is required")
    reports = []
    for model_name, chat in models:
        outcomes: list[tuple[EvalRecord | None, dict | None]] = []

        def evaluate_row(row: EvalRow):
            try:
                answer = answer_fn(chat, row)
                similarity = answer_similarity(answer, row.ground_truth, embedder)
                correctness, _ = answer_correctness(
                    answer, row.ground_truth, chat, embedder, templates, weight
                )
                return (
                    EvalRecord(
                        question_id=row.question_id,
                        patient_id=row.patient_id,
                        specialty=row.specialty,
                        question=row.question,
                        ground_truth_answer=row.ground_truth,
                        generated_answer=answer,
                        model_name=model_name,
                        similarity_score=similarity,
                        correctness_score=correctness,
                    ),
                    None,
                )
            except (PatientRagError, ValueError) as exc:
                return None, {"question_id": row.question_id, "error": str(exc)}

        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                outcomes = list(pool.map(evaluate_row, dataset))
        else:
            outcomes = [evaluate_row(row) for row in dataset]

        records = [rec for rec, _ in outcomes if rec is not None]
        errors = [err for _, err in outcomes if err is not None]
        if len(errors) * 2 > len(dataset):
            raise EvalRunError(
                f"model {model_name!r}: {len(errors)}/{len(dataset)} rows failed"
            )
        reports.append(ModelReport(
            model_name=model_name,
            records=records,
            mean_similarity=_mean([r.similarity_score for r in records]),
            mean_correctness=_mean([r.correctness_score for r in records]),
            exclusions=len(errors),
            errors=errors,
        ))
    return EvalReport(models=reports)


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def render_score_table(report: EvalReport) -> str:
    """Plain-text summary table: one row per (framework, model).

    The alt-similarity section reports the same cosine-based similarity under
    its alternate label and carries no correctness column.
    """
    headers = ("Evaluation Framework", "Model", "Average Similarity Score",
               "Average Correctness Score")
    rows = []
    for m in report.models:
        rows.append(("similarity", m.model_name, _fmt(m.mean_similarity),
                     _fmt(m.mean_correctness)))
    for m in report.models:
        rows.append(("alt-similarity", m.model_name, _fmt(m.mean_similarity), "-"))
    table = _render_table(headers, rows)
    exclusions = ", ".join(f"{m.model_name}: {m.exclusions}" for m in report.models)
    return f"{table}\nExcluded records ({exclusions})\n"


def render_agreement_table(kappa: float, stderr: float, n_items: int, n_raters: int) -> str:
    headers = ("Overall Agreement", "Kappa", "Standard Error")
    rows = [(f"{n_items} items x {n_raters} raters", f"{kappa:.9f}", f"{stderr:.9f}")]
    return _render_table(headers, rows)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def _render_table(headers, rows) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(str(cell)))
    def line(cells):
        return " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def _read_delimited(path, required: tuple[str, ...]) -> list[dict[str, str]]:
    """Read a CSV/TSV file with a header; the delimiter is sniffed from the header."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ValueError(f"{path} is empty")
    header_line = text.splitlines()[0]
    delimiter = "\t" if "\t" in header_line else ","
    reader = csv.DictReader(text.splitlines(), delimiter=delimiter)
    fields = reader.fieldnames or []
    missing = [c for c in required if c not in fields]
    if missing:
        raise ValueError(f"{path} is missing required columns: {', '.join(missing)}")
    return [dict(row) for row in reader]
