// Pure HTML-string renderers; the DOM layer in app.ts only assigns innerHTML
// and wires events. Keeping these pure makes the contract tests plain string
// assertions with no browser environment.

import { escapeHtml, renderAnswerHtml } from "./highlight.js";
import type {
  AnnotatedContextPayload,
  EvidencePayload,
  ServiceErrorPayload,
  Turn,
} from "./types.js";

export const DISCLAIMER_BANNER =
  "Research prototype - answers are generated from retrieved documents and are " +
  "not medical advice.";

const CONTEXT_SECTIONS: Array<[keyof AnnotatedContextPayload, string]> = [
  ["history_and_symptoms", "Patient history and symptoms"],
  ["executed_diagnostics", "Executed diagnostics"],
  ["medications_and_instructions", "Prescribed medications and further instructions"],
];

export function renderOnboardedContext(
  patientId: string,
  context: AnnotatedContextPayload,
): string {
  const sections = CONTEXT_SECTIONS.map(
    ([key, heading]) => `
    <section class="context-section">
      <h3>${escapeHtml(heading)}</h3>
      <p>${escapeHtml(context[key])}</p>
    </section>`,
  ).join("");
  return `
  <div class="onboarded" data-patient="${escapeHtml(patientId)}">
    <h2>Structured context for ${escapeHtml(patientId)}</h2>
    ${sections}
  </div>`;
}

function badge(label: string, kind: string): string {
  return `<span class="badge badge-${kind}">${label}</span>`;
}

export function renderEvidencePanel(item: EvidencePayload): string {
  // score is displayed verbatim from the payload; no client-side math
  const score = String(item.score);
  const badges = [
    item.compressed ? badge("compressed", "compressed") : "",
    item.dropped ? badge("dropped", "dropped") : "",
    item.fallback ? badge("compression fallback", "fallback") : "",
  ].join("");
  const originalToggle = item.compressed
    ? `<details class="original-toggle">
         <summary>show original</summary>
         <p>${escapeHtml(item.original_text)}</p>
       </details>`
    : "";
  return `
  <article class="evidence-panel ${item.dropped ? "evidence-dropped" : ""}"
           data-entry="${escapeHtml(item.entry_id)}" data-origin="${item.origin}">
    <header>
      <span class="origin">${item.origin === "patient_context" ? "Patient context" : "Medical knowledge"}</span>
      <span class="score" title="cosine similarity">score ${escapeHtml(score)}</span>
      ${badges}
    </header>
    <p class="evidence-text">${escapeHtml(item.text)}</p>
    ${originalToggle}
  </article>`;
}

export function renderTurn(turn: Turn, index: number): string {
  const { response } = turn;
  const allEvidence = [...response.patient_evidence, ...response.medical_evidence];
  const citations = response.citations
    .map((id) => `<li><a href="#" class="citation" data-entry="${escapeHtml(id)}">${escapeHtml(id)}</a></li>`)
    .join("");
  return `
  <section class="turn" data-turn="${index}">
    <p class="question">${escapeHtml(turn.question)}</p>
    <div class="answer">${renderAnswerHtml(response.answer, allEvidence)}</div>
    <p class="answer-disclaimer">${escapeHtml(response.disclaimer)}</p>
    <div class="evidence-columns">
      <div class="evidence-column" data-side="patient">
        <h4>Patient context evidence</h4>
        ${response.patient_evidence.map(renderEvidencePanel).join("") || "<p class='empty'>none</p>"}
      </div>
      <div class="evidence-column" data-side="medical">
        <h4>Medical knowledge evidence</h4>
        ${response.medical_evidence.map(renderEvidencePanel).join("") || "<p class='empty'>none</p>"}
      </div>
    </div>
    <footer class="citations">
      <h4>Citations</h4>
      <ul>${citations || "<li>none</li>"}</ul>
    </footer>
  </section>`;
}

export function renderConversation(turns: Turn[]): string {
  return turns.map(renderTurn).join("\n");
}

export function renderError(error: ServiceErrorPayload, options?: { retryable?: boolean }): string {
  const retry = options?.retryable
    ? '<button class="retry" data-action="retry">Retry</button>'
    : "";
  const audit = error.raw_reply
    ? `<details class="raw-reply-audit" open>
         <summary>Raw model reply (audit)</summary>
         <pre>${escapeHtml(error.raw_reply)}</pre>
       </details>`
    : "";
  return `
  <div class="error" role="alert">
    <strong>Failed at stage: ${escapeHtml(error.stage)}</strong>
    <p>${escapeHtml(error.message)}</p>
    ${audit}
    ${retry}
  </div>`;
}

export function renderPatientOptions(patients: string[], selected: string | null): string {
  const placeholder = `<option value="" ${selected ? "" : "selected"} disabled>select a patient</option>`;
  const options = patients
    .map((p) => `<option value="${escapeHtml(p)}" ${p === selected ? "selected" : ""}>${escapeHtml(p)}</option>`)
    .join("");
  return placeholder + options;
}
