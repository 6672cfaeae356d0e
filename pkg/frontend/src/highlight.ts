// Exact-substring evidence highlighting: an answer span is marked only when a
// run of at least MIN_WORDS consecutive words appears verbatim (case- and
// punctuation-insensitive at word edges) in a non-dropped evidence text.
// No fuzzy matching by design: provenance display stays honest.

import type { EvidencePayload } from "./types.js";

export const MIN_WORDS = 4;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

interface WordToken {
  normalized: string;
  start: number;
  end: number;
}

function tokenize(text: string): WordToken[] {
  const tokens: WordToken[] = [];
  const re = /\S+/g;
  let match: RegExpExecArray | null;
  while ((match = re.exec(text)) !== null) {
    const normalized = match[0].toLowerCase().replace(/^[^a-z0-9]+|[^a-z0-9]+$/g, "");
    if (normalized) {
      tokens.push({ normalized, start: match.index, end: match.index + match[0].length });
    }
  }
  return tokens;
}

export interface HighlightSpan {
  start: number;
  end: number;
  entryId: string;
}

/** Character spans of the answer covered verbatim by some evidence text. */
export function findHighlightSpans(
  answer: string,
  evidence: EvidencePayload[],
): HighlightSpan[] {
  const answerTokens = tokenize(answer);
  const spans: HighlightSpan[] = [];
  for (const item of evidence) {
    if (item.dropped) continue;
    const evidenceTokens = tokenize(item.text).map((t) => t.normalized);
    // index evidence positions by their MIN_WORDS-gram
    const gramIndex = new Map<string, number[]>();
    for (let i = 0; i + MIN_WORDS <= evidenceTokens.length; i++) {
      const gram = evidenceTokens.slice(i, i + MIN_WORDS).join(" ");
      const positions = gramIndex.get(gram) ?? [];
      positions.push(i);
      gramIndex.set(gram, positions);
    }
    let i = 0;
    while (i + MIN_WORDS <= answerTokens.length) {
      const gram = answerTokens.slice(i, i + MIN_WORDS).map((t) => t.normalized).join(" ");
      const starts = gramIndex.get(gram);
      if (!starts) {
        i += 1;
        continue;
      }
      // extend the longest matching run from any evidence start
      let best = MIN_WORDS;
      for (const evStart of starts) {
        let length = MIN_WORDS;
        while (
          i + length < answerTokens.length &&
          evStart + length < evidenceTokens.length &&
          answerTokens[i + length].normalized === evidenceTokens[evStart + length]
        ) {
          length += 1;
        }
        best = Math.max(best, length);
      }
      spans.push({
        start: answerTokens[i].start,
        end: answerTokens[i + best - 1].end,
        entryId: item.entry_id,
      });
      i += best;
    }
  }
  return mergeSpans(spans);
}

function mergeSpans(spans: HighlightSpan[]): HighlightSpan[] {
  const sorted = [...spans].sort((a, b) => a.start - b.start || b.end - a.end);
  const merged: HighlightSpan[] = [];
  for (const span of sorted) {
    const last = merged[merged.length - 1];
    if (last && span.start <= last.end) {
      last.end = Math.max(last.end, span.end);
    } else {
      merged.push({ ...span });
    }
  }
  return merged;
}

/** Answer rendered as HTML with verbatim evidence runs wrapped in <mark>. */
export function renderAnswerHtml(answer: string, evidence: EvidencePayload[]): string {
  const spans = findHighlightSpans(answer, evidence);
  let html = "";
  let cursor = 0;
  for (const span of spans) {
    html += escapeHtml(answer.slice(cursor, span.start));
    html += `<mark data-entry="${escapeHtml(span.entryId)}">`;
    html += escapeHtml(answer.slice(span.start, span.end));
    html += "</mark>";
    cursor = span.end;
  }
  html += escapeHtml(answer.slice(cursor));
  return html;
}
