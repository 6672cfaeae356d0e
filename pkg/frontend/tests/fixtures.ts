// Canned service payloads used by the contract tests; shapes mirror the
// service's pydantic response models.

import type {
  AskResponsePayload,
  EvidencePayload,
  PatientCreatePayload,
} from "../src/types.js";

export function patientEvidence(overrides: Partial<EvidencePayload> = {}): EvidencePayload {
  return {
    origin: "patient_context",
    entry_id: "p1.context:2",
    text: "An EpiPen was prescribed in the event of acute angioedema or an allergic reaction.",
    original_text:
      "An EpiPen was prescribed in the event of acute angioedema or an allergic reaction.",
    score: 0.4969132595,
    compressed: false,
    dropped: false,
    fallback: false,
    metadata: { patient_id: "p1" },
    ...overrides,
  };
}

export function medicalEvidence(overrides: Partial<EvidencePayload> = {}): EvidencePayload {
  return {
    origin: "medical_knowledge",
    entry_id: "adrenaline_autoinjector_usage:0",
    text:
      "Place the orange tip against the middle of the outer thigh at a right angle " +
      "to the leg. Push the auto-injector firmly against the thigh until it clicks.",
    original_text:
      "The EpiPen or Anapen auto-injector with 0.3 mg of adrenaline is the standard " +
      "device. Place the orange tip against the middle of the outer thigh at a right " +
      "angle to the leg. Push the auto-injector firmly against the thigh until it " +
      "clicks. Used devices must be handed to emergency personnel.",
    score: 0.2399417114,
    compressed: true,
    dropped: false,
    fallback: false,
    metadata: { title: "adrenaline_autoinjector_usage" },
    ...overrides,
  };
}

export function askResponse(overrides: Partial<AskResponsePayload> = {}): AskResponsePayload {
  return {
    patient_id: "p1",
    query: "How do I use the prescribed EpiPen in case of an emergency?",
    answer:
      "To use the prescribed EpiPen: place the orange tip against the middle of the " +
      "outer thigh and push firmly until it clicks, then go to the emergency room.",
    model_name: "fixture-chat",
    citations: ["p1.context:2", "adrenaline_autoinjector_usage:0"],
    patient_evidence: [patientEvidence()],
    medical_evidence: [medicalEvidence()],
    trace_id: "abc123",
    disclaimer: "This answer is generated by a research system and is not medical advice.",
    ...overrides,
  };
}

export function patientCreated(): PatientCreatePayload {
  return {
    patient_id: "p1",
    status: "annotated",
    context: {
      history_and_symptoms: "Perioral swelling after taking Keflex; grass allergies.",
      executed_diagnostics: "RAST allergy testing was performed.",
      medications_and_instructions: "An EpiPen was prescribed for emergencies.",
    },
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
