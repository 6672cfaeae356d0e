// Payload shapes mirroring the service's response models. The UI performs no
// retrieval or scoring math; everything displayed comes from these payloads.

export interface EvidencePayload {
  origin: "patient_context" | "medical_knowledge";
  entry_id: string;
  text: string;
  original_text: string;
  score: number;
  compressed: boolean;
  dropped: boolean;
  fallback: boolean;
  metadata: Record<string, string>;
}

export interface AskResponsePayload {
  patient_id: string;
  query: string;
  answer: string;
  model_name: string;
  citations: string[];
  patient_evidence: EvidencePayload[];
  medical_evidence: EvidencePayload[];
  trace_id: string;
  disclaimer: string;
}

export interface AnnotatedContextPayload {
  history_and_symptoms: string;
  executed_diagnostics: string;
  medications_and_instructions: string;
}

export interface PatientCreatePayload {
  patient_id: string;
  status: string;
  context: AnnotatedContextPayload;
}

export interface ServiceErrorPayload {
  stage: string;
  message: string;
  trace_id?: string | null;
  raw_reply?: string | null;
}

export interface Turn {
  question: string;
  response: AskResponsePayload;
}
