import type {
  AnnotatedContextPayload,
  AskResponsePayload,
  PatientCreatePayload,
  ServiceErrorPayload,
} from "./types.js";

/** The service replied with an error body ({stage, message, ...}). */
export class ServiceError extends Error {
  readonly status: number;
  readonly body: ServiceErrorPayload;

  constructor(status: number, body: ServiceErrorPayload) {
    super(`${body.stage}: ${body.message}`);
    this.status = status;
    this.body = body;
  }
}

/** The request never reached the service (offline, refused, timeout). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (!response.ok) {
      let payload: ServiceErrorPayload;
      try {
        const parsed = await response.json();
        payload = typeof parsed?.stage === "string"
          ? (parsed as ServiceErrorPayload)
          : { stage: "service", message: JSON.stringify(parsed) };
      } catch {
        payload = { stage: "service", message: `HTTP ${response.status}` };
      }
      throw new ServiceError(response.status, payload);
    }
    return (await response.json()) as T;
  }

  async listPatients(): Promise<string[]> {
    const body = await this.request<{ patients: string[] }>("GET", "/patients");
    return body.patients;
  }

  createPatient(
    transcript: string,
    patientId?: string,
    metadata?: Record<string, string>,
  ): Promise<PatientCreatePayload> {
    return this.request<PatientCreatePayload>("POST", "/patients", {
      transcript,
      patient_id: patientId ?? null,
      metadata: metadata ?? {},
    });
  }

  getContext(patientId: string): Promise<AnnotatedContextPayload> {
    return this.request<AnnotatedContextPayload>(
      "GET", `/patients/${encodeURIComponent(patientId)}/context`);
  }

  ask(patientId: string, question: string): Promise<AskResponsePayload> {
    return this.request<AskResponsePayload>(
      "POST", `/patients/${encodeURIComponent(patientId)}/ask`, { question });
  }
}

/** Service URL: <meta name="service-url"> wins, else same origin. */
export function resolveServiceUrl(doc: Document): string {
  const meta = doc.querySelector('meta[name="service-url"]');
  const fromMeta = meta?.getAttribute("content")?.trim();
  return fromMeta || "";
}
