// DOM wiring: state transitions and innerHTML updates only; all markup comes
// from the pure renderers and all data from the service payloads.

import { ApiClient, NetworkError, ServiceError, resolveServiceUrl } from "./api.js";
import {
  renderConversation,
  renderError,
  renderOnboardedContext,
  renderPatientOptions,
} from "./render.js";
import type { Turn } from "./types.js";

interface AppState {
  patients: string[];
  selected: string | null;
  conversations: Map<string, Turn[]>;
  pending: boolean;
  lastQuestion: string | null;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(): void {
  const api = new ApiClient(resolveServiceUrl(document));
  const state: AppState = {
    patients: [],
    selected: null,
    conversations: new Map(),
    pending: false,
    lastQuestion: null,
  };

  const patientSelect = el<HTMLSelectElement>("patient-select");
  const transcriptInput = el<HTMLTextAreaElement>("transcript-input");
  const onboardButton = el<HTMLButtonElement>("onboard-button");
  const onboardResult = el<HTMLElement>("onboard-result");
  const questionInput = el<HTMLInputElement>("question-input");
  const askButton = el<HTMLButtonElement>("ask-button");
  const conversationBox = el<HTMLElement>("conversation");
  const errorBox = el<HTMLElement>("error-box");

  function syncControls(): void {
    const question = questionInput.value.trim();
    askButton.disabled = state.pending || !question || !state.selected;
    onboardButton.disabled = state.pending || !transcriptInput.value.trim();
    patientSelect.innerHTML = renderPatientOptions(state.patients, state.selected);
  }

  function showConversation(): void {
    const turns = state.selected ? state.conversations.get(state.selected) ?? [] : [];
    conversationBox.innerHTML = renderConversation(turns);
    wireCitations();
  }

  function wireCitations(): void {
    conversationBox.querySelectorAll<HTMLAnchorElement>(".citation").forEach((link) => {
      link.addEventListener("click", (event) => {
        event.preventDefault();
        const id = link.dataset.entry;
        conversationBox.querySelectorAll(".linked").forEach((n) => n.classList.remove("linked"));
        conversationBox
          .querySelectorAll(`[data-entry="${CSS.escape(id ?? "")}"]`)
          .forEach((n) => n.classList.add("linked"));
      });
    });
  }

  function showError(error: unknown, retryable = false): void {
    if (error instanceof ServiceError) {
      errorBox.innerHTML = renderError(error.body);
    } else if (error instanceof NetworkError) {
      errorBox.innerHTML = renderError(
        { stage: "network", message: error.message }, { retryable: true });
      errorBox.querySelector("[data-action=retry]")?.addEventListener("click", () => {
        errorBox.innerHTML = "";
        if (retryable && state.lastQuestion) void ask(state.lastQuestion);
      });
    } else {
      errorBox.innerHTML = renderError({ stage: "client", message: String(error) });
    }
  }

  async function refreshPatients(): Promise<void> {
    try {
      state.patients = await api.listPatients();
      if (!state.selected && state.patients.length > 0) {
        state.selected = state.patients[0];
      }
      syncControls();
      showConversation();
    } catch (error) {
      showError(error);
    }
  }

  async function onboard(): Promise<void> {
    const transcript = transcriptInput.value;
    if (!transcript.trim()) return; // client-side validation; button is disabled anyway
    state.pending = true;
    syncControls();
    errorBox.innerHTML = "";
    try {
      const created = await api.createPatient(transcript);
      onboardResult.innerHTML = renderOnboardedContext(created.patient_id, created.context);
      transcriptInput.value = "";
      await refreshPatients();
      state.selected = created.patient_id;
    } catch (error) {
      showError(error);
    } finally {
      state.pending = false;
      syncControls();
    }
  }

  async function ask(question: string): Promise<void> {
    if (!state.selected || state.pending) return;
    state.pending = true;
    state.lastQuestion = question;
    syncControls();
    errorBox.innerHTML = "";
    try {
      const response = await api.ask(state.selected, question);
      const turns = state.conversations.get(state.selected) ?? [];
      turns.push({ question, response });
      state.conversations.set(state.selected, turns);
      questionInput.value = "";
      showConversation();
    } catch (error) {
      // the conversation so far stays rendered; only the error box changes
      showError(error, true);
    } finally {
      state.pending = false;
      syncControls();
    }
  }

  patientSelect.addEventListener("change", () => {
    state.selected = patientSelect.value || null;
    showConversation();
    syncControls();
  });
  questionInput.addEventListener("input", syncControls);
  transcriptInput.addEventListener("input", syncControls);
  askButton.addEventListener("click", () => void ask(questionInput.value.trim()));
  questionInput.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !askButton.disabled) void ask(questionInput.value.trim());
  });
  onboardButton.addEventListener("click", () => void onboard());

  syncControls();
  void refreshPatients();
}

startApp();
