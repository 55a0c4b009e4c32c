/** DOM wiring for the translation demo page. */

import { ApiClient, ServiceError, errorMessage } from "./api";
import {
  UiState,
  applyFailure,
  applySuccess,
  beginSubmit,
  canSubmit,
  initialState,
  languagesFailed,
  setLanguages,
} from "./state";

export interface App {
  state: UiState;
  refresh: () => Promise<void>;
  submit: () => Promise<void>;
}

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const found = root.querySelector<T>(selector);
  if (!found) {
    throw new Error(`missing element: ${selector}`);
  }
  return found;
}

export function initApp(root: ParentNode, client: ApiClient): App {
  const targetSelect = el<HTMLSelectElement>(root, "#target");
  const sourceSelect = el<HTMLSelectElement>(root, "#source-lang");
  const modeSelect = el<HTMLSelectElement>(root, "#mode");
  const textArea = el<HTMLTextAreaElement>(root, "#source");
  const form = el<HTMLFormElement>(root, "#translate-form");
  const submitButton = el<HTMLButtonElement>(root, "#submit");
  const translation = el<HTMLElement>(root, "#translation");
  const meta = el<HTMLElement>(root, "#meta");
  const inlineError = el<HTMLElement>(root, "#inline-error");
  const banner = el<HTMLElement>(root, "#banner");
  const bannerMessage = el<HTMLElement>(root, "#banner-message");
  const retryButton = el<HTMLButtonElement>(root, "#retry");
  const selectorMessage = el<HTMLElement>(root, "#selector-message");

  const app: App = { state: initialState(), refresh, submit };

  function renderSelectors(): void {
    const { languages, target, languagesError } = app.state;
    targetSelect.replaceChildren(
      ...languages.map((code) => new Option(code, code, false, code === target)),
    );
    sourceSelect.replaceChildren(
      new Option("(unspecified)", ""),
      ...languages.map((code) => new Option(code, code)),
    );
    sourceSelect.value = app.state.sourceLang;
    targetSelect.disabled = languages.length === 0;
    sourceSelect.disabled = languages.length === 0;
    selectorMessage.textContent = languagesError ?? "";
    selectorMessage.hidden = languagesError === null;
  }

  function render(): void {
    const { state } = app;
    submitButton.disabled = !canSubmit(state);
    inlineError.textContent = state.inlineError ?? "";
    inlineError.hidden = state.inlineError === null;
    bannerMessage.textContent = state.banner ?? state.languagesError ?? "";
    banner.hidden = state.banner === null && state.languagesError === null;
    if (state.response) {
      // never reshape the service's output: byte-for-byte
      translation.textContent = state.response.translation;
      meta.textContent =
        `${state.response.src_lang ?? "?"} → ${state.response.tgt_lang} · ` +
        `${state.response.mode} · ${state.response.latency_ms} ms` +
        (state.response.truncated ? " · output truncated at the length limit" : "");
    }
  }

  function update(next: UiState): void {
    app.state = next;
    render();
  }

  async function refresh(): Promise<void> {
    try {
      const languages = await client.languages();
      update(setLanguages(app.state, languages));
    } catch (err) {
      const code = err instanceof ServiceError ? err.code : "network";
      update(languagesFailed(app.state, errorMessage(code)));
    }
    renderSelectors();
    render();
  }

  async function submit(): Promise<void> {
    if (!canSubmit(app.state)) {
      return;
    }
    const { state, seq, request } = beginSubmit(app.state);
    update(state);
    try {
      const response = await client.translate(request);
      update(applySuccess(app.state, seq, response));
    } catch (err) {
      const failure =
        err instanceof ServiceError ? err : new ServiceError("network", 0, String(err));
      update(applyFailure(app.state, seq, failure, errorMessage(failure.code, failure.message)));
    }
  }

  textArea.addEventListener("input", () => update({ ...app.state, text: textArea.value }));
  targetSelect.addEventListener("change", () =>
    update({ ...app.state, target: targetSelect.value }),
  );
  sourceSelect.addEventListener("change", () =>
    update({ ...app.state, sourceLang: sourceSelect.value }),
  );
  modeSelect.addEventListener("change", () =>
    update({ ...app.state, mode: modeSelect.value as UiState["mode"] }),
  );
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });
  retryButton.addEventListener("click", () => {
    if (app.state.languages.length === 0) {
      void refresh();
    } else {
      void submit();
    }
  });

  render();
  renderSelectors();
  void refresh();
  return app;
}

export function serviceBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  return fromQuery ?? "http://127.0.0.1:8080";
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  initApp(document, new ApiClient(serviceBaseUrl()));
}
