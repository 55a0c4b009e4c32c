/** Pure page-state transitions, independent of the DOM.
 *
 * Responses are matched to requests by sequence number: only the response to
 * the *latest* submit may touch the state, so a slow earlier reply can never
 * overwrite a newer one.
 */

import { ServiceError, TranslateRequest, TranslateResponse } from "./api";

export interface UiState {
  languages: string[];
  languagesError: string | null;
  target: string | null;
  sourceLang: string; // "" = unspecified
  mode: "greedy" | "beam";
  text: string;
  seq: number; // id of the newest submitted request
  inFlightPayload: string | null; // JSON key of the request in flight
  response: TranslateResponse | null;
  inlineError: string | null;
  banner: string | null;
}

export function initialState(): UiState {
  return {
    languages: [],
    languagesError: null,
    target: null,
    sourceLang: "",
    mode: "greedy",
    text: "",
    seq: 0,
    inFlightPayload: null,
    response: null,
    inlineError: null,
    banner: null,
  };
}

export function setLanguages(state: UiState, languages: string[]): UiState {
  if (languages.length === 0) {
    return { ...state, languages: [], target: null, languagesError: "The service reports no languages." };
  }
  const fallback = languages[0] ?? null;
  const target = state.target && languages.includes(state.target) ? state.target : fallback;
  return { ...state, languages, target, languagesError: null };
}

export function languagesFailed(state: UiState, message: string): UiState {
  return { ...state, languages: [], target: null, languagesError: message };
}

export function payloadOf(state: UiState): TranslateRequest {
  const req: TranslateRequest = {
    text: state.text,
    tgt_lang: state.target ?? "",
    mode: state.mode,
  };
  if (state.sourceLang) {
    req.src_lang = state.sourceLang;
  }
  return req;
}

function payloadKey(req: TranslateRequest): string {
  return JSON.stringify([req.text, req.tgt_lang, req.src_lang ?? "", req.mode]);
}

/** Submission is blocked for empty text, a dead selector, or an identical
 * payload already in flight (a *different* payload may supersede it). */
export function canSubmit(state: UiState): boolean {
  if (state.text.trim() === "" || state.target === null) {
    return false;
  }
  return state.inFlightPayload !== payloadKey(payloadOf(state));
}

export function beginSubmit(state: UiState): { state: UiState; seq: number; request: TranslateRequest } {
  const request = payloadOf(state);
  const seq = state.seq + 1;
  return {
    state: { ...state, seq, inFlightPayload: payloadKey(request), inlineError: null, banner: null },
    seq,
    request,
  };
}

function isStale(state: UiState, seq: number): boolean {
  return seq !== state.seq;
}

export function applySuccess(state: UiState, seq: number, response: TranslateResponse): UiState {
  if (isStale(state, seq)) {
    return state;
  }
  return { ...state, inFlightPayload: null, response, inlineError: null, banner: null };
}

export function applyFailure(state: UiState, seq: number, error: ServiceError, message: string): UiState {
  if (isStale(state, seq)) {
    return state;
  }
  if (error.isValidation) {
    return { ...state, inFlightPayload: null, inlineError: message, banner: null };
  }
  return { ...state, inFlightPayload: null, inlineError: null, banner: message };
}
