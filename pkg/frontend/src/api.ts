/** Typed client for the translation service's HTTP schema. */

export interface TranslateRequest {
  text: string;
  tgt_lang: string;
  src_lang?: string;
  mode: "greedy" | "beam";
}

export interface TranslateResponse {
  translation: string;
  tgt_lang: string;
  src_lang: string | null;
  mode: string;
  fingerprint: string;
  latency_ms: number;
  truncated: boolean;
}

export interface HealthResponse {
  status: string;
  fingerprint: string;
  uptime_s: number;
  languages: string[];
}

/** Error codes documented by the service, plus "network" for fetch failures. */
export type ErrorCode =
  | "invalid_request"
  | "empty_text"
  | "text_too_long"
  | "unknown_language"
  | "bad_mode"
  | "busy"
  | "decode_failure"
  | "network";

export const ERROR_MESSAGES: Record<ErrorCode, string> = {
  invalid_request: "The request was malformed — check the form fields.",
  empty_text: "Type some text to translate first.",
  text_too_long: "That text is longer than the service accepts — shorten it.",
  unknown_language: "The service does not serve that language.",
  bad_mode: "Unknown decoding mode — use greedy or beam.",
  busy: "The service is busy right now — try again in a moment.",
  decode_failure: "The service failed while decoding — try again.",
  network: "Could not reach the translation service.",
};

/** Human-readable message for a service error code; unknown codes fall back
 * to the raw server message so nothing is ever silently swallowed. */
export function errorMessage(code: string, serverMessage = ""): string {
  if (code in ERROR_MESSAGES) {
    return ERROR_MESSAGES[code as ErrorCode];
  }
  return serverMessage || `Unexpected error (${code}).`;
}

export class ServiceError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }

  /** 4xx responses are problems with what was submitted (inline message);
   * everything else — 5xx, 503 busy, network — warrants the retry banner. */
  get isValidation(): boolean {
    return this.status >= 400 && this.status < 500 && this.code !== "busy";
  }
}

async function parseError(response: Response): Promise<ServiceError> {
  let code = "network";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body?.error?.code) {
      code = body.error.code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status-derived message
  }
  return new ServiceError(code, response.status, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}${path}`, init);
    } catch {
      throw new ServiceError("network", 0, "fetch failed");
    }
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  async languages(): Promise<string[]> {
    const body = await this.request<{ languages: string[] }>("/languages");
    return body.languages;
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health");
  }

  translate(req: TranslateRequest): Promise<TranslateResponse> {
    return this.request<TranslateResponse>("/translate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}
