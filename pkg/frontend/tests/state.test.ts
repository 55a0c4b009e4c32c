import { describe, expect, it } from "vitest";

import { ServiceError, TranslateResponse } from "../src/api";
import {
  UiState,
  applyFailure,
  applySuccess,
  beginSubmit,
  canSubmit,
  initialState,
  languagesFailed,
  payloadOf,
  setLanguages,
} from "../src/state";

function response(translation: string): TranslateResponse {
  return {
    translation,
    tgt_lang: "te",
    src_lang: null,
    mode: "greedy",
    fingerprint: "f",
    latency_ms: 2,
    truncated: false,
  };
}

function ready(text = "tere maailm"): UiState {
  return { ...setLanguages(initialState(), ["ta", "te"]), text };
}

describe("language list", () => {
  it("adopts the server order and defaults to the first code", () => {
    const state = setLanguages(initialState(), ["te", "ta", "ti"]);
    expect(state.languages).toEqual(["te", "ta", "ti"]);
    expect(state.target).toBe("te");
  });

  it("keeps the current selection when it is still served", () => {
    let state = setLanguages(initialState(), ["ta", "te"]);
    state = { ...state, target: "te" };
    state = setLanguages(state, ["ta", "te", "ti"]);
    expect(state.target).toBe("te");
  });

  it("an empty list disables selection with a message", () => {
    const state = setLanguages(initialState(), []);
    expect(state.target).toBeNull();
    expect(state.languagesError).toMatch(/no languages/);
  });

  it("a failed load records the failure and clears options", () => {
    const state = languagesFailed(ready(), "Could not reach the translation service.");
    expect(state.languages).toEqual([]);
    expect(state.target).toBeNull();
  });
});

describe("submission gating", () => {
  it("blocks empty and whitespace-only text", () => {
    expect(canSubmit(ready(""))).toBe(false);
    expect(canSubmit(ready("  \n "))).toBe(false);
    expect(canSubmit(ready("x"))).toBe(true);
  });

  it("blocks submission without a target language", () => {
    expect(canSubmit({ ...initialState(), text: "x" })).toBe(false);
  });

  it("blocks resubmitting the identical in-flight payload but allows a changed one", () => {
    const { state } = beginSubmit(ready());
    expect(canSubmit(state)).toBe(false);
    expect(canSubmit({ ...state, text: "tere maailm!" })).toBe(true);
    expect(canSubmit({ ...state, target: "te" })).toBe(true);
  });

  it("omits src_lang unless one is chosen", () => {
    expect(payloadOf(ready())).toEqual({ text: "tere maailm", tgt_lang: "ta", mode: "greedy" });
    expect(payloadOf({ ...ready(), sourceLang: "te" }).src_lang).toBe("te");
  });
});

describe("response sequencing", () => {
  it("applies the reply matching the latest submit", () => {
    const { state, seq } = beginSubmit(ready());
    const done = applySuccess(state, seq, response("tere"));
    expect(done.response?.translation).toBe("tere");
    expect(done.inFlightPayload).toBeNull();
  });

  it("discards a stale success from a superseded request", () => {
    const first = beginSubmit(ready());
    const second = beginSubmit({ ...first.state, text: "teine lause" });
    const afterStale = applySuccess(second.state, first.seq, response("OLD"));
    expect(afterStale).toBe(second.state);
    const afterFresh = applySuccess(afterStale, second.seq, response("NEW"));
    expect(afterFresh.response?.translation).toBe("NEW");
  });

  it("discards a stale failure as well", () => {
    const first = beginSubmit(ready());
    const second = beginSubmit({ ...first.state, text: "teine" });
    const err = new ServiceError("busy", 503, "busy");
    expect(applyFailure(second.state, first.seq, err, "msg")).toBe(second.state);
  });

  it("routes validation errors inline and the rest to the banner", () => {
    const { state, seq } = beginSubmit(ready());
    const inline = applyFailure(state, seq, new ServiceError("empty_text", 400, ""), "inline msg");
    expect(inline.inlineError).toBe("inline msg");
    expect(inline.banner).toBeNull();

    const banner = applyFailure(state, seq, new ServiceError("busy", 503, ""), "busy msg");
    expect(banner.banner).toBe("busy msg");
    expect(banner.inlineError).toBeNull();

    const network = applyFailure(state, seq, new ServiceError("network", 0, ""), "net msg");
    expect(network.banner).toBe("net msg");
  });

  it("a new submit clears previous error surfaces", () => {
    const { state, seq } = beginSubmit(ready());
    const failed = applyFailure(state, seq, new ServiceError("busy", 503, ""), "busy msg");
    const retried = beginSubmit(failed);
    expect(retried.state.banner).toBeNull();
    expect(retried.state.inlineError).toBeNull();
    expect(retried.seq).toBe(seq + 1);
  });

  it("keeps the source text across the whole cycle for iterative editing", () => {
    const { state, seq } = beginSubmit(ready("muuda mind"));
    const done = applySuccess(state, seq, response("edit me"));
    expect(done.text).toBe("muuda mind");
  });
});
