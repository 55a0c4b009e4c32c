import { describe, expect, it } from "vitest";

import { ApiClient, ServiceError } from "../src/api";

const SERVICE_URL = process.env.SERVICE_URL ?? "";

// Integration against a running translation service; skipped unless
// SERVICE_URL is set, e.g. SERVICE_URL=http://127.0.0.1:8080 npm test.
describe.skipIf(!SERVICE_URL)("live service", () => {
  const client = new ApiClient(SERVICE_URL);

  it("serves a non-empty language list and a healthy status", async () => {
    const languages = await client.languages();
    expect(languages.length).toBeGreaterThan(0);
    const health = await client.health();
    expect(health.status).toBe("ok");
    expect(health.languages).toEqual(languages);
  });

  it("translates into the default language and echoes request fields", async () => {
    const languages = await client.languages();
    const reply = await client.translate({
      text: "tere tulemast koju",
      tgt_lang: languages[0]!,
      mode: "greedy",
    });
    expect(reply.tgt_lang).toBe(languages[0]);
    expect(reply.mode).toBe("greedy");
    expect(typeof reply.translation).toBe("string");
    expect(reply.latency_ms).toBeGreaterThanOrEqual(0);
  });

  it("rejects an unknown language with the documented code", async () => {
    await expect(
      client.translate({ text: "tere", tgt_lang: "zz", mode: "greedy" }),
    ).rejects.toMatchObject({ code: "unknown_language", status: 400 });
  });

  it("rejects empty text with the documented code", async () => {
    const languages = await client.languages();
    const err = await client
      .translate({ text: "   ", tgt_lang: languages[0]!, mode: "greedy" })
      .then(
        () => null,
        (e: unknown) => e,
      );
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).code).toBe("empty_text");
  });
});
