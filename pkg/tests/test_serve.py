"""HTTP translation service: endpoint schemas, the documented error codes,
sentence stitching, determinism, and concurrency behavior."""

import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
import torch

torch.set_num_threads(1)

from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from lowmt import serve
from lowmt.checkpoint import fingerprint_checkpoint
from lowmt.corpus import SentencePair
from lowmt.decoding import TranslationResult, greedy_translate_batch
from lowmt.errors import ConfigError
from lowmt.model import ModelConfig, build_model
from lowmt.serve import (
    ERROR_CODES,
    ServeConfig,
    create_app,
    split_sentences,
    translate_long,
)
from lowmt.subword import train_bpe
from lowmt.trainer import TrainConfig, train

LANGS = ["qq", "rr"]


def tiny_pairs():
    return [
        SentencePair(src_lang="qq", tgt_lang="rr", src=f"q{i} r{j}", tgt=f"R{j} Q{i}")
        for i, j in itertools.product(range(4), range(4))
    ]


@pytest.fixture(scope="module")
def trained():
    pairs = tiny_pairs()
    texts = [p.src for p in pairs] + [p.tgt for p in pairs]
    sub = train_bpe(texts, vocab_size=300)
    cfg = ModelConfig(token_vocab=sub.vocab_size, factor_vocab=2, enc_layers=1,
                      dec_layers=1, heads=2, d_model=32, d_ff=64, factor_dim=4,
                      dropout=0.0, label_smoothing=0.0, max_len=16)
    model = build_model(cfg, seed=0)
    result = train(model, sub, LANGS, pairs, pairs,
                   TrainConfig(batch_words=200, checkpoint_interval=50, patience=3,
                               peak_lr=2e-3, warmup_steps=60, max_updates=250))
    return result.best, sub


@pytest.fixture(scope="module")
def client(trained):
    ckpt, sub = trained
    return TestClient(create_app(ckpt, sub, LANGS))


def post(client, **body):
    return client.post("/translate", json=body)


# -- endpoint basics -------------------------------------------------------------


def test_languages_lists_every_code_in_sorted_order(client):
    assert client.get("/languages").json() == {"languages": ["qq", "rr"]}


def test_health_reports_fingerprint_and_uptime(trained, client):
    ckpt, _ = trained
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["fingerprint"] == fingerprint_checkpoint(ckpt)
    assert body["uptime_s"] >= 0.0
    assert body["languages"] == ["qq", "rr"]


def test_translation_matches_direct_decoding(trained, client):
    ckpt, sub = trained
    resp = post(client, text="q1 r2", tgt_lang="rr")
    assert resp.status_code == 200
    body = resp.json()
    direct = greedy_translate_batch(ckpt.restore_model(), sub, ["q1 r2"], 1)[0]
    assert body["translation"] == direct.text
    assert body["tgt_lang"] == "rr"
    assert body["fingerprint"] == fingerprint_checkpoint(ckpt)
    assert body["latency_ms"] >= 0.0
    assert body["truncated"] == direct.truncated


def test_greedy_requests_are_deterministic(client):
    first = post(client, text="q0 r3", tgt_lang="rr").json()
    second = post(client, text="q0 r3", tgt_lang="rr").json()
    assert first["translation"] == second["translation"]


def test_beam_mode_accepted(client):
    resp = post(client, text="q1 r1", tgt_lang="rr", mode="beam")
    assert resp.status_code == 200
    assert isinstance(resp.json()["translation"], str)


def test_src_lang_is_echoed_as_metadata(client):
    body = post(client, text="q1 r1", tgt_lang="rr", src_lang="qq").json()
    assert body["src_lang"] == "qq"


# -- error schema ------------------------------------------------------------------


def expect_error(resp, code):
    assert resp.status_code == ERROR_CODES[code]
    body = resp.json()
    assert body["error"]["code"] == code
    assert body["error"]["message"]


def test_unknown_language_rejected(client):
    expect_error(post(client, text="hi", tgt_lang="xx"), "unknown_language")


def test_empty_text_rejected(client):
    expect_error(post(client, text="   \n ", tgt_lang="rr"), "empty_text")


def test_oversize_text_rejected(trained):
    ckpt, sub = trained
    app = create_app(ckpt, sub, LANGS, ServeConfig(max_chars=8))
    with TestClient(app) as small:
        expect_error(post(small, text="q1 r2 q3 r0", tgt_lang="rr"), "text_too_long")


def test_bad_mode_rejected(client):
    expect_error(post(client, text="hi", tgt_lang="rr", mode="sample"), "bad_mode")


def test_malformed_body_rejected(client):
    expect_error(client.post("/translate", json={"text": "hi"}), "invalid_request")


def test_decode_failure_maps_to_5xx(trained, monkeypatch):
    ckpt, sub = trained
    app = create_app(ckpt, sub, LANGS)
    def boom(*args, **kwargs):
        raise RuntimeError("synthetic decoder fault")
    monkeypatch.setattr(serve, "greedy_translate_batch", boom)
    with TestClient(app) as broken:
        expect_error(post(broken, text="q1 r2", tgt_lang="rr"), "decode_failure")


def test_every_documented_code_has_a_unique_status_family():
    assert set(ERROR_CODES) == {
        "invalid_request", "empty_text", "text_too_long", "unknown_language",
        "bad_mode", "busy", "decode_failure",
    }
    assert all(400 <= status < 600 for status in ERROR_CODES.values())


# -- long-text stitching --------------------------------------------------------------


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=200))
def test_sentence_split_loses_no_characters(text):
    assert "".join(split_sentences(text)) == text


def test_two_sentences_translate_as_the_concatenation(client):
    one = post(client, text="q1 r2.", tgt_lang="rr").json()["translation"]
    two = post(client, text="q3 r0.", tgt_lang="rr").json()["translation"]
    both = post(client, text="q1 r2. q3 r0.", tgt_lang="rr").json()["translation"]
    assert both == f"{one} {two}"


def test_blank_segments_pass_through_unchanged(client):
    single = post(client, text="q1 r2", tgt_lang="rr").json()["translation"]
    body = post(client, text="q1 r2\n\nq1 r2", tgt_lang="rr").json()
    assert body["translation"] == f"{single}\n\n{single}"


def test_whitespace_only_text_is_not_translated(client):
    expect_error(post(client, text="\n\n", tgt_lang="rr"), "empty_text")


def test_truncation_flag_propagates_from_any_segment():
    def fake_batch(segments):
        return [TranslationResult(text=s.upper(), token_ids=(), score=0.0,
                                  truncated=(s == "b."))
                for s in segments]
    stitched, truncated = translate_long(fake_batch, "a. b. c.")
    assert stitched == "A. B. C."
    assert truncated is True
    stitched, truncated = translate_long(fake_batch, "a. c.")
    assert truncated is False


# -- concurrency ------------------------------------------------------------------------


def test_storm_yields_same_translations_as_sequential(trained):
    ckpt, sub = trained
    app = create_app(ckpt, sub, LANGS, ServeConfig(max_concurrent=2, max_inflight=64))
    texts = [f"q{i} r{j}" for i, j in itertools.product(range(4), range(4))] * 4
    with TestClient(app) as c:
        sequential = [post(c, text=t, tgt_lang="rr").json()["translation"] for t in texts]
        with ThreadPoolExecutor(max_workers=32) as pool:
            concurrent = list(pool.map(
                lambda t: post(c, text=t, tgt_lang="rr").json()["translation"], texts))
    assert concurrent == sequential


def test_requests_beyond_the_inflight_limit_get_busy(trained, monkeypatch):
    ckpt, sub = trained
    app = create_app(ckpt, sub, LANGS, ServeConfig(max_concurrent=1, max_inflight=1))
    release = threading.Event()
    entered = threading.Event()
    real = serve.greedy_translate_batch
    def slow(*args, **kwargs):
        entered.set()
        release.wait(timeout=30)
        return real(*args, **kwargs)
    monkeypatch.setattr(serve, "greedy_translate_batch", slow)
    with TestClient(app) as c:
        with ThreadPoolExecutor(max_workers=1) as pool:
            blocked = pool.submit(lambda: post(c, text="q1 r2", tgt_lang="rr"))
            assert entered.wait(timeout=30)
            expect_error(post(c, text="q3 r0", tgt_lang="rr"), "busy")
            release.set()
            assert blocked.result(timeout=30).status_code == 200


# -- request log -----------------------------------------------------------------------


def test_request_log_replays_to_identical_translations(trained, tmp_path):
    ckpt, sub = trained
    log_path = tmp_path / "requests.jsonl"
    app = create_app(ckpt, sub, LANGS, ServeConfig(request_log=str(log_path)))
    with TestClient(app) as c:
        for text in ("q0 r0", "q1 r2", "q3 r3"):
            assert post(c, text=text, tgt_lang="rr").status_code == 200
        entries = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert len(entries) == 3
        for entry in entries:
            replayed = c.post("/translate", json=entry["request"]).json()
            assert replayed["translation"] == entry["response"]["translation"]
            assert replayed["fingerprint"] == entry["response"]["fingerprint"]


def test_error_responses_are_not_logged(trained, tmp_path):
    ckpt, sub = trained
    log_path = tmp_path / "requests.jsonl"
    app = create_app(ckpt, sub, LANGS, ServeConfig(request_log=str(log_path)))
    with TestClient(app) as c:
        post(c, text="", tgt_lang="rr")
        post(c, text="hi", tgt_lang="xx")
    assert not log_path.exists()


# -- configuration -----------------------------------------------------------------------


def test_bad_serve_config_rejected():
    with pytest.raises(ConfigError):
        ServeConfig(max_chars=0)
    with pytest.raises(ConfigError):
        ServeConfig(max_concurrent=0)
    with pytest.raises(ConfigError):
        ServeConfig(max_inflight=0)


def test_model_with_too_few_factors_rejected(trained):
    ckpt, sub = trained
    with pytest.raises(ConfigError, match="factors"):
        create_app(ckpt, sub, ["aa", "bb", "cc"])  # model has factor_vocab=2