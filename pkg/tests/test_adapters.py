import json
from pathlib import Path

import numpy as np
import pytest

from preimage_opt.adapters import (AuthError, CacheMissError, ClientRequestError,
                                   EmptyValidationSetError, Example, LLMEmbedder, LLMMapper,
                                   LLMObjective, ServerError, ServiceClient, ServiceConfig,
                                   TransportError, WidthMismatchError, blackbox_evaluate,
                                   exact_match, f1_score, whitebox_embed, whitebox_generate)
from preimage_opt.adapters.llm import EVALUATION_TEMPLATE, generation_prompt
from preimage_opt.adapters.service import payload_hash
from preimage_opt.adapters.stub import StubServer
from preimage_opt.mapping import build_preimage_index, map_pool

FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "stub_task.json").read_text())
EXEMPLARS = [Example(**e) for e in FIXTURE["exemplars"]]
VALIDATION = [Example(**e) for e in FIXTURE["validation"]]


def _cfg(tmp_path, url="http://127.0.0.1:9", **kw):
    base = dict(base_url=url, cache_dir=str(tmp_path / "cache"), backoff_s=0.0, max_retries=2,
                timeout_ms=2000)
    base.update(kw)
    return ServiceConfig(**base)


def test_greedy_decoding_enforced():
    with pytest.raises(ValueError):
        ServiceConfig(temperature=0.7)
    with pytest.raises(ValueError):
        ServiceConfig(do_sample=True)


def test_constant_generator_gives_one_preimage(tmp_path):
    with StubServer(generate=lambda p: "Always the same.") as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            pool = np.random.default_rng(0).normal(size=(6, 4))
            keys = map_pool(LLMMapper(client, EXEMPLARS), pool)
    assert build_preimage_index(keys).n_groups == 1


def test_generate_is_deterministic_and_canonical(tmp_path):
    z = np.array([0.5, -1.0, 2.0, 0.1])
    with StubServer() as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            a = whitebox_generate(client, z, EXEMPLARS)
            b = whitebox_generate(client, z, EXEMPLARS)
        sent = srv.requests[0][1]
    assert a == b == "Rewrite the input following pattern 101."
    assert sent["temperature"] == 0.0 and sent["do_sample"] is False
    assert sent["soft_prompt"] == z.tolist()
    assert "[INPUT]" not in sent["prompt"] and EXEMPLARS[0].input in sent["prompt"]
    assert len(srv.requests) == 1  # second call served from the cache


def test_replay_reproduces_keys_without_network(tmp_path):
    pool = np.random.default_rng(1).normal(size=(10, 4))
    with StubServer() as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            live = [whitebox_generate(client, z, EXEMPLARS) for z in pool]
        recorded = {payload_hash(path, p): p for path, p in srv.requests}
    assert len(recorded) == 10
    # server is gone; replay must use only the cache
    with ServiceClient(_cfg(tmp_path, replay=True)) as client:
        replayed = [whitebox_generate(client, z, EXEMPLARS) for z in pool]
        assert client.network_calls == 0
        with pytest.raises(CacheMissError):
            whitebox_generate(client, pool[0] + 1.0, EXEMPLARS)
    assert replayed == live
    files = sorted((tmp_path / "cache").glob("*.json"))
    assert {f.stem for f in files} == set(recorded)


def test_embed_width_checked(tmp_path):
    z = np.ones(6)
    with StubServer(width=8) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            e1 = whitebox_embed(client, z, 8)
            np.testing.assert_array_equal(e1, LLMEmbedder(client, 8).embed(z))
            with pytest.raises(WidthMismatchError):
                whitebox_embed(client, z, 16)


def test_retries_then_succeeds(tmp_path):
    with StubServer(fail_first=2) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url, max_retries=2)) as client:
            text = whitebox_generate(client, np.zeros(3), EXEMPLARS)
        assert len(srv.requests) == 3
    assert text.startswith("Rewrite")


def test_retry_exhaustion_raises_server_error(tmp_path):
    with StubServer(fail_first=10) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url, max_retries=1)) as client:
            with pytest.raises(ServerError):
                whitebox_generate(client, np.zeros(3), EXEMPLARS)
        assert len(srv.requests) == 2


def test_non_retryable_status_mapping(tmp_path):
    with StubServer(fail_first=10, fail_status=401) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            with pytest.raises(AuthError):
                whitebox_generate(client, np.zeros(3), EXEMPLARS)
        assert len(srv.requests) == 1
    with StubServer(fail_first=10, fail_status=422) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            with pytest.raises(ClientRequestError):
                whitebox_generate(client, np.zeros(3), EXEMPLARS)


def test_unreachable_service_is_transport_error(tmp_path):
    with ServiceClient(_cfg(tmp_path, "http://127.0.0.1:9", max_retries=1)) as client:
        with pytest.raises(TransportError):
            whitebox_generate(client, np.zeros(3), EXEMPLARS)
        assert client.network_calls == 2


def _answers(table):
    def chat(content):
        for ex_in, out in table.items():
            if content.endswith(f"Input: {ex_in}\nOutput:"):
                return out
        return "?"
    return chat


def test_blackbox_exact_match_fixture(tmp_path):
    # 5 examples, 3 answered correctly -> 0.6
    table = {e.input: e.output for e in VALIDATION[:3]}
    table.update({e.input: "wrong" for e in VALIDATION[3:]})
    with StubServer(chat=_answers(table)) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url)) as client:
            score = blackbox_evaluate(client, "Do the task.", VALIDATION)
            assert LLMObjective(client, VALIDATION)("Do the task.") == score
        contents = [p["messages"][0]["content"] for _, p in srv.requests]
    assert score == pytest.approx(0.6)
    assert all(c.startswith("Do the task.") for c in contents)


def test_blackbox_all_correct(tmp_path):
    table = {e.input: e.output for e in VALIDATION}
    with StubServer(chat=_answers(table)) as srv:
        with ServiceClient(_cfg(tmp_path, srv.url, parallelism=2)) as client:
            assert blackbox_evaluate(client, "x", VALIDATION) == 1.0


def test_blackbox_empty_validation(tmp_path):
    with ServiceClient(_cfg(tmp_path, replay=True)) as client:
        with pytest.raises(EmptyValidationSetError):
            blackbox_evaluate(client, "x", [])


def test_metrics():
    assert exact_match(" Paris ", "paris") == 1.0
    assert exact_match("Lyon", "Paris") == 0.0
    assert f1_score("the cat sat", "the cat") == pytest.approx(0.8)
    assert f1_score("dog", "cat") == 0.0


def test_templates_fill_slots():
    prompt = generation_prompt(EXEMPLARS)
    assert "[" not in prompt.replace("[EXEMPLARS]", "")
    assert "[INSTRUCTION]" in EVALUATION_TEMPLATE and "[INPUT]" in EVALUATION_TEMPLATE
