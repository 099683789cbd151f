import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from acquisition_helpers import random_inputs
from acqsearch import afdsl
from acqsearch.acquisition import DSL_FORMS, AfInput, select
from acqsearch.afdsl import Program
from acqsearch.database import ScoredProgram
from acqsearch.mutation import (
    MUTATIONS,
    LocalMutator,
    MutatorConfig,
    MutatorConfigError,
    RemoteMutator,
    build_prompt,
    extract_program,
    mutate,
)

HEADER = '"""Improve Bayesian Optimization by discovering a new acquisition function."""'


def sp(text, score):
    return ScoredProgram.create(Program.from_text(text), [score])


EI = sp(DSL_FORMS["ei"], 1.0)
OOD = sp(DSL_FORMS["funbo_ood"], 1.5)


# -- prompts ---------------------------------------------------------------


def test_prompt_orders_by_ascending_score():
    p = build_prompt(OOD, EI)
    assert p.low is EI and p.high is OOD
    assert p.text.startswith(HEADER)
    i0 = p.text.index("acquisition_function_v0")
    i1 = p.text.index("acquisition_function_v1")
    i2 = p.text.index("acquisition_function_v2")
    assert i0 < p.text.index(EI.program.text) < i1 < p.text.index(OOD.program.text) < i2
    assert p.text.rstrip().endswith('"""Improved version of the previous `acquisition_function`."""')
    assert "Improved version of `acquisition_function_v0`." in p.text


def test_prompt_with_single_program_requests_v1():
    for p in (build_prompt(EI), build_prompt(EI, EI)):
        assert p.requested_version == 1
        assert "acquisition_function_v2" not in p.text
        assert p.text.count(EI.program.text) == 1


def test_prompt_tie_rules():
    short = sp("argmax(VAR)", 1.0)
    long = sp("argmax(VAR + MEAN)", 1.0)
    assert build_prompt(long, short).programs == (short, long)
    a, b = sp("argmax(MEAN)", 1.0), sp("argmin(MEAN)", 1.0)
    first = min((a, b), key=lambda p: p.id)
    assert build_prompt(a, b).programs[0] is first
    assert build_prompt(b, a).programs[0] is first


def test_prompt_is_pure():
    assert build_prompt(EI, OOD).text == build_prompt(OOD, EI).text


# -- extraction ------------------------------------------------------------


def test_extract_from_fence():
    text = "Here it is:\n```af\nargmax(VAR)\n```\nand ```\nnot code\n```"
    assert extract_program(text) == "argmax(VAR)"


def test_extract_skips_broken_fence():
    text = "```\nargmax(VAR\n```\n```python\nargmin(MEAN)\n```"
    assert extract_program(text) == "argmin(MEAN)"


def test_extract_from_prose():
    text = "Sure! Try this one.\nlet s = sqrt(VAR) in\nargmax(s - MEAN)\nIt explores more."
    assert extract_program(text) == "let s = sqrt(VAR) in\nargmax(s - MEAN)"


def test_extract_nothing():
    assert extract_program("no program here, argmax of nothing") is None


# -- local mutations -------------------------------------------------------


def test_local_zero_and_determinism():
    m = LocalMutator()
    p = build_prompt(EI, OOD)
    assert m.propose(p, 0, seed=1) == []
    assert m.propose(p, 12, seed=5) == m.propose(p, 12, seed=5)
    assert len(set(m.propose(p, 24, seed=6))) > 3


def test_local_outputs_parse_within_bounds():
    m = LocalMutator()
    rng = np.random.default_rng(0)
    for k in range(30):
        a = ScoredProgram.create(Program.from_ast(afdsl.random_ast(rng)), [0.1])
        b = ScoredProgram.create(Program.from_ast(afdsl.random_ast(rng)), [0.2])
        for text in m.propose(build_prompt(a, b), 5, seed=k):
            prog = Program.from_text(text)
            assert prog.text == text
            assert afdsl.depth(prog.ast) <= afdsl.MAX_DEPTH
            assert afdsl.count_nodes(prog.ast) <= afdsl.MAX_NODES


@pytest.mark.parametrize("kind", MUTATIONS)
def test_each_mutation_changes_program(kind):
    ast = afdsl.parse("let s = sqrt(VAR) in argmax((INCUMBENT - MEAN + 0.5 * s) * normcdf(MEAN))")
    donor = Program.from_text(DSL_FORMS["ei"]).ast
    changed = 0
    for seed in range(5):
        new = mutate(ast, kind, np.random.default_rng(seed), donor)
        afdsl.validate(new)
        changed += afdsl.render(new) != afdsl.render(ast)
    assert changed >= 3


def test_constant_perturbation_range():
    rng = np.random.default_rng(0)
    ast = afdsl.parse("argmax(MEAN * 4)")
    for _ in range(200):
        lit = mutate(ast, "constant", rng).arg.right.value
        assert 2.0 <= lit <= 8.0


def test_exploration_bonus_keeps_ei_at_zero_beta():
    ei_ast = Program.from_text(DSL_FORMS["ei"]).ast
    rng = np.random.default_rng(11)
    inputs = random_inputs(np.random.default_rng(12), 200)
    for _ in range(10):
        prog = Program.from_ast(mutate(ei_ast, "bonus", rng))
        assert "BETA" in prog.text
        for m, v, y, _ in inputs:
            inp = AfInput(m, v, y, beta=0.0)
            assert prog.select(inp) == select("ei", inp)


def test_toggle_preserves_selection():
    ast = Program.from_text(DSL_FORMS["ei"]).ast
    flipped = Program.from_ast(mutate(ast, "toggle", np.random.default_rng(0)))
    assert flipped.text.startswith("argmin(-(")
    back = Program.from_ast(mutate(flipped.ast, "toggle", np.random.default_rng(0)))
    assert back.text == DSL_FORMS["ei"]
    for m, v, y, b in random_inputs(np.random.default_rng(1), 200):
        assert flipped.select(AfInput(m, v, y, b)) == select("ei", AfInput(m, v, y, b))


def test_graft_respects_scope():
    rng = np.random.default_rng(0)
    ast = afdsl.parse("argmax(MEAN)")
    donor = afdsl.parse("let s = sqrt(VAR) in argmax(s * 2)")
    for _ in range(50):
        new = mutate(ast, "graft", rng, donor)
        if new is not None:
            afdsl.validate(new)


# -- remote client ---------------------------------------------------------


class _Stub:
    """Tiny completion endpoint driven by a list of (status, body, delay)."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with stub.lock:
                    stub.requests.append((dict(self.headers), body))
                    status, payload, delay = (stub.script.pop(0) if len(stub.script) > 1
                                              else stub.script[0])
                time.sleep(delay)
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.end_headers()
                    self.wfile.write(json.dumps(payload).encode())
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/complete"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    made = []

    def make(script):
        s = _Stub(script)
        made.append(s)
        return s

    yield make
    for s in made:
        s.close()


@pytest.fixture
def key(monkeypatch):
    monkeypatch.setenv("TEST_AF_KEY", "sekrit-123")
    return "sekrit-123"


def _cfg(url, **kw):
    base = dict(kind="remote", endpoint=url, api_key_env="TEST_AF_KEY", timeout=2.0,
                retries=3, max_in_flight=3)
    base.update(kw)
    return MutatorConfig(**base)


def test_remote_returns_all_valid_programs(stub, key, tmp_path):
    s = stub([(200, {"text": "```\nargmax(VAR)\n```"}, 0.0)])
    log = tmp_path / "debug.log"
    m = RemoteMutator(_cfg(s.url, debug_log=str(log)))
    out = m.propose(build_prompt(EI, OOD), 4)
    assert out == ["argmax(VAR)"] * 4
    headers, body = s.requests[0]
    assert headers["Authorization"] == f"Bearer {key}"
    assert set(body) == {"prompt", "temperature", "max_tokens"}
    assert body["temperature"] == 0.8
    assert key not in log.read_text()


def test_remote_prose_and_junk(stub, key):
    s = stub([(200, {"text": "I suggest\nargmin(MEAN - sqrt(VAR))\nbecause..."}, 0.0),
              (200, {"text": "I cannot help with that."}, 0.0)])
    m = RemoteMutator(_cfg(s.url, max_in_flight=1))
    out = m.propose(build_prompt(EI), 2)
    assert out == ["argmin(MEAN - sqrt(VAR))"]
    assert m.unparseable == 1


def test_remote_retries_server_errors(stub, key):
    s = stub([(500, {}, 0.0), (503, {}, 0.0), (200, {"text": "argmax(VAR)"}, 0.0)])
    m = RemoteMutator(_cfg(s.url, max_in_flight=1))
    assert m.propose(build_prompt(EI), 1) == ["argmax(VAR)"]
    assert len(s.requests) == 3


def test_remote_timeouts_give_empty_batch(stub, key, caplog):
    s = stub([(200, {"text": "argmax(VAR)"}, 1.0)])
    m = RemoteMutator(_cfg(s.url, timeout=0.1, max_in_flight=1))
    with caplog.at_level(logging.ERROR, logger="acqsearch.mutation"):
        assert m.propose(build_prompt(EI), 1) == []
    assert len(s.requests) == 3
    assert m.failures == 1
    assert "failed after 3 attempts" in caplog.text
    assert key not in caplog.text


def test_remote_auth_failure_is_fatal(stub, key):
    s = stub([(401, {"error": "bad key"}, 0.0)])
    m = RemoteMutator(_cfg(s.url))
    with pytest.raises(MutatorConfigError, match="TEST_AF_KEY"):
        m.propose(build_prompt(EI), 2)


def test_remote_missing_key(monkeypatch):
    monkeypatch.delenv("TEST_AF_KEY", raising=False)
    with pytest.raises(MutatorConfigError, match="TEST_AF_KEY"):
        RemoteMutator(_cfg("http://127.0.0.1:9/x"))


def test_completions_translator(stub, key):
    s = stub([(200, {"choices": [{"text": "argmax(MEAN)"}]}, 0.0)])
    m = RemoteMutator(_cfg(s.url, translator="completions", model="m1"))
    assert m.propose(build_prompt(EI), 1) == ["argmax(MEAN)"]
    assert s.requests[0][1]["model"] == "m1"


def test_config_validation():
    with pytest.raises(ValueError):
        MutatorConfig(samples_per_prompt=0)
    with pytest.raises(ValueError):
        MutatorConfig(kind="oracle")
    with pytest.raises(ValueError):
        MutatorConfig(translator="grpc")
