"""Candidate generation: prompts, a remote text-completion mutator, local mutations.

Both mutators implement ``propose(prompt, n, seed) -> list[str]`` and return
canonical program text.  Remote responses are only ever parsed against the
expression grammar, never executed.
"""

from __future__ import annotations

import concurrent.futures
import logging
import os
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import afdsl
from .afdsl import BinOp, Call, DslError, Let, Lit, Name, Neg, Program, Reduce, Var

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE_VERSION = "v1"
FIRST_DOCSTRING = "Returns the index of the point to collect ..."
NEXT_DOCSTRING = "Improved version of `acquisition_function_v{prev}`."
REQUEST_DOCSTRING = "Improved version of the previous `acquisition_function`."


def _template() -> str:
    return (resources.files("acqsearch.resources")
            / f"prompt_{PROMPT_TEMPLATE_VERSION}.txt").read_text()


@dataclass(frozen=True)
class Prompt:
    text: str
    programs: tuple  # ScoredProgram, ascending score

    @property
    def high(self):
        return self.programs[-1]

    @property
    def low(self):
        return self.programs[0]

    @property
    def requested_version(self) -> int:
        return len(self.programs)


def build_prompt(first, second=None) -> Prompt:
    """Prompt showing one or two programs in ascending score order.

    Equal scores put the shorter program first, then the smaller id.  When
    only one distinct program is given the prompt asks for ``v1``.
    """
    progs = [first] if second is None or second.id == first.id else [first, second]
    progs.sort(key=lambda p: (p.aggregate, p.length, p.id))
    blocks = []
    for k, p in enumerate(progs):
        doc = FIRST_DOCSTRING if k == 0 else NEXT_DOCSTRING.format(prev=k - 1)
        blocks.append(f'acquisition_function_v{k}:\n"""{doc}"""\n```af\n{p.program.text}\n```\n')
    blocks.append(f'acquisition_function_v{len(progs)}:\n"""{REQUEST_DOCSTRING}"""\n')
    text = _template().replace("{functions}", "\n".join(blocks))
    return Prompt(text, tuple(progs))


_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n(.*?)```", re.DOTALL)
_START = re.compile(r"^\s*(let\s|argmax\s*\(|argmin\s*\()")


def extract_program(text: str) -> str | None:
    """Canonical text of the first parseable program in a model response."""
    for block in _FENCE.findall(text):
        try:
            return Program.from_text(block).text
        except DslError:
            continue
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if not _START.match(line):
            continue
        for j in range(i + 1, min(len(lines), i + 60) + 1):
            try:
                return Program.from_text("\n".join(lines[i:j])).text
            except DslError:
                continue
    return None


# ---------------------------------------------------------------------------
# remote mutator


class MutatorConfigError(RuntimeError):
    """Fatal configuration problem (missing key, rejected credentials...)."""


@dataclass
class MutatorConfig:
    kind: str = "local"
    endpoint: str | None = None
    api_key_env: str = "AF_LLM_API_KEY"
    samples_per_prompt: int = 12
    temperature: float = 0.8
    timeout: float = 60.0
    retries: int = 3
    max_tokens: int = 1024
    max_in_flight: int = 4
    translator: str = "minimal"
    model: str | None = None
    debug_log: str | None = None

    def __post_init__(self):
        if self.samples_per_prompt < 1:
            raise ValueError("samples_per_prompt must be >= 1")
        if self.kind not in ("local", "remote"):
            raise ValueError(f"unknown mutator kind {self.kind!r}")
        if self.translator not in TRANSLATORS:
            raise ValueError(f"unknown translator {self.translator!r}")


def _minimal_request(prompt, cfg):
    return {"prompt": prompt, "temperature": cfg.temperature, "max_tokens": cfg.max_tokens}


def _minimal_response(body):
    return body["text"]


def _completions_request(prompt, cfg):
    body = _minimal_request(prompt, cfg)
    if cfg.model:
        body["model"] = cfg.model
    return body


def _completions_response(body):
    return body["choices"][0]["text"]


TRANSLATORS = {
    "minimal": (_minimal_request, _minimal_response),
    "completions": (_completions_request, _completions_response),
}


class RemoteMutator:
    def __init__(self, cfg: MutatorConfig, client=None):
        import httpx

        self.cfg = cfg
        if not cfg.endpoint:
            raise MutatorConfigError("remote mutator needs an endpoint URL")
        self._key = os.environ.get(cfg.api_key_env)
        if not self._key:
            raise MutatorConfigError(
                f"environment variable {cfg.api_key_env} holding the API key is not set")
        self._httpx = httpx
        self.client = client or httpx.Client(timeout=cfg.timeout)
        self.failures = 0
        self.unparseable = 0

    def _redact(self, text: str) -> str:
        return text.replace(self._key, "***") if self._key else text

    def _debug(self, kind, text):
        if self.cfg.debug_log:
            with open(self.cfg.debug_log, "a") as fh:
                fh.write(f"--- {kind}\n{self._redact(text)}\n")

    def _one(self, prompt_text: str) -> str | None:
        make_body, read_body = TRANSLATORS[self.cfg.translator]
        headers = {"Authorization": f"Bearer {self._key}"}
        last_error = None
        for attempt in range(self.cfg.retries):
            try:
                resp = self.client.post(self.cfg.endpoint, json=make_body(prompt_text, self.cfg),
                                        headers=headers, timeout=self.cfg.timeout)
            except self._httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code in (401, 403):
                raise MutatorConfigError(
                    f"endpoint rejected the credentials in {self.cfg.api_key_env} "
                    f"(HTTP {resp.status_code})")
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = RuntimeError(f"HTTP {resp.status_code}")
                continue
            try:
                resp.raise_for_status()
                return read_body(resp.json())
            except (ValueError, KeyError, IndexError, TypeError,
                    self._httpx.HTTPStatusError) as exc:
                last_error = exc
                break
        self.failures += 1
        logger.error("completion request failed after %d attempts: %s",
                     self.cfg.retries, self._redact(str(last_error)))
        return None

    def propose(self, prompt: Prompt, n: int, seed=None) -> list[str]:
        self._debug("prompt", prompt.text)
        with concurrent.futures.ThreadPoolExecutor(max(1, self.cfg.max_in_flight)) as pool:
            responses = list(pool.map(self._one, [prompt.text] * n))
        out = []
        for text in responses:
            if text is None:
                continue
            self._debug("response", text)
            prog = extract_program(text)
            if prog is None:
                self.unparseable += 1
            else:
                out.append(prog)
        return out


# ---------------------------------------------------------------------------
# local structural mutations

MUTATIONS = ("constant", "swap", "graft", "bonus", "toggle")
_UNARY_CLASS = ("abs", "sqrt", "exp", "log", "normcdf", "normpdf")
_BINARY_CLASS = ("min", "max", "pow", "normcdf_loc")
_OP_SWAP = {"+": "-", "-": "+", "*": "/", "/": "*"}


def _kids(e):
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Call):
        return e.args
    return ()


def _with_kids(e, kids):
    if isinstance(e, Neg):
        return Neg(kids[0])
    if isinstance(e, BinOp):
        return BinOp(e.op, kids[0], kids[1])
    if isinstance(e, Call):
        return Call(e.fn, tuple(kids))
    return e


def _walk(e, path=()):
    yield path, e
    for i, k in enumerate(_kids(e)):
        yield from _walk(k, path + (i,))


def _replace(e, path, new):
    if not path:
        return new
    kids = list(_kids(e))
    kids[path[0]] = _replace(kids[path[0]], path[1:], new)
    return _with_kids(e, kids)


def _names_in(e) -> set:
    return {n.id for _, n in _walk(e) if isinstance(n, Name)}


def _split(ast):
    bindings = []
    node = ast
    while isinstance(node, Let):
        bindings.append((node.name, node.value))
        node = node.body
    return bindings, node


def _join(bindings, reduce):
    node = reduce
    for name, value in reversed(bindings):
        node = Let(name, value, node)
    return node


def _slots(ast):
    """Every expression position as (slot, path, node, names in scope)."""
    bindings, reduce = _split(ast)
    out = []
    for k, (_, value) in enumerate(bindings):
        scope = {b[0] for b in bindings[:k]}
        out += [(k, p, n, scope) for p, n in _walk(value)]
    scope = {b[0] for b in bindings}
    out += [(len(bindings), p, n, scope) for p, n in _walk(reduce.arg)]
    return out


def _rewrite(ast, slot, path, new):
    bindings, reduce = _split(ast)
    if slot < len(bindings):
        name, value = bindings[slot]
        bindings[slot] = (name, _replace(value, path, new))
    else:
        reduce = Reduce(reduce.kind, _replace(reduce.arg, path, new))
    return _join(bindings, reduce)


def mutate(ast, kind: str, rng: np.random.Generator, donor=None):
    """Apply one named structural mutation; returns None when it does not apply."""
    slots = _slots(ast)
    if kind == "constant":
        lits = [s for s in slots if isinstance(s[2], Lit) and s[2].value > 0]
        if not lits:
            return None
        slot, path, node, _ = lits[rng.integers(len(lits))]
        value = float(f"{node.value * rng.uniform(0.5, 2.0):.4g}")
        return _rewrite(ast, slot, path, Lit(value))
    if kind == "swap":
        cands = [s for s in slots if isinstance(s[2], BinOp)
                 or (isinstance(s[2], Call) and s[2].fn in _UNARY_CLASS + _BINARY_CLASS)]
        if not cands:
            return None
        slot, path, node, _ = cands[rng.integers(len(cands))]
        if isinstance(node, BinOp):
            new = BinOp(_OP_SWAP[node.op], node.left, node.right)
        else:
            group = _UNARY_CLASS if node.fn in _UNARY_CLASS else _BINARY_CLASS
            others = [f for f in group if f != node.fn]
            new = Call(others[rng.integers(len(others))], node.args)
        return _rewrite(ast, slot, path, new)
    if kind == "graft":
        source = donor if donor is not None else ast
        pieces = [n for _, _, n, _ in _slots(source)]
        slot, path, _, scope = slots[rng.integers(len(slots))]
        pieces = [p for p in pieces if _names_in(p) <= scope]
        if not pieces:
            return None
        return _rewrite(ast, slot, path, pieces[rng.integers(len(pieces))])
    if kind == "bonus":
        slot, path, node, _ = slots[rng.integers(len(slots))]
        bonus = BinOp("*", Var("BETA"), Call("sqrt", (Var("VAR"),)))
        return _rewrite(ast, slot, path, BinOp("+", node, bonus))
    if kind == "toggle":
        bindings, reduce = _split(ast)
        flipped = "argmin" if reduce.kind == "argmax" else "argmax"
        arg = reduce.arg.arg if isinstance(reduce.arg, Neg) else Neg(reduce.arg)
        return _join(bindings, Reduce(flipped, arg))
    raise ValueError(f"unknown mutation {kind!r}")


class LocalMutator:
    """Seeded structural edits of the higher-scoring program in the prompt."""

    def __init__(self, kinds=MUTATIONS, max_attempts: int = 20):
        self.kinds = tuple(kinds)
        self.max_attempts = max_attempts

    def propose(self, prompt: Prompt, n: int, seed=0) -> list[str]:
        rng = np.random.default_rng(seed)
        target = prompt.high.program.ast
        donor = prompt.low.program.ast
        out = []
        for _ in range(n):
            text = prompt.high.program.text
            for _ in range(self.max_attempts):
                kind = self.kinds[rng.integers(len(self.kinds))]
                new = mutate(target, kind, rng, donor)
                if new is None:
                    continue
                try:
                    afdsl.validate(new)
                except DslError:
                    continue
                text = afdsl.render(new)
                break
            out.append(text)
        return out


def make_mutator(cfg: MutatorConfig):
    return RemoteMutator(cfg) if cfg.kind == "remote" else LocalMutator()
