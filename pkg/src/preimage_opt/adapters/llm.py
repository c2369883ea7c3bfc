"""Mapper, embedder and evaluator contracts backed by LLM services.

Wire schemas (all JSON over POST):

``/v1/generate`` (white box, soft-prompt injection)::

    {"model", "soft_prompt": [floats], "prompt": str, "temperature": 0,
     "do_sample": false, "max_new_tokens": int}  ->  {"text": str}

``/v1/embed`` (white box, last-token final-layer state)::

    {"model", "soft_prompt": [floats], "prompt": str}  ->  {"embedding": [floats]}

``/v1/chat/completions`` (black box)::

    {"model", "messages": [{"role": "user", "content": str}], "temperature": 0}
        ->  {"choices": [{"message": {"content": str}}]}
"""

from __future__ import annotations

import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..mapping import canonicalize_instruction
from .service import ResponseFormatError, ServiceClient

GENERATE = "/v1/generate"
EMBED = "/v1/embed"
CHAT = "/v1/chat/completions"

EXEMPLAR_TEMPLATE = "Input: [INPUT]\nOutput: [OUTPUT]"
GENERATION_TEMPLATE = ("Below are inputs paired with the outputs they should produce.\n\n"
                       "[EXEMPLARS]\n\nWrite the single instruction that turns each input "
                       "into its output.\nInstruction:")
EVALUATION_TEMPLATE = "[INSTRUCTION]\n\nInput: [INPUT]\nOutput:"


class WidthMismatchError(ValueError):
    pass


class EmptyValidationSetError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    input: str
    output: str


def fill(template: str, **slots: str) -> str:
    out = template
    for name, value in slots.items():
        out = out.replace(f"[{name.upper()}]", value)
    return out


def exemplar_block(exemplars: Sequence[Example]) -> str:
    return "\n\n".join(fill(EXEMPLAR_TEMPLATE, input=e.input, output=e.output)
                       for e in exemplars)


def generation_prompt(exemplars: Sequence[Example]) -> str:
    return fill(GENERATION_TEMPLATE, exemplars=exemplar_block(exemplars))


def _soft_prompt(z) -> list[float]:
    return [float(v) for v in np.asarray(z, dtype=float).ravel()]


def whitebox_generate(client: ServiceClient, z, exemplars: Sequence[Example]) -> str:
    """Instruction text for soft prompt ``z``, canonicalized into a key."""
    payload = {"model": client.cfg.model, "soft_prompt": _soft_prompt(z),
               "prompt": generation_prompt(exemplars), **client.cfg.decode}
    body = client.post(GENERATE, payload)
    if not isinstance(body.get("text"), str):
        raise ResponseFormatError(f"{GENERATE} response lacks a 'text' string")
    return canonicalize_instruction(body["text"])


def whitebox_embed(client: ServiceClient, z, d_e: int, prompt: str = "") -> np.ndarray:
    payload = {"model": client.cfg.model, "soft_prompt": _soft_prompt(z), "prompt": prompt}
    body = client.post(EMBED, payload)
    vec = np.asarray(body.get("embedding", []), dtype=float)
    if vec.ndim != 1 or vec.size != d_e:
        raise WidthMismatchError(f"embedding width {vec.size} != expected {d_e}")
    return vec


def chat_complete(client: ServiceClient, content: str) -> str:
    payload = {"model": client.cfg.model, "temperature": 0.0,
               "messages": [{"role": "user", "content": content}]}
    body = client.post(CHAT, payload)
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ResponseFormatError(f"{CHAT} response lacks choices[0].message.content") from exc


_TOKEN = re.compile(r"\w+")


def exact_match(prediction: str, target: str) -> float:
    return float(prediction.strip().lower() == target.strip().lower())


def f1_score(prediction: str, target: str) -> float:
    """Token-overlap F1 between lowercase word tokens."""
    p = _TOKEN.findall(prediction.lower())
    t = _TOKEN.findall(target.lower())
    common = sum((Counter(p) & Counter(t)).values())
    if common == 0:
        return 0.0
    precision, recall = common / len(p), common / len(t)
    return 2 * precision * recall / (precision + recall)


def blackbox_evaluate(client: ServiceClient, instruction: str, validation: Sequence[Example],
                      metric: Callable[[str, str], float] = exact_match) -> float:
    """Mean metric of the black-box model's answers over ``validation``.

    Requests fan out over ``cfg.parallelism`` threads; scores are reduced in
    example order so the mean is bitwise reproducible.
    """
    if len(validation) == 0:
        raise EmptyValidationSetError("validation set is empty")

    def one(ex: Example) -> float:
        answer = chat_complete(client, fill(EVALUATION_TEMPLATE, instruction=instruction,
                                            input=ex.input))
        return float(metric(answer, ex.output))

    with ThreadPoolExecutor(max_workers=client.cfg.parallelism) as pool:
        scores = list(pool.map(one, validation))
    return float(sum(scores) / len(scores))


class LLMMapper:
    """``Mapper`` contract: soft prompt -> canonical instruction text."""

    deterministic = True

    def __init__(self, client: ServiceClient, exemplars: Sequence[Example]):
        self.client = client
        self.exemplars = list(exemplars)

    def map(self, z) -> str:
        return whitebox_generate(self.client, z, self.exemplars)

    def map_many(self, pool: np.ndarray) -> list[str]:
        with ThreadPoolExecutor(max_workers=self.client.cfg.parallelism) as ex:
            return list(ex.map(self.map, list(pool)))


class LLMEmbedder:
    """``Embedder`` contract backed by ``/v1/embed``."""

    def __init__(self, client: ServiceClient, width: int):
        self.client = client
        self.width = width

    def embed(self, z) -> np.ndarray:
        return whitebox_embed(self.client, z, self.width)


class LLMObjective:
    """Black-box score of an instruction key on a local validation set."""

    def __init__(self, client: ServiceClient, validation: Sequence[Example],
                 metric: Callable[[str, str], float] = exact_match):
        if len(validation) == 0:
            raise EmptyValidationSetError("validation set is empty")
        self.client = client
        self.validation = list(validation)
        self.metric = metric

    def __call__(self, key: str) -> float:
        return blackbox_evaluate(self.client, key, self.validation, self.metric)
