"""Client for the external truncation judge.

The judge is any chat-completions-style HTTP service. Round 1 sends the
three-segment judging prompt; if no boxed 0/1 verdict can be parsed from
the reply, round 2 resends the conversation with the early-stopping text
appended to the round-1 output and tighter sampling. Transport failures
get their own retry budget (distinct from the two protocol rounds); an
unparseable round-2 reply raises instead of guessing a label.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources

import requests

from .errors import JudgeUndecidedError, TransportError
from .oracle import SamplingConfig

ROUND1_SAMPLING = SamplingConfig(
    temperature=0.2, top_p=0.7, max_new_tokens=2000, repetition_penalty=1.1
)
ROUND2_SAMPLING = SamplingConfig(
    temperature=0.1, top_p=0.7, max_new_tokens=1000, repetition_penalty=1.1
)

_BOXED_VERDICT = re.compile(r"\\boxed\{\s*([01])\s*\}")


def _load_asset(name: str) -> str:
    return resources.files("segsel.assets").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str
    model: str = "judge"
    round1: SamplingConfig = field(default_factory=lambda: ROUND1_SAMPLING)
    round2: SamplingConfig = field(default_factory=lambda: ROUND2_SAMPLING)
    timeout: float = 60.0
    transport_retries: int = 3
    backoff_base: float = 0.5
    bearer_token: str | None = None

    @classmethod
    def from_env(cls, environ) -> "JudgeConfig | None":
        """Endpoint and credentials from SEGSEL_JUDGE_ENDPOINT / _TOKEN / _MODEL."""
        endpoint = environ.get("SEGSEL_JUDGE_ENDPOINT")
        if not endpoint:
            return None
        return cls(
            endpoint=endpoint,
            model=environ.get("SEGSEL_JUDGE_MODEL", "judge"),
            bearer_token=environ.get("SEGSEL_JUDGE_TOKEN"),
        )


def render_judge_prompt(s_prev: str, s_mid: str, s_next: str) -> str:
    template = _load_asset("truncation_judge_prompt.txt")
    return (
        template.replace("{SEGMENT 1}", s_prev)
        .replace("{SEGMENT 2}", s_mid)
        .replace("{SEGMENT 3}", s_next)
    )


def early_stopping_text() -> str:
    return _load_asset("early_stopping_prompt.txt")


def parse_verdict(text: str) -> bool | None:
    """Last boxed 0/1 in the text, or None when absent."""
    matches = _BOXED_VERDICT.findall(text)
    if not matches:
        return None
    return matches[-1] == "1"


def _extract_text(payload: dict) -> str:
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError):
        choice = None
    if isinstance(choice, dict):
        message = choice.get("message")
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            return message["content"]
        if isinstance(choice.get("text"), str):
            return choice["text"]
    for key in ("content", "text"):
        if isinstance(payload.get(key), str):
            return payload[key]
    raise TransportError(f"judge response carries no text: {json.dumps(payload)[:200]}")


def _post_completion(
    cfg: JudgeConfig, messages: list[dict], sampling: SamplingConfig
) -> str:
    body = {
        "model": cfg.model,
        "messages": messages,
        "temperature": sampling.temperature,
        "top_p": sampling.top_p,
        "max_tokens": sampling.max_new_tokens,
        "repetition_penalty": sampling.repetition_penalty,
    }
    headers = {}
    if cfg.bearer_token:
        headers["Authorization"] = f"Bearer {cfg.bearer_token}"
    last_exc: Exception | None = None
    for attempt in range(cfg.transport_retries):
        try:
            resp = requests.post(cfg.endpoint, json=body, timeout=cfg.timeout, headers=headers)
            if resp.status_code == 200:
                return _extract_text(resp.json())
            last_exc = TransportError(
                f"judge endpoint returned HTTP {resp.status_code}"
            )
        except (requests.RequestException, ValueError) as exc:
            last_exc = exc
        if attempt + 1 < cfg.transport_retries:
            time.sleep(cfg.backoff_base * (2**attempt))
    raise TransportError(
        f"judge endpoint unreachable after {cfg.transport_retries} attempts: {last_exc}"
    )


def judge_truncation(cfg: JudgeConfig, s_prev: str, s_mid: str, s_next: str) -> bool:
    """True when the judge labels the middle segment as truncated."""
    prompt = render_judge_prompt(s_prev, s_mid, s_next)
    messages = [{"role": "user", "content": prompt}]
    round1_text = _post_completion(cfg, messages, cfg.round1)
    verdict = parse_verdict(round1_text)
    if verdict is not None:
        return verdict
    continuation = [
        {"role": "user", "content": prompt},
        {"role": "assistant", "content": round1_text + early_stopping_text()},
    ]
    round2_text = _post_completion(cfg, continuation, cfg.round2)
    verdict = parse_verdict(round2_text)
    if verdict is None:
        raise JudgeUndecidedError(
            "no boxed 0/1 verdict after two judge rounds; refusing to guess"
        )
    return verdict
