"""Remote backend: provider-agnostic chat-completions HTTP client.

One wire shape covers every vendor that speaks chat-style JSON:

    POST {endpoint}
    {"model": ..., "messages": [{"role": ..., "content": [
        {"type": "text", "text": ...} |
        {"type": "image", "media_type": "image/png", "data": <base64>}]}]}

The response text is mined for the first balanced JSON object; nothing
else in the model output is interpreted here — diagram text always goes
through the grammar parser. Parse failures re-ask with the error appended
(bounded by max_repairs); transport failures retry with exponential
backoff and then surface as BackendUnavailable.
"""

from __future__ import annotations

import base64
import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import httpx

from ..grammar import Diagram, GrammarError, parse_diagram, serialize_diagram
from ..render.raster import RasterImage, encode_png
from . import prompts
from .base import (
    BackendUnavailable,
    CandidateProgram,
    CritiqueReport,
    FailureFeedback,
    JudgeVerdict,
    MalformedModelOutput,
    ModelGateway,
    ModelRole,
    Strategy,
)


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    critic_model: str = "critic-model"
    synthesizer_model: str = "synthesizer-model"
    judge_model: str = "judge-model"
    auth_header: str = "Authorization"
    auth_value_template: str = "Bearer {credential}"
    credential_env: str = "SKETCHVEC_API_KEY"
    timeout_s: float = 60.0
    max_repairs: int = 2
    retries: int = 3
    backoff_s: float = 1.0

    def model_for(self, role: ModelRole) -> str:
        return {
            ModelRole.CRITIC: self.critic_model,
            ModelRole.SYNTHESIZER: self.synthesizer_model,
            ModelRole.JUDGE: self.judge_model,
        }[role]

    def auth_headers(self) -> dict[str, str]:
        credential = os.environ.get(self.credential_env, "")
        if not credential and "{credential}" in self.auth_value_template:
            return {}
        return {
            self.auth_header: self.auth_value_template.format(credential=credential)
        }


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def image_part(img: RasterImage) -> dict:
    return {
        "type": "image",
        "media_type": "image/png",
        "data": base64.b64encode(encode_png(img)).decode("ascii"),
    }


def extract_json_object(text: str) -> str:
    """First balanced top-level JSON object in free-form model text."""
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise MalformedModelOutput("no balanced JSON object found in model output")


def _response_text(data: Any) -> str:
    """Pull the assistant text out of the common response envelopes."""
    if isinstance(data, dict):
        choices = data.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message", {})
            content = message.get("content")
            if isinstance(content, str):
                return content
            if isinstance(content, list):
                return "".join(
                    part.get("text", "") for part in content if isinstance(part, dict)
                )
        content = data.get("content")
        if isinstance(content, str):
            return content
        if isinstance(content, list):
            return "".join(
                part.get("text", "") for part in content if isinstance(part, dict)
            )
        if isinstance(data.get("output_text"), str):
            return data["output_text"]
    raise MalformedModelOutput("response carries no assistant text")


@dataclass
class RemoteGateway(ModelGateway):
    config: RemoteConfig
    transport: httpx.BaseTransport | None = None
    _client: httpx.Client = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._client = httpx.Client(
            timeout=self.config.timeout_s, transport=self.transport
        )

    def close(self) -> None:
        self._client.close()

    # -- transport ---------------------------------------------------------

    def _post(self, role: ModelRole, messages: list[dict]) -> str:
        body = {"model": self.config.model_for(role), "messages": messages}
        headers = self.config.auth_headers()
        last_error: Exception | None = None
        for attempt in range(self.config.retries):
            try:
                response = self._client.post(
                    self.config.endpoint, json=body, headers=headers
                )
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = BackendUnavailable(
                        f"endpoint returned {response.status_code}: "
                        f"{response.text[:200]}"
                    )
                elif response.status_code >= 400:
                    raise BackendUnavailable(
                        f"endpoint rejected the request "
                        f"({response.status_code}): {response.text[:200]}"
                    )
                else:
                    return _response_text(response.json())
            except httpx.HTTPError as exc:
                last_error = BackendUnavailable(f"transport error: {exc}")
            if attempt < self.config.retries - 1:
                time.sleep(self.config.backoff_s * (2**attempt))
        raise last_error or BackendUnavailable("model endpoint unavailable")

    def _ask_json(self, role: ModelRole, messages: list[dict]) -> tuple[dict, str, int]:
        """POST, extract JSON, and repair-re-ask up to max_repairs times."""
        attempt_messages = list(messages)
        for repair in range(self.config.max_repairs + 1):
            raw = self._post(role, attempt_messages)
            try:
                parsed = json.loads(extract_json_object(raw))
                if not isinstance(parsed, dict):
                    raise MalformedModelOutput("top-level JSON value is not an object")
                return parsed, raw, repair
            except (MalformedModelOutput, json.JSONDecodeError) as exc:
                error_text = str(exc)
            if repair == self.config.max_repairs:
                break
            attempt_messages = attempt_messages + [
                {"role": "assistant", "content": [text_part(raw)]},
                {
                    "role": "user",
                    "content": [
                        text_part(
                            "Your previous reply could not be parsed: "
                            f"{error_text}. Respond again with exactly one "
                            "valid JSON object and nothing else."
                        )
                    ],
                },
            ]
        raise MalformedModelOutput(
            f"{role.value} output stayed unparseable after "
            f"{self.config.max_repairs} repair attempts: {error_text}"
        )

    # -- roles ---------------------------------------------------------------

    def describe_initial(self, sketch: RasterImage, instruction: str) -> CritiqueReport:
        messages = [
            {
                "role": "user",
                "content": [
                    text_part(prompts.describe_prompt(instruction)),
                    image_part(sketch),
                ],
            }
        ]
        parsed, raw, _ = self._ask_json(ModelRole.CRITIC, messages)
        return CritiqueReport(
            scene_description=str(parsed.get("scene_description", "")),
            discrepancies=(),
            suggestions=(),
            raw_response=raw,
        )

    def critique(
        self,
        sketch: RasterImage,
        current: RasterImage,
        instruction: str,
        failures: Sequence[FailureFeedback] = (),
    ) -> CritiqueReport:
        prompt = prompts.critique_prompt(instruction, failures)
        if self.call_log is not None:
            self.call_log.critique_prompts.append(prompt)
        messages = [
            {
                "role": "user",
                "content": [text_part(prompt), image_part(sketch), image_part(current)],
            }
        ]
        parsed, raw, _ = self._ask_json(ModelRole.CRITIC, messages)
        if parsed.get("no_differences"):
            return CritiqueReport(
                scene_description=str(parsed.get("scene_description", "")),
                raw_response=raw,
            )
        discrepancies = [str(d) for d in parsed.get("discrepancies", [])]
        suggestions = [str(s) for s in parsed.get("suggestions", [])]
        if not discrepancies:
            raise MalformedModelOutput(
                "critique reported neither discrepancies nor no_differences"
            )
        return CritiqueReport(
            scene_description=str(parsed.get("scene_description", "")),
            discrepancies=tuple(discrepancies),
            suggestions=tuple(suggestions),
            raw_response=raw,
        )

    def synthesize(
        self,
        current_program: Diagram,
        critique: CritiqueReport,
        strategy: Strategy,
        grammar_text: str,
    ) -> CandidateProgram:
        prompt = prompts.synthesize_prompt(
            serialize_diagram(current_program),
            critique.scene_description,
            critique.discrepancies,
            critique.suggestions,
            strategy,
            grammar_text,
        )
        messages = [{"role": "user", "content": [text_part(prompt)]}]
        repairs_left = self.config.max_repairs
        attempt_messages = messages
        total_repairs = 0
        while True:
            parsed, raw, json_repairs = self._ask_json(
                ModelRole.SYNTHESIZER, attempt_messages
            )
            total_repairs += json_repairs
            try:
                diagram = parse_diagram(json.dumps(parsed), current_program.canvas)
                return CandidateProgram(
                    strategy=strategy,
                    diagram=diagram,
                    raw_response=raw,
                    repair_count=total_repairs,
                )
            except GrammarError as exc:
                if repairs_left == 0:
                    raise MalformedModelOutput(
                        f"candidate program invalid after repairs: {exc}"
                    ) from exc
                repairs_left -= 1
                total_repairs += 1
                attempt_messages = attempt_messages + [
                    {"role": "assistant", "content": [text_part(raw)]},
                    {
                        "role": "user",
                        "content": [
                            text_part(
                                f"That program violates the grammar: {exc}. "
                                "Emit a corrected complete program as one "
                                "JSON object."
                            )
                        ],
                    },
                ]

    def judge(
        self,
        sketch: RasterImage,
        current: RasterImage,
        candidates: Sequence[RasterImage],
    ) -> JudgeVerdict:
        content = [text_part(prompts.judge_prompt(len(candidates))), image_part(sketch)]
        content.append(image_part(current))
        content += [image_part(c) for c in candidates]
        messages = [{"role": "user", "content": content}]
        parsed, raw, _ = self._ask_json(ModelRole.JUDGE, messages)
        try:
            selected = int(parsed["selected"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedModelOutput(f"judge verdict unreadable: {parsed}") from exc
        if not 0 <= selected <= len(candidates):
            raise MalformedModelOutput(
                f"judge selected {selected}, valid range is 0..{len(candidates)}"
            )
        return JudgeVerdict(
            selected=selected,
            rationale=str(parsed.get("rationale", "")),
            raw_response=raw,
        )
