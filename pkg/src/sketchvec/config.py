"""Service and CLI configuration: JSON file plus environment overrides.

Environment variables win over the file; both are optional. Recognized
variables: SKETCHVEC_HOST, SKETCHVEC_PORT, SKETCHVEC_STORE_ROOT,
SKETCHVEC_BACKEND, SKETCHVEC_MODEL_ENDPOINT, SKETCHVEC_CRITIC_MODEL,
SKETCHVEC_SYNTHESIZER_MODEL, SKETCHVEC_JUDGE_MODEL, SKETCHVEC_API_KEY
(read by the remote gateway at request time, never stored).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .gateway.remote import RemoteConfig


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    store_root: str = "sketchvec-sessions"
    default_backend: str = "oracle"
    default_canvas_width: int = 200
    default_canvas_height: int = 200
    remote: RemoteConfig | None = None


def load_service_config(path: str | Path | None = None) -> ServiceConfig:
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))

    def pick(key: str, env: str, default):
        value = os.environ.get(env)
        if value is not None:
            return type(default)(value) if default is not None else value
        return raw.get(key, default)

    remote_raw = dict(raw.get("remote", {}))
    endpoint = os.environ.get("SKETCHVEC_MODEL_ENDPOINT", remote_raw.get("endpoint"))
    remote = None
    if endpoint:
        remote = RemoteConfig(
            endpoint=endpoint,
            critic_model=os.environ.get(
                "SKETCHVEC_CRITIC_MODEL", remote_raw.get("critic_model", "critic-model")
            ),
            synthesizer_model=os.environ.get(
                "SKETCHVEC_SYNTHESIZER_MODEL",
                remote_raw.get("synthesizer_model", "synthesizer-model"),
            ),
            judge_model=os.environ.get(
                "SKETCHVEC_JUDGE_MODEL", remote_raw.get("judge_model", "judge-model")
            ),
            auth_header=remote_raw.get("auth_header", "Authorization"),
            auth_value_template=remote_raw.get("auth_value_template", "Bearer {credential}"),
            credential_env=remote_raw.get("credential_env", "SKETCHVEC_API_KEY"),
            timeout_s=float(remote_raw.get("timeout_s", 60.0)),
            max_repairs=int(remote_raw.get("max_repairs", 2)),
            retries=int(remote_raw.get("retries", 3)),
            backoff_s=float(remote_raw.get("backoff_s", 1.0)),
        )

    return ServiceConfig(
        host=pick("host", "SKETCHVEC_HOST", "127.0.0.1"),
        port=pick("port", "SKETCHVEC_PORT", 8765),
        store_root=pick("store_root", "SKETCHVEC_STORE_ROOT", "sketchvec-sessions"),
        default_backend=pick("default_backend", "SKETCHVEC_BACKEND", "oracle"),
        default_canvas_width=int(raw.get("default_canvas_width", 200)),
        default_canvas_height=int(raw.get("default_canvas_height", 200)),
        remote=remote,
    )
