"""Client for an out-of-process reasoner.

Requests are one JSON object, sent either as an HTTP POST body or as a single
line on a child process's stdin (the reply is one line on its stdout).  Any
transport or validation failure falls back to the rule-based reasoner; the
episode never aborts because of the reasoner.
"""

from __future__ import annotations

import json
import logging
import os
import selectors
import shlex
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from ..world import Trajectory
from .prompts import BevPrompt, VisualPrompt
from .rules import RuleParams, rule_based_reason
from .schema import QA_CATEGORIES, SCHEMA_VERSION, ReasonerResponse, ValidationError, validate_response

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReasonerConfig:
    """kind: "rules", "http" or "subprocess"."""

    kind: str = "rules"
    url: str = ""
    command: tuple[str, ...] = field(default=())
    timeout_s: float = 2.0

    def __post_init__(self):
        if self.kind not in ("rules", "http", "subprocess"):
            raise ValueError(f"unknown reasoner kind {self.kind!r}")
        command = self.command
        if isinstance(command, str):
            command = tuple(shlex.split(command))
        object.__setattr__(self, "command", tuple(command))
        if self.kind == "http" and not self.url:
            raise ValueError("http reasoner needs a url")
        if self.kind == "subprocess" and not self.command:
            raise ValueError("subprocess reasoner needs a command")


def build_request(prompt: BevPrompt, visual: VisualPrompt) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "bev_prompt": prompt.to_dict(),
        "visual_prompt": visual.to_dict(),
        "questions": list(QA_CATEGORIES),
    }


def encode_request(request: dict) -> bytes:
    return (json.dumps(request, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


class HttpTransport:
    def __init__(self, url: str, timeout_s: float):
        self.url = url
        self.timeout_s = timeout_s

    def send(self, payload: bytes) -> bytes:
        req = urllib.request.Request(self.url, data=payload, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise TransportError(f"http reasoner at {self.url}: {exc}") from exc

    def close(self) -> None:
        pass


class SubprocessTransport:
    """A long-lived child speaking one JSON line per request."""

    def __init__(self, command, timeout_s: float):
        self.command = list(command)
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                              stderr=subprocess.DEVNULL, bufsize=0)
            except OSError as exc:
                raise TransportError(f"cannot start reasoner {self.command}: {exc}") from exc
        return self._proc

    def send(self, payload: bytes) -> bytes:
        proc = self._ensure()
        try:
            proc.stdin.write(payload)
            proc.stdin.flush()
        except OSError as exc:
            self.close()
            raise TransportError(f"reasoner pipe closed: {exc}") from exc
        line = self._read_line(proc)
        if line is None:
            self.close()
            raise TransportError(f"reasoner gave no reply within {self.timeout_s}s")
        return line

    def _read_line(self, proc: subprocess.Popen) -> bytes | None:
        buf = b""
        fd = proc.stdout.fileno()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while not buf.endswith(b"\n"):
                if not sel.select(self.timeout_s):
                    return None
                chunk = os.read(fd, 4096)
                if not chunk:
                    return None
                buf += chunk
        return buf

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=1.0)
            except (OSError, subprocess.TimeoutExpired):
                pass
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            self._proc = None


def make_transport(cfg: ReasonerConfig):
    if cfg.kind == "http":
        return HttpTransport(cfg.url, cfg.timeout_s)
    if cfg.kind == "subprocess":
        return SubprocessTransport(cfg.command, cfg.timeout_s)
    raise ValueError("rules reasoner has no transport")


class ExternalReasoner:
    """Per-episode client; at most one request in flight."""

    def __init__(self, cfg: ReasonerConfig, rules: RuleParams | None = None, transport=None):
        self.cfg = cfg
        self.rules = rules or RuleParams()
        self.transport = transport or make_transport(cfg)

    def reason(self, prompt: BevPrompt, visual: VisualPrompt, traj: Trajectory | None = None) -> ReasonerResponse:
        try:
            raw = self.transport.send(encode_request(build_request(prompt, visual)))
            try:
                decoded = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ValidationError(f"response is not JSON: {exc}") from exc
            return validate_response(decoded)
        except (TransportError, ValidationError) as exc:
            log.warning("reasoner fallback at tick %d: %s", prompt.tick, exc)
            fallback = rule_based_reason(prompt, traj, self.rules)
            return ReasonerResponse(fallback.planning_state, fallback.meta_actions, fallback.justification,
                                    fallback.answers, source="fallback")

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_reason(prompt: BevPrompt, visual: VisualPrompt, endpoint: ReasonerConfig,
                    traj: Trajectory | None = None) -> ReasonerResponse:
    """One-shot request; opens and closes the transport around the call."""
    with ExternalReasoner(endpoint) as client:
        return client.reason(prompt, visual, traj)
