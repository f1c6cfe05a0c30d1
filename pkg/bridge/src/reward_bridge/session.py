"""Client session for the reward engine's stdio serve mode.

The session owns a `pwsec reward --serve` child process and exchanges
newline-delimited JSON over its stdin/stdout.  It adds no scoring logic:
totals come back exactly as the engine serialized them.  Requests carry a
monotonically increasing id and responses must echo it; one in-flight
batch is allowed per session.
"""

from __future__ import annotations

import json
import os
import selectors
import subprocess
import sys
import time
from dataclasses import dataclass, field

DEFAULT_COMMAND = [sys.executable, "-m", "pwsec.cli", "reward", "--serve"]


class BridgeError(RuntimeError):
    pass


class BridgeTimeout(BridgeError):
    """No response within the deadline; the session restarts its child."""


class MalformedResponse(BridgeError):
    """Response line was not valid JSON or did not echo the request id."""

    def __init__(self, message: str, raw_line: str):
        super().__init__(f"{message}: {raw_line!r}")
        self.raw_line = raw_line


class SessionBusy(BridgeError):
    """A batch is already in flight on this session."""


@dataclass
class BatchResult:
    totals: list[float] = field(default_factory=list)
    breakdowns: list[dict] = field(default_factory=list)
    raw_lines: list[str] = field(default_factory=list)


class BridgeSession:
    def __init__(
        self,
        command: list[str] | None = None,
        timeout: float = 60.0,
        config: dict | None = None,
    ):
        self.command = list(command) if command else list(DEFAULT_COMMAND)
        self.timeout = timeout
        self.config = config
        self.request_count = 0
        self._proc: subprocess.Popen | None = None
        self._buffer = b""
        self._busy = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        self._buffer = b""
        os.set_blocking(self._proc.stdout.fileno(), False)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        self._buffer = b""
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        proc.stdout.close()

    def restart(self) -> None:
        self.close()
        self.start()

    def __enter__(self) -> "BridgeSession":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    @property
    def child_pid(self) -> int | None:
        return self._proc.pid if self._proc else None

    # -- wire protocol -----------------------------------------------------

    def _send_line(self, payload: dict) -> None:
        data = json.dumps(payload, ensure_ascii=False).encode("utf-8") + b"\n"
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.restart()
            raise BridgeError(f"serve process went away while writing: {exc}") from exc

    def _read_line(self, deadline: float) -> str:
        selector = selectors.DefaultSelector()
        selector.register(self._proc.stdout, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buffer:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self.restart()
                    raise BridgeTimeout(
                        f"no response within {self.timeout}s; session restarted"
                    )
                if not selector.select(timeout=min(remaining, 0.5)):
                    continue
                chunk = self._proc.stdout.read(65536)
                if chunk == b"":
                    self.restart()
                    raise BridgeError("serve process closed stdout; session restarted")
                if chunk is not None:
                    self._buffer += chunk
        finally:
            selector.close()
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("utf-8")

    def _roundtrip(self, item: dict) -> tuple[dict, str]:
        self.request_count += 1
        request_id = self.request_count
        request = {
            "id": request_id,
            "output": item["output"],
            "gt_analysis": item["gt_analysis"],
            "gt_fixed": item["gt_fixed"],
        }
        config = item.get("config", self.config)
        if config:
            request["config"] = config
        self._send_line(request)
        raw = self._read_line(time.monotonic() + self.timeout)
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"response is not JSON ({exc.msg})", raw) from exc
        if not isinstance(response, dict):
            raise MalformedResponse("response is not an object", raw)
        if "error" in response:
            raise MalformedResponse(f"engine error: {response['error']}", raw)
        if response.get("id") != request_id:
            raise MalformedResponse(
                f"response id {response.get('id')!r} does not match request id {request_id}", raw
            )
        if "total" not in response:
            raise MalformedResponse("response missing 'total'", raw)
        return response, raw

    # -- public API ----------------------------------------------------------

    def score_batch(self, items: list[dict]) -> BatchResult:
        """Score items in order; lockstep request/response avoids pipe deadlock.

        Each item: {"output": str, "gt_analysis": dict, "gt_fixed": str,
        "config": optional dict}.
        """
        if self._proc is None:
            self.start()
        if self._busy:
            raise SessionBusy("one in-flight batch at a time per session")
        self._busy = True
        try:
            result = BatchResult()
            for item in items:
                response, raw = self._roundtrip(item)
                result.totals.append(response["total"])
                result.breakdowns.append(response)
                result.raw_lines.append(raw)
            return result
        finally:
            self._busy = False
