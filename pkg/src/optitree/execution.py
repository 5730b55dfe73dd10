"""Generated-script execution, objective parsing, and answer matching.

Three execution routes share one result type:

* runner protocol - a configured shim command is invoked as
  ``<runner-cmd> --script <path> --timeout <seconds>`` and must emit exactly
  one JSON line; if the shim misbehaves, the raw stdout is scraped instead
  (``used_fallback`` is set);
* direct - with no runner configured, the script runs under the current
  interpreter and its stdout is scraped for the objective marker;
* in-process - for tiny deterministic fixture scripts, ``exec`` with
  captured stdout; no preemption, so the timeout is advisory here.
"""

from __future__ import annotations

import contextlib
import io
import json
import os
import subprocess
import sys
import tempfile
import threading
import time
import traceback
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .errors import RunnerMissing

OBJECTIVE_MARKER = "Objective Value:"

# Subprocesses get this much beyond the script timeout before a hard kill.
# Runner-protocol invocations get twice this margin: the shim spends one
# grace period killing its own child before emitting the result line.
KILL_GRACE_S = 1.0

_subprocess_cap = threading.BoundedSemaphore(os.cpu_count() or 4)


def set_subprocess_cap(limit: int) -> None:
    """Bound how many run_script subprocesses may execute concurrently."""
    global _subprocess_cap
    if limit < 1:
        raise ValueError("subprocess cap must be >= 1")
    _subprocess_cap = threading.BoundedSemaphore(limit)


class ExecStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    PARSE_FAILURE = "parse_failure"


@dataclass(frozen=True)
class ExecResult:
    status: ExecStatus
    objective: float | None
    stdout: str
    stderr: str
    wall_time: float
    used_fallback: bool = False

    def __post_init__(self) -> None:
        if (self.objective is not None) != (self.status is ExecStatus.OPTIMAL):
            raise ValueError("objective must be present iff status is optimal")


@dataclass(frozen=True)
class MatchPolicy:
    rel_tol: float = 1e-4
    abs_tol: float = 1e-6
    integer_round: bool = False

    def __post_init__(self) -> None:
        if self.rel_tol < 0 or self.abs_tol < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    """Expected answer: a numeric optimum or a solver status."""

    status: str | None = None
    value: float | None = None

    def __post_init__(self) -> None:
        if (self.status is None) == (self.value is None):
            raise ValueError("ground truth is either a value or a status")
        if self.status is not None and self.status not in (
            "infeasible",
            "unbounded",
        ):
            raise ValueError(f"unknown ground-truth status {self.status!r}")

    @classmethod
    def numeric(cls, value: float) -> "GroundTruth":
        return cls(value=float(value))

    @classmethod
    def of_status(cls, status: str) -> "GroundTruth":
        return cls(status=status)

    @classmethod
    def parse(cls, raw) -> "GroundTruth":
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return cls.numeric(float(raw))
        text = str(raw).strip().lower()
        if text in ("infeasible", "unbounded"):
            return cls.of_status(text)
        return cls.numeric(float(text))


def parse_objective(stdout: str) -> tuple[ExecStatus, float | None]:
    """Classify script output by its last objective-marker line.

    Total over all inputs: numeric marker yields optimal, the infeasible and
    unbounded tokens their statuses, everything else a parse failure. The
    last marker wins because repaired scripts may print twice.
    """
    marker_line = None
    for line in stdout.splitlines():
        if OBJECTIVE_MARKER in line:
            marker_line = line
    if marker_line is None:
        return ExecStatus.PARSE_FAILURE, None
    tail = marker_line.rsplit(OBJECTIVE_MARKER, 1)[1].strip()
    token = tail.split()[0] if tail.split() else ""
    token = token.strip("'\"").rstrip(",")
    lowered = token.lower()
    if lowered == "infeasible":
        return ExecStatus.INFEASIBLE, None
    if lowered == "unbounded":
        return ExecStatus.UNBOUNDED, None
    try:
        return ExecStatus.OPTIMAL, float(token)
    except ValueError:
        return ExecStatus.PARSE_FAILURE, None


def _result_from_parse(
    stdout: str, stderr: str, wall: float, used_fallback: bool
) -> ExecResult:
    status, value = parse_objective(stdout)
    return ExecResult(
        status=status,
        objective=value,
        stdout=stdout,
        stderr=stderr,
        wall_time=wall,
        used_fallback=used_fallback,
    )


_RUNNER_STATUS = {
    "optimal": ExecStatus.OPTIMAL,
    "infeasible": ExecStatus.INFEASIBLE,
    "unbounded": ExecStatus.UNBOUNDED,
    "error": ExecStatus.RUNTIME_ERROR,
    "timeout": ExecStatus.TIMEOUT,
}


def run_script(
    code: str,
    timeout: float,
    runner_cmd: Sequence[str] | None = None,
    python: str | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> ExecResult:
    """Execute a generated script and classify its outcome.

    With ``runner_cmd`` the runner protocol is used; without it the script
    runs directly under ``python`` (default: this interpreter) and its raw
    stdout is scraped, which keeps everything runnable with no runner
    shim present.
    """
    with _subprocess_cap, tempfile.TemporaryDirectory(
        prefix="optitree-exec-"
    ) as tmp:
        script = Path(tmp) / "script.py"
        script.write_text(code, encoding="utf-8")
        if runner_cmd:
            return _run_via_runner(list(runner_cmd), script, timeout, clock)
        return _run_direct(python or sys.executable, script, timeout, clock)


def _run_via_runner(
    cmd: list[str], script: Path, timeout: float, clock: Callable[[], float]
) -> ExecResult:
    argv = cmd + ["--script", str(script), "--timeout", str(timeout)]
    start = clock()
    try:
        proc = subprocess.run(
            argv,
            capture_output=True,
            text=True,
            timeout=timeout + 2 * KILL_GRACE_S,
        )
    except FileNotFoundError as exc:
        raise RunnerMissing(f"runner command not found: {cmd[0]!r}") from exc
    except subprocess.TimeoutExpired:
        wall = clock() - start
        return ExecResult(
            status=ExecStatus.TIMEOUT,
            objective=None,
            stdout="",
            stderr=f"runner overran its own timeout budget ({timeout}s)",
            wall_time=wall,
            used_fallback=False,
        )
    wall = clock() - start
    payload = _parse_runner_line(proc.stdout)
    if payload is None:
        # Nonconforming runner output: scrape whatever it printed.
        return _result_from_parse(proc.stdout, proc.stderr, wall, True)
    status = _RUNNER_STATUS[payload["status"]]
    objective = payload.get("objective")
    return ExecResult(
        status=status,
        objective=float(objective) if objective is not None else None,
        stdout=str(payload.get("stdout", "")),
        stderr=str(payload.get("error", "")),
        wall_time=wall,
        used_fallback=False,
    )


def _parse_runner_line(stdout: str) -> dict | None:
    lines = [ln for ln in stdout.splitlines() if ln.strip()]
    if len(lines) != 1:
        return None
    try:
        payload = json.loads(lines[0])
    except ValueError:
        return None
    if not isinstance(payload, dict):
        return None
    if payload.get("status") not in _RUNNER_STATUS:
        return None
    has_objective = payload.get("objective") is not None
    if has_objective != (payload["status"] == "optimal"):
        return None
    return payload


def _run_direct(
    python: str, script: Path, timeout: float, clock: Callable[[], float]
) -> ExecResult:
    start = clock()
    try:
        proc = subprocess.run(
            [python, str(script)],
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except FileNotFoundError as exc:
        raise RunnerMissing(f"interpreter not found: {python!r}") from exc
    except subprocess.TimeoutExpired as exc:
        wall = clock() - start
        stdout = exc.stdout or b""
        if isinstance(stdout, bytes):
            stdout = stdout.decode("utf-8", "replace")
        return ExecResult(
            status=ExecStatus.TIMEOUT,
            objective=None,
            stdout=stdout,
            stderr=f"killed after {timeout}s",
            wall_time=wall,
            used_fallback=True,
        )
    wall = clock() - start
    if proc.returncode != 0:
        return ExecResult(
            status=ExecStatus.RUNTIME_ERROR,
            objective=None,
            stdout=proc.stdout,
            stderr=proc.stderr,
            wall_time=wall,
            used_fallback=True,
        )
    return _result_from_parse(proc.stdout, proc.stderr, wall, True)


_in_process_lock = threading.Lock()


def run_in_process(
    code: str,
    timeout: float = 0.0,
    clock: Callable[[], float] = time.perf_counter,
) -> ExecResult:
    """Run a trusted fixture script in-process with captured stdout.

    Exists for deterministic tests and the synthetic pipeline, where
    spawning an interpreter per problem would dominate runtime. Not for
    untrusted code: there is no isolation and no preemption (``timeout``
    is unused). Stdout redirection swaps a process-global, so executions
    serialize on a lock.
    """
    del timeout
    out, err = io.StringIO(), io.StringIO()
    start = clock()
    try:
        with _in_process_lock:
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                exec(  # noqa: S102 - trusted fixture code by contract
                    compile(code, "<generated>", "exec"),
                    {"__name__": "__main__"},
                )
    except BaseException:
        return ExecResult(
            status=ExecStatus.RUNTIME_ERROR,
            objective=None,
            stdout=out.getvalue(),
            stderr=err.getvalue() + traceback.format_exc(),
            wall_time=clock() - start,
            used_fallback=False,
        )
    return _result_from_parse(
        out.getvalue(), err.getvalue(), clock() - start, False
    )


def answers_match(
    got: ExecResult, expected: GroundTruth, policy: MatchPolicy | None = None
) -> bool:
    """Decide whether an execution outcome matches the ground truth.

    Status ground truths match by status equality. Numeric comparison is
    symmetric: |a - b| <= max(abs_tol, rel_tol * max(|a|, |b|)), optionally
    after rounding both sides to integers.
    """
    policy = policy or MatchPolicy()
    if expected.status is not None:
        return got.status.value == expected.status
    if got.status is not ExecStatus.OPTIMAL or got.objective is None:
        return False
    a, b = got.objective, float(expected.value)  # type: ignore[arg-type]
    if policy.integer_round:
        a, b = float(round(a)), float(round(b))
    return abs(a - b) <= max(policy.abs_tol, policy.rel_tol * max(abs(a), abs(b)))
