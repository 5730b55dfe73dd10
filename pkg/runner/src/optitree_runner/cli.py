"""Run one generated solver script and emit a one-line JSON result.

Invocation: ``optitree-runner --script <path> --timeout <seconds>``.

The child's stdout is scanned for the last ``Objective Value:`` line:
a numeric value maps to status ``optimal``, the ``infeasible`` and
``unbounded`` tokens to those statuses. A child that exits nonzero maps to
``error``, one that overruns the timeout is killed and maps to ``timeout``.
Clean output without a recognizable objective also maps to ``error`` since
the protocol has no separate parse status.

Exit code is 0 for every solver-level outcome; nonzero only when the shim
itself fails (unreadable script, bad arguments). Solver availability is the
script's concern: the shim never inspects imports, so any solver ecosystem
the generated code targets works unchanged.

This module is deliberately self-contained so it can be invoked as an
installed console script, as ``python -m optitree_runner``, or directly by
file path.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys

OBJECTIVE_MARKER = "Objective Value:"

# Seconds the child gets after kill() before the shim stops waiting.
KILL_GRACE_S = 1.0

# Shim-level failures (not solver outcomes) exit with this code.
EXIT_SHIM_FAILURE = 3


def scan_objective(stdout: str) -> tuple[str, float | None, str]:
    """Map captured stdout to (status, objective, error message)."""
    marker_line = None
    for line in stdout.splitlines():
        if OBJECTIVE_MARKER in line:
            marker_line = line
    if marker_line is None:
        return "error", None, "no objective value line in script output"
    tail = marker_line.rsplit(OBJECTIVE_MARKER, 1)[1].strip()
    token = tail.split()[0] if tail.split() else ""
    token = token.strip("'\"").rstrip(",")
    lowered = token.lower()
    if lowered == "infeasible":
        return "infeasible", None, ""
    if lowered == "unbounded":
        return "unbounded", None, ""
    try:
        return "optimal", float(token), ""
    except ValueError:
        return "error", None, f"unrecognized objective token {token!r}"


def execute(script_path: str, timeout: float) -> dict:
    """Run the script in a child interpreter and normalize the outcome."""
    proc = subprocess.Popen(
        [sys.executable, script_path],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        stdout, stderr = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        try:
            stdout, stderr = proc.communicate(timeout=KILL_GRACE_S)
        except subprocess.TimeoutExpired:
            stdout, stderr = "", ""
        return {
            "status": "timeout",
            "objective": None,
            "stdout": stdout or "",
            "error": f"script exceeded {timeout}s and was killed",
        }
    if proc.returncode != 0:
        tail = (stderr or "").strip().splitlines()
        return {
            "status": "error",
            "objective": None,
            "stdout": stdout,
            "error": tail[-1] if tail else f"exit code {proc.returncode}",
        }
    status, objective, message = scan_objective(stdout)
    return {
        "status": status,
        "objective": objective,
        "stdout": stdout,
        "error": message,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="optitree-runner")
    parser.add_argument("--script", required=True)
    parser.add_argument("--timeout", type=float, required=True)
    args = parser.parse_args(argv)
    try:
        with open(args.script, encoding="utf-8"):
            pass
    except OSError as exc:
        print(f"optitree-runner: cannot read script: {exc}", file=sys.stderr)
        return EXIT_SHIM_FAILURE
    try:
        result = execute(args.script, args.timeout)
    except Exception as exc:  # noqa: BLE001 - shim fault, not a solver outcome
        print(f"optitree-runner: internal fault: {exc}", file=sys.stderr)
        return EXIT_SHIM_FAILURE
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
