import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
RUNNER_SRC = HERE.parent / "src"
ENGINE_SRC = HERE.parent.parent / "src"

for path in (RUNNER_SRC, ENGINE_SRC):
    if str(path) not in sys.path:
        sys.path.insert(0, str(path))

# The shim module, runnable by file path without installation.
RUNNER_SCRIPT = RUNNER_SRC / "optitree_runner" / "cli.py"
