import logging
import os
import sys
from pathlib import Path
from typing import MutableMapping, Sequence

from dotenv import load_dotenv, find_dotenv


# Robust .env discovery: try common locations relative to this file and CWD
def _load_env():
    here = Path(__file__).resolve()
    candidates = [
        Path.cwd() / ".env",                    # current working directory
        here.parent / ".env",                   # .../drapekit/.env
        here.parents[1] / ".env",               # project root .env
    ]
    for p in candidates:
        if p.exists():
            load_dotenv(p, override=False)
            return
    # Fallback: walk upwards from CWD
    found = find_dotenv(usecwd=True)
    if found:
        load_dotenv(found, override=False)


_load_env()


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(f"{name} must be an integer, got {raw!r}")


OUTPUT_DIR = Path(os.getenv("DRAPEKIT_OUTPUT_DIR", "out").strip() or "out")
THREADS = max(1, _env_int("DRAPEKIT_THREADS", 1))
SEED = _env_int("DRAPEKIT_SEED", 0)
LOG_LEVEL = os.getenv("DRAPEKIT_LOG_LEVEL", "INFO").strip().upper() or "INFO"
ASSET_DIR = Path(os.environ["DRAPEKIT_ASSET_DIR"]) if os.getenv("DRAPEKIT_ASSET_DIR") else None

# BLAS and OpenMP size their pools when numpy is first imported, so this
# module must be imported before numpy (drapekit/__init__ does it first).
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def threads_from_argv(argv: Sequence[str]) -> int | None:
    """Value of a ``--threads N`` / ``--threads=N`` flag, or None when absent or unparsable."""
    for i, tok in enumerate(argv):
        if tok == "--threads" and i + 1 < len(argv):
            raw = argv[i + 1]
        elif tok.startswith("--threads="):
            raw = tok.split("=", 1)[1]
        else:
            continue
        try:
            return max(1, int(raw))
        except ValueError:
            return None
    return None


def limit_threads(n: int, environ: MutableMapping[str, str] | None = None, override: bool = False) -> int:
    """Export the thread count to the numerical libraries; returns the count in effect."""
    environ = os.environ if environ is None else environ
    for var in THREAD_VARS:
        if override:
            environ[var] = str(n)
        else:
            environ.setdefault(var, str(n))
    try:
        return max(1, int(environ[THREAD_VARS[0]]))
    except ValueError:
        return n


_argv_threads = threads_from_argv(sys.argv[1:])
APPLIED_THREADS = limit_threads(_argv_threads or THREADS, override=_argv_threads is not None)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Install a single stream handler on the package logger."""
    root = logging.getLogger("drapekit")
    root.setLevel((level or LOG_LEVEL).upper())
    if not any(getattr(h, "_drapekit", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._drapekit = True  # type: ignore[attr-defined]
        root.addHandler(handler)
