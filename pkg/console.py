"""
Console output helpers shared by the scripts.

Progress goes to stderr so that stdout stays free for machine-readable output.
The benchmark runner switches progress off once around its thread pool and
restores the previous setting afterwards; warnings and errors are always printed.
"""

import sys

_quiet = False


def set_quiet(quiet: bool) -> None:
    """Enable or disable progress messages."""
    global _quiet
    _quiet = quiet


def is_quiet() -> bool:
    return _quiet


def log_message(message: str) -> None:
    """Print a message to stderr for immediate output."""
    if not _quiet:
        print(message, file=sys.stderr, flush=True)


def log_warning(message: str) -> None:
    """Print a warning to stderr, even in quiet mode."""
    print(f"Warning: {message}", file=sys.stderr, flush=True)


def log_error(message: str) -> None:
    """Print an error to stderr, even in quiet mode."""
    print(f"Error: {message}", file=sys.stderr, flush=True)
