"""Distributed co-simulation core: wire codec, descriptors, reference runs."""

from pathlib import Path

from ._dcosim import (
    AuthenticationError,
    ConnectionError,
    Error,
    ProtocolError,
    TimeoutError,
    ValidationError,
    builtin_descriptor,
    builtin_models,
    decode,
    encode,
    finalize_report,
    is_legal,
    parse_descriptor,
    reference_simulation,
    run_demo1,
)


def cli_path() -> Path:
    """The bundled `cosim` executable (master, backend, demos, report)."""
    return Path(__file__).parent / "bin" / "cosim"


__all__ = [
    "AuthenticationError",
    "ConnectionError",
    "Error",
    "ProtocolError",
    "TimeoutError",
    "ValidationError",
    "builtin_descriptor",
    "builtin_models",
    "cli_path",
    "decode",
    "encode",
    "finalize_report",
    "is_legal",
    "parse_descriptor",
    "reference_simulation",
    "run_demo1",
]
