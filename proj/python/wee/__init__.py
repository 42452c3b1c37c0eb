"""Workflow execution engine: parse, check and run .wee workflows."""

from wee._wee import (
    Error,
    ParseError,
    check,
    evaluate,
    format_source,
    parse,
    resolve_trigger,
    run,
    run_patterns,
    source_hash,
)

__all__ = [
    "Error",
    "ParseError",
    "check",
    "evaluate",
    "format_source",
    "parse",
    "resolve_trigger",
    "run",
    "run_patterns",
    "source_hash",
]
