"""Barrier-free distributed hash join: in-process simulator and helpers."""

from ._core import (
    ShardjoinError,
    exit_code_for,
    expected_send_volume,
    generate_keys,
    hash_key,
    ring_peers,
    simulate,
    speedup,
)

__all__ = [
    "ShardjoinError",
    "exit_code_for",
    "expected_send_volume",
    "generate_keys",
    "hash_key",
    "ring_peers",
    "simulate",
    "speedup",
]
