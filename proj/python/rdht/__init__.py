"""Distributed hash-table cache over one-sided remote memory access."""

from ._core import (
    Table,
    bucket_layout,
    candidate_indices,
    crc32,
    hash64,
    index_width,
    kernel,
    make_key,
    round_significant,
    run_benchmark,
    run_demo,
    target_rank,
)

__all__ = [
    "Table",
    "bucket_layout",
    "candidate_indices",
    "crc32",
    "hash64",
    "index_width",
    "kernel",
    "make_key",
    "round_significant",
    "run_benchmark",
    "run_demo",
    "target_rank",
]
