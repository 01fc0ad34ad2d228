"""Small shared helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, jobs: int = 1) -> list:
    """Map preserving input order, optionally across a thread pool.

    The heavy per-item work is numpy linear algebra, which releases the GIL,
    so threads give real parallelism; results are collected in input order so
    output is independent of scheduling.
    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
