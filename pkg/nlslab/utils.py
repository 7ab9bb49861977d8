import asyncio
import os
from typing import Callable, List, Optional, Sequence, TypeVar

from dotenv import load_dotenv

T = TypeVar("T")
R = TypeVar("R")


def max_workers_from_env(default: Optional[int] = None) -> int:
    """Worker cap from NLSLAB_MAX_WORKERS (.env honoured), else the CPU count"""
    load_dotenv()
    fallback = default or os.cpu_count() or 1
    value = os.getenv("NLSLAB_MAX_WORKERS")
    if not value:
        return fallback
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"NLSLAB_MAX_WORKERS must be an integer, got '{value}'")


async def gather_in_threads(
    func: Callable[[T], R],
    items: Sequence[T],
    max_workers: Optional[int] = None,
) -> List[R]:
    """Run func over items in worker threads, at most max_workers at a time.

    Results come back in the order of items.
    """
    limit = asyncio.Semaphore(max_workers or max_workers_from_env())

    async def run_one(item: T) -> R:
        async with limit:
            return await asyncio.to_thread(func, item)

    return list(await asyncio.gather(*(run_one(item) for item in items)))
