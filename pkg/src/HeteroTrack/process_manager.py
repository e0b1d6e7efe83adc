import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import psutil
from loguru import logger

T = TypeVar("T")
R = TypeVar("R")


def default_worker_count() -> int:
    """Physical core count (falls back to logical, then 1)."""
    count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or os.cpu_count() or 1
    return max(1, int(count))


def run_parallel(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Map ``fn`` over ``items`` in a process pool; results keep the order of ``items``.

    ``workers=1`` (or a single item) runs in the calling process. ``fn`` must be
    a module-level function so it can be pickled.
    """
    items = list(items)
    workers = default_worker_count() if workers is None else workers
    if workers < 1:
        raise ValueError(f"workers 必须 >= 1: {workers}")
    workers = min(workers, len(items)) if items else 1

    if workers == 1:
        logger.debug(f"[进程池] 顺序执行 {len(items)} 个任务")
        return [fn(item) for item in items]

    logger.info(f"[进程池] 使用 {workers} 个工作进程执行 {len(items)} 个任务")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() 按提交顺序返回, 合并结果与执行顺序无关
        return list(pool.map(fn, items))


def _terminate_process_gracefully(proc: psutil.Process, timeout: float = 0.5) -> bool:
    """尝试优雅终止进程，失败后强制终止"""
    try:
        proc.terminate()
        try:
            proc.wait(timeout=timeout)
            return True
        except psutil.TimeoutExpired:
            proc.kill()
            logger.info(f"[终止] 强制终止 PID: {proc.pid}")
            return False
    except psutil.NoSuchProcess:
        return True


def cleanup_on_exit():
    """Registered with atexit to ensure leftover worker processes are killed on exit."""
    children = psutil.Process(os.getpid()).children(recursive=True)
    if not children:
        return
    logger.info(f"--- [atexit Cleanup] 清理 {len(children)} 个残留子进程 ---")
    for child in children:
        try:
            if child.is_running():
                _terminate_process_gracefully(child)
        except psutil.NoSuchProcess:
            logger.debug(f"[atexit Cleanup] PID {child.pid} 已不存在")
        except Exception as ps_err:
            logger.info(f"[atexit Cleanup] 清理 PID {child.pid} 时出错: {ps_err}")
    logger.info("--- [atexit Cleanup] Cleanup function finished ---")
