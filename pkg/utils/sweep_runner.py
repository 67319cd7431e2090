"""
扫描执行工具
将点对/探针索引区间分块，在线程池中求值，并按确定性规则合并最大值
"""
import time
import statistics
from typing import Callable, List, Optional, Tuple
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor, as_completed

from utils.logger import get_logger

logger = get_logger(__name__)

# 分块函数签名: (start, stop) -> (该块最大值, 取得最大值的全局索引)
ChunkFn = Callable[[int, int], Tuple[float, int]]


@dataclass
class SweepStats:
    """扫描统计数据类"""
    total_items: int = 0
    chunks: int = 0
    chunk_durations: List[float] = field(default_factory=list)
    start_time: float = 0
    end_time: float = 0

    @property
    def total_duration(self) -> float:
        """总耗时（秒）"""
        return self.end_time - self.start_time

    @property
    def items_per_second(self) -> float:
        """每秒处理条目数"""
        if self.total_duration == 0:
            return 0.0
        return self.total_items / self.total_duration

    @property
    def avg_chunk_duration(self) -> float:
        """平均分块耗时（秒）"""
        if not self.chunk_durations:
            return 0.0
        return statistics.mean(self.chunk_durations)


@dataclass
class SweepResult:
    """扫描结果：最大值、取得位置以及统计"""
    value: float
    index: int
    stats: SweepStats


def _merge(best: Optional[Tuple[float, int]], candidate: Tuple[float, int]) -> Tuple[float, int]:
    """取较大值，相等时取较小索引，保证合并结果与执行顺序无关"""
    if best is None:
        return candidate
    if candidate[0] > best[0] or (candidate[0] == best[0] and candidate[1] < best[1]):
        return candidate
    return best


def chunked_max(
    fn: ChunkFn,
    n_items: int,
    chunk_size: int = 50000,
    workers: int = 1,
    label: str = "sweep"
) -> SweepResult:
    """
    分块求最大值

    Args:
        fn: 分块求值函数，返回 (最大值, 全局索引)
        n_items: 条目总数
        chunk_size: 每块条目数
        workers: 线程数，1 表示顺序执行
        label: 日志中的扫描名称

    Returns:
        SweepResult，n_items 为 0 时 value 为 -inf、index 为 -1
    """
    stats = SweepStats(total_items=n_items)
    stats.start_time = time.time()
    ranges = [(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, max(1, chunk_size))]
    stats.chunks = len(ranges)

    def run(bounds: Tuple[int, int]) -> Tuple[float, int, float]:
        started = time.time()
        value, index = fn(*bounds)
        return value, index, time.time() - started

    best: Optional[Tuple[float, int]] = None
    if workers <= 1 or len(ranges) <= 1:
        for bounds in ranges:
            value, index, duration = run(bounds)
            stats.chunk_durations.append(duration)
            best = _merge(best, (value, index))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run, bounds) for bounds in ranges]
            for future in as_completed(futures):
                value, index, duration = future.result()
                stats.chunk_durations.append(duration)
                best = _merge(best, (value, index))

    stats.end_time = time.time()
    if best is None:
        best = (float("-inf"), -1)
    logger.debug(
        f"{label}: {n_items} 条, {stats.chunks} 块, 耗时 {stats.total_duration:.3f}s, "
        f"最大值 {best[0]:.6g} @ {best[1]}"
    )
    return SweepResult(value=float(best[0]), index=int(best[1]), stats=stats)
