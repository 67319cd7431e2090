"""
Q_Q(Y) 空间
Q点多重集、瓶颈度量 S、最优匹配以及多重集运算
"""
import itertools
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from almgren.errors import ExhaustiveCapError, GeometryInputError, QMismatchError, SpaceMismatchError
from almgren.spaces import Space
from config.config_manager import get_config
from utils.logger import get_logger

logger = get_logger(__name__)


class QPoint:
    """
    Q 个点的无序多重集 Σ [[x_i]]

    points 的行顺序只是一种表示，比较与哈希都基于按坐标字典序排序后的规范形式
    """

    __slots__ = ("space", "points")

    def __init__(self, space: Space, points):
        arr = np.array(space.points(points), dtype=float)
        if arr.shape[0] < 1:
            raise GeometryInputError("QPoint 至少需要一个点")
        arr.setflags(write=False)
        self.space = space
        self.points = arr

    @property
    def Q(self) -> int:
        return int(self.points.shape[0])

    def canonical(self) -> Tuple[Tuple[float, ...], ...]:
        """按坐标字典序排序的规范形式"""
        return tuple(sorted(tuple(float(v) for v in row) for row in self.points))

    def __eq__(self, other) -> bool:
        if not isinstance(other, QPoint):
            return NotImplemented
        return self.space == other.space and self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash((self.space, self.canonical()))

    def __len__(self) -> int:
        return self.Q

    def __repr__(self) -> str:
        return f"QPoint(Q={self.Q}, points={self.points.tolist()})"

    def to_dict(self) -> dict:
        return {"Q": self.Q, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data: dict, space: Optional[Space] = None) -> "QPoint":
        points = np.asarray(data["points"], dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        space = space or Space(dim=int(points.shape[1]))
        qp = cls(space, points)
        if "Q" in data and int(data["Q"]) != qp.Q:
            raise QMismatchError(f"声明的 Q={data['Q']} 与点数 {qp.Q} 不一致")
        return qp


@dataclass(frozen=True)
class Matching:
    """置换 σ（0 起始）及其达到的 min-max 代价"""
    sigma: Tuple[int, ...]
    value: float

    def to_dict(self) -> dict:
        return {"sigma": list(self.sigma), "value": self.value}


def _check_pair(a: QPoint, b: QPoint):
    if a.space != b.space:
        raise SpaceMismatchError(f"空间不一致: {a.space} vs {b.space}")
    if a.Q != b.Q:
        raise QMismatchError(f"Q 不一致: {a.Q} vs {b.Q}")


def cost_matrix(a: QPoint, b: QPoint) -> np.ndarray:
    """C[i, j] = d(a_i, b_j)"""
    _check_pair(a, b)
    return a.space.pairwise(a.points, b.points)


@lru_cache(maxsize=16)
def _permutation_table(q: int) -> np.ndarray:
    # 字典序排列的全部置换，形状 (q!, q)
    return np.array(list(itertools.permutations(range(q))), dtype=np.intp).reshape(-1, q)


def _exact_on_matrix(cost: np.ndarray) -> float:
    q = cost.shape[0]
    perms = _permutation_table(q)
    return float(cost[np.arange(q), perms].max(axis=1).min())


def _perfect_under(cost: np.ndarray, threshold: float) -> bool:
    """阈值图 {cost <= threshold} 是否存在完美匹配"""
    mask = cost <= threshold
    if not mask.any(axis=1).all() or not mask.any(axis=0).all():
        return False
    graph = csr_matrix(mask.astype(np.int8))
    match = maximum_bipartite_matching(graph, perm_type='column')
    return bool(np.all(match >= 0))


def bottleneck_value(cost: np.ndarray) -> float:
    """
    方阵上的瓶颈指派值

    在全部 Q² 个代价的有序去重值上二分，可行性由最大二分匹配判定，
    结果必然是矩阵中的某个元素，不引入二分误差。元素可以为 inf（禁用边）。
    """
    finite = np.unique(cost[np.isfinite(cost)])
    if finite.size == 0 or not _perfect_under(cost, finite[-1]):
        return float("inf")
    lo, hi = 0, finite.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_under(cost, finite[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(finite[lo])


def s_metric_exact(a: QPoint, b: QPoint, cap: Optional[int] = None) -> float:
    """S(a, b)：穷举全部 Q! 个置换的 min-max 值"""
    cap = cap if cap is not None else get_config().metric.exhaustive_cap
    _check_pair(a, b)
    if a.Q > cap:
        raise ExhaustiveCapError(a.Q, cap)
    return _exact_on_matrix(a.space.pairwise(a.points, b.points))


def s_metric_bottleneck(a: QPoint, b: QPoint) -> float:
    """S(a, b)：阈值图二分 + 最大二分匹配"""
    return bottleneck_value(cost_matrix(a, b))


def s_metric(a: QPoint, b: QPoint) -> float:
    """Q 不超过穷举上限时走穷举，否则走匹配求解"""
    if a.Q <= get_config().metric.exhaustive_cap:
        return s_metric_exact(a, b)
    return s_metric_bottleneck(a, b)


def _lexicographic_optimal(cost: np.ndarray, value: float) -> Tuple[int, ...]:
    q = cost.shape[0]
    allowed = cost <= value
    sigma: List[int] = []
    used = np.zeros(q, dtype=bool)
    for i in range(q):
        for j in range(q):
            if used[j] or not allowed[i, j]:
                continue
            rest_rows = np.arange(i + 1, q)
            rest_cols = np.flatnonzero(~used & (np.arange(q) != j))
            if rest_rows.size == 0 or _perfect_under(cost[np.ix_(rest_rows, rest_cols)], value):
                sigma.append(j)
                used[j] = True
                break
        else:
            raise RuntimeError("阈值图不存在完美匹配，瓶颈值计算有误")
    return tuple(sigma)


def optimal_permutation(a: QPoint, b: QPoint) -> Matching:
    """取得 S 值的置换，多个最优置换时取字典序最小者"""
    cost = cost_matrix(a, b)
    value = bottleneck_value(cost)
    return Matching(sigma=_lexicographic_optimal(cost, value), value=value)


def second_best_value(a: QPoint, b: QPoint, sigma: Sequence[int]) -> float:
    """除 sigma 以外所有置换中的最小 min-max 代价（Q = 1 时为 inf）"""
    cost = cost_matrix(a, b)
    best = float("inf")
    for i, j in enumerate(sigma):
        banned = cost.copy()
        banned[i, j] = np.inf
        best = min(best, bottleneck_value(banned))
    return best


def qpoint_concat(a: QPoint, b: QPoint) -> QPoint:
    """多重集之和 a ⊕ b"""
    if a.space != b.space:
        raise SpaceMismatchError(f"空间不一致: {a.space} vs {b.space}")
    return QPoint(a.space, np.vstack([a.points, b.points]))


def support(a: QPoint, tol: float = 0.0) -> List[Tuple[np.ndarray, int]]:
    """
    spt(a)：距离不超过 tol 的点按单链合并，返回 (代表点, 重数) 列表

    相邻两点在 tol 内即同组，组内跨度可以超过 tol；
    各组按规范顺序中首次出现的位置排列，代表点取该位置上的点
    """
    if tol < 0:
        raise GeometryInputError(f"容差不能为负: {tol}")
    pts = np.array(a.canonical(), dtype=float)
    adjacency = csr_matrix(a.space.pairwise(pts, pts) <= tol)
    _, labels = connected_components(adjacency, directed=False)
    groups: List[Tuple[np.ndarray, int]] = []
    seen = {}
    for k, label in enumerate(labels):
        if label in seen:
            rep, mult = groups[seen[label]]
            groups[seen[label]] = (rep, mult + 1)
        else:
            seen[label] = len(groups)
            groups.append((pts[k], 1))
    return groups


def random_qpoint(space: Space, Q: int, rng: np.random.Generator, scale: float = 1.0) -> QPoint:
    """种子化随机 QPoint"""
    return QPoint(space, scale * rng.standard_normal((Q, space.dim)))


def s_metric_batch(A: np.ndarray, B: np.ndarray, space: Space, chunk: Optional[int] = None) -> np.ndarray:
    """
    批量 S 值：A、B 形状 (P, Q, n)，返回 (P,)

    Q 不超过穷举上限时用置换表向量化，距离算术与 s_metric_exact 相同
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 3:
        raise QMismatchError(f"批量输入形状不一致: {A.shape} vs {B.shape}")
    P, q, _ = A.shape
    out = np.empty(P, dtype=float)
    if P == 0:
        return out

    if q > get_config().metric.exhaustive_cap:
        for k in range(P):
            out[k] = bottleneck_value(space.pairwise(A[k], B[k]))
        return out

    perms = _permutation_table(q)
    rows = np.arange(q)
    if chunk is None:
        chunk = max(1, 4_000_000 // (perms.shape[0] * q))
    for lo in range(0, P, chunk):
        hi = min(lo + chunk, P)
        cost = space.norm_of(A[lo:hi, :, None, :] - B[lo:hi, None, :, :])
        out[lo:hi] = cost[:, rows, perms].max(axis=2).min(axis=1)
    return out
