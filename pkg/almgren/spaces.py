"""
度量空间与测地双梳
有限维赋范空间 (R^n, euclidean / sup / one)、线性测地双梳以及 γ-弱凸性的采样验证
"""
from typing import Callable, List, Sequence, Tuple
from dataclasses import dataclass

import numpy as np

from almgren.errors import (
    DimensionMismatchError,
    EmptyInputError,
    GeometryInputError,
    ParameterRangeError,
)
from utils.logger import get_logger

logger = get_logger(__name__)

NORMS = ("euclidean", "sup", "one")
DEFAULT_TOL = 1e-9


def _norm_rows(diff: np.ndarray, norm: str) -> np.ndarray:
    # 所有距离都走这一条算术路径，精确解与匹配解才会得到逐位相同的数值
    if norm == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=-1))
    if norm == "sup":
        return np.max(np.abs(diff), axis=-1)
    return np.sum(np.abs(diff), axis=-1)


@dataclass(frozen=True)
class Space:
    """有限维赋范空间 (R^dim, norm)"""
    dim: int
    norm: str = "euclidean"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise GeometryInputError(f"空间维数必须为正整数: {self.dim}")
        if self.norm not in NORMS:
            raise GeometryInputError(f"不支持的范数: {self.norm}，可选 {NORMS}")

    def point(self, x) -> np.ndarray:
        """转换并检查单个点"""
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.shape[0] != self.dim:
            raise DimensionMismatchError(f"点的维数 {arr.shape[0]} 与空间维数 {self.dim} 不一致")
        return arr

    def points(self, xs) -> np.ndarray:
        """转换并检查点数组，形状 (N, dim)"""
        arr = np.asarray(xs, dtype=float)
        if arr.ndim == 1 and self.dim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise DimensionMismatchError(f"点集形状 {arr.shape} 与空间维数 {self.dim} 不一致")
        return arr

    def norm_of(self, v) -> np.ndarray:
        """沿最后一维计算范数"""
        return _norm_rows(np.asarray(v, dtype=float), self.norm)

    def distance(self, x, y) -> float:
        return float(_norm_rows(self.point(x) - self.point(y), self.norm))

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """距离矩阵 D[i, j] = d(a_i, b_j)"""
        return _norm_rows(a[:, None, :] - b[None, :, :], self.norm)

    def to_dict(self) -> dict:
        return {"dim": int(self.dim), "norm": self.norm}

    @classmethod
    def from_dict(cls, data: dict) -> "Space":
        return cls(dim=int(data["dim"]), norm=data.get("norm", "euclidean"))


def distance(space: Space, x, y) -> float:
    """d(x, y) = ||x - y||"""
    return space.distance(x, y)


# 批量测地规则: (xs, ys, ts) -> 点，xs/ys 形状 (N, dim)，ts 形状 (N,)
GeodesicRule = Callable[[np.ndarray, np.ndarray, np.ndarray, Space], np.ndarray]


def _linear_rule(xs: np.ndarray, ys: np.ndarray, ts: np.ndarray, space: Space) -> np.ndarray:
    lengths = space.norm_of(ys - xs)
    safe = np.where(lengths > 0, lengths, 1.0)
    out = xs + (ts / safe)[:, None] * (ys - xs)
    # 端点精确：t = 0 返回 x，t = d(x, y) 返回 y，退化测地线为常值
    out = np.where((ts == lengths)[:, None], ys, out)
    out = np.where(((ts == 0) | (lengths == 0))[:, None], xs, out)
    return out


@dataclass(frozen=True)
class Bicombing:
    """测地双梳：为每个有序点对 (x, y) 指定单位速度测地线 c_xy"""
    space: Space
    gamma: float
    rule: GeodesicRule
    name: str = "custom"

    def __post_init__(self):
        if self.gamma < 1:
            raise ParameterRangeError(f"γ 必须不小于 1: {self.gamma}")

    def eval_batch(self, xs, ys, ts) -> np.ndarray:
        """批量求 c_{x_k y_k}(t_k)，与 geodesic_eval 使用同一规则"""
        xs = self.space.points(xs)
        ys = self.space.points(ys)
        ts = np.asarray(ts, dtype=float).reshape(-1)
        if xs.shape != ys.shape or ts.shape[0] != xs.shape[0]:
            raise DimensionMismatchError(f"批量输入形状不一致: {xs.shape}, {ys.shape}, {ts.shape}")
        return self.rule(xs, ys, ts, self.space)


def linear_bicombing(space: Space) -> Bicombing:
    """赋范空间上的线性测地双梳 c_xy(t) = x + (t / d(x,y))(y - x)，γ = 1"""
    return Bicombing(space=space, gamma=1.0, rule=_linear_rule, name="linear")


def geodesic_eval(b: Bicombing, x, y, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    求 c_xy(t)

    t 允许超出 [0, d(x,y)] 不超过 tol·max(1, d) 的舍入误差，此时截断到端点
    """
    x = b.space.point(x)
    y = b.space.point(y)
    length = b.space.distance(x, y)
    slack = tol * max(1.0, length)
    if t < -slack or t > length + slack:
        raise ParameterRangeError(f"参数 t={t} 超出 [0, {length}]")
    t = min(max(float(t), 0.0), length)
    return b.rule(x[None, :], y[None, :], np.array([t]), b.space)[0]


@dataclass
class WeakConvexityReport:
    """γ-弱凸性验证报告"""
    gamma: float
    min_slack: float
    worst_triple: Tuple[List[float], List[float], List[float]]
    worst_t: float
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "min_slack": self.min_slack,
            "worst_triple": [list(p) for p in self.worst_triple],
            "worst_t": self.worst_t,
            "checked": self.checked,
            "passed": self.passed,
        }


def random_triples(space: Space, count: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """种子化高斯三元组，形状 (count, 3, dim)"""
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((count, 3, space.dim))


def verify_weak_convexity(
    b: Bicombing,
    gamma: float,
    triples,
    ts: Sequence[float],
    tolerance: float = DEFAULT_TOL
) -> WeakConvexityReport:
    """
    对每个三元组 (x, y, z) 与 t 计算
    slack = γ t d(y,z) - d(c_xy(t d(x,y)), c_xz(t d(x,z)))
    报告最小 slack 及其位置
    """
    triples = np.asarray(triples, dtype=float)
    ts = np.asarray(list(ts), dtype=float)
    if triples.size == 0 or ts.size == 0:
        raise EmptyInputError("三元组列表与参数列表均不能为空")
    if triples.ndim != 3 or triples.shape[1] != 3 or triples.shape[2] != b.space.dim:
        raise DimensionMismatchError(f"三元组形状 {triples.shape} 与空间维数 {b.space.dim} 不一致")
    if np.any(ts < 0) or np.any(ts > 1):
        raise ParameterRangeError("参数 t 必须位于 [0, 1]")

    xs, ys, zs = triples[:, 0, :], triples[:, 1, :], triples[:, 2, :]
    space = b.space
    dxy = space.norm_of(ys - xs)
    dxz = space.norm_of(zs - xs)
    dyz = space.norm_of(zs - ys)

    best_slack = np.inf
    best_index, best_t = 0, float(ts[0])
    for t in ts:
        p = b.rule(xs, ys, np.minimum(t * dxy, dxy), space)
        q = b.rule(xs, zs, np.minimum(t * dxz, dxz), space)
        slack = gamma * t * dyz - space.norm_of(p - q)
        k = int(np.argmin(slack))
        if slack[k] < best_slack:
            best_slack, best_index, best_t = float(slack[k]), k, float(t)

    worst = triples[best_index]
    report = WeakConvexityReport(
        gamma=float(gamma),
        min_slack=best_slack,
        worst_triple=(worst[0].tolist(), worst[1].tolist(), worst[2].tolist()),
        worst_t=best_t,
        checked=int(triples.shape[0] * ts.size),
        tolerance=tolerance,
    )
    logger.info(
        f"弱凸性验证 ({space.norm}, n={space.dim}, γ={gamma}): "
        f"{report.checked} 组, 最小 slack {best_slack:.3e}, {'通过' if report.passed else '失败'}"
    )
    return report


def verify_isometric_parametrization(
    b: Bicombing,
    count: int = 1000,
    seed: int = 0
) -> float:
    """随机点对与参数对上 |d(c(t), c(t')) - |t - t'|| 的最大值"""
    rng = np.random.default_rng(seed)
    space = b.space
    xs = rng.standard_normal((count, space.dim))
    ys = rng.standard_normal((count, space.dim))
    lengths = space.norm_of(ys - xs)
    t1 = rng.uniform(0, 1, count) * lengths
    t2 = rng.uniform(0, 1, count) * lengths
    gap = np.abs(space.norm_of(b.rule(xs, ys, t1, space) - b.rule(xs, ys, t2, space)) - np.abs(t1 - t2))
    return float(np.max(gap))
