"""
多值函数 f : X -> Q_Q(Y)
解析求值器或采样表两种形式；球面/球体网格；Lipschitz常数估计；分支延续与单值化置换
"""
import math
from typing import Callable, Dict, List, Optional, Tuple
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import KDTree

from almgren.errors import (
    ContinuationAmbiguityError,
    EmptyInputError,
    GeometryInputError,
    ParameterRangeError,
    QMismatchError,
    UnknownFixtureError,
)
from almgren.qspace import QPoint, optimal_permutation, s_metric_batch, second_best_value
from almgren.spaces import Space
from config.config_manager import get_config
from utils.logger import get_logger
from utils.sweep_runner import chunked_max

logger = get_logger(__name__)

UNIT_TOL = 1e-12
TABLE_TOL = 1e-9


@dataclass
class Mesh:
    """定义域网格"""
    points: np.ndarray
    kind: str = "explicit"  # sphere / ball / explicit
    m: Optional[int] = None
    seed: Optional[int] = None

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "seed": self.seed, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Mesh":
        return cls(
            points=np.asarray(data["points"], dtype=float),
            kind=data.get("kind", "explicit"),
            m=data.get("m"),
            seed=data.get("seed"),
        )


def sample_sphere(m: int, N: int, seed: int = 0) -> Mesh:
    """
    S^m ⊂ R^{m+1} 上的网格

    m = 1 时为 N 个等角度点（忽略种子）；m >= 2 时首点为 (1,0,...,0)，
    其余为归一化的种子化高斯点
    """
    if m < 1:
        raise ParameterRangeError(f"球面维数 m 必须不小于 1: {m}")
    if N < 2:
        raise ParameterRangeError(f"网格点数 N 必须不小于 2: {N}")
    if m == 1:
        theta = 2.0 * np.pi * np.arange(N) / N
        points = np.column_stack([np.cos(theta), np.sin(theta)])
        return Mesh(points=points, kind="sphere", m=1, seed=None)

    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((N - 1, m + 1))
    norms = np.linalg.norm(raw, axis=1)
    raw = raw[norms > 1e-300] / norms[norms > 1e-300, None]
    base = np.zeros((1, m + 1))
    base[0, 0] = 1.0
    return Mesh(points=np.vstack([base, raw]), kind="sphere", m=m, seed=seed)


def sample_ball(m: int, N: int, seed: int = 0) -> Mesh:
    """
    B^{m+1} 上的网格：原点、边界壳层（约 N/4 个单位向量）以及内部点

    内部点半径取 U^{1/(m+1)}，在体积意义下均匀
    """
    if m < 1:
        raise ParameterRangeError(f"球面维数 m 必须不小于 1: {m}")
    if N < 1:
        raise ParameterRangeError(f"网格点数 N 必须不小于 1: {N}")
    dim = m + 1
    rng = np.random.default_rng(seed)
    parts = [np.zeros((1, dim))]

    shell = min(N - 1, (N - 1) // 4)
    if shell >= 2:
        parts.append(sample_sphere(m, shell, seed).points)
    elif shell == 1:
        parts.append(np.eye(1, dim))

    interior = N - 1 - max(shell, 0)
    if interior > 0:
        directions = rng.standard_normal((interior, dim))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        radii = rng.uniform(0.0, 1.0, interior) ** (1.0 / dim)
        parts.append(directions * radii[:, None])

    return Mesh(points=np.vstack(parts), kind="ball", m=m, seed=seed)


def radial_ball_mesh(sphere_mesh: Mesh, levels: int = 8) -> Mesh:
    """原点加上球面网格点的径向缩放 r·p，r = k/levels，k = 1..levels"""
    if levels < 1:
        raise ParameterRangeError(f"径向层数必须不小于 1: {levels}")
    radii = np.arange(1, levels + 1) / levels
    scaled = (radii[:, None, None] * sphere_mesh.points[None, :, :]).reshape(-1, sphere_mesh.points.shape[1])
    origin = np.zeros((1, sphere_mesh.points.shape[1]))
    return Mesh(points=np.vstack([origin, scaled]), kind="ball", m=sphere_mesh.m, seed=sphere_mesh.seed)


Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass
class SampledMVF:
    """
    多值函数：求值器 (x -> (Q, n) 数组) 或采样表 (网格点 -> QPoint)
    """
    domain: Space
    target: Space
    Q: int
    evaluator: Optional[Evaluator] = None
    table_points: Optional[np.ndarray] = None
    table_values: Optional[np.ndarray] = None
    provenance: str = "custom"
    description: str = ""
    declared_lip: Optional[float] = None
    _tree: Optional[KDTree] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.evaluator is None and self.table_points is None:
            raise GeometryInputError("多值函数需要求值器或采样表")
        if self.table_points is not None:
            self.table_points = self.domain.points(self.table_points)
            values = np.asarray(self.table_values, dtype=float)
            if values.ndim != 3 or values.shape[0] != self.table_points.shape[0]:
                raise GeometryInputError(f"采样表取值形状不正确: {values.shape}")
            if values.shape[1] != self.Q:
                raise QMismatchError(f"采样表 Q={values.shape[1]} 与声明的 Q={self.Q} 不一致")
            if values.shape[2] != self.target.dim:
                raise GeometryInputError(f"采样表取值维数 {values.shape[2]} 与目标空间不一致")
            self.table_values = values
            self._tree = KDTree(self.table_points)

    def raw(self, x) -> np.ndarray:
        """在 x 处求值，返回 (Q, n) 数组"""
        x = self.domain.point(x)
        if self.evaluator is not None:
            values = np.asarray(self.evaluator(x), dtype=float).reshape(self.Q, self.target.dim)
            return values
        dist, index = self._tree.query(x)
        if dist > TABLE_TOL:
            raise GeometryInputError(f"点 {x.tolist()} 不在采样表中 (最近距离 {dist:.3e})")
        return self.table_values[index]

    def __call__(self, x) -> QPoint:
        return QPoint(self.target, self.raw(x))

    def values_on(self, points: np.ndarray) -> np.ndarray:
        """整批求值，形状 (N, Q, n)"""
        return np.stack([self.raw(p) for p in points]) if len(points) else np.empty((0, self.Q, self.target.dim))

    def to_table(self, mesh: Mesh) -> dict:
        """导出为采样表 JSON 结构"""
        data = {
            "domain": {"space": self.domain.to_dict(), **mesh.to_dict()},
            "target": self.target.to_dict(),
            "Q": self.Q,
            "provenance": self.provenance,
            "values": [{"Q": self.Q, "points": v.tolist()} for v in self.values_on(mesh.points)],
        }
        if self.declared_lip is not None:
            data["lip"] = self.declared_lip
        return data

    @classmethod
    def from_table(cls, data: dict) -> "SampledMVF":
        domain_data = data["domain"]
        points = np.asarray(domain_data["points"], dtype=float)
        domain = Space.from_dict(domain_data.get("space", {"dim": points.shape[1]}))
        values = np.asarray([v["points"] for v in data["values"]], dtype=float)
        target = Space.from_dict(data.get("target", {"dim": values.shape[2]}))
        return cls(
            domain=domain,
            target=target,
            Q=int(data.get("Q", values.shape[1])),
            table_points=points,
            table_values=values,
            provenance=data.get("provenance", "table"),
            declared_lip=float(data["lip"]) if data.get("lip") is not None else None,
        )


@dataclass
class LipschitzEstimate:
    """Lipschitz常数估计结果"""
    value: float
    pair: Tuple[int, int]
    pairs_checked: int
    exhaustive: bool


def _pair_indices(n: int, pairs: int, seed: int, threshold: int) -> Tuple[np.ndarray, np.ndarray, bool]:
    if n < threshold:
        i, j = np.triu_indices(n, k=1)
        return i, j, True
    # 同一种子下较小预算取到的点对是较大预算的前缀，估计值随预算单调不减
    drawn = np.random.default_rng(seed).integers(0, n, (pairs, 2))
    i, j = drawn[:, 0], drawn[:, 1]
    keep = i != j
    return i[keep], j[keep], False


def lipschitz_estimate_from_values(
    domain: Space,
    target: Space,
    points: np.ndarray,
    values: np.ndarray,
    pairs: Optional[int] = None,
    seed: int = 0,
    per_pair: Optional[List] = None
) -> LipschitzEstimate:
    """
    已求值网格上的 max S(f(x), f(y)) / d(x, y)

    网格点少于阈值时枚举全部点对，否则取种子化随机点对；
    per_pair 非空时追加 (i, j, d, S) 明细用于导出
    """
    cfg = get_config()
    pairs = pairs if pairs is not None else cfg.sampling.default_pairs
    n = int(points.shape[0])
    if n < 2:
        raise EmptyInputError("网格至少需要两个点")
    ii, jj, exhaustive = _pair_indices(n, pairs, seed, cfg.sampling.all_pairs_threshold)
    d = domain.norm_of(points[ii] - points[jj])
    keep = d > 0
    ii, jj, d = ii[keep], jj[keep], d[keep]
    if ii.size == 0:
        raise EmptyInputError("网格点全部重合，无法估计 Lipschitz 常数")

    s_values = np.empty(ii.size)

    def chunk_fn(lo: int, hi: int) -> Tuple[float, int]:
        s_values[lo:hi] = s_metric_batch(values[ii[lo:hi]], values[jj[lo:hi]], target)
        ratios = s_values[lo:hi] / d[lo:hi]
        k = int(np.argmax(ratios))
        return float(ratios[k]), lo + k

    result = chunked_max(
        chunk_fn, ii.size, cfg.sweep.chunk_size, cfg.sweep.workers, label="Lipschitz估计"
    )
    if per_pair is not None:
        per_pair.append((ii, jj, d, s_values))
    return LipschitzEstimate(
        value=max(result.value, 0.0),
        pair=(int(ii[result.index]), int(jj[result.index])),
        pairs_checked=int(ii.size),
        exhaustive=exhaustive,
    )


def lipschitz_estimate(f: SampledMVF, mesh: Mesh, pairs: Optional[int] = None, seed: int = 0) -> float:
    """Lip(f) 的经验下界估计"""
    values = f.values_on(mesh.points)
    estimate = lipschitz_estimate_from_values(f.domain, f.target, mesh.points, values, pairs, seed)
    logger.info(
        f"Lip({f.provenance}) ≈ {estimate.value:.6f} "
        f"({'全部' if estimate.exhaustive else '随机'} {estimate.pairs_checked} 个点对)"
    )
    return estimate.value


def _angle(x: np.ndarray) -> float:
    return math.atan2(x[1], x[0])


def fixture_half_angle() -> SampledMVF:
    """S¹ 上的 Q=2 映射 x=(cos θ, sin θ) ↦ [[(cos θ/2, sin θ/2)]] + [[(−cos θ/2, −sin θ/2)]]"""
    def evaluate(x: np.ndarray) -> np.ndarray:
        h = _angle(x) / 2.0
        c, s = math.cos(h), math.sin(h)
        return np.array([[c, s], [-c, -s]])

    return SampledMVF(
        domain=Space(2), target=Space(2), Q=2, evaluator=evaluate,
        provenance="half-angle", description="半角映射，不能拆分为两个 Lipschitz 分支",
    )


def fixture_root_cycle(Q: int = 3) -> SampledMVF:
    """Q 次根映射 θ ↦ Σ_k [[(cos((θ+2πk)/Q), sin((θ+2πk)/Q))]]，单值化为 Q 轮换"""
    if Q < 1:
        raise ParameterRangeError(f"Q 必须为正整数: {Q}")

    def evaluate(x: np.ndarray) -> np.ndarray:
        angles = (_angle(x) + 2.0 * np.pi * np.arange(Q)) / Q
        return np.column_stack([np.cos(angles), np.sin(angles)])

    return SampledMVF(
        domain=Space(2), target=Space(2), Q=Q, evaluator=evaluate,
        provenance=f"root-cycle-{Q}", description=f"{Q} 次根映射，分支绕行一周后循环置换",
    )


def fixture_identity_circle() -> SampledMVF:
    """Q=1 的包含映射 S¹ ⊂ R²"""
    return SampledMVF(
        domain=Space(2), target=Space(2), Q=1, evaluator=lambda x: x.reshape(1, 2),
        provenance="identity-circle", description="单位圆到平面的包含映射",
    )


def fixture_split_pair() -> SampledMVF:
    """[[x]] + [[−x]]，两个分支各自整体连续"""
    return SampledMVF(
        domain=Space(2), target=Space(2), Q=2, evaluator=lambda x: np.vstack([x, -x]),
        provenance="split-pair", description="可拆分的双值映射 [[x]] + [[-x]]",
    )


def fixture_constant(Q: int = 3) -> SampledMVF:
    """常值映射，分支为互不相同的固定点"""
    values = np.column_stack([np.arange(Q, dtype=float), np.zeros(Q)])
    return SampledMVF(
        domain=Space(2), target=Space(2), Q=Q, evaluator=lambda x: values.copy(),
        provenance=f"constant-{Q}", description=f"{Q} 个固定点的常值映射",
    )


def fixture_two_cluster() -> SampledMVF:
    """[[x/4]] + [[−x/4]] + [[(20,0) + x/4]]，Lip = 1/4，基点值分成两簇"""
    shift = np.array([20.0, 0.0])

    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.vstack([x / 4.0, -x / 4.0, shift + x / 4.0])

    return SampledMVF(
        domain=Space(2), target=Space(2), Q=3, evaluator=evaluate,
        provenance="two-cluster", description="两簇合成映射，用于分解度量恒等式",
    )


def fixture_sphere_split() -> SampledMVF:
    """S² ⊂ R³ 上的 [[x]] + [[−x]]，Lip = 1"""
    return SampledMVF(
        domain=Space(3), target=Space(3), Q=2, evaluator=lambda x: np.vstack([x, -x]),
        provenance="sphere-split", description="二维球面上的对径双值映射",
    )


FIXTURES: Dict[str, Callable[[], SampledMVF]] = {
    "half-angle": fixture_half_angle,
    "identity-circle": fixture_identity_circle,
    "split-pair": fixture_split_pair,
    "constant-3": fixture_constant,
    "two-cluster": fixture_two_cluster,
    "cube-root": lambda: fixture_root_cycle(3),
    "sphere-split": fixture_sphere_split,
}


def fixture_by_name(name: str) -> SampledMVF:
    """按名称取样例函数"""
    try:
        return FIXTURES[name]()
    except KeyError:
        raise UnknownFixtureError(
            f"未知的样例函数: {name}，可选: {', '.join(sorted(FIXTURES))}"
        ) from None


def fixture_sphere_dim(f: SampledMVF) -> int:
    """定义域球面维数 m（定义域为 R^{m+1}）"""
    return f.domain.dim - 1


@dataclass
class MonodromyResult:
    """单值化置换及步长诊断"""
    permutation: Tuple[int, ...]
    steps: int
    loops: int
    max_displacement: float
    min_separation: float

    @property
    def is_identity(self) -> bool:
        return self.permutation == tuple(range(len(self.permutation)))


def branch_monodromy(f: SampledMVF, steps: Optional[int] = None, loops: int = 1) -> Tuple[int, ...]:
    """沿 S¹ 绕行 loops 周，链接相邻求值的最优匹配，返回复合置换"""
    return trace_monodromy(f, steps, loops).permutation


def trace_monodromy(f: SampledMVF, steps: Optional[int] = None, loops: int = 1) -> MonodromyResult:
    """
    分支延续

    第 k 步在 θ_k = 2πk/steps 处求值，最后一步回到起点处的同一次求值；
    每一步的次优指派代价必须超过全程最大位移的两倍，否则抛出 ContinuationAmbiguityError
    """
    steps = steps if steps is not None else get_config().sampling.monodromy_steps
    if f.domain.dim != 2:
        raise GeometryInputError(f"单值化只在 S¹ 上定义，当前定义域维数 {f.domain.dim}")
    if steps < 3 or loops < 1:
        raise ParameterRangeError(f"步数至少为 3、圈数至少为 1: steps={steps}, loops={loops}")

    start = f(np.array([1.0, 0.0]))
    labels = list(range(f.Q))
    previous = start
    max_displacement = 0.0
    min_separation = float("inf")
    total = steps * loops
    for k in range(1, total + 1):
        if k == total:
            current = start
        else:
            theta = 2.0 * np.pi * k / steps
            current = f(np.array([math.cos(theta), math.sin(theta)]))
        matching = optimal_permutation(previous, current)
        max_displacement = max(max_displacement, matching.value)
        min_separation = min(min_separation, second_best_value(previous, current, matching.sigma))
        labels = [matching.sigma[i] for i in labels]
        previous = current

    if not min_separation > 2.0 * max_displacement:
        raise ContinuationAmbiguityError(
            f"分支间距 {min_separation:.3e} 不超过最大位移的两倍 {2 * max_displacement:.3e}，请增加步数"
        )
    result = MonodromyResult(
        permutation=tuple(labels),
        steps=steps,
        loops=loops,
        max_displacement=max_displacement,
        min_separation=min_separation,
    )
    logger.info(f"单值化 ({f.provenance}, {steps} 步 × {loops} 圈): {result.permutation}")
    return result
