"""
球面到球体的 Lipschitz 延拓
对基点值的支撑做单链聚类，把 f 分解为各簇的 f_i，沿测地线径向延拓，并验证常数 (γ + 8Q − 6)
"""
from typing import List, Optional, Tuple
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from almgren.errors import GeometryInputError, LipschitzBudgetError, ParameterRangeError
from almgren.mvf import Mesh, SampledMVF, lipschitz_estimate, lipschitz_estimate_from_values
from almgren.qspace import QPoint, s_metric_batch
from almgren.spaces import Bicombing, Space
from config.config_manager import get_config
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ExtensionParams:
    """延拓参数：D、基点、Lip(f)、γ"""
    D: float
    base_point: Tuple[float, ...]
    lip: float
    gamma: float
    lip_estimate: Optional[float] = None
    inflation: float = 1.0

    def __post_init__(self):
        if not self.D > 0:
            raise ParameterRangeError(f"D 必须大于 0: {self.D}")
        if self.lip < 0:
            raise ParameterRangeError(f"Lip(f) 不能为负: {self.lip}")
        if self.gamma < 1:
            raise ParameterRangeError(f"γ 必须不小于 1: {self.gamma}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["base_point"] = list(self.base_point)
        return data


@dataclass(frozen=True)
class Cluster:
    """一个簇：成员按字典序排列，首个成员为基 p(i,1)"""
    members: np.ndarray

    @property
    def base(self) -> np.ndarray:
        return self.members[0]

    @property
    def size(self) -> int:
        return int(self.members.shape[0])


@dataclass(frozen=True)
class ClusterDecomposition:
    """基点值支撑的簇分解"""
    clusters: Tuple[Cluster, ...]
    D: float
    space: Space

    @property
    def s(self) -> int:
        return len(self.clusters)

    @property
    def Q(self) -> int:
        return sum(c.size for c in self.clusters)

    @property
    def sizes(self) -> List[int]:
        return [c.size for c in self.clusters]

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "s": self.s,
            "clusters": [
                {"base": c.base.tolist(), "size": c.size, "members": c.members.tolist()}
                for c in self.clusters
            ],
        }


def _lex_sorted(points: np.ndarray) -> np.ndarray:
    order = np.lexsort(points.T[::-1])
    return points[order]


def cluster_support(base_value: QPoint, D: float) -> ClusterDecomposition:
    """
    支撑上阈值 4D 的单链聚类

    距离 ≤ 4D 的点连边，连通分量即为簇；分量之间距离必然 > 4D，
    分量内部存在步长 ≤ 4D 的链。簇按基点字典序排列。
    """
    if not D > 0:
        raise ParameterRangeError(f"D 必须大于 0: {D}")
    points = base_value.points
    adjacency = base_value.space.pairwise(points, points) <= 4.0 * D
    n_components, labels = connected_components(csr_matrix(adjacency.astype(np.int8)), directed=False)
    clusters = [Cluster(members=_lex_sorted(points[labels == k])) for k in range(n_components)]
    clusters.sort(key=lambda c: tuple(c.base))
    for c in clusters:
        c.members.setflags(write=False)
    decomposition = ClusterDecomposition(clusters=tuple(clusters), D=float(D), space=base_value.space)
    logger.debug(f"簇分解: s={decomposition.s}, 大小 {decomposition.sizes}")
    return decomposition


def _membership(clusters: ClusterDecomposition, space, points: np.ndarray, D: float, tol: float) -> List[List[int]]:
    hits: List[List[int]] = [[] for _ in range(points.shape[0])]
    for i, cluster in enumerate(clusters.clusters):
        near = (space.pairwise(points, cluster.members) <= D + tol * max(1.0, D)).any(axis=1)
        for k in np.flatnonzero(near):
            hits[k].append(i)
    return hits


def decompose_at(f: SampledMVF, clusters: ClusterDecomposition, D: float, x) -> List[QPoint]:
    """
    f(x) 按所属簇的 D 邻域（闭球并）划分为 (f_1(x), ..., f_s(x))

    点不在任何簇的邻域内、同时落入两个簇、或各部分点数与 Q_i 不符时，
    抛出 LipschitzBudgetError：f 在该点的变化超出 D 所假定的预算
    """
    cfg = get_config().extension
    values = f.raw(x)
    hits = _membership(clusters, f.target, values, D, cfg.membership_tol)
    parts: List[List[np.ndarray]] = [[] for _ in clusters.clusters]
    for k, owners in enumerate(hits):
        if not owners:
            raise LipschitzBudgetError(
                f"f({np.round(x, 6).tolist()}) 的点 {values[k].tolist()} 不在任何簇的 D={D:.6g} 邻域内",
                cfg.lip_inflation,
            )
        if len(owners) > 1:
            raise LipschitzBudgetError(
                f"点 {values[k].tolist()} 同时落入簇 {owners} 的邻域，输入数据可能已损坏",
                cfg.lip_inflation,
            )
        parts[owners[0]].append(values[k])

    result = []
    for cluster, part in zip(clusters.clusters, parts):
        if len(part) != cluster.size:
            raise LipschitzBudgetError(
                f"f({np.round(x, 6).tolist()}) 落入基 {cluster.base.tolist()} 簇的点数为 {len(part)}，应为 {cluster.size}",
                cfg.lip_inflation,
            )
        result.append(QPoint(f.target, np.vstack(part)))
    return result


def extend_eval(
    f: SampledMVF,
    b: Bicombing,
    params: ExtensionParams,
    x,
    clusters: Optional[ClusterDecomposition] = None
) -> QPoint:
    """
    F(x)

    F(0) = Σ_i Q_i [[p(i,1)]]；x ≠ 0 时取 θ(x) = x/|x|，把 f(θ(x)) 分解为 q_j^i，
    返回测地点 c_{p(i,1), q_j^i}(|x| d(p(i,1), q_j^i)) 的多重集
    """
    cfg = get_config().extension
    x = f.domain.point(x)
    radius = float(np.linalg.norm(x))
    if radius > 1.0 + 1e-12:
        raise ParameterRangeError(f"|x| = {radius} 超出单位球")
    if clusters is None:
        clusters = cluster_support(f(params.base_point), params.D)

    if radius < cfg.origin_epsilon:
        return QPoint(f.target, np.vstack([
            np.repeat(c.base[None, :], c.size, axis=0) for c in clusters.clusters
        ]))

    radius = min(radius, 1.0)
    theta = x / radius
    parts = decompose_at(f, clusters, params.D, theta)
    out = []
    for cluster, part in zip(clusters.clusters, parts):
        base = np.repeat(cluster.base[None, :], part.Q, axis=0)
        lengths = b.space.norm_of(part.points - base)
        out.append(b.eval_batch(base, part.points, radius * lengths))
    return QPoint(f.target, np.vstack(out))


@dataclass
class ChainReport:
    """簇半径与链式界 4D(Q_i − 1) + D ≤ D(4Q − 3) 的比较"""
    radii: List[float]
    bounds: List[float]
    global_bound: float
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return all(r <= b for r, b in zip(self.radii, self.bounds)) and all(
            b <= self.global_bound for b in self.bounds
        )

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def chain_radius_check(clusters: ClusterDecomposition, D: float) -> ChainReport:
    """max_k d(p(i,1), p(i,k)) ≤ 4D(Q_i − 1) + D ≤ D(4Q − 3)"""
    radii, bounds = [], []
    for cluster in clusters.clusters:
        radii.append(float(np.max(clusters.space.norm_of(cluster.members - cluster.base[None, :]))))
        bounds.append(4.0 * D * (cluster.size - 1) + D)
    global_bound = D * (4 * clusters.Q - 3)
    worst = max(r / b for r, b in zip(radii, bounds)) if radii else 0.0
    return ChainReport(radii=radii, bounds=bounds, global_bound=global_bound, worst_ratio=worst)


@dataclass
class ExtensionReport:
    """延拓验证报告"""
    Q: int
    gamma: float
    lip: float
    boundary_error: float
    empirical_lip: float
    lip_bound: float
    near_origin_ratio: float
    near_origin_bound: float
    chain: ChainReport
    pairs_checked: int
    tolerance: float
    rel_tol: float
    worst_pair: Tuple[int, int] = (0, 0)
    per_pair: Optional[dict] = field(default=None, repr=False)

    @property
    def boundary_passed(self) -> bool:
        return self.boundary_error <= self.tolerance

    @property
    def lip_passed(self) -> bool:
        return self.empirical_lip <= self.lip_bound * (1 + self.rel_tol) + self.tolerance

    @property
    def near_origin_passed(self) -> bool:
        return self.near_origin_ratio <= self.near_origin_bound * (1 + self.rel_tol) + self.tolerance

    @property
    def passed(self) -> bool:
        return self.boundary_passed and self.lip_passed and self.near_origin_passed and self.chain.passed

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "gamma": self.gamma,
            "lip": self.lip,
            "boundary_error": self.boundary_error,
            "empirical_lip": self.empirical_lip,
            "lip_bound": self.lip_bound,
            "near_origin_ratio": self.near_origin_ratio,
            "near_origin_bound": self.near_origin_bound,
            "chain": self.chain.to_dict(),
            "pairs_checked": self.pairs_checked,
            "worst_pair": list(self.worst_pair),
            "passed": {
                "boundary": self.boundary_passed,
                "lipschitz": self.lip_passed,
                "near_origin": self.near_origin_passed,
                "chain": self.chain.passed,
                "all": self.passed,
            },
        }


def prepare_extension(
    f: SampledMVF,
    b: Bicombing,
    sphere_mesh: Mesh,
    lip: Optional[float] = None,
    inflation: Optional[float] = None,
    base_point=None,
    pairs: Optional[int] = None,
    seed: int = 0
) -> Tuple[ExtensionParams, ClusterDecomposition]:
    """
    构造延拓参数与簇分解

    未给出 lip 时优先用采样表声明的常数，否则用球面网格上的经验估计（下界）再乘以放大系数；
    D = 2·Lip(f)。Lip(f) 为 0（常值映射）时 D 取 origin_epsilon 以保持 D > 0。
    """
    cfg = get_config().extension
    inflation = inflation if inflation is not None else cfg.lip_inflation
    estimate = None
    if lip is None and f.declared_lip is not None:
        lip = f.declared_lip
    if lip is None:
        estimate = lipschitz_estimate(f, sphere_mesh, pairs, seed)
        lip = estimate * inflation
    else:
        inflation = 1.0
    base = tuple(float(v) for v in (sphere_mesh.points[0] if base_point is None else f.domain.point(base_point)))
    D = max(2.0 * lip, cfg.origin_epsilon)
    params = ExtensionParams(D=D, base_point=base, lip=float(lip), gamma=b.gamma,
                             lip_estimate=estimate, inflation=inflation)
    clusters = cluster_support(f(base), D)
    logger.info(f"延拓参数 ({f.provenance}): Lip={lip:.6f}, D={D:.6f}, s={clusters.s}, Q_i={clusters.sizes}")
    return params, clusters


def verify_extension(
    f: SampledMVF,
    b: Bicombing,
    params: ExtensionParams,
    sphere_mesh: Mesh,
    ball_mesh: Mesh,
    pairs: Optional[int] = None,
    seed: int = 0,
    clusters: Optional[ClusterDecomposition] = None,
    keep_pairs: bool = False
) -> ExtensionReport:
    """
    计算边界限制误差、F 的经验 Lipschitz 常数与近原点比值，并与两个界比较
    """
    cfg = get_config()
    if clusters is None:
        clusters = cluster_support(f(params.base_point), params.D)
    Q = f.Q

    boundary_error = 0.0
    if len(sphere_mesh):
        F_sphere = np.stack([extend_eval(f, b, params, x, clusters).points for x in sphere_mesh.points])
        boundary = s_metric_batch(F_sphere, f.values_on(sphere_mesh.points), f.target)
        boundary_error = float(np.max(boundary))

    F_ball = np.stack([extend_eval(f, b, params, x, clusters).points for x in ball_mesh.points])
    collected: List = []
    estimate = lipschitz_estimate_from_values(
        f.domain, f.target, ball_mesh.points, F_ball, pairs, seed,
        per_pair=collected if keep_pairs else None,
    )

    radii = np.linalg.norm(ball_mesh.points, axis=1)
    nonzero = radii >= cfg.extension.origin_epsilon
    near_origin = 0.0
    if nonzero.any():
        F0 = extend_eval(f, b, params, np.zeros(f.domain.dim), clusters).points
        origin_values = np.repeat(F0[None, :, :], int(nonzero.sum()), axis=0)
        ratios = s_metric_batch(F_ball[nonzero], origin_values, f.target) / radii[nonzero]
        near_origin = float(np.max(ratios))

    per_pair = None
    if keep_pairs and collected:
        ii, jj, d, s_values = collected[0]
        per_pair = {"i": ii, "j": jj, "distance": d, "s_value": s_values, "ratio": s_values / d}

    report = ExtensionReport(
        Q=Q,
        gamma=params.gamma,
        lip=params.lip,
        boundary_error=boundary_error,
        empirical_lip=estimate.value,
        lip_bound=(params.gamma + 8 * Q - 6) * params.lip,
        near_origin_ratio=near_origin,
        near_origin_bound=(8 * Q - 6) * params.lip,
        chain=chain_radius_check(clusters, params.D),
        pairs_checked=estimate.pairs_checked,
        tolerance=cfg.metric.tolerance,
        rel_tol=cfg.extension.bound_rel_tol,
        worst_pair=estimate.pair,
        per_pair=per_pair,
    )
    logger.info(
        f"延拓验证 ({f.provenance}): 边界误差 {boundary_error:.3e}, "
        f"Lip(F)≈{report.empirical_lip:.4f} ≤ {report.lip_bound:.4f}, "
        f"近原点 {near_origin:.4f} ≤ {report.near_origin_bound:.4f}, {'通过' if report.passed else '失败'}"
    )
    return report


@dataclass
class DecompositionReport:
    """分解度量恒等式 S(f(x), f(y)) = max_i S(f_i(x), f_i(y)) 的验证结果"""
    max_gap: float
    lip_f: float
    lip_parts: List[float]
    pairs_checked: int
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tolerance and all(l <= self.lip_f for l in self.lip_parts)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def verify_decomposition(
    f: SampledMVF,
    clusters: ClusterDecomposition,
    D: float,
    mesh: Mesh,
    tolerance: float = 1e-12
) -> DecompositionReport:
    """在网格全部点对上比较 S(f(x), f(y)) 与 max_i S(f_i(x), f_i(y))，并估计各 f_i 的 Lipschitz 常数"""
    if len(mesh) < 2:
        raise GeometryInputError("网格至少需要两个点")
    full = f.values_on(mesh.points)
    parts = [decompose_at(f, clusters, D, x) for x in mesh.points]
    ii, jj = np.triu_indices(len(mesh), k=1)

    s_full = s_metric_batch(full[ii], full[jj], f.target)
    s_parts = []
    lip_parts = []
    for i in range(clusters.s):
        values = np.stack([p[i].points for p in parts])
        s_parts.append(s_metric_batch(values[ii], values[jj], f.target))
        lip_parts.append(lipschitz_estimate_from_values(f.domain, f.target, mesh.points, values).value)
    gap = float(np.max(np.abs(s_full - np.max(np.vstack(s_parts), axis=0))))
    lip_f = lipschitz_estimate_from_values(f.domain, f.target, mesh.points, full).value

    report = DecompositionReport(
        max_gap=gap, lip_f=lip_f, lip_parts=lip_parts, pairs_checked=int(ii.size), tolerance=tolerance,
    )
    logger.info(f"分解恒等式 ({f.provenance}): 最大偏差 {gap:.3e}, Lip(f)={lip_f:.6f}, Lip(f_i)={lip_parts}")
    return report
