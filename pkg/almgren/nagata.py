"""
覆盖与 s-重数
区间/网格盒/球/采样点覆盖、精确与探针重数、Q_Q(Y) 上的乘积覆盖以及 (n+1)^Q 界的验证
"""
import math
import itertools
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import KDTree

from almgren.errors import EmptyInputError, GeometryInputError, ParameterRangeError, ResourceCapError
from almgren.qspace import QPoint
from almgren.spaces import Space
from config.config_manager import get_config
from utils.logger import get_logger
from utils.sweep_runner import chunked_max

logger = get_logger(__name__)

PROBE_CHUNK = 2000


def _norm_factor(space: Space) -> float:
    """边长 L 的立方体在该范数下的直径为 L·factor"""
    if space.norm == "sup":
        return 1.0
    if space.norm == "euclidean":
        return math.sqrt(space.dim)
    return float(space.dim)


@dataclass(frozen=True)
class BoxMember:
    """半开盒 [lows, highs)"""
    lows: Tuple[float, ...]
    highs: Tuple[float, ...]

    def to_dict(self) -> dict:
        return {"lows": list(self.lows), "highs": list(self.highs)}


@dataclass(frozen=True)
class BallMember:
    """闭球 B(center, radius)"""
    center: Tuple[float, ...]
    radius: float

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class SampleMember:
    """采样点下标集合"""
    indices: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {"indices": list(self.indices)}


Member = Union[BoxMember, BallMember, SampleMember]


@dataclass
class Cover:
    """
    带下标的子集族，声明常数 c 与尺度 s

    kind 为 interval / box / ball / sample；成员恰好铺成网格时额外保存各轴的切分点 edges，
    用于精确重数计算，其余盒族 edges 为 None
    """
    space: Space
    c: float
    s: float
    kind: str
    members: List[Member]
    ground_lows: Optional[np.ndarray] = None
    ground_highs: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    edges: Optional[List[np.ndarray]] = None
    _arrays: Dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not self.members:
            raise EmptyInputError("覆盖至少需要一个成员")
        if self.kind in ("interval", "box"):
            self._arrays["lows"] = np.array([m.lows for m in self.members], dtype=float)
            self._arrays["highs"] = np.array([m.highs for m in self.members], dtype=float)
        elif self.kind == "ball":
            self._arrays["centers"] = np.array([m.center for m in self.members], dtype=float)
            self._arrays["radii"] = np.array([m.radius for m in self.members], dtype=float)
        elif self.kind == "sample":
            if self.samples is None:
                raise GeometryInputError("采样覆盖需要 samples")
            for m in self.members:
                if not m.indices:
                    raise EmptyInputError("采样覆盖存在空成员")
            owner = np.full(self.samples.shape[0], -1, dtype=np.intp)
            for k, m in enumerate(self.members):
                idx = np.asarray(m.indices, dtype=np.intp)
                owner[idx[owner[idx] < 0]] = k
            self._arrays["owner"] = owner
        else:
            raise GeometryInputError(f"未知的覆盖类型: {self.kind}")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def diameter_bound(self) -> float:
        return self.c * self.s

    def distances_to_members(self, points: np.ndarray) -> np.ndarray:
        """各点到各成员闭包的距离，形状 (P, M)"""
        points = np.asarray(points, dtype=float)
        if self.kind in ("interval", "box"):
            lows, highs = self._arrays["lows"], self._arrays["highs"]
            clipped = np.clip(points[:, None, :], lows[None, :, :], highs[None, :, :])
            return self.space.norm_of(points[:, None, :] - clipped)
        if self.kind == "ball":
            d = self.space.pairwise(points, self._arrays["centers"])
            return np.maximum(d - self._arrays["radii"][None, :], 0.0)
        to_samples = self.space.pairwise(points, self.samples)
        out = np.full((points.shape[0], len(self.members)), np.inf)
        for k, m in enumerate(self.members):
            out[:, k] = to_samples[:, list(m.indices)].min(axis=1)
        return out

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """成员归属矩阵，形状 (P, M)"""
        points = np.asarray(points, dtype=float)
        if self.kind in ("interval", "box"):
            lows, highs = self._arrays["lows"], self._arrays["highs"]
            return np.all((points[:, None, :] >= lows[None]) & (points[:, None, :] < highs[None]), axis=-1)
        if self.kind == "ball":
            d = self.space.pairwise(points, self._arrays["centers"])
            return d <= self._arrays["radii"][None, :] + tol
        return self.distances_to_members(points) <= tol

    def locate(self, point) -> Optional[int]:
        """包含该点的第一个成员下标，未覆盖时为 None"""
        hits = np.flatnonzero(self.contains(self.space.point(point)[None, :])[0])
        return int(hits[0]) if hits.size else None

    def random_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """地集上的种子化随机点"""
        if self.kind == "sample":
            return self.samples[rng.integers(0, self.samples.shape[0], count)]
        return rng.uniform(self.ground_lows, self.ground_highs, (count, self.space.dim))

    def to_dict(self) -> dict:
        data = {
            "c": self.c,
            "s": self.s,
            "kind": self.kind,
            "space": self.space.to_dict(),
            "members": [m.to_dict() for m in self.members],
        }
        if self.ground_lows is not None:
            data["ground"] = {"lows": self.ground_lows.tolist(), "highs": self.ground_highs.tolist()}
        if self.samples is not None:
            data["samples"] = self.samples.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Cover":
        space = Space.from_dict(data["space"])
        kind = data["kind"]
        raw = data["members"]
        if kind in ("interval", "box"):
            members = [BoxMember(tuple(m["lows"]), tuple(m["highs"])) for m in raw]
        elif kind == "ball":
            members = [BallMember(tuple(m["center"]), float(m["radius"])) for m in raw]
        else:
            members = [SampleMember(tuple(int(i) for i in m["indices"])) for m in raw]
        ground = data.get("ground")
        if ground:
            ground_lows = np.asarray(ground["lows"], dtype=float)
            ground_highs = np.asarray(ground["highs"], dtype=float)
        else:
            ground_lows, ground_highs = _member_bounds(kind, members)
        edges = _tiling_edges(members, space.dim) if kind in ("interval", "box") and members else None
        return cls(
            space=space,
            c=float(data["c"]),
            s=float(data["s"]),
            kind=kind,
            members=members,
            ground_lows=ground_lows,
            ground_highs=ground_highs,
            samples=np.asarray(data["samples"], dtype=float) if "samples" in data else None,
            edges=edges,
        )


def _member_bounds(kind: str, members: List[Member]) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """未给出地集时取成员的外包盒"""
    if kind in ("interval", "box") and members:
        return (np.min([m.lows for m in members], axis=0).astype(float),
                np.max([m.highs for m in members], axis=0).astype(float))
    if kind == "ball" and members:
        centers = np.array([m.center for m in members], dtype=float)
        radii = np.array([m.radius for m in members], dtype=float)[:, None]
        return (centers - radii).min(axis=0), (centers + radii).max(axis=0)
    return None, None


def _tiling_edges(members: List[BoxMember], dim: int) -> Optional[List[np.ndarray]]:
    """
    成员恰为某个网格的全部格子时返回各轴切分点，否则返回 None

    有重叠或空隙的盒族没有逐轴乘积结构，只能走探针下界
    """
    lows = np.array([m.lows for m in members], dtype=float)
    highs = np.array([m.highs for m in members], dtype=float)
    edges = [np.unique(np.concatenate([lows[:, k], highs[:, k]])) for k in range(dim)]
    if math.prod(len(e) - 1 for e in edges) != len(members):
        return None
    observed = {(tuple(lo), tuple(hi)) for lo, hi in zip(lows.tolist(), highs.tolist())}
    expected = {
        (tuple(float(e[k]) for e, k in zip(edges, cell)), tuple(float(e[k + 1]) for e, k in zip(edges, cell)))
        for cell in itertools.product(*(range(len(e) - 1) for e in edges))
    }
    return edges if observed == expected else None


def _axis_edges(lo: float, hi: float, side: float) -> np.ndarray:
    tiles = max(1, math.ceil((hi - lo) / side))
    return lo + side * np.arange(tiles + 1)


def box_cover(c: float, s: float, lows: Sequence[float], highs: Sequence[float], norm: str = "sup") -> Cover:
    """
    R^n 中 [lows, highs) 的网格盒覆盖

    边长取 c·s / factor，使每个盒在所选范数下的直径恰为 c·s；
    边长不小于 s 时任一直径 ≤ s 的集合在每个坐标轴上至多遇到两格
    """
    if c < 3:
        raise ParameterRangeError(f"默认网格构造要求 c ≥ 3: c={c}")
    if not s > 0:
        raise ParameterRangeError(f"尺度 s 必须大于 0: {s}")
    lows = np.asarray(lows, dtype=float).reshape(-1)
    highs = np.asarray(highs, dtype=float).reshape(-1)
    if lows.shape != highs.shape or np.any(lows >= highs):
        raise ParameterRangeError(f"范围不合法: {lows.tolist()} - {highs.tolist()}")
    space = Space(dim=int(lows.shape[0]), norm=norm)
    side = c * s / _norm_factor(space)
    edges = [_axis_edges(lo, hi, side) for lo, hi in zip(lows, highs)]

    count = math.prod(len(e) - 1 for e in edges)
    cap = get_config().cover.member_cap
    if count > cap:
        raise ResourceCapError(f"网格覆盖成员数 {count} 超过上限 {cap}，请增大 s 或缩小范围")

    members = [
        BoxMember(tuple(float(e[k]) for e, k in zip(edges, cell)),
                  tuple(float(e[k + 1]) for e, k in zip(edges, cell)))
        for cell in itertools.product(*(range(len(e) - 1) for e in edges))
    ]
    kind = "interval" if space.dim == 1 else "box"
    logger.debug(f"{kind} 覆盖: c={c}, s={s}, {len(members)} 个成员")
    return Cover(space=space, c=c, s=s, kind=kind, members=members,
                 ground_lows=lows, ground_highs=highs, edges=edges)


def interval_cover(c: float, s: float, range_: Sequence[float]) -> Cover:
    """长度 c·s 的半开区间铺满 [lo, hi)；c = 3 时 s-重数恰为 2"""
    lo, hi = float(range_[0]), float(range_[1])
    if not lo < hi:
        raise ParameterRangeError(f"区间范围不合法: [{lo}, {hi}]")
    return box_cover(c, s, [lo], [hi], norm="euclidean")


def ball_cover(c: float, s: float, lows: Sequence[float], highs: Sequence[float], norm: str = "euclidean") -> Cover:
    """半径 c·s/2 的闭球，球心取在间距 c·s/factor 的网格上"""
    if c < 1 or not s > 0:
        raise ParameterRangeError(f"要求 c ≥ 1 且 s > 0: c={c}, s={s}")
    lows = np.asarray(lows, dtype=float).reshape(-1)
    highs = np.asarray(highs, dtype=float).reshape(-1)
    if lows.shape != highs.shape or np.any(lows >= highs):
        raise ParameterRangeError(f"范围不合法: {lows.tolist()} - {highs.tolist()}")
    space = Space(dim=int(lows.shape[0]), norm=norm)
    spacing = c * s / _norm_factor(space)
    axes = [lo + spacing * (np.arange(max(1, math.ceil((hi - lo) / spacing))) + 0.5) for lo, hi in zip(lows, highs)]
    count = math.prod(len(a) for a in axes)
    cap = get_config().cover.member_cap
    if count > cap:
        raise ResourceCapError(f"球覆盖成员数 {count} 超过上限 {cap}，请增大 s 或缩小范围")
    members = [BallMember(tuple(float(v) for v in center), c * s / 2.0) for center in itertools.product(*axes)]
    return Cover(space=space, c=c, s=s, kind="ball", members=members, ground_lows=lows, ground_highs=highs)


def sample_cover(c: float, s: float, samples, space: Space) -> Cover:
    """
    有限点集的贪心覆盖

    依次取未归属的采样点为中心，把 c·s/2 邻域内未归属的点并入同一成员，
    由三角不等式每个成员直径 ≤ c·s
    """
    if c < 1 or not s > 0:
        raise ParameterRangeError(f"要求 c ≥ 1 且 s > 0: c={c}, s={s}")
    samples = space.points(samples)
    if samples.shape[0] == 0:
        raise EmptyInputError("采样点集为空")
    tree = KDTree(samples)
    p = {"euclidean": 2, "sup": np.inf, "one": 1}[space.norm]
    assigned = np.zeros(samples.shape[0], dtype=bool)
    members = []
    for k in range(samples.shape[0]):
        if assigned[k]:
            continue
        near = np.asarray(tree.query_ball_point(samples[k], c * s / 2.0, p=p), dtype=np.intp)
        near = np.sort(near[~assigned[near]])
        assigned[near] = True
        members.append(SampleMember(tuple(int(i) for i in near)))
    return Cover(space=space, c=c, s=s, kind="sample", members=members, samples=samples)


@dataclass
class ProductCover:
    """Q_Q(Y) 上按 Q 元多重下标 {i_1, ..., i_Q} 编号的乘积覆盖"""
    base: Cover
    Q: int
    indices: List[Tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.indices)

    def locate(self, qpoint: QPoint) -> Optional[Tuple[int, ...]]:
        """每个点取包含它的第一个基成员，排序后即为所在成员的多重下标"""
        located = []
        for p in qpoint.points:
            k = self.base.locate(p)
            if k is None:
                return None
            located.append(k)
        return tuple(sorted(located))

    def to_dict(self) -> dict:
        return {"Q": self.Q, "base": self.base.to_dict(), "indices": [list(i) for i in self.indices]}


def product_cover(base: Cover, Q: int) -> ProductCover:
    """枚举基下标集的全部 Q 元多重集；数量超过上限时提示粗化基覆盖"""
    if Q < 1:
        raise ParameterRangeError(f"Q 必须为正整数: {Q}")
    count = math.comb(len(base) + Q - 1, Q)
    cap = get_config().cover.index_cap
    if count > cap:
        raise ResourceCapError(
            f"乘积覆盖成员数 C({len(base)}+{Q}-1, {Q}) = {count} 超过上限 {cap}，请增大 s 或缩小基覆盖范围"
        )
    indices = list(itertools.combinations_with_replacement(range(len(base)), Q))
    logger.debug(f"乘积覆盖: |I|={len(base)}, Q={Q}, {len(indices)} 个成员")
    return ProductCover(base=base, Q=Q, indices=indices)


def cover_diameter(cover: Union[Cover, ProductCover]) -> float:
    """
    成员最大直径；乘积覆盖取 S 直径，恒等匹配下等于基成员直径的最大值
    """
    if isinstance(cover, ProductCover):
        return cover_diameter(cover.base)
    if cover.kind in ("interval", "box"):
        lows, highs = cover._arrays["lows"], cover._arrays["highs"]
        return float(np.max(cover.space.norm_of(highs - lows)))
    if cover.kind == "ball":
        return float(2.0 * np.max(cover._arrays["radii"]))
    best = 0.0
    for m in cover.members:
        if not m.indices:
            raise EmptyInputError("采样覆盖存在空成员")
        pts = cover.samples[list(m.indices)]
        best = max(best, float(np.max(cover.space.pairwise(pts, pts))))
    return best


@dataclass(frozen=True)
class ProbeStrategy:
    """探针集合：count 个种子化中心上半径 s/2 的开球"""
    count: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise EmptyInputError(f"探针数量必须为正: {self.count}")


@dataclass
class MultiplicityReport:
    """s-重数报告；exact 为 False 时 value 是真实重数的下界"""
    value: int
    s: float
    exact: bool
    probes: int
    counts: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def label(self) -> str:
        return "exact" if self.exact else "lower bound"

    def to_dict(self) -> dict:
        return {"value": self.value, "s": self.s, "exact": self.exact, "label": self.label, "probes": self.probes}


def _interval_multiplicity(edges: np.ndarray, s: float) -> int:
    # 探针为闭区间 [a, a+s]，与 [e_k, e_{k+1}) 相交当且仅当 a ≥ e_k − s 且 a < e_{k+1}
    lows, highs = edges[:-1], edges[1:]
    critical = np.unique(np.concatenate([lows - s, lows, highs - s, highs]))
    candidates = np.concatenate([critical, (critical[:-1] + critical[1:]) / 2.0])
    met = (candidates[:, None] >= lows[None, :] - s) & (candidates[:, None] < highs[None, :])
    return int(met.sum(axis=1).max())


def _grid_is_exact(cover: Cover, s: float) -> bool:
    if cover.kind not in ("interval", "box") or cover.edges is None:
        return False
    if cover.space.norm == "sup" or cover.space.dim == 1:
        return True
    smallest = min(float(np.min(np.diff(e))) for e in cover.edges)
    return smallest >= s


def _probe_counts(cover: Cover, s: float, probes: ProbeStrategy) -> Tuple[np.ndarray, int]:
    rng = np.random.default_rng(probes.seed)
    centers = cover.random_points(probes.count, rng)
    counts = np.zeros(probes.count, dtype=np.int64)

    def chunk_fn(lo: int, hi: int) -> Tuple[float, int]:
        counts[lo:hi] = (cover.distances_to_members(centers[lo:hi]) < s / 2.0).sum(axis=1)
        k = int(np.argmax(counts[lo:hi]))
        return float(counts[lo + k]), lo + k

    cfg = get_config().sweep
    result = chunked_max(chunk_fn, probes.count, PROBE_CHUNK, cfg.workers, label="基覆盖探针")
    return counts, int(result.value)


def s_multiplicity_report(cover: Cover, s: float, probes: Optional[ProbeStrategy] = None) -> MultiplicityReport:
    """
    s-重数：网格覆盖（一维、sup 范数或格宽 ≥ s）按临界位置扫描得到精确值，
    其余情形为探针下界
    """
    if not s > 0:
        raise ParameterRangeError(f"尺度 s 必须大于 0: {s}")
    if _grid_is_exact(cover, s):
        # 坐标投影长度 ≤ s，格宽 ≥ s 时角点附近的小集合可同时达到各轴重数
        value = math.prod(_interval_multiplicity(e, s) for e in cover.edges)
        return MultiplicityReport(value=value, s=s, exact=True, probes=0)
    probes = probes or ProbeStrategy(count=get_config().cover.probes)
    counts, value = _probe_counts(cover, s, probes)
    return MultiplicityReport(value=value, s=s, exact=False, probes=probes.count, counts=counts)


def s_multiplicity(cover: Cover, s: float, probes: Optional[ProbeStrategy] = None) -> int:
    return s_multiplicity_report(cover, s, probes).value


@dataclass
class NagataReport:
    """乘积覆盖重数与 (n+1)^Q 界的比较"""
    Q: int
    s: float
    c: float
    base_members: int
    product_members: int
    base_multiplicity: int
    base_exact: bool
    bound: int
    product_multiplicity: int
    probes: int
    cover_diameter: float
    uncovered: int
    counts: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dimension_bound(self) -> int:
        return self.bound - 1

    @property
    def non_vacuous(self) -> bool:
        return self.product_multiplicity >= 2

    @property
    def passed(self) -> bool:
        return (
            self.product_multiplicity <= self.bound
            and self.uncovered == 0
            and self.cover_diameter <= self.c * self.s * (1 + 1e-12)
        )

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "s": self.s,
            "c": self.c,
            "base_members": self.base_members,
            "product_members": self.product_members,
            "base_multiplicity": self.base_multiplicity,
            "base_multiplicity_label": "exact" if self.base_exact else "lower bound",
            "bound": self.bound,
            "dimension_bound": self.dimension_bound,
            "product_multiplicity": self.product_multiplicity,
            "product_multiplicity_label": "lower bound",
            "probes": self.probes,
            "cover_diameter": self.cover_diameter,
            "uncovered": self.uncovered,
            "non_vacuous": self.non_vacuous,
            "passed": self.passed,
        }


def _members_met(neighbors: List[np.ndarray]) -> int:
    # S 球与成员 {i_1..i_Q} 相交当且仅当存在一一对应使 i_{τ(j)} ∈ N_j
    return len({tuple(sorted(combo)) for combo in itertools.product(*neighbors)})


def verify_nagata_bound(
    base: Cover,
    Q: int,
    probes: Optional[ProbeStrategy] = None,
    s: Optional[float] = None,
    base_multiplicity: Optional[int] = None
) -> NagataReport:
    """
    以随机 QPoint 为中心、S 半径 s/2 的开球为探针，统计乘积覆盖成员的相交数，
    与 (基重数)^Q 比较；同时检查每个探针中心都落在某个乘积成员内
    """
    s = s if s is not None else base.s
    probes = probes or ProbeStrategy(count=get_config().cover.probes)
    product = product_cover(base, Q)
    base_exact = base_multiplicity is None
    if base_multiplicity is None:
        base_report = s_multiplicity_report(base, s, probes)
        base_multiplicity, base_exact = base_report.value, base_report.exact

    rng = np.random.default_rng(probes.seed)
    centers = base.random_points(probes.count * Q, rng).reshape(probes.count, Q, base.space.dim)
    counts = np.zeros(probes.count, dtype=np.int64)
    uncovered = np.zeros(probes.count, dtype=bool)

    def chunk_fn(lo: int, hi: int) -> Tuple[float, int]:
        flat = centers[lo:hi].reshape(-1, base.space.dim)
        near = (base.distances_to_members(flat) < s / 2.0).reshape(hi - lo, Q, -1)
        inside = base.contains(flat).any(axis=1).reshape(hi - lo, Q)
        for k in range(hi - lo):
            counts[lo + k] = _members_met([np.flatnonzero(row) for row in near[k]])
            uncovered[lo + k] = not inside[k].all()
        k = int(np.argmax(counts[lo:hi]))
        return float(counts[lo + k]), lo + k

    result = chunked_max(chunk_fn, probes.count, PROBE_CHUNK, get_config().sweep.workers, label="乘积覆盖探针")
    report = NagataReport(
        Q=Q,
        s=s,
        c=base.c,
        base_members=len(base),
        product_members=len(product),
        base_multiplicity=base_multiplicity,
        base_exact=base_exact,
        bound=base_multiplicity ** Q,
        product_multiplicity=int(result.value),
        probes=probes.count,
        cover_diameter=cover_diameter(product),
        uncovered=int(uncovered.sum()),
        counts=counts,
    )
    logger.info(
        f"乘积覆盖 (Q={Q}, s={s}): 重数 {report.product_multiplicity} ≤ {report.bound}, "
        f"{len(product)} 个成员, {'通过' if report.passed else '失败'}"
    )
    return report


def scale_sweep(
    factory: Callable[[float], Cover],
    scales: Sequence[float],
    Q: int,
    probes: Optional[ProbeStrategy] = None
) -> List[NagataReport]:
    """在一组尺度上分别构造覆盖并验证，逐尺度报告"""
    if not scales:
        raise EmptyInputError("尺度列表为空")
    return [verify_nagata_bound(factory(float(s)), Q, probes, s=float(s)) for s in scales]
