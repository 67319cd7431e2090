"""
Q_Q(Y) 与 S 度量测试
"""
import itertools

import numpy as np
import pytest
import allure

from almgren.errors import ExhaustiveCapError, QMismatchError, SpaceMismatchError
from almgren.qspace import (
    Matching,
    QPoint,
    optimal_permutation,
    qpoint_concat,
    random_qpoint,
    s_metric,
    s_metric_batch,
    s_metric_bottleneck,
    s_metric_exact,
    second_best_value,
    support,
)
from almgren.spaces import Space


def qp(space, points):
    return QPoint(space, points)


@allure.epic("Q点空间")
@allure.feature("QPoint")
class TestQPoint:
    """QPoint 值语义测试"""

    @allure.story("置换不变的相等与哈希")
    def test_permutation_invariant_equality(self, plane):
        a = qp(plane, [(0, 1), (2, 3), (0, 1)])
        b = qp(plane, [(2, 3), (0, 1), (0, 1)])
        assert a == b
        assert hash(a) == hash(b)
        assert a.canonical() == ((0.0, 1.0), (0.0, 1.0), (2.0, 3.0))
        assert len({a, b}) == 1

    @allure.story("不可变")
    def test_read_only(self, line):
        a = qp(line, [0, 10])
        with pytest.raises(ValueError):
            a.points[0, 0] = 5.0

    @allure.story("JSON形式")
    def test_json_form(self, line):
        a = QPoint.from_dict({"Q": 2, "points": [0, 10]})
        assert a.space == line
        assert a.to_dict() == {"Q": 2, "points": [[0.0], [10.0]]}
        with pytest.raises(QMismatchError):
            QPoint.from_dict({"Q": 3, "points": [0, 10]})

    @allure.story("Matching JSON")
    def test_matching_json(self):
        assert Matching(sigma=(1, 0), value=2.5).to_dict() == {"sigma": [1, 0], "value": 2.5}


@allure.epic("Q点空间")
@allure.feature("S度量")
class TestSMetric:
    """穷举与匹配两种求解器测试"""

    @allure.story("穷举求解")
    def test_exact_example(self, line):
        assert s_metric_exact(qp(line, [0, 10]), qp(line, [1, 12])) == 2.0

    @allure.story("相同输入")
    def test_same_input_is_zero(self, plane, rng):
        a = random_qpoint(plane, 5, rng)
        assert s_metric_exact(a, a) == 0.0
        assert s_metric_bottleneck(a, a) == 0.0

    @allure.story("Q=1 退化为距离")
    def test_single_point(self, plane):
        assert s_metric_exact(qp(plane, [(0, 0)]), qp(plane, [(3, 4)])) == 5.0

    @allure.story("Q 不一致")
    def test_q_mismatch(self, line):
        with pytest.raises(QMismatchError):
            s_metric_exact(qp(line, [0, 1]), qp(line, [0, 1, 2]))
        with pytest.raises(QMismatchError):
            s_metric_bottleneck(qp(line, [0, 1]), qp(line, [0, 1, 2]))

    @allure.story("空间不一致")
    def test_space_mismatch(self):
        with pytest.raises(SpaceMismatchError):
            s_metric_exact(qp(Space(1), [0, 1]), qp(Space(1, "sup"), [0, 1]))

    @allure.story("穷举上限")
    def test_exhaustive_cap(self, line, rng):
        a, b = random_qpoint(line, 9, rng), random_qpoint(line, 9, rng)
        with pytest.raises(ExhaustiveCapError, match="s_metric_bottleneck"):
            s_metric_exact(a, b)
        assert s_metric(a, b) == s_metric_bottleneck(a, b)

    @allure.story("匹配求解")
    def test_bottleneck_example(self, line):
        assert s_metric_bottleneck(qp(line, [0, 4, 9]), qp(line, [1, 5, 13])) == 4.0

    @allure.story("大Q相同输入")
    def test_bottleneck_large_q_identity(self, plane, rng):
        a = random_qpoint(plane, 50, rng)
        shuffled = qp(plane, a.points[rng.permutation(50)])
        assert s_metric_bottleneck(a, shuffled) == 0.0

    @allure.story("表示顺序上界")
    def test_representation_order_bound(self, plane, rng):
        for _ in range(200):
            a, b = random_qpoint(plane, 6, rng), random_qpoint(plane, 6, rng)
            assert s_metric(a, b) <= float(np.max(plane.norm_of(a.points - b.points)))

    @allure.story("批量与逐对一致")
    def test_batch_matches_pairwise(self, plane, rng):
        A = rng.standard_normal((100, 4, 2))
        B = rng.standard_normal((100, 4, 2))
        batch = s_metric_batch(A, B, plane, chunk=7)
        for k in range(100):
            assert batch[k] == s_metric_exact(qp(plane, A[k]), qp(plane, B[k]))

    @allure.story("批量大Q")
    def test_batch_above_cap(self, line, rng):
        A = rng.standard_normal((5, 10, 1))
        B = rng.standard_normal((5, 10, 1))
        batch = s_metric_batch(A, B, line)
        for k in range(5):
            assert batch[k] == s_metric_bottleneck(qp(line, A[k]), qp(line, B[k]))


@allure.epic("Q点空间")
@allure.feature("最优匹配")
class TestOptimalPermutation:
    """最优置换与次优值测试"""

    @allure.story("手算示例")
    @pytest.mark.parametrize("a,b,sigma,value", [
        ([0, 10], [1, 12], (0, 1), 2.0),
        ([0, 0], [0, 0], (0, 1), 0.0),
        ([0], [5], (0,), 5.0),
    ])
    def test_examples(self, line, a, b, sigma, value):
        matching = optimal_permutation(qp(line, a), qp(line, b))
        assert matching.sigma == sigma
        assert matching.value == value

    @allure.story("字典序最小")
    def test_lexicographic_tie_break(self, line):
        # (0, 1, 2) 与 (0, 2, 1) 都取到 1
        a, b = qp(line, [0, 5, 5]), qp(line, [1, 5, 5])
        assert optimal_permutation(a, b).sigma == (0, 1, 2)
        c, d = qp(line, [0, 1, 2]), qp(line, [1, 2, 0])
        matching = optimal_permutation(c, d)
        assert matching.value == 0.0
        assert matching.sigma == (2, 0, 1)

    @allure.story("匹配值与S一致")
    def test_value_matches_bottleneck(self, plane, rng):
        for _ in range(200):
            q = int(rng.integers(1, 8))
            a, b = random_qpoint(plane, q, rng), random_qpoint(plane, q, rng)
            matching = optimal_permutation(a, b)
            assert sorted(matching.sigma) == list(range(q))
            assert matching.value == s_metric_bottleneck(a, b)
            achieved = max(plane.distance(a.points[i], b.points[j]) for i, j in enumerate(matching.sigma))
            assert achieved == matching.value

    @allure.story("字典序与穷举一致")
    def test_lexicographic_matches_enumeration(self, line, rng):
        for _ in range(100):
            a = qp(line, rng.integers(0, 4, 4).astype(float))
            b = qp(line, rng.integers(0, 4, 4).astype(float))
            cost = np.abs(a.points[:, 0][:, None] - b.points[:, 0][None, :])
            best = min(max(cost[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4)))
            first = next(p for p in itertools.permutations(range(4)) if max(cost[i, p[i]] for i in range(4)) == best)
            assert optimal_permutation(a, b).sigma == first

    @allure.story("次优值")
    def test_second_best(self, line):
        a, b = qp(line, [0, 10]), qp(line, [1, 12])
        assert second_best_value(a, b, (0, 1)) == 12.0
        assert second_best_value(qp(line, [0]), qp(line, [5]), (0,)) == float("inf")


@allure.epic("Q点空间")
@allure.feature("多重集运算")
class TestMultisetAlgebra:
    """多重集之和与支撑测试"""

    @allure.story("多重集之和")
    def test_concat(self, line):
        assert qpoint_concat(qp(line, [3]), qp(line, [7])) == qp(line, [3, 7])
        assert qpoint_concat(qp(line, [0, 1]), qp(line, [0])) == qp(line, [0, 0, 1])

    @allure.story("空间不一致")
    def test_concat_space_mismatch(self, line, plane):
        with pytest.raises(SpaceMismatchError):
            qpoint_concat(qp(line, [0]), qp(plane, [(0, 0)]))

    @allure.story("拼接不增加S")
    def test_concat_inequality(self, plane, rng):
        for _ in range(300):
            a1, b1 = random_qpoint(plane, 2, rng), random_qpoint(plane, 2, rng)
            a2, b2 = random_qpoint(plane, 3, rng), random_qpoint(plane, 3, rng)
            joined = s_metric(qpoint_concat(a1, a2), qpoint_concat(b1, b2))
            assert joined <= max(s_metric(a1, b1), s_metric(a2, b2))

    @allure.story("支撑与重数")
    def test_support(self, plane):
        groups = support(qp(plane, [(1, 2), (1, 2), (5, 5)]), tol=0.0)
        assert [(p.tolist(), m) for p, m in groups] == [([1.0, 2.0], 2), ([5.0, 5.0], 1)]

    @allure.story("容差合并")
    def test_support_tolerance(self, line):
        groups = support(qp(line, [0, 1e-12, 5]), tol=1e-9)
        assert [(p.tolist(), m) for p, m in groups] == [([0.0], 2), ([5.0], 1)]

    @allure.story("单链合并")
    def test_support_chain(self, line):
        groups = support(qp(line, [1.6e-9, 0, 0.8e-9, 7]), tol=1e-9)
        assert [(p.tolist(), m) for p, m in groups] == [([0.0], 3), ([7.0], 1)]

    @allure.story("重数守恒")
    def test_support_conserves_q(self, plane, rng):
        for _ in range(50):
            a = qp(plane, rng.integers(0, 3, (6, 2)).astype(float))
            assert sum(m for _, m in support(a)) == 6


@allure.epic("Q点空间")
@allure.feature("验收")
class TestSMetricAcceptance:
    """求解器一致性与度量公理"""

    @allure.story("匹配求解与穷举逐位一致")
    @pytest.mark.parametrize("q", [2, 3, 4, 5, 6, 7])
    def test_bottleneck_equals_exact(self, q):
        rng = np.random.default_rng(1000 + q)
        for k in range(1000):
            space = Space(1 + k % 3)
            a, b = random_qpoint(space, q, rng), random_qpoint(space, q, rng)
            assert s_metric_bottleneck(a, b) == s_metric_exact(a, b)

    @allure.story("度量公理")
    def test_metric_axioms(self):
        rng = np.random.default_rng(7)
        space = Space(2)
        for q in [2, 3, 4, 5, 6]:
            A, B, C = (rng.standard_normal((2000, q, 2)) for _ in range(3))
            with allure.step(f"Q={q}: 对称性"):
                ab = s_metric_batch(A, B, space)
                assert np.array_equal(ab, s_metric_batch(B, A, space))
            with allure.step(f"Q={q}: 三角不等式"):
                bc = s_metric_batch(B, C, space)
                ac = s_metric_batch(A, C, space)
                assert np.min(ab + bc - ac) >= -1e-12
            with allure.step(f"Q={q}: 同一多重集距离为 0"):
                permuted = np.stack([a[rng.permutation(q)] for a in A])
                assert np.all(s_metric_batch(A, permuted, space) == 0.0)
                assert np.all(ab > 0.0)
