"""
多值函数、网格、Lipschitz估计与单值化测试
"""
import math

import numpy as np
import pytest
import allure

from almgren.errors import (
    ContinuationAmbiguityError,
    EmptyInputError,
    GeometryInputError,
    ParameterRangeError,
    QMismatchError,
    UnknownFixtureError,
)
from almgren.mvf import (
    FIXTURES,
    Mesh,
    SampledMVF,
    branch_monodromy,
    fixture_by_name,
    fixture_constant,
    fixture_identity_circle,
    fixture_root_cycle,
    fixture_sphere_dim,
    fixture_split_pair,
    fixture_two_cluster,
    lipschitz_estimate,
    lipschitz_estimate_from_values,
    radial_ball_mesh,
    sample_ball,
    sample_sphere,
    trace_monodromy,
)
from almgren.qspace import QPoint, s_metric

HALF_ANGLE_LIP = 1.0 / math.sqrt(2.0)


@allure.epic("多值函数")
@allure.feature("网格")
class TestMeshes:
    """球面与球体网格测试"""

    @allure.story("圆周等角网格")
    def test_circle_mesh(self):
        mesh = sample_sphere(1, 8)
        assert len(mesh) == 8
        assert mesh.points[0].tolist() == [1.0, 0.0]
        assert np.allclose(np.linalg.norm(mesh.points, axis=1), 1.0, atol=1e-12)
        assert np.allclose(mesh.points[4], [-1.0, 0.0], atol=1e-12)

    @allure.story("高维球面网格")
    def test_higher_sphere_mesh(self):
        mesh = sample_sphere(2, 100, seed=3)
        assert mesh.points.shape == (100, 3)
        assert mesh.points[0].tolist() == [1.0, 0.0, 0.0]
        assert np.allclose(np.linalg.norm(mesh.points, axis=1), 1.0, atol=1e-12)
        assert np.array_equal(mesh.points, sample_sphere(2, 100, seed=3).points)

    @allure.story("参数越界")
    @pytest.mark.parametrize("m,n", [(0, 10), (1, 1)])
    def test_sphere_parameter_range(self, m, n):
        with pytest.raises(ParameterRangeError):
            sample_sphere(m, n)

    @allure.story("球体网格")
    def test_ball_mesh(self):
        mesh = sample_ball(1, 2000, seed=0)
        radii = np.linalg.norm(mesh.points, axis=1)
        assert len(mesh) == 2000
        assert mesh.points[0].tolist() == [0.0, 0.0]
        assert np.all(radii <= 1.0 + 1e-12)
        with allure.step("边界壳层约占四分之一"):
            assert int(np.sum(np.abs(radii - 1.0) <= 1e-12)) >= 499

    @allure.story("径向网格")
    def test_radial_ball_mesh(self):
        mesh = radial_ball_mesh(sample_sphere(1, 8), levels=4)
        radii = np.linalg.norm(mesh.points, axis=1)
        assert len(mesh) == 33
        assert radii[0] == 0.0
        assert np.allclose(sorted(set(np.round(radii[1:], 12))), [0.25, 0.5, 0.75, 1.0])
        with pytest.raises(ParameterRangeError):
            radial_ball_mesh(sample_sphere(1, 8), levels=0)

    @allure.story("网格JSON")
    def test_mesh_json(self):
        mesh = sample_sphere(1, 4)
        restored = Mesh.from_dict(mesh.to_dict())
        assert restored.kind == "sphere"
        assert restored.m == 1
        assert np.array_equal(restored.points, mesh.points)


@allure.epic("多值函数")
@allure.feature("求值")
class TestSampledMVF:
    """求值器与采样表测试"""

    @allure.story("半角映射")
    def test_half_angle_values(self, half_angle, plane):
        assert half_angle((1, 0)) == QPoint(plane, [(1, 0), (-1, 0)])
        value = half_angle((0, 1)).points
        assert np.allclose(np.abs(value), math.sqrt(0.5), atol=1e-12)

    @allure.story("多重集意义下连续")
    def test_half_angle_continuous_across_cut(self, half_angle):
        eps = 1e-6
        before = half_angle((math.cos(math.pi - eps), math.sin(math.pi - eps)))
        after = half_angle((math.cos(math.pi + eps), math.sin(math.pi + eps)))
        assert s_metric(before, after) <= 2e-6

    @allure.story("求值确定")
    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_evaluation_deterministic(self, name):
        f = fixture_by_name(name)
        for x in sample_sphere(fixture_sphere_dim(f), 200, seed=1).points:
            assert s_metric(f(x), f(x)) == 0.0

    @allure.story("采样表往返")
    def test_table_round_trip(self, half_angle):
        mesh = sample_sphere(1, 16)
        table = half_angle.to_table(mesh)
        restored = SampledMVF.from_table(table)
        assert restored.Q == 2
        assert restored.provenance == "half-angle"
        for p in mesh.points:
            assert restored(p) == half_angle(p)

    @allure.story("声明的Lipschitz常数")
    def test_declared_lip_in_table(self, half_angle):
        mesh = sample_sphere(1, 8)
        half_angle_lip = SampledMVF(
            domain=half_angle.domain, target=half_angle.target, Q=2, evaluator=half_angle.evaluator,
            declared_lip=HALF_ANGLE_LIP,
        )
        table = half_angle_lip.to_table(mesh)
        assert table["lip"] == HALF_ANGLE_LIP
        assert "lip" not in half_angle.to_table(mesh)
        assert SampledMVF.from_table(table).declared_lip == HALF_ANGLE_LIP

    @allure.story("表外点")
    def test_point_outside_table(self, half_angle):
        restored = SampledMVF.from_table(half_angle.to_table(sample_sphere(1, 8)))
        with pytest.raises(GeometryInputError):
            restored((0.0, -1.0 + 0.1))

    @allure.story("Q 不一致")
    def test_table_q_mismatch(self, plane):
        with pytest.raises(QMismatchError):
            SampledMVF(domain=plane, target=plane, Q=3,
                       table_points=[(1, 0)], table_values=[[(0, 0), (1, 1)]])

    @allure.story("缺少数据源")
    def test_needs_evaluator_or_table(self, plane):
        with pytest.raises(GeometryInputError):
            SampledMVF(domain=plane, target=plane, Q=1)

    @allure.story("样例注册表")
    def test_fixture_registry(self):
        assert set(FIXTURES) == {
            "half-angle", "identity-circle", "split-pair", "constant-3",
            "two-cluster", "cube-root", "sphere-split",
        }
        assert fixture_by_name("cube-root").Q == 3
        assert fixture_sphere_dim(fixture_by_name("sphere-split")) == 2
        with pytest.raises(UnknownFixtureError):
            fixture_by_name("no-such-fixture")


@allure.epic("多值函数")
@allure.feature("Lipschitz估计")
class TestLipschitzEstimate:
    """Lipschitz常数经验估计测试"""

    @allure.story("半角映射")
    def test_half_angle(self, half_angle):
        estimate = lipschitz_estimate(half_angle, sample_sphere(1, 360))
        assert estimate == pytest.approx(HALF_ANGLE_LIP, abs=1e-9)

    @allure.story("包含映射")
    def test_identity_circle(self):
        assert lipschitz_estimate(fixture_identity_circle(), sample_sphere(1, 360)) == 1.0

    @allure.story("包含映射随机点对")
    def test_identity_circle_sampled_pairs(self):
        estimate = lipschitz_estimate(fixture_identity_circle(), sample_sphere(1, 2000), pairs=50000, seed=4)
        assert 0.99 <= estimate <= 1.0

    @allure.story("可拆分映射")
    def test_split_pair(self):
        assert lipschitz_estimate(fixture_split_pair(), sample_sphere(1, 90)) == 1.0

    @allure.story("常值映射")
    def test_constant(self):
        assert lipschitz_estimate(fixture_constant(3), sample_sphere(1, 50)) == 0.0

    @allure.story("与值的表示顺序无关")
    def test_representation_invariance(self):
        f = fixture_two_cluster()

        def reordered(x):
            values = f.raw(x)
            return values[::-1] if x[1] > 0 else values[[1, 2, 0]]

        g = SampledMVF(domain=f.domain, target=f.target, Q=f.Q, evaluator=reordered)
        mesh = sample_sphere(1, 360)
        assert lipschitz_estimate(g, mesh) == lipschitz_estimate(f, mesh)
        sampled = sample_sphere(1, 2000)
        assert lipschitz_estimate(g, sampled, pairs=20000, seed=2) == lipschitz_estimate(f, sampled, pairs=20000, seed=2)

    @allure.story("随预算单调")
    def test_monotone_in_pair_budget(self, half_angle):
        mesh = sample_sphere(1, 2000)
        values = [lipschitz_estimate(half_angle, mesh, pairs=p, seed=11) for p in (500, 5000, 50000)]
        assert values == sorted(values)
        assert values[-1] <= HALF_ANGLE_LIP + 1e-12

    @allure.story("点对明细")
    def test_per_pair_collection(self, half_angle, plane):
        mesh = sample_sphere(1, 10)
        collected = []
        estimate = lipschitz_estimate_from_values(
            plane, plane, mesh.points, half_angle.values_on(mesh.points), per_pair=collected,
        )
        ii, jj, d, s_values = collected[0]
        assert estimate.exhaustive
        assert estimate.pairs_checked == 45 == ii.size
        assert float(np.max(s_values / d)) == estimate.value

    @allure.story("空输入")
    def test_degenerate_meshes(self, plane):
        with pytest.raises(EmptyInputError):
            lipschitz_estimate_from_values(plane, plane, np.zeros((1, 2)), np.zeros((1, 1, 2)))
        with pytest.raises(EmptyInputError):
            lipschitz_estimate_from_values(plane, plane, np.zeros((3, 2)), np.zeros((3, 1, 2)))


@allure.epic("多值函数")
@allure.feature("单值化")
class TestMonodromy:
    """沿 S¹ 的分支延续测试"""

    @allure.story("已知置换")
    @pytest.mark.parametrize("name,expected", [
        ("split-pair", (0, 1)),
        ("constant-3", (0, 1, 2)),
        ("cube-root", (1, 2, 0)),
        ("identity-circle", (0,)),
    ])
    def test_known_permutations(self, name, expected):
        assert branch_monodromy(fixture_by_name(name), steps=360) == expected

    @allure.story("绕行两周")
    def test_two_loops(self, half_angle):
        result = trace_monodromy(half_angle, steps=360, loops=2)
        assert result.permutation == (0, 1)
        assert result.is_identity

    @allure.story("五次根轮换")
    def test_root_cycle_order(self):
        f = fixture_root_cycle(5)
        assert branch_monodromy(f, steps=360) == (1, 2, 3, 4, 0)
        assert branch_monodromy(f, steps=360, loops=5) == (0, 1, 2, 3, 4)

    @allure.story("步长过大")
    def test_too_few_steps(self, half_angle):
        with pytest.raises(ContinuationAmbiguityError):
            branch_monodromy(half_angle, steps=3)

    @allure.story("非圆周定义域")
    def test_requires_circle(self):
        with pytest.raises(GeometryInputError):
            trace_monodromy(fixture_by_name("sphere-split"))

    @allure.story("参数越界")
    def test_parameter_range(self, half_angle):
        with pytest.raises(ParameterRangeError):
            branch_monodromy(half_angle, steps=2)
        with pytest.raises(ParameterRangeError):
            branch_monodromy(half_angle, loops=0)


@allure.epic("多值函数")
@allure.feature("验收")
class TestMonodromyAcceptance:
    """单值化证书"""

    @allure.story("半角交换与可拆分恒等")
    def test_certificate(self, half_angle):
        with allure.step("半角映射 360 步"):
            result = trace_monodromy(half_angle, steps=360)
            assert result.permutation == (1, 0)
            assert result.min_separation > 2 * result.max_displacement
        with allure.step("可拆分映射 360 步"):
            assert branch_monodromy(fixture_split_pair(), steps=360) == (0, 1)
