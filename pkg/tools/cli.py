#!/usr/bin/env python3
"""
命令行入口
S 度量查询、延拓构造与验证、覆盖重数分析以及样例函数展示
"""
import os
import sys
import argparse
from pathlib import Path
from typing import List, Optional

# 添加项目根目录到路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np

from almgren.errors import GeometryInputError, LipschitzBudgetError, ResourceCapError
from config.config_manager import get_config, get_config_manager, reset_config
from tools.reporting import RunConfig, write_csv, write_json_report
from utils.logger import get_logger, set_log_level

logger = get_logger("almgren.cli")

EXIT_PASS = 0
EXIT_BOUND = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3
EXIT_CAP = 4
EXIT_INTERNAL = 5


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--env', choices=['dev', 'test', 'prod'], help='配置环境（默认取 MVF_ENV）')
    common.add_argument('--seed', type=int, help='随机种子（默认取配置，0）')
    common.add_argument('--tol', type=float, help='几何恒等式的绝对容差（默认1e-9）')
    common.add_argument('--out', help='报告输出目录（默认取配置，results）')
    common.add_argument('-v', '--verbose', action='store_true', help='详细输出')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        description="Almgren多值函数计算工具",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
可用命令:
  metric        计算两个QPoint之间的S值与最优匹配
  extend        构造球面到球体的延拓并验证常数
  cover         区间/网格覆盖的s-重数与乘积覆盖界
  examples      样例函数展示与验证

退出码: 0 通过, 1 违反界, 2 输入错误, 3 Lipschitz预算错误, 4 资源上限, 5 内部错误

示例用法:
  python tools/cli.py metric test_data/qpoint_a.json test_data/qpoint_b.json
  python tools/cli.py extend --fixture half-angle --mesh-n 720 --ball-n 2000
  python tools/cli.py cover --c 3 --s 1 --range 0 30 --Q 2
  python tools/cli.py examples half-angle
        """
    )
    subparsers = parser.add_subparsers(dest='command', help='选择要执行的命令')

    metric_parser = subparsers.add_parser('metric', parents=[common], help='S值与最优匹配')
    metric_parser.add_argument('a', help='第一个QPoint JSON文件')
    metric_parser.add_argument('b', help='第二个QPoint JSON文件')
    metric_parser.add_argument('--solver', choices=['auto', 'exact', 'bottleneck'], default='auto',
                               help='求解器（默认auto：Q不超过穷举上限时用exact）')

    extend_parser = subparsers.add_parser('extend', parents=[common], help='延拓构造与验证')
    source = extend_parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--fixture', help='样例函数名称')
    source.add_argument('--samples', help='采样表JSON文件')
    extend_parser.add_argument('--mesh-n', type=int, help='球面网格点数')
    extend_parser.add_argument('--ball-n', type=int, help='球体网格点数（采样表时为径向层数×表点数）')
    extend_parser.add_argument('--levels', type=int, default=8, help='采样表的径向层数（默认8）')
    extend_parser.add_argument('--pairs', type=int, help='随机点对数')
    extend_parser.add_argument('--lip', type=float, help='直接给定Lip(f)，不做估计')
    extend_parser.add_argument('--lip-inflation', type=float, help='估计值的放大系数（默认1.05）')
    extend_parser.add_argument('--base-point', type=float, nargs='+', help='基点（默认网格首点）')

    cover_parser = subparsers.add_parser('cover', parents=[common], help='覆盖重数分析')
    cover_parser.add_argument('--kind', choices=['interval', 'box', 'ball'], default='interval', help='覆盖类型')
    cover_parser.add_argument('--c', type=float, default=3.0, help='有界常数c（默认3）')
    cover_parser.add_argument('--s', type=float, default=1.0, help='尺度s（默认1）')
    cover_parser.add_argument('--range', type=float, nargs=2, default=[0.0, 30.0], metavar=('LO', 'HI'),
                              help='每个坐标轴的范围（默认0 30）')
    cover_parser.add_argument('--dim', type=int, default=1, help='box/ball覆盖的维数')
    cover_parser.add_argument('--norm', choices=['euclidean', 'sup', 'one'], default='sup', help='box/ball覆盖的范数')
    cover_parser.add_argument('--Q', type=int, default=2, help='乘积覆盖的Q')
    cover_parser.add_argument('--probes', type=int, help='探针数量（默认取配置）')
    cover_parser.add_argument('--scales', type=float, nargs='+', help='多尺度扫描，例如 1 2 4')
    cover_parser.add_argument('--cover', help='覆盖JSON文件（给出时忽略 --kind/--c/--range/--dim/--norm）')

    examples_parser = subparsers.add_parser('examples', parents=[common], help='样例函数展示与验证')
    examples_parser.add_argument('name', nargs='?', help='样例函数名称（省略时列出全部）')
    examples_parser.add_argument('--mesh-n', type=int, help='球面网格点数')
    examples_parser.add_argument('--ball-n', type=int, help='球体网格点数')
    examples_parser.add_argument('--pairs', type=int, help='随机点对数')
    return parser


def _apply_globals(args) -> None:
    if args.env:
        os.environ['MVF_ENV'] = args.env
        reset_config()
    if args.verbose:
        set_log_level('DEBUG')
    manager = get_config_manager()
    if args.tol is not None:
        manager.update_config('metric', 'tolerance', args.tol)
    if getattr(args, 'lip_inflation', None) is not None:
        manager.update_config('extension', 'lip_inflation', args.lip_inflation)


def _run_config(args, inputs: List[str]) -> RunConfig:
    cfg = get_config()
    return RunConfig(
        command=args.command,
        inputs=inputs,
        seed=args.seed if args.seed is not None else cfg.sampling.seed,
        tolerance=cfg.metric.tolerance,
        mesh_n=getattr(args, 'mesh_n', None) or cfg.sampling.sphere_n,
        ball_n=getattr(args, 'ball_n', None) or cfg.sampling.ball_n,
        pairs=getattr(args, 'pairs', None) or cfg.sampling.default_pairs,
        output_dir=args.out or cfg.report.output_dir,
    )


def cmd_metric(args) -> int:
    from almgren.qspace import optimal_permutation, s_metric_bottleneck, s_metric_exact
    from utils.sample_store import SampleStore

    store = SampleStore()
    a = store.load_qpoint(args.a)
    b = store.load_qpoint(args.b)
    cap = get_config().metric.exhaustive_cap
    solver = args.solver
    if solver == 'auto':
        solver = 'exact' if a.Q <= cap else 'bottleneck'
    value = s_metric_exact(a, b) if solver == 'exact' else s_metric_bottleneck(a, b)
    matching = optimal_permutation(a, b)

    print(f"S = {value:.12g}")
    print(f"sigma = {list(matching.sigma)}")
    print(f"solver = {solver}")
    if args.out:
        run = _run_config(args, [args.a, args.b])
        write_json_report(run, 'metric_report', {
            "value": value, "solver": solver, "matching": matching.to_dict(),
        })
    return EXIT_PASS


def _sphere_inputs(args, run: RunConfig):
    """按 --fixture 或 --samples 返回 (f, 球面网格, 球体网格)"""
    from almgren.mvf import Mesh, fixture_by_name, fixture_sphere_dim, radial_ball_mesh, sample_ball, sample_sphere
    from utils.sample_store import SampleStore

    if args.fixture:
        f = fixture_by_name(args.fixture)
        m = fixture_sphere_dim(f)
        return f, sample_sphere(m, run.mesh_n, run.seed), sample_ball(m, run.ball_n, run.seed)

    f = SampleStore().load_table(args.samples)
    points = f.table_points
    norms = np.linalg.norm(points, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise GeometryInputError("采样表的定义域点必须位于单位球面上")
    sphere = Mesh(points=points, kind="sphere", m=fixture_sphere_dim(f))
    return f, sphere, radial_ball_mesh(sphere, args.levels)


def cmd_extend(args) -> int:
    from almgren.extension import prepare_extension, verify_extension
    from almgren.spaces import linear_bicombing

    run = _run_config(args, [args.fixture or args.samples])
    f, sphere, ball = _sphere_inputs(args, run)
    b = linear_bicombing(f.target)
    params, clusters = prepare_extension(
        f, b, sphere, lip=args.lip, base_point=args.base_point, pairs=run.pairs, seed=run.seed,
    )
    report = verify_extension(f, b, params, sphere, ball, run.pairs, run.seed, clusters, keep_pairs=True)

    write_json_report(run, 'extend_report', {
        "fixture": f.provenance,
        "params": params.to_dict(),
        "decomposition": clusters.to_dict(),
        "report": report.to_dict(),
    })
    if report.per_pair is not None and get_config().report.write_csv:
        write_csv(run, 'extend_pairs', report.per_pair)

    print(f"Lip(f) = {params.lip:.6f}  D = {params.D:.6f}  s = {clusters.s}  Q_i = {clusters.sizes}")
    print(f"边界误差 = {report.boundary_error:.3e}")
    print(f"Lip(F) ≈ {report.empirical_lip:.6f} ≤ {report.lip_bound:.6f} (γ + 8Q − 6 = {params.gamma + 8 * f.Q - 6:g})")
    print(f"近原点比值 = {report.near_origin_ratio:.6f} ≤ {report.near_origin_bound:.6f}")
    print("✅ 全部通过" if report.passed else "❌ 违反界")
    return EXIT_PASS if report.passed else EXIT_BOUND


def cmd_cover(args) -> int:
    from almgren.nagata import ProbeStrategy, ball_cover, box_cover, interval_cover, scale_sweep, verify_nagata_bound
    from utils.sample_store import SampleStore

    run = _run_config(args, [])
    lo, hi = args.range
    probes = ProbeStrategy(count=args.probes or get_config().cover.probes, seed=run.seed)

    def factory(s: float):
        if args.kind == 'interval':
            return interval_cover(args.c, s, (lo, hi))
        lows, highs = [lo] * args.dim, [hi] * args.dim
        if args.kind == 'box':
            return box_cover(args.c, s, lows, highs, args.norm)
        return ball_cover(args.c, s, lows, highs, args.norm)

    if args.cover:
        cover = SampleStore().load_cover(args.cover)
        run.inputs = [args.cover]
        kind = cover.kind
        scales = args.scales or [cover.s]
        reports = [verify_nagata_bound(cover, args.Q, probes, s=float(s)) for s in scales]
    else:
        kind = args.kind
        scales = args.scales or [args.s]
        reports = scale_sweep(factory, scales, args.Q, probes)
    write_json_report(run, 'cover_report', {
        "kind": kind,
        "scales": [r.to_dict() for r in reports],
    })
    if get_config().report.write_csv:
        last = reports[-1]
        write_csv(run, 'cover_probes', {
            "probe": np.arange(last.probes),
            "members_met": last.counts,
        })

    for r in reports:
        print(
            f"s={r.s:g}: 基重数 {r.base_multiplicity} ({'exact' if r.base_exact else 'lower bound'}), "
            f"乘积重数 {r.product_multiplicity} ≤ {r.bound}, 成员 {r.base_members} → {r.product_members}, "
            f"{'通过' if r.passed else '失败'}"
        )
    passed = all(r.passed for r in reports)
    print("✅ 全部通过" if passed else "❌ 违反界")
    return EXIT_PASS if passed else EXIT_BOUND


def cmd_examples(args) -> int:
    from almgren.extension import prepare_extension, verify_extension
    from almgren.mvf import FIXTURES, fixture_by_name, fixture_sphere_dim, sample_ball, sample_sphere, trace_monodromy
    from almgren.spaces import linear_bicombing

    if not args.name:
        for name in sorted(FIXTURES):
            print(f"  {name:16s} {FIXTURES[name]().description}")
        return EXIT_PASS

    f = fixture_by_name(args.name)
    run = _run_config(args, [args.name])
    print(f"{args.name}: {f.description} (Q={f.Q})")
    m = fixture_sphere_dim(f)

    payload = {"fixture": args.name, "Q": f.Q}
    if m == 1:
        mono = trace_monodromy(f)
        payload["monodromy"] = {
            "permutation": list(mono.permutation),
            "identity": mono.is_identity,
            "max_displacement": mono.max_displacement,
            "min_separation": mono.min_separation,
        }
        print(f"单值化置换 = {list(mono.permutation)} ({'可连续选取分支' if mono.is_identity else '不可拆分'})")

    sphere = sample_sphere(m, run.mesh_n, run.seed)
    ball = sample_ball(m, run.ball_n, run.seed)
    b = linear_bicombing(f.target)
    params, clusters = prepare_extension(f, b, sphere, pairs=run.pairs, seed=run.seed)
    report = verify_extension(f, b, params, sphere, ball, run.pairs, run.seed, clusters)
    payload["lip_estimate"] = params.lip_estimate
    payload["extension"] = report.to_dict()
    write_json_report(run, f"examples_{args.name}", payload)

    print(f"Lip(f) ≈ {params.lip_estimate:.6f}")
    print(f"Lip(F) ≈ {report.empirical_lip:.6f} ≤ {report.lip_bound:.6f}")
    print("✅ 全部通过" if report.passed else "❌ 违反界")
    return EXIT_PASS if report.passed else EXIT_BOUND


COMMANDS = {
    'metric': cmd_metric,
    'extend': cmd_extend,
    'cover': cmd_cover,
    'examples': cmd_examples,
}


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_INPUT

    try:
        _apply_globals(args)
    except ValueError as e:
        print(f"❌ 配置错误: {e}", file=sys.stderr)
        return EXIT_INPUT

    try:
        return COMMANDS[args.command](args)
    except GeometryInputError as e:
        print(f"❌ 输入错误: {e}", file=sys.stderr)
        return EXIT_INPUT
    except LipschitzBudgetError as e:
        print(f"❌ Lipschitz预算错误: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except ResourceCapError as e:
        print(f"❌ 超出资源上限: {e}", file=sys.stderr)
        return EXIT_CAP
    except Exception as e:
        logger.exception(f"执行失败: {e}")
        print(f"❌ 内部错误: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == '__main__':
    exit(main())
