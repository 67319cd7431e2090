import os
import logging
from pathlib import Path

os.environ.setdefault("MVF_ENV", "test")

from config.config_manager import get_config_manager, get_config

try:
    from utils.logger import get_logger
    logger = get_logger(__name__)
except ImportError:
    logger = logging.getLogger(__name__)

import pytest

from almgren import ARTIFACT_NAME, __version__

run_config = get_config()


def _write_allure_environment(results_dir: Path):
    """把本次运行的数值参数写进 Allure 的 Environment 面板"""
    entries = {
        "artifact": f"{ARTIFACT_NAME} {__version__}",
        "env": run_config.environment,
        "seed": run_config.sampling.seed,
        "exhaustive_cap": run_config.metric.exhaustive_cap,
        "tolerance": run_config.metric.tolerance,
        "lip_inflation": run_config.extension.lip_inflation,
        "index_cap": run_config.cover.index_cap,
        "workers": run_config.sweep.workers,
    }
    lines = [f"{key}={value}" for key, value in entries.items()]
    (results_dir / "environment.properties").write_text("\n".join(lines) + "\n", encoding="utf-8")


def pytest_configure(config):
    """创建结果目录并同步日志级别"""
    for directory in (run_config.report.output_dir, run_config.report.allure_results_dir):
        Path(directory).mkdir(parents=True, exist_ok=True)

    alluredir = config.getoption("--alluredir", default=None)
    if alluredir:
        Path(alluredir).mkdir(parents=True, exist_ok=True)
        _write_allure_environment(Path(alluredir))

    log_level = run_config.custom.get('log_level', 'INFO')
    logging.getLogger().setLevel(getattr(logging, log_level))
    logger.info(f"配置环境: {run_config.environment}, 日志级别: {log_level}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)

    if rep.when != "call":
        return
    if rep.failed:
        logger.error(f"❌ {item.nodeid} ({rep.duration:.2f}s)")
    elif rep.duration > 5:
        # 验收用例的采样规模较大，单独记一笔耗时
        logger.info(f"🐢 {item.nodeid} 用时 {rep.duration:.2f}s")


def pytest_sessionstart(session):
    logger.info("=" * 60)
    logger.info(f"{ARTIFACT_NAME} {__version__} 测试开始 (env={run_config.environment})")
    logger.info(
        f"穷举上限 Q ≤ {run_config.metric.exhaustive_cap}, 容差 {run_config.metric.tolerance}, "
        f"种子 {run_config.sampling.seed}, 线程 {run_config.sweep.workers}"
    )
    logger.info("=" * 60)


def pytest_sessionfinish(session, exitstatus):
    logger.info("=" * 60)
    logger.info(f"测试结束，退出状态: {exitstatus}")
    manager = get_config_manager()
    html_report = Path(manager.config.report.html_report_path)
    if html_report.exists():
        logger.info(f"HTML报告: {html_report.absolute()}")
    logger.info("=" * 60)
