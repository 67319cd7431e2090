from pathlib import Path

import numpy as np
import pytest

from almgren.mvf import fixture_half_angle
from almgren.spaces import Space, linear_bicombing
from config.config_manager import reset_config

TEST_DATA_DIR = Path(__file__).resolve().parent.parent / "test_data"


@pytest.fixture(autouse=True)
def isolated_config():
    """每个用例结束后丢弃全局配置，避免命令行参数与 update_config 串扰"""
    yield
    reset_config()


@pytest.fixture(scope="session")
def test_data_dir():
    return TEST_DATA_DIR


@pytest.fixture
def rng():
    """固定种子的随机数发生器"""
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def line():
    return Space(1)


@pytest.fixture(scope="session")
def plane():
    return Space(2)


@pytest.fixture(scope="session")
def plane_bicombing(plane):
    return linear_bicombing(plane)


@pytest.fixture(scope="session")
def half_angle():
    return fixture_half_angle()


@pytest.fixture(scope="function")
def temp_directory(tmp_path):
    """临时目录fixture"""
    temp_dir = tmp_path / "test_temp"
    temp_dir.mkdir()
    return temp_dir


def pytest_collection_modifyitems(config, items):
    """修改测试项，添加标记"""
    for item in items:
        nodeid = item.nodeid.lower()
        if "acceptance" in nodeid:
            item.add_marker(pytest.mark.acceptance)
            item.add_marker(pytest.mark.slow)
        elif "test_cli" in nodeid or "integration" in nodeid:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)

