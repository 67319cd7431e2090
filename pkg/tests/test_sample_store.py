"""
样本文件读写与报告输出测试
"""
import json

import pandas as pd
import pytest
import allure

from almgren.errors import GeometryInputError
from almgren.nagata import interval_cover
from almgren.spaces import Space
from tools.reporting import RunConfig, build_report, write_csv, write_json_report
from utils.sample_store import SampleStore


@allure.epic("基础设施")
@allure.feature("样本文件")
class TestSampleStore:
    """JSON 样本加载与 Schema 校验"""

    @allure.story("加载QPoint")
    def test_load_qpoint(self, test_data_dir):
        store = SampleStore(test_data_dir)
        a = store.load_qpoint("qpoint_a.json")
        assert a.Q == 2
        assert a.space == Space(1)
        assert store.load_qpoint("qpoint_c3.json").Q == 3

    @allure.story("加载采样表")
    def test_load_table(self, test_data_dir):
        f = SampleStore(test_data_dir).load_table("half_angle_table.json")
        assert f.Q == 2
        assert f.declared_lip == 0.7071067811865476
        assert len(f.table_points) == 8

    @allure.story("覆盖往返")
    def test_cover_round_trip(self, temp_directory):
        store = SampleStore(temp_directory)
        cover = interval_cover(3, 1, (0, 9))
        store.save_json("cover.json", cover.to_dict())
        restored = store.load_cover("cover.json")
        assert restored.members == cover.members
        assert restored.kind == "interval"

    @allure.story("Schema 校验失败")
    @pytest.mark.parametrize("payload", [
        {"Q": 2},
        {"Q": 0, "points": [0, 1]},
        {"points": [0, 1], "space": {"dim": 1, "norm": "manhattan"}},
    ])
    def test_schema_violation(self, temp_directory, payload):
        store = SampleStore(temp_directory)
        store.save_json("bad.json", payload)
        with pytest.raises(GeometryInputError, match="Schema"):
            store.load_qpoint("bad.json")

    @allure.story("文件不存在")
    def test_missing_file(self, temp_directory):
        with pytest.raises(GeometryInputError, match="文件不存在"):
            SampleStore(temp_directory).load_qpoint("missing.json")

    @allure.story("键排序写出")
    def test_save_sorted(self, temp_directory):
        path = SampleStore(temp_directory).save_json("nested/out.json", {"b": 1, "a": 2})
        assert path.read_text(encoding="utf-8").index('"a"') < path.read_text(encoding="utf-8").index('"b"')


@allure.epic("基础设施")
@allure.feature("报告输出")
class TestReporting:
    """JSON 报告与 CSV 明细"""

    @allure.story("报告结构")
    def test_build_report(self):
        run = RunConfig(command="metric", inputs=["a", "b"], seed=7)
        report = build_report(run, {"value": float("inf"), "sigma": (1, 0)})
        assert set(report) == {"artifact", "version", "seed", "run", "config", "result"}
        assert report["seed"] == 7
        assert report["result"] == {"value": "inf", "sigma": [1, 0]}

    @allure.story("写出JSON与CSV")
    def test_write_outputs(self, temp_directory):
        run = RunConfig(command="cover", output_dir=str(temp_directory / "out"))
        path = write_json_report(run, "cover_report", {"kind": "interval"})
        assert json.loads(path.read_text(encoding="utf-8"))["result"]["kind"] == "interval"
        csv_path = write_csv(run, "cover_probes", {"probe": [0, 1, 2], "members_met": [1, 2, 1]})
        assert pd.read_csv(csv_path)["members_met"].tolist() == [1, 2, 1]
