import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from batchscene.assets import load_obj
from batchscene.bench import COLUMNS, run_bench, summary, write_bench
from batchscene.cli import main
from batchscene.engine import cold_generate
from batchscene.export import dump_scenes, export_obj, load_dump, save_dump
from conftest import config_path

MID = str(config_path("mid"))


@pytest.fixture(scope="module")
def mid_batch(mid_config):
    cfg, base = mid_config
    return cold_generate(cfg, 16, 3, base)


def test_dump_roundtrip(tmp_path, mid_batch):
    state, graph, report = mid_batch
    dump = dump_scenes(state, graph, 3)
    assert [i.index for i in dump.instances] == np.flatnonzero(report.valid_mask).tolist()
    path = tmp_path / "scenes.json"
    save_dump(dump, path)
    back = load_dump(path)
    assert back.config_hash == dump.config_hash and back.seed == 3
    for a, b in zip(dump.instances, back.instances):
        assert [o.name for o in a.objects] == [o.name for o in b.objects] == ["ground", "cabinet", "apple", "banana"]
        for oa, ob in zip(a.objects, b.objects):
            np.testing.assert_array_equal(oa.pose, ob.pose)
            assert oa.joints == ob.joints
    first = back.instances[0]
    np.testing.assert_array_equal(first.objects[2].pose, graph.world_poses("apple")[first.index])
    full = dump_scenes(state, graph, 3, include_invalid=True)
    assert len(full.instances) == 16
    with pytest.raises(KeyError):
        back.instance(999)


def test_dump_rejects_unknown_version(tmp_path, mid_batch):
    state, graph, _ = mid_batch
    path = tmp_path / "scenes.json"
    save_dump(dump_scenes(state, graph, 3), path)
    data = json.loads(path.read_text())
    data["schema_version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="version"):
        load_dump(path)


def test_obj_export_places_parts_at_world_poses(tmp_path, mid_config, mid_batch):
    state, graph, _ = mid_batch
    dump = dump_scenes(state, graph, 3)
    idx = dump.instances[0].index
    [path] = export_obj(dump, state.assets, mid_config[0], tmp_path, [idx])
    mesh = load_obj(path)
    n_tris = sum(len(p.mesh) for s in state.steps for p in s.asset.parts)
    assert len(mesh) == n_tris
    apple = graph.world_poses("apple")[idx][:3, 3]
    near = np.linalg.norm(mesh.vertices - apple, axis=1)
    assert np.isclose(near, 0.04, atol=1e-6).sum() > 0
    with pytest.raises(KeyError):
        export_obj(dump, state.assets, mid_config[0], tmp_path, [10_000])


def test_cli_generate_and_export(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "--config", MID, "--num", "8", "--seed", "1", "--out", str(out),
                 "--warm-repeat", "1", "--obj", "0"]) == 0
    assert (out / "scenes.json").exists() and (out / "scenes_warm_1.json").exists()
    assert (out / "obj" / "instance_000000.obj").exists()
    reports = json.loads((out / "report.json").read_text())
    assert [r["mode"] for r in reports] == ["cold", "warm"] and reports[1]["seed"] == 2
    dump = load_dump(out / "scenes.json")
    objs = tmp_path / "objs"
    assert main(["export", "--config", MID, "--dump", str(out / "scenes.json"), "--out", str(objs)]) == 0
    assert len(list(objs.glob("*.obj"))) == len(dump.instances)


def test_cli_warm_same_seed_repeats_cold(tmp_path):
    out = tmp_path / "same"
    assert main(["generate", "--config", MID, "--num", "8", "--seed", "4", "--out", str(out),
                 "--warm-repeat", "1", "--warm-seed", "same"]) == 0
    assert (out / "scenes.json").read_bytes() == (out / "scenes_warm_1.json").read_bytes()


def test_cli_bench(tmp_path, capsys):
    assert main(["bench", "--config", MID, "--num", "4,8", "--modes", "cold,warm,baseline",
                 "--out", str(tmp_path), "--baseline-cap", "2"]) == 0
    rows = list(csv.DictReader((tmp_path / "bench.csv").open()))
    assert [(r["mode"], r["n"]) for r in rows] == [(m, n) for n in ("4", "8") for m in ("cold", "warm", "baseline")]
    assert list(rows[0]) == list(COLUMNS)
    assert rows[2]["scenes_run"] == "2" and rows[1]["speedup_vs_baseline"] != ""
    assert "cold/warm time ratio" in capsys.readouterr().out


def test_bench_api(mid_config):
    cfg, base = mid_config
    rows = run_bench(cfg, [4], ("warm",), 0, base, log=lambda *_: None)
    assert len(rows) == 1 and rows[0]["speedup_vs_baseline"] is None
    assert "warm" in summary(rows)
    with pytest.raises(ValueError):
        run_bench(cfg, [4], ("hot",), 0, base)


def test_bench_writes_json(tmp_path, mid_config):
    cfg, base = mid_config
    rows = run_bench(cfg, [2], ("cold",), 0, base, log=lambda *_: None)
    write_bench(rows, tmp_path)
    assert json.loads((tmp_path / "bench.json").read_text())[0]["mode"] == "cold"
    assert (tmp_path / "summary.txt").read_text().startswith("mode")


def test_cli_reachmap(tmp_path, capsys):
    path = tmp_path / "arm.rm4d"
    assert main(["reachmap", "build", "--config", str(config_path("mid_reach")), "--out", str(path),
                 "--samples", "20000"]) == 0
    built = json.loads(capsys.readouterr().out)
    assert main(["reachmap", "inspect", str(path)]) == 0
    assert json.loads(capsys.readouterr().out) == built
    assert built["samples"] == 20000


def test_cli_errors(tmp_path, capsys):
    assert main(["generate", "--config", str(tmp_path / "nope.yaml"), "--num", "2", "--seed", "0",
                 "--out", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 3\n")
    assert main(["generate", "--config", str(bad), "--num", "2", "--seed", "0", "--out", str(tmp_path)]) == 2
    assert main(["reachmap", "build", "--config", MID, "--out", str(tmp_path / "m")]) == 2
    assert main(["reachmap", "inspect", str(bad)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--config", MID, "--num", "0", "--seed", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_cli_threads_do_not_change_output(tmp_path):
    def run(threads, out):
        cmd = [sys.executable, "-m", "batchscene.cli", "--threads", str(threads), "generate", "--config", MID,
               "--num", "16", "--seed", "11", "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        return (out / "scenes.json").read_bytes()

    assert run(1, tmp_path / "one") == run(2, tmp_path / "two")
