import csv
import json

import numpy as np
import pytest
from PIL import Image

from gpgp.cli import POSTERIOR_COLUMNS, main
from gpgp.imageio import save_regions

CONFIG = {
    "text": {"canvas_w": 80, "canvas_h": 50, "max_glyphs": 3},
    "synth2d": {"min_present": 1, "max_present": 2, "min_size": 15, "max_size": 30, "inside_canvas": True},
    "synth3d": {"image_w": 40, "image_h": 30},
}


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.json").write_text(json.dumps(CONFIG))
    return tmp_path


def test_text_pipeline_and_replay(work):
    assert main(["synth2d", "--config", "c.json", "--n", "2", "--seed", "1", "--out", "s"]) == 0
    assert main(["infer2d", "s/text_0000.png", "--config", "c.json", "--steps", "60",
                 "--chains", "2", "--out", "i"]) == 0
    rows = list(csv.reader(open(work / "i/text_0000_chain0.csv")))
    assert rows[0][:5] == ["step", "log_prior", "log_likelihood", "accepted", "address"]
    assert len(rows) - 1 == 60 // 10
    reading = json.load(open(work / "i/text_0000_reading.json"))
    assert set(reading) >= {"text", "boxes", "chosen_chain"}
    man = json.load(open(work / "i/manifest_infer2d_text_0000.json"))
    assert man["command"] == "infer2d" and "i/text_0000_reading.json" in man["outputs"]
    assert main(["replay", "i/manifest_infer2d_text_0000.json", "--out", "r"]) == 0
    for name in ("text_0000_reading.json", "text_0000_chain0.csv", "text_0000_chain1.csv", "text_0000_best.png"):
        assert (work / "i" / name).read_bytes() == (work / "r" / name).read_bytes()
    assert main(["evaluate", "i", "s", "--task", "text", "--out", "m.json"]) == 0
    assert json.load(open(work / "m.json"))["n_items"] == 1


def test_synth2d_determinism_and_empty(work):
    main(["synth2d", "--config", "c.json", "--n", "2", "--seed", "4", "--out", "a"])
    main(["synth2d", "--config", "c.json", "--n", "2", "--seed", "4", "--out", "b"])
    for f in ("text_0000.png", "text_0001.json"):
        assert (work / "a" / f).read_bytes() == (work / "b" / f).read_bytes()
    assert main(["synth2d", "--n", "0", "--out", "z"]) == 0
    assert sorted(p.name for p in (work / "z").iterdir()) == ["manifest_synth2d.json"]
    assert json.load(open(work / "z/manifest_synth2d.json"))["outputs"] == {}


def test_road_pipeline(work):
    assert main(["synth3d", "--config", "c.json", "--n", "2", "--seed", "2", "--out", "s3"]) == 0
    assert main(["train-appearance", "s3/road_0000.png", "s3/road_0000_regions.png",
                 "--out", "m/a.json"]) == 0
    doc = json.load(open(work / "m/a.json"))
    assert all(abs(sum(v) - 1) < 1e-9 for v in doc["theta"].values())
    main(["train-appearance", "s3/road_0000.png", "s3/road_0000_regions.png", "--out", "m/b.json"])
    assert (work / "m/a.json").read_bytes() == (work / "m/b.json").read_bytes()
    args = ["infer3d", "s3/road_0000.png", "s3/road_0001.png", "--model", "s3/appearance.json",
            "--samples", "1", "--steps", "50", "--config", "c.json"]
    assert main(args + ["--out", "i3"]) == 0
    assert main(args + ["--out", "i3b"]) == 0
    rows = list(csv.DictReader(open(work / "i3/posterior.csv")))
    assert tuple(rows[0]) == POSTERIOR_COLUMNS
    assert [r["frame"] for r in rows] == ["road_0000", "road_0001"]
    for f in ("posterior.csv", "road_0000_regions.png", "road_0001_lane.png"):
        assert (work / "i3" / f).read_bytes() == (work / "i3b" / f).read_bytes()
    assert main(["evaluate", "i3", "s3", "--task", "road", "--out", "m.json"]) == 0
    assert 0.0 <= json.load(open(work / "m.json"))["aggregate"] <= 1.0


def test_evaluate_mean_of_items(work):
    for d in ("p", "t"):
        (work / d).mkdir()
    truth = {"text": "AB", "boxes": [[0, 0, 10, 10], [20, 0, 10, 10]]}
    for stem, pred in (("x", truth), ("y", {"text": "A", "boxes": [[0, 0, 10, 10]]})):
        (work / "p" / f"{stem}_reading.json").write_text(json.dumps(pred))
        (work / "t" / f"{stem}.json").write_text(json.dumps({"reading": truth}))
    assert main(["evaluate", "p", "t", "--task", "text", "--out", "e.json"]) == 0
    m = json.load(open(work / "e.json"))
    assert m["per_item"] == {"x": 1.0, "y": 0.5} and m["aggregate"] == 0.75
    (work / "q").mkdir()
    assert main(["evaluate", "q", "t", "--task", "text", "--out", "e2.json"]) == 2


def test_exit_codes(work):
    assert main(["infer2d", "missing.png", "--out", "o"]) == 3
    (work / "corrupt.png").write_bytes(b"not a png")
    assert main(["infer2d", "corrupt.png", "--out", "o"]) == 3
    assert main(["synth2d", "--n", "-1", "--out", "o"]) == 2
    (work / "bad.json").write_text(json.dumps({"nope": {}}))
    assert main(["synth2d", "--n", "1", "--config", "bad.json", "--out", "o"]) == 2
    (work / "bad2.json").write_text("{")
    assert main(["synth2d", "--n", "1", "--config", "bad2.json", "--out", "o"]) == 2
    assert main(["synth2d", "--n", "1", "--config", "absent.json", "--out", "o"]) == 3
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(work / "img.png")
    Image.fromarray(np.full((8, 8, 3), 7, np.uint8)).save(work / "badlabels.png")
    assert main(["train-appearance", "img.png", "badlabels.png", "--out", "m.json"]) == 2
    save_regions(work / "labels.png", np.zeros((8, 8), np.uint8))
    assert main(["train-appearance", "img.png", "labels.png", "--out", "m.json"]) == 0
    assert main(["infer3d", "img.png", "--model", "m.json", "--steps", "0", "--out", "o"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["infer2d"])
    assert exc.value.code == 2
