import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from flowgen import dataset
from flowgen.assets import sha256_file
from flowgen.cli import main
from flowgen.io import read_mask, write_mask


def tree_digest(root):
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "data"
    assert main(["generate", "--out", str(out), "--samples", "4", "--seed", "11",
                 "--kitti", "--oob-mask"]) == 0
    return out


def test_generate_layout(small_dataset):
    m = json.loads((small_dataset / "manifest.json").read_text())
    assert m["sample_count"] == 4 and m["master_seed"] == 11
    assert [e["dir"] for e in m["samples"]] == [f"samples/{i:06d}" for i in range(4)]
    roles = set(m["samples"][0]["files"])
    assert roles == {"frame_a", "frame_b", "flow", "occlusion", "flow_kitti", "occlusion_oob"}
    for e in m["samples"]:
        for f in e["files"].values():
            assert sha256_file(small_dataset / f["path"]) == f["sha256"]


def test_validate_ok(small_dataset, capsys):
    code, rep = run(capsys, "validate", small_dataset)
    assert code == 0 and rep["ok"]
    checks = rep["samples"][0]["checks"]
    for k in ("integrity", "flo_roundtrip", "dimensions", "flow_finite", "occlusion_binary",
              "oob_superset", "kitti_roundtrip", "photometric", "occlusion_consistency"):
        assert checks[k] is True, k


def copy_dataset(src, dst):
    import shutil
    shutil.copytree(src, dst)
    return dst


def resync_hashes(root):
    """Rewrite manifest digests so only the content checks can fail."""
    m = json.loads((root / "manifest.json").read_text())
    for e in m["samples"]:
        for f in e["files"].values():
            f["sha256"] = sha256_file(root / f["path"])
    (root / "manifest.json").write_text(json.dumps(m))


def test_flipped_tag_detected(small_dataset, tmp_path, capsys):
    root = copy_dataset(small_dataset, tmp_path / "bad")
    p = root / "samples/000001/flow.flo"
    raw = bytearray(p.read_bytes())
    raw[0] ^= 0x01
    p.write_bytes(bytes(raw))
    code, rep = run(capsys, "validate", root)
    assert code == 1 and not rep["ok"]
    assert any("sha256" in e for e in rep["errors"])
    resync_hashes(root)
    code, rep = run(capsys, "validate", root)
    assert code == 1 and any("tag" in e for e in rep["errors"])


def test_zeroed_occlusion_detected(small_dataset, tmp_path, capsys):
    root = copy_dataset(small_dataset, tmp_path / "bad")
    counts = {i: read_mask(root / f"samples/{i:06d}/occ.png").sum() for i in range(4)}
    worst = max(counts, key=counts.get)
    assert counts[worst] > 500
    p = root / f"samples/{worst:06d}/occ.png"
    write_mask(np.zeros_like(read_mask(p)), p)
    resync_hashes(root)
    code, rep = run(capsys, "validate", root)
    assert code == 1
    bad = rep["samples"][worst]
    assert bad["checks"]["occlusion_consistency"] is False
    # the oob mask no longer agrees either way, but it must still be a superset
    assert all(r["ok"] for i, r in enumerate(rep["samples"]) if i != worst)


def test_truncated_payload(small_dataset, tmp_path, capsys):
    root = copy_dataset(small_dataset, tmp_path / "bad")
    p = root / "samples/000000/flow.flo"
    p.write_bytes(p.read_bytes()[:-4])
    resync_hashes(root)
    code, rep = run(capsys, "validate", root)
    assert code == 1 and any("truncated" in e for e in rep["errors"])


def test_validate_missing_manifest(tmp_path, capsys):
    code, rep = run(capsys, "validate", tmp_path)
    assert code == 1 and not rep["ok"]


def test_regenerate_from_manifest(small_dataset, tmp_path, capsys):
    out = tmp_path / "again"
    code, res = run(capsys, "generate", "--config", small_dataset / "manifest.json", "--out", out)
    assert code == 0 and res["samples"] == 4 and res["seed"] == 11
    assert tree_digest(out) == tree_digest(small_dataset)


def test_workers_do_not_change_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--out", str(a), "--samples", "3", "--seed", "5"]) == 0
    assert main(["generate", "--out", str(b), "--samples", "3", "--seed", "5", "--workers", "2"]) == 0
    assert tree_digest(a) == tree_digest(b)


def test_stats_artifacts(small_dataset, tmp_path, capsys):
    est = tmp_path / "est"
    est.mkdir()
    from flowgen.io import read_flo, write_flo
    for i in range(4):
        f = read_flo(small_dataset / f"samples/{i:06d}/flow.flo")
        write_flo(f + 0.5, est / f"{i:06d}.flo")
    out = tmp_path / "stats"
    code, res = run(capsys, "stats", small_dataset, "--out", out, "--estimates", est)
    assert code == 0
    for name in ("flow_magnitude_hist.csv", "flow_magnitude_hist.png",
                 "fg_translation_hist.csv", "fg_translation_hist.png"):
        assert (out / name).stat().st_size > 0
    assert res["flow_stats"]["epe"] == pytest.approx(0.5 * np.sqrt(2), abs=1e-5)
    assert res["flow_stats"]["acc_le1"] == 1.0
    lines = (out / "flow_magnitude_hist.csv").read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count" and len(lines) == 161
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 4 * 512 * 384


def test_preview(small_dataset, tmp_path, capsys):
    code, res = run(capsys, "preview", small_dataset / "samples/000000", "--out", tmp_path)
    assert code == 0
    for key in ("flow_color", "occ_overlay", "preview"):
        assert Path(res[key]).stat().st_size > 0


def test_bench(capsys):
    code, res = run(capsys, "bench", "--samples", "2")
    assert code == 0 and res["samples"] == 2 and res["fg_count"] == [7, 7] and res["seconds"] > 0


def test_distribution_and_count_flags(tmp_path):
    out = tmp_path / "u"
    assert main(["generate", "--out", str(out), "--samples", "1", "--distribution", "uniform",
                 "--fg-count", "2..3", "--blur-kernel", "3"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["motion"]["fg_translation"]["kind"] == "uniform"
    assert m["config"]["motion"]["fg_count_range"] == [2, 3]
    assert m["config"]["blur_kernel"] == 3
    assert 2 <= len(m["samples"][0]["scene"]["foregrounds"]) <= 3


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha_threshold": 2.0}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--samples", "1"]) == 2
    assert "alpha_threshold" in capsys.readouterr().err
    assert main(["generate", "--out", str(tmp_path / "o"), "--samples", "1", "--blur-kernel", "4"]) == 2
    assert main(["generate", "--config", str(tmp_path / "none.json"), "--out", "x", "--samples", "1"]) == 2
    assert main(["generate", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("argv", [["generate", "--out", "x", "--samples", "1", "--seed", "-1"],
                                  ["generate", "--out", "x", "--samples", "0"],
                                  ["generate", "--out", "x", "--samples", "1", "--seed", str(2 ** 64)],
                                  ["bench", "--fg-count", "5..2"]])
def test_bad_arguments(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_catalog_mismatch(small_dataset, tmp_path, monkeypatch):
    m = json.loads((small_dataset / "manifest.json").read_text())
    m["catalog"]["segments"][0]["sha256"] = "0" * 64
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps(m))
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    from flowgen.errors import AssetError
    with pytest.raises(AssetError):
        dataset.regenerate(p, tmp_path / "o2")
