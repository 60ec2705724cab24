import json
import struct

import numpy as np
import pytest
from PIL import Image

from salience_audit.salience_io import (
    ManifestError,
    SalienceFormatError,
    SalienceMap,
    load_image,
    load_manifest,
    load_salience,
    write_image,
    write_salience,
    write_salience_png,
)

from conftest import random_map, write_sample_manifest


def test_salm_round_trip_bit_exact(rng, tmp_path):
    for i in range(20):
        smap = random_map(rng, int(rng.integers(1, 12)), int(rng.integers(1, 12)))
        path = tmp_path / f"m{i}.salm"
        write_salience(smap, path)
        loaded = load_salience(path)
        assert loaded.shape == smap.shape
        assert loaded.depth_hint is None
        assert loaded.values.tobytes() == smap.values.tobytes()


def test_salm_round_trip_preserves_depth_hint(tmp_path):
    smap = SalienceMap.from_array(np.full((3, 4), 0.5, dtype=np.float32), depth_hint=8)
    write_salience(smap, tmp_path / "m.salm")
    loaded = load_salience(tmp_path / "m.salm")
    assert loaded.depth_hint == 8
    assert loaded.values.tobytes() == smap.values.tobytes()


def test_salm_file_size_is_header_plus_payload(tmp_path, rng):
    smap = random_map(rng, 224, 224)
    path = tmp_path / "m.salm"
    write_salience(smap, path)
    assert path.stat().st_size == 16 + 224 * 224 * 4
    with_depth = SalienceMap.from_array(smap.values, depth_hint=8)
    write_salience(with_depth, path)
    assert path.stat().st_size == 17 + 224 * 224 * 4


def test_salm_payload_length_mismatch(tmp_path):
    header = b"SALM" + struct.pack("<BBHII", 1, 0, 0, 7, 7)
    (tmp_path / "bad.salm").write_bytes(header + b"\x00" * (48 * 4))
    with pytest.raises(SalienceFormatError, match="payload length mismatch") as exc:
        load_salience(tmp_path / "bad.salm")
    assert exc.value.field == "payload"


def test_salm_rejects_negative_and_nonfinite(tmp_path):
    header = b"SALM" + struct.pack("<BBHII", 1, 0, 0, 1, 2)
    (tmp_path / "neg.salm").write_bytes(header + struct.pack("<ff", -1.0, 0.5))
    with pytest.raises(SalienceFormatError, match="negative"):
        load_salience(tmp_path / "neg.salm")
    (tmp_path / "nan.salm").write_bytes(header + struct.pack("<ff", float("nan"), 0.5))
    with pytest.raises(SalienceFormatError, match="non-finite"):
        load_salience(tmp_path / "nan.salm")


def test_salm_rejects_bad_magic_and_version(tmp_path):
    (tmp_path / "x.salm").write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(SalienceFormatError, match="not a SALM"):
        load_salience(tmp_path / "x.salm")
    header = b"SALM" + struct.pack("<BBHII", 9, 0, 0, 1, 1) + struct.pack("<f", 0.0)
    (tmp_path / "v.salm").write_bytes(header)
    with pytest.raises(SalienceFormatError, match="version"):
        load_salience(tmp_path / "v.salm")


def test_salm_write_to_unwritable_path(tmp_path, rng):
    with pytest.raises(OSError):
        write_salience(random_map(rng), tmp_path / "missing_dir" / "m.salm")


def test_png_import_full_scale(tmp_path):
    arr = np.full((7, 7), 255, dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(tmp_path / "m.png")
    smap = load_salience(tmp_path / "m.png")
    assert smap.depth_hint == 8
    assert np.all(smap.values == 1.0)


def test_png_import_maps_k_over_255(tmp_path, rng):
    levels = rng.integers(0, 256, size=(9, 5)).astype(np.uint8)
    Image.fromarray(levels, mode="L").save(tmp_path / "m.png")
    smap = load_salience(tmp_path / "m.png")
    expected = (levels.astype(np.float64) / 255.0).astype(np.float32)
    assert np.array_equal(smap.values, expected)


def test_png_reexport_lossless(tmp_path, rng):
    levels = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
    Image.fromarray(levels, mode="L").save(tmp_path / "m.png")
    smap = load_salience(tmp_path / "m.png")
    write_salience_png(smap, tmp_path / "back.png")
    with Image.open(tmp_path / "back.png") as img:
        assert np.array_equal(np.asarray(img), levels)


def test_png_rejects_multichannel(tmp_path):
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(tmp_path / "m.png")
    with pytest.raises(SalienceFormatError, match="single-channel"):
        load_salience(tmp_path / "m.png")


def test_image_png_round_trip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(11, 13, 3)).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(tmp_path / "img.png")
    img = load_image(tmp_path / "img.png")
    assert img.channels == 3
    write_image(img, tmp_path / "back.png")
    with Image.open(tmp_path / "back.png") as back:
        assert np.array_equal(np.asarray(back), arr)


# ---------------------------------------------------------------------------
# Manifest

def _two_sample_specs(rng):
    return [
        {
            "sample_id": "a1",
            "class_label": "authentic",
            "dataset_tag": "ffhq",
            "maps": {"r1": random_map(rng), "r2": random_map(rng)},
        },
        {
            "sample_id": "s1",
            "class_label": "synthetic",
            "dataset_tag": "gan",
            "score": 0.9,
            "maps": {"r1": random_map(rng), "r2": random_map(rng)},
        },
    ]


def test_manifest_valid_two_samples(tmp_path, rng):
    path = write_sample_manifest(tmp_path, _two_sample_specs(rng), ["r1", "r2"])
    manifest = load_manifest(path)
    assert len(manifest.samples) == 2
    assert manifest.groups[("authentic", "ffhq")] == ("a1",)
    assert manifest.groups[("synthetic", "gan")] == ("s1",)


def test_manifest_dangling_run(tmp_path, rng):
    path = write_sample_manifest(tmp_path, _two_sample_specs(rng), ["r1", "r2"])
    doc = json.loads(path.read_text())
    doc["samples"][0]["salience"]["r3"] = doc["samples"][0]["salience"]["r1"]
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="run 'r3' absent"):
        load_manifest(path)


def test_manifest_collects_all_violations(tmp_path, rng):
    path = write_sample_manifest(tmp_path, _two_sample_specs(rng), ["r1", "r2"])
    doc = json.loads(path.read_text())
    doc["samples"][1]["sample_id"] = "a1"  # duplicate
    doc["samples"][0]["salience"]["r1"] = "salience/r1/missing.salm"
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError) as exc:
        load_manifest(path)
    text = str(exc.value)
    assert "duplicate sample_id" in text
    assert "missing" in text
    assert len(exc.value.violations) >= 2


def test_manifest_empty_samples_is_valid(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"version": 1, "runs": ["r1"], "samples": []}))
    manifest = load_manifest(path)
    assert manifest.samples == ()
    assert manifest.groups == {}


def test_manifest_order_independent_groups(tmp_path, rng):
    specs = _two_sample_specs(rng)
    path = write_sample_manifest(tmp_path, specs, ["r1", "r2"])
    manifest_fwd = load_manifest(path)
    doc = json.loads(path.read_text())
    doc["samples"].reverse()
    path.write_text(json.dumps(doc))
    manifest_rev = load_manifest(path)
    assert manifest_fwd.groups == manifest_rev.groups


def test_manifest_rejects_bad_label_and_nonfinite_score(tmp_path, rng):
    path = write_sample_manifest(tmp_path, _two_sample_specs(rng), ["r1", "r2"])
    doc = json.loads(path.read_text())
    doc["samples"][0]["class_label"] = "genuine"
    doc["samples"][1]["score"] = float("nan")
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError) as exc:
        load_manifest(path)
    assert len(exc.value.violations) == 2
