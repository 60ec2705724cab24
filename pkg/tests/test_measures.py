import json
import math
import sys
import textwrap

import numpy as np
import pytest

from salience_audit.fixtures import build_fixture_set
from salience_audit.metric_kernels import SsimConfig, ssim
from salience_audit.measures import (
    MeasureResult,
    NoiseCurve,
    ProviderRunner,
    auroc,
    group_stats,
    measure_entropy,
    measure_focus,
    measure_noise,
    measure_resilience,
    measure_stability,
)
from salience_audit.perturbation_engine import NoiseSpec, TransformSpec, default_transforms
from salience_audit.salience_io import InputImage, SalienceMap, load_manifest, load_salience

from conftest import MOCK_PROVIDER_CMD, random_map, write_sample_manifest


def runner_for(tmp_path, command=MOCK_PROVIDER_CMD, run_id="r1", jobs=1):
    return ProviderRunner(command=command, workdir=tmp_path / "work", run_id=run_id, jobs=jobs)


@pytest.fixture(scope="session")
def mock_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_fixture_set(root, n_authentic=4, n_synthetic=4, runs=("r1", "r2"), seed=777)
    return root


# ---------------------------------------------------------------------------
# Entropy measure

def test_measure_entropy_uniform_maps(tmp_path):
    uniform = SalienceMap.from_array(np.full((7, 7), 0.2, dtype=np.float32))
    samples = [
        {"sample_id": f"s{i}", "class_label": "authentic", "dataset_tag": "d",
         "maps": {"r1": uniform}}
        for i in range(2)
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    result = measure_entropy(manifest, "r1")
    assert all(v == pytest.approx(1.0, abs=1e-9) for v in result.per_sample.values())
    assert result.group_stats["total"] == {"mean": pytest.approx(1.0), "std": pytest.approx(0.0), "n": 2}


def test_measure_entropy_two_point_stats(tmp_path):
    uniform = SalienceMap.from_array(np.full((7, 7), 1.0, dtype=np.float32))
    onehot_arr = np.zeros((7, 7), dtype=np.float32)
    onehot_arr[0, 0] = 1.0
    samples = [
        {"sample_id": "u", "class_label": "authentic", "dataset_tag": "d",
         "maps": {"r1": uniform}},
        {"sample_id": "o", "class_label": "synthetic", "dataset_tag": "g",
         "maps": {"r1": SalienceMap.from_array(onehot_arr)}},
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    result = measure_entropy(manifest, "r1")
    assert result.group_stats["total"]["mean"] == pytest.approx(0.5, abs=1e-9)
    assert result.group_stats["total"]["std"] == pytest.approx(0.5, abs=1e-9)


def test_measure_entropy_brute_force_oracle(tmp_path, rng):
    samples = []
    expected = {}
    for i in range(100):
        smap = random_map(rng)
        sid = f"s{i:03d}"
        samples.append({"sample_id": sid, "class_label": "authentic", "dataset_tag": "d",
                        "maps": {"r1": smap}})
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    # independent recomputation from the files on disk
    for s in manifest.samples:
        values = load_salience(manifest.resolve(s.salience_paths["r1"])).values.astype(np.float64)
        p = values.ravel() / values.sum()
        p = p[p > 0]
        expected[s.sample_id] = float(-(p * np.log2(p)).sum() / math.log2(49))
    result = measure_entropy(manifest, "r1")
    for sid, value in result.per_sample.items():
        assert value == pytest.approx(expected[sid], abs=1e-12)
    assert result.group_stats["total"]["mean"] == pytest.approx(
        np.mean(sorted(expected.values())), abs=1e-12
    )


def test_measure_entropy_excludes_all_zero_maps(tmp_path):
    good = SalienceMap.from_array(np.full((7, 7), 0.5, dtype=np.float32))
    zero = SalienceMap.from_array(np.zeros((7, 7), dtype=np.float32))
    samples = [
        {"sample_id": "g", "class_label": "authentic", "dataset_tag": "d", "maps": {"r1": good}},
        {"sample_id": "z", "class_label": "authentic", "dataset_tag": "d", "maps": {"r1": zero}},
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    result = measure_entropy(manifest, "r1")
    assert "z" not in result.per_sample
    assert result.group_stats["total"]["n"] == 1
    assert any(e["sample_id"] == "z" for e in result.exclusions)


def test_measure_entropy_rescaling_invariance(tmp_path, rng):
    smap = random_map(rng)
    scaled = SalienceMap.from_array(smap.values * 4.0)
    for name, m in (("a", smap), ("b", scaled)):
        write_sample_manifest(
            tmp_path / name,
            [{"sample_id": "s", "class_label": "authentic", "dataset_tag": "d", "maps": {"r1": m}}],
            ["r1"],
        )
    r_a = measure_entropy(load_manifest(tmp_path / "a" / "manifest.json"), "r1")
    r_b = measure_entropy(load_manifest(tmp_path / "b" / "manifest.json"), "r1")
    assert r_a.per_sample["s"] == pytest.approx(r_b.per_sample["s"], abs=1e-12)


def test_measure_entropy_empty_manifest(tmp_path):
    manifest = load_manifest(write_sample_manifest(tmp_path, [], ["r1"]))
    result = measure_entropy(manifest, "r1")
    assert result.per_sample == {}
    assert result.group_stats == {}


# ---------------------------------------------------------------------------
# Noise measure

def test_measure_noise_level_zero_exact_and_deterministic(tmp_path, mock_corpus):
    manifest = load_manifest(mock_corpus / "manifest.json")
    grid = [NoiseSpec("salt_pepper", lvl, 11) for lvl in (0.0, 0.2, 0.6)]

    result1, curve1 = measure_noise(
        manifest, "r1", grid, runner_for(tmp_path / "one"), reporting_level=0.2
    )
    assert all(vals["0"] == 1.0 for vals in result1.per_sample.values())
    assert curve1.mean_ssim[0] == 1.0
    assert curve1.levels == [0.0, 0.2, 0.6]

    result2, curve2 = measure_noise(
        manifest, "r1", grid, runner_for(tmp_path / "two"), reporting_level=0.2
    )
    assert result1.to_json() == result2.to_json()
    assert curve1.mean_ssim == curve2.mean_ssim


def test_measure_noise_headline_matches_per_sample(tmp_path, mock_corpus):
    manifest = load_manifest(mock_corpus / "manifest.json")
    grid = [NoiseSpec("uniform_blend", lvl, 5) for lvl in (0.0, 0.5, 1.0)]
    result, curve = measure_noise(
        manifest, "r1", grid, runner_for(tmp_path), reporting_level=0.5
    )
    headline = [vals["0.5"] for _, vals in sorted(result.per_sample.items())]
    assert result.group_stats["total"]["mean"] == pytest.approx(np.mean(headline), abs=1e-12)
    assert result.group_stats["total"]["n"] == len(headline)
    # level-1 blend destroys the signal: similarity strictly below the clean row
    assert curve.mean_ssim[2] < 1.0


def test_measure_noise_grid_validation(tmp_path, mock_corpus):
    manifest = load_manifest(mock_corpus / "manifest.json")
    with pytest.raises(ValueError, match="include level 0"):
        measure_noise(manifest, "r1", [NoiseSpec("salt_pepper", 0.2, 1)], runner_for(tmp_path))
    with pytest.raises(ValueError, match="reporting level"):
        measure_noise(
            manifest, "r1",
            [NoiseSpec("salt_pepper", 0.0, 1), NoiseSpec("salt_pepper", 0.4, 1)],
            runner_for(tmp_path), reporting_level=0.2,
        )


def test_noise_curve_invariants():
    with pytest.raises(ValueError, match="ascending"):
        NoiseCurve(levels=[0.0, 0.2, 0.2], mean_ssim=[1, 1, 1], n=[1, 1, 1])
    with pytest.raises(ValueError, match="level 0"):
        NoiseCurve(levels=[0.1, 0.2], mean_ssim=[1, 1], n=[1, 1])


# ---------------------------------------------------------------------------
# Resilience measure

def test_measure_resilience_mock_equivariance(tmp_path, mock_corpus):
    manifest = load_manifest(mock_corpus / "manifest.json")
    result = measure_resilience(
        manifest, "r1", default_transforms(0.2), runner_for(tmp_path)
    )
    per_transform = result.extras["per_transform"]
    for tag in ("flip:LR", "flip:UD", "rot90:CW", "rot90:CC"):
        assert per_transform[tag]["mean"] == pytest.approx(1.0, abs=1e-9), tag
        assert per_transform[tag]["valid_fraction"] == 1.0
    for tag, stats in per_transform.items():
        if tag.startswith("shift:"):
            assert stats["mean"] < 1.0, tag
            assert stats["valid_fraction"] < 1.0


def test_measure_resilience_table2_grouping(tmp_path, mock_corpus):
    manifest = load_manifest(mock_corpus / "manifest.json")
    result = measure_resilience(
        manifest, "r1", default_transforms(0.2), runner_for(tmp_path)
    )
    per_transform = result.extras["per_transform"]
    groups = result.extras["transform_groups"]
    shift_means = [s["mean"] for t, s in per_transform.items() if t.startswith("shift:")]
    flip_means = [s["mean"] for t, s in per_transform.items() if t.startswith("flip:")]
    rot_means = [s["mean"] for t, s in per_transform.items() if t.startswith("rot90:")]
    assert len(shift_means) == 8 and len(flip_means) == 2 and len(rot_means) == 2
    assert groups["shifts"] == pytest.approx(np.mean(shift_means), abs=1e-12)
    assert groups["flips"] == pytest.approx(np.mean(flip_means), abs=1e-12)
    assert groups["rotations"] == pytest.approx(np.mean(rot_means), abs=1e-12)
    assert groups["grand_mean"] == pytest.approx(
        np.mean([groups["shifts"], groups["flips"], groups["rotations"]]), abs=1e-12
    )
    headline = [np.mean(sorted(v.values())) for _, v in sorted(result.per_sample.items())]
    assert result.group_stats["total"]["mean"] == pytest.approx(np.mean(headline), abs=1e-12)


# ---------------------------------------------------------------------------
# Focus measure

FIXED_PROVIDER = textwrap.dedent(
    """
    import json, struct, sys
    from pathlib import Path

    manifest = Path(sys.argv[1])
    job = json.loads(manifest.read_text())
    out = manifest.parent / "out"
    out.mkdir(exist_ok=True)
    values = [(i + 1.0) / 49.0 for i in range(49)]
    payload = b"".join(struct.pack("<f", v) for v in values)
    header = b"SALM" + struct.pack("<BBHII", 1, 0, 0, 7, 7)
    rows = []
    for req in job["requests"]:
        name = f"{req['sample_id']}.salm"
        (out / name).write_bytes(header + payload)
        rows.append({"sample_id": req["sample_id"], "variant_tag": req["variant_tag"],
                     "status": "ok", "salience": name, "score": 0.5})
    (out / "result.json").write_text(json.dumps({"job_id": job["job_id"], "results": rows}))
    """
)


def fixed_map() -> SalienceMap:
    values = (np.arange(49, dtype=np.float64) + 1.0) / 49.0
    return SalienceMap.from_array(values.reshape(7, 7).astype(np.float32))


def test_measure_focus_degenerate_provider_yields_one(tmp_path, rng):
    script = tmp_path / "fixed_provider.py"
    script.write_text(FIXED_PROVIDER)
    samples = []
    for i in range(4):
        label = "authentic" if i % 2 == 0 else "synthetic"
        samples.append(
            {
                "sample_id": f"s{i}",
                "class_label": label,
                "dataset_tag": "d" if label == "authentic" else "g",
                "score": 0.2 + 0.2 * i,
                "image": InputImage.from_array(rng.integers(0, 256, size=(28, 28, 3)) / 255.0),
                "maps": {"r1": fixed_map()},
            }
        )
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    from salience_audit.perturbation_engine import FocusSpec

    result = measure_focus(
        manifest, "r1",
        FocusSpec("salient", 0.5, blur_sigma=2.0),
        FocusSpec("non_salient", 0.5, blur_sigma=2.0),
        runner_for(tmp_path, command=f"{sys.executable} {script}"),
    )
    for sid, arms in result.per_sample.items():
        assert arms["salient"] == pytest.approx(1.0, abs=1e-9)
        assert arms["non_salient"] == pytest.approx(1.0, abs=1e-9)
    assert result.group_stats["salient:total"]["mean"] == pytest.approx(1.0, abs=1e-9)
    assert result.group_stats["non_salient:total"]["mean"] == pytest.approx(1.0, abs=1e-9)
    # original AUROC from ingested scores: synthetic scores {0.4, 0.8} vs authentic {0.2, 0.6}
    assert result.extras["auroc"]["original"] == pytest.approx(0.75)
    # provider scores all equal: all ties, AUROC one half
    assert result.extras["auroc"]["salient_removed"] == pytest.approx(0.5)
    assert result.extras["auroc"]["non_salient_removed"] == pytest.approx(0.5)


def test_measure_focus_excludes_all_zero_maps(tmp_path, rng, mock_corpus):
    zero = SalienceMap.from_array(np.zeros((7, 7), dtype=np.float32))
    samples = [
        {"sample_id": "z", "class_label": "authentic", "dataset_tag": "d", "score": 0.5,
         "image": InputImage.from_array(rng.integers(0, 256, size=(28, 28, 3)) / 255.0),
         "maps": {"r1": zero}},
        {"sample_id": "g", "class_label": "synthetic", "dataset_tag": "g", "score": 0.6,
         "image": InputImage.from_array(rng.integers(0, 256, size=(28, 28, 3)) / 255.0),
         "maps": {"r1": fixed_map()}},
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    from salience_audit.perturbation_engine import FocusSpec

    result = measure_focus(
        manifest, "r1",
        FocusSpec("salient", 0.5, blur_sigma=2.0),
        FocusSpec("non_salient", 0.5, blur_sigma=2.0),
        runner_for(tmp_path),
    )
    assert "z" not in result.per_sample
    assert any(e.get("sample_id") == "z" for e in result.exclusions)


# ---------------------------------------------------------------------------
# Stability measure

def test_measure_stability_identical_maps_is_one(tmp_path, rng):
    smap = random_map(rng)
    samples = [{"sample_id": "s", "class_label": "authentic", "dataset_tag": "d",
                "maps": {"r1": smap, "r2": smap}}]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1", "r2"]))
    result = measure_stability(manifest, ["r1", "r2"])
    assert result.per_sample["s"] == 1.0


def test_measure_stability_known_pairwise_ssims(tmp_path):
    # constant maps engineered for SSIM(A,B) = 0.5 at L=1:
    #   (2b + eps1) / (1 + b^2 + eps1) = 1/2  =>  b = 2 - sqrt(3.0001)
    cfg = SsimConfig(dynamic_range=1.0)
    b = 2.0 - math.sqrt(3.0 + (0.01) ** 2)
    map_a = SalienceMap.from_array(np.full((7, 7), 1.0, dtype=np.float32))
    map_b = SalienceMap.from_array(np.full((7, 7), b, dtype=np.float32))
    s = ssim(map_a, map_b, cfg)
    assert s == pytest.approx(0.5, abs=1e-7)  # float32 storage of b

    samples = [{"sample_id": "k", "class_label": "authentic", "dataset_tag": "d",
                "maps": {"r1": map_a, "r2": map_a, "r3": map_b}}]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1", "r2", "r3"]))
    result = measure_stability(manifest, ["r1", "r2", "r3"], cfg)
    # Eq-7 arithmetic: (2 / (3*2)) * (1.0 + s + s)
    assert result.per_sample["k"] == pytest.approx((1.0 + 2 * s) / 3.0, abs=1e-12)
    assert result.per_sample["k"] == pytest.approx(2.0 / 3.0, abs=1e-7)


def test_measure_stability_duplicated_runs(tmp_path, rng):
    samples = []
    for i in range(5):
        smap = random_map(rng)
        samples.append({"sample_id": f"s{i}", "class_label": "authentic", "dataset_tag": "d",
                        "maps": {"r1": smap, "r2": smap, "r3": smap}})
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1", "r2", "r3"]))
    result = measure_stability(manifest, ["r1", "r2", "r3"])
    assert all(v == 1.0 for v in result.per_sample.values())
    assert result.group_stats["total"]["mean"] == 1.0


def test_measure_stability_brute_force_oracle(tmp_path, rng):
    runs = ["r1", "r2", "r3", "r4"]
    samples = []
    for i in range(50):
        samples.append({
            "sample_id": f"s{i:02d}", "class_label": "authentic", "dataset_tag": "d",
            "maps": {r: random_map(rng) for r in runs},
        })
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, runs))
    result = measure_stability(manifest, runs)
    # independent nested-loop recomputation straight from the files
    total = 0.0
    for s in manifest.samples:
        maps = [load_salience(manifest.resolve(s.salience_paths[r])) for r in runs]
        acc = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                acc += ssim(maps[i], maps[j])
        per = 2.0 / (4 * 3) * acc
        assert result.per_sample[s.sample_id] == pytest.approx(per, abs=1e-12)
        total += per
    assert result.group_stats["total"]["mean"] == pytest.approx(total / 50, abs=1e-12)


def test_measure_stability_missing_run_excluded(tmp_path, rng):
    samples = [
        {"sample_id": "full", "class_label": "authentic", "dataset_tag": "d",
         "maps": {"r1": random_map(rng), "r2": random_map(rng)}},
        {"sample_id": "part", "class_label": "authentic", "dataset_tag": "d",
         "maps": {"r1": random_map(rng)}},
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1", "r2"]))
    result = measure_stability(manifest, ["r1", "r2"])
    assert "part" not in result.per_sample
    assert any(e["sample_id"] == "part" for e in result.exclusions)


# ---------------------------------------------------------------------------
# AUROC

def brute_force_auroc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == "synthetic"]
    neg = [s for s, l in zip(scores, labels) if l == "authentic"]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def test_auroc_worked_examples():
    assert auroc([0.1, 0.2, 0.8, 0.9], ["authentic", "authentic", "synthetic", "synthetic"]) == 1.0
    assert auroc([0.5, 0.5, 0.5, 0.5], ["authentic", "synthetic", "authentic", "synthetic"]) == 0.5
    assert auroc([0.1, 0.4, 0.3, 0.9],
                 ["authentic", "authentic", "synthetic", "synthetic"]) == 0.75


def test_auroc_matches_brute_force_exactly(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 13))
        labels = ["synthetic" if rng.random() < 0.5 else "authentic" for _ in range(n)]
        if "synthetic" not in labels:
            labels[0] = "synthetic"
        if "authentic" not in labels:
            labels[-1] = "authentic"
        # discrete score pool forces plenty of ties
        scores = [float(rng.integers(0, 5)) / 4.0 for _ in range(n)]
        assert auroc(scores, labels) == brute_force_auroc(scores, labels)


def test_auroc_monotone_transform_invariance(rng):
    scores = [float(s) for s in rng.random(20)]
    labels = ["synthetic" if i % 2 else "authentic" for i in range(20)]
    base = auroc(scores, labels)
    assert auroc([math.exp(3 * s) for s in scores], labels) == pytest.approx(base, abs=0)
    assert auroc([s ** 3 for s in scores], labels) == pytest.approx(base, abs=0)


def test_auroc_single_class_rejected():
    with pytest.raises(ValueError, match="each class"):
        auroc([0.1, 0.2], ["authentic", "authentic"])


# ---------------------------------------------------------------------------
# Aggregation

def test_group_stats_columns(tmp_path, rng):
    samples = [
        {"sample_id": "a", "class_label": "authentic", "dataset_tag": "ffhq",
         "maps": {"r1": random_map(rng)}},
        {"sample_id": "b", "class_label": "synthetic", "dataset_tag": "gan_a",
         "maps": {"r1": random_map(rng)}},
        {"sample_id": "c", "class_label": "synthetic", "dataset_tag": "gan_b",
         "maps": {"r1": random_map(rng)}},
    ]
    manifest = load_manifest(write_sample_manifest(tmp_path, samples, ["r1"]))
    stats = group_stats(manifest, {"a": 0.1, "b": 0.2, "c": 0.6})
    assert stats["authentic"]["n"] == 1
    assert stats["synthetic"]["n"] == 2
    assert stats["synthetic"]["mean"] == pytest.approx(0.4)
    assert stats["tag:gan_a"]["n"] == 1
    assert stats["total"]["n"] == 3
    # population std
    assert stats["synthetic"]["std"] == pytest.approx(0.2)
