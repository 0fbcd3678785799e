import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miqa_pns.errors import DatasetFormatError
from miqa_pns.synthetic import (
    DEFAULT_PROPORTIONS,
    REFERENCE_COUNTS,
    Grade,
    SceneParams,
    apportion,
    generate_dataset,
    grade_from_params,
    make_split,
    parse_proportions,
    read_dataset,
    read_metadata,
    render,
    sample_params,
    write_dataset,
    write_metadata,
)


def test_grade_maps_to_binary_label():
    assert Grade.GOOD.label == 0
    assert Grade.LIMITED.label == 1 and Grade.POOR.label == 1


def test_good_never_has_artifact(rng):
    for _ in range(500):
        p = sample_params(Grade.GOOD, rng)
        assert p.artifact_strength == 0.0
        assert p.chamber_clarity >= 0.8 and p.crop_fraction <= 0.1


def test_poor_always_blocked(rng):
    for _ in range(500):
        assert sample_params(Grade.POOR, rng).artifact_strength >= 0.7


def test_limited_mixture_is_even():
    rng = np.random.default_rng(99)
    n = 10_000
    clean = sum(sample_params(Grade.LIMITED, rng).artifact_strength <= 0.05 for _ in range(n))
    # binomial(10000, 0.5) has sd 0.005, so +-0.02 is four sd
    assert abs(clean / n - 0.5) <= 0.02


@pytest.mark.parametrize("grade", list(Grade))
def test_label_rule_recovers_grade(grade, rng):
    for _ in range(300):
        p = sample_params(grade, rng)
        assert grade_from_params(p) is grade
        if p.artifact_strength >= 0.3:
            assert grade is not Grade.GOOD


def test_render_deterministic():
    p = SceneParams(0.9, 0.05, 0.4, 0.03, 17)
    assert render(p).tobytes() == render(p).tobytes()


def test_render_range_and_shape():
    img = render(SceneParams(1.0, 0.0, 1.0, 0.5, 3), 20, 24)
    assert img.shape == (20, 24)
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_artifacts_darken():
    base = dict(chamber_clarity=0.9, crop_fraction=0.05, noise_sigma=0.02, rng_seed=5)
    clean = render(SceneParams(artifact_strength=0.0, **base))
    blocked = render(SceneParams(artifact_strength=1.0, **base))
    assert blocked.mean() < clean.mean()


def test_crop_halves_arc_pixels():
    full = render(SceneParams(1.0, 0.0, 0.0, 0.0, 1))
    half = render(SceneParams(1.0, 0.5, 0.0, 0.0, 1))
    threshold = 0.3
    ratio = (half > threshold).sum() / (full > threshold).sum()
    assert abs(ratio - 0.5) <= 0.1


def test_render_rejects_small_images():
    with pytest.raises(ValueError):
        render(SceneParams(1, 0, 0, 0, 0), 8, 32)


def test_apportion_examples():
    assert apportion(10, [1, 1, 1]) == [4, 3, 3]
    assert apportion(0, [1, 2]) == [0, 0]
    assert sum(apportion(2825, [0.21, 0.647, 0.143])) == 2825


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 5000), st.lists(st.floats(0.01, 10), min_size=1, max_size=5))
def test_apportion_properties(total, weights):
    out = apportion(total, weights)
    assert sum(out) == total
    exact = [total * w / sum(weights) for w in weights]
    assert all(abs(o - e) < 1 for o, e in zip(out, exact))


def test_default_proportions_match_reference_counts():
    total = sum(REFERENCE_COUNTS.values())
    assert total == 2825
    assert DEFAULT_PROPORTIONS[Grade.GOOD] == pytest.approx(0.21, abs=5e-4)
    assert DEFAULT_PROPORTIONS[Grade.LIMITED] == pytest.approx(0.647, abs=5e-4)
    assert DEFAULT_PROPORTIONS[Grade.POOR] == pytest.approx(0.143, abs=5e-4)
    counts = apportion(2825, [DEFAULT_PROPORTIONS[g] for g in Grade])
    assert counts == [593, 1827, 405]


def test_rounded_proportions_within_one():
    counts = apportion(2825, [0.21, 0.647, 0.143])
    assert all(abs(c - e) <= 1 for c, e in zip(counts, [593, 1827, 405]))


def test_generate_counts_and_determinism():
    a = generate_dataset(200, {"Good": 0.25, "Limited": 0.5, "Poor": 0.25}, seed=3, height=16, width=16)
    b = generate_dataset(200, {"Good": 0.25, "Limited": 0.5, "Poor": 0.25}, seed=3, height=16, width=16)
    assert a.counts() == {Grade.GOOD: 50, Grade.LIMITED: 100, Grade.POOR: 50}
    assert a.pixels.tobytes() == b.pixels.tobytes()
    assert a.grades.tobytes() == b.grades.tobytes()
    for i in range(len(a)):
        assert grade_from_params(a[i].params) is a[i].grade


def test_generate_empty():
    assert len(generate_dataset(0, seed=1)) == 0


def test_generate_rejects_bad_proportions():
    with pytest.raises(ValueError, match="sum"):
        generate_dataset(10, {"Good": 0.5, "Limited": 0.3, "Poor": 0.1})


def test_image_i_independent_of_n():
    # per-image RNG streams: same seed, image grade counts differ, pixels for
    # the same (seed, index, grade) agree
    a = generate_dataset(30, {"Good": 1.0}, seed=4, height=16, width=16)
    b = generate_dataset(60, {"Good": 1.0}, seed=4, height=16, width=16)
    assert a.pixels[0].tobytes() == b.pixels[0].tobytes()


@pytest.fixture(scope="module")
def small_ds():
    return generate_dataset(1000, seed=0, height=16, width=16)


def test_iid_split_sizes(small_ds):
    s = make_split(small_ds, "iid", seed=0)
    assert (len(s.train), len(s.val), len(s.test)) == (700, 150, 150)
    # stratified: Good share close to the dataset's in every part
    share = small_ds.counts()[Grade.GOOD] / len(small_ds)
    for part in (s.train, s.val, s.test):
        assert abs(np.mean(small_ds.grades[part] == Grade.GOOD) - share) < 0.01


@pytest.mark.parametrize("scenario, held", [("limited-holdout", Grade.LIMITED), ("poor-holdout", Grade.POOR)])
def test_holdout_splits(small_ds, scenario, held):
    s = make_split(small_ds, scenario, seed=0)
    trainval = np.concatenate([s.train, s.val])
    assert not np.any(small_ds.grades[trainval] == held)
    assert np.all(small_ds.grades[s.test] == held)
    assert np.all(small_ds.labels(s.test) == 1)
    assert len(s.train) == (7 * len(trainval) + 5) // 10


@pytest.mark.parametrize("scenario", ["iid", "limited-holdout", "poor-holdout"])
def test_split_is_partition(small_ds, scenario):
    s = make_split(small_ds, scenario, seed=5)
    parts = [set(s.train.tolist()), set(s.val.tolist()), set(s.test.tolist())]
    assert parts[0].isdisjoint(parts[1]) and parts[0].isdisjoint(parts[2]) and parts[1].isdisjoint(parts[2])
    assert set().union(*parts) == set(range(len(small_ds)))


def test_split_missing_grade():
    ds = generate_dataset(50, {"Good": 0.5, "Poor": 0.5}, seed=0, height=16, width=16)
    with pytest.raises(ValueError, match="LIMITED"):
        make_split(ds, "limited-holdout")
    make_split(ds, "iid")


def test_dataset_file_round_trip(tmp_path):
    ds = generate_dataset(40, seed=2, height=16, width=20)
    path = tmp_path / "d.pnsa"
    write_dataset(ds, path)
    raw = path.read_bytes()
    assert raw[:4] == b"PNSA"
    assert [int.from_bytes(raw[i : i + 4], "little") for i in (4, 8, 12, 16)] == [1, 40, 16, 20]
    assert len(raw) == 20 + 40 * (1 + 4 * 16 * 20)
    back = read_dataset(path)
    assert back.pixels.tobytes() == ds.pixels.tobytes()
    assert back.grades.tobytes() == ds.grades.tobytes()


def test_dataset_file_errors(tmp_path):
    ds = generate_dataset(5, seed=2, height=16, width=16)
    path = tmp_path / "d.pnsa"
    write_dataset(ds, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(DatasetFormatError):
        read_dataset(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


def test_metadata_round_trip(tmp_path):
    path = tmp_path / "d.meta"
    write_metadata(path, seed=7, n=100, proportions=DEFAULT_PROPORTIONS, height=32, width=32, limited_artifact_fraction=0.5)
    meta = read_metadata(path)
    assert meta["seed"] == "7" and meta["generator_version"] == "1"
    props = parse_proportions(meta["proportions"])
    assert props == DEFAULT_PROPORTIONS
