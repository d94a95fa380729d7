import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepmad.errors import EmptySplit, GridOverlap, IdMismatch, InvariantViolation, ParseError
from deepmad.metrics import ScoreSet, eer, write_scores
from deepmad.protocol import (
    DatasetManifest,
    FeatureCache,
    Sample,
    SplitMix64,
    System,
    expand_systems,
    format_manifest,
    parse_manifest,
    parse_manifest_lines,
    run_cross,
    run_fusion,
    run_grid,
    run_intra,
    split_identities,
    split_identity_sets,
)
from deepmad.synthfix import write_dataset


def _lines(text):
    return text.splitlines(True)


def test_parse_empty_manifest():
    m = parse_manifest_lines(_lines("#dataset empty\n"))
    assert m.name == "empty" and len(m) == 0


def test_parse_fixture_manifest(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text(
        "#dataset toy\n"
        "# a comment\n"
        "a.png\tbonafide\tA\n"
        "b.png\tbonafide\tB\n"
        "ab.png\tmorph\tA,B\n"
        "sub/ba.png\tmorph\tB,A\n"
    )
    m = parse_manifest(path)
    assert m.name == "toy"
    assert m.count("bonafide") == 2 and m.count("morph") == 2
    assert m.samples[2] == Sample("ab.png", "morph", ("A", "B"))
    assert m.resolve(m.samples[3]) == tmp_path / "sub" / "ba.png"
    assert parse_manifest_lines(_lines(format_manifest(m))) == m


@pytest.mark.parametrize("body,line", [
    ("x.png\tmorph\tA\n", 2),
    ("x.png\tbonafide\tA,B\n", 2),
    ("x.png\tmorph\tA,A\n", 2),
    ("x.png\tattack\tA\n", 2),
    ("x.png\tbonafide\tA\nx.png\tbonafide\tB\n", 3),
])
def test_manifest_invariants(body, line):
    with pytest.raises(InvariantViolation) as exc:
        parse_manifest_lines(_lines("#dataset t\n" + body))
    assert exc.value.line == line


def test_manifest_parse_error():
    with pytest.raises(ParseError) as exc:
        parse_manifest_lines(_lines("#dataset t\nx.png bonafide A\n"))
    assert exc.value.line == 2 and not isinstance(exc.value, InvariantViolation)


def test_splitmix64_reference_vector():
    g = SplitMix64(0)
    assert [g.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def _bona_manifest(n_ids):
    return DatasetManifest("d", tuple(Sample(f"{i}.png", "bonafide", (f"id{i}",)) for i in range(n_ids)))


def test_split_sizes():
    train_ids, dev_ids = split_identity_sets(_bona_manifest(8), 0.75, 42)
    assert len(train_ids) == 6 and len(dev_ids) == 2
    train, dev = split_identities(_bona_manifest(8), 0.75, 42)
    assert len(train) == 6 and len(dev) == 2
    assert len(split_identity_sets(_bona_manifest(10), 0.7, 1)[0]) == 7
    assert len(split_identity_sets(_bona_manifest(9), 0.75, 1)[0]) == 7  # ceil(6.75)


def test_straddling_morph_dropped():
    m = _bona_manifest(8)
    train_ids, dev_ids = split_identity_sets(m, 0.75, 3)
    straddle = Sample("x.png", "morph", (train_ids[0], dev_ids[0]))
    inside = Sample("y.png", "morph", (train_ids[0], train_ids[1]))
    m2 = DatasetManifest("d", m.samples + (straddle, inside))
    train, dev = split_identities(m2, 0.75, 3)
    assert straddle not in train.samples and straddle not in dev.samples
    assert inside in train.samples


def test_split_deterministic():
    m = _bona_manifest(30)
    assert split_identities(m, 0.75, 5) == split_identities(m, 0.75, 5)
    assert split_identities(m, 0.75, 5) != split_identities(m, 0.75, 6)


@st.composite
def manifests(draw):
    n_ids = draw(st.integers(2, 25))
    ids = [f"i{k}" for k in range(n_ids)]
    samples = [Sample(f"b{k}", "bonafide", (ids[k],)) for k in range(n_ids) if draw(st.booleans())]
    for k in range(draw(st.integers(0, 30))):
        a, b = draw(st.lists(st.sampled_from(ids), min_size=2, max_size=2, unique=True))
        samples.append(Sample(f"m{k}", "morph", (a, b)))
    return DatasetManifest("h", tuple(samples))


@settings(max_examples=100, deadline=None)
@given(manifests(), st.integers(0, 2**64 - 1), st.floats(0.05, 0.95))
def test_split_invariants(m, seed, frac):
    train_ids, dev_ids = split_identity_sets(m, frac, seed)
    assert not set(train_ids) & set(dev_ids)
    assert set(train_ids) | set(dev_ids) == set(m.identities)
    train, dev = split_identities(m, frac, seed)
    for part, ids in ((train, set(train_ids)), (dev, set(dev_ids))):
        assert all(set(s.identities) <= ids for s in part.samples)
    kept = set(train.samples) | set(dev.samples)
    assert all(s in kept for s in m.samples if s.label == "bonafide")


def test_systems():
    assert len(expand_systems("all-lbp")) == 12
    assert [s.name for s in expand_systems("all")][-1] == "fourier"
    assert [s.name for s in expand_systems("fourier,lbp-8-1-s-riu2,fourier")] == ["fourier", "lbp-8-1-s-riu2"]
    ext = System.parse("external:/tmp/resnet.tsv")
    assert ext.kind == "external" and not ext.trainable and ext.specs == "resnet"
    with pytest.raises(ValueError):
        System.parse("cnn")


@pytest.fixture(scope="module")
def small_sets(tmp_path_factory):
    root = tmp_path_factory.mktemp("proto")
    out = {}
    for fam, seed in (("a", 1), ("b", 2), ("c", 3)):
        out[fam] = parse_manifest(write_dataset(root / fam, f"synth-{fam}", 24, 24, seed=seed, family=fam, size=48))
    return out


SYSTEMS = expand_systems("lbp-8-2-c-none,lbp-8-1-s-riu2,fourier")


def test_run_intra(small_sets):
    report = run_intra(small_sets["a"], SYSTEMS, seed=11)
    assert len(report) == 3
    aucs = [r.auc for r in report.rows]
    assert aucs == sorted(aucs, reverse=True)
    assert {r.specs for r in report.rows} == {"(8,2) ○", "RIU2 (8,1) □", ""}
    assert "(8,2) ○" in report.to_table()
    assert report.to_csv().splitlines()[0] == "train,test,system,auc,eer"
    assert run_intra(small_sets["a"], SYSTEMS, seed=11).to_csv() == report.to_csv()


def test_run_intra_separable_gives_zero_eer(small_sets):
    report = run_intra(small_sets["a"], expand_systems("lbp-8-1-s-none"), seed=11)
    assert report.rows[0].eer == 0.0 and report.rows[0].auc == 1.0


def test_run_intra_empty_split():
    m = _bona_manifest(8)
    with pytest.raises(EmptySplit):
        run_intra(m, SYSTEMS)


def test_run_intra_external(small_sets, tmp_path):
    m = small_sets["b"]
    ext = ScoreSet(tuple((s.path, s.label, 1.0 if s.label == "morph" else 0.0) for s in m.samples))
    write_scores(ext, tmp_path / "cnn.tsv")
    report = run_intra(m, [System.parse(f"external:{tmp_path / 'cnn.tsv'}")], seed=11)
    assert report.rows[0].auc == 1.0 and report.rows[0].extractor == "External"


def test_run_cross_rows_and_overlap(small_sets):
    report = run_cross(small_sets["a"], [small_sets["b"], small_sets["c"]], SYSTEMS)
    assert len(report) == 6
    assert report.blocks() == [("synth-a", "synth-b"), ("synth-a", "synth-c")]
    with pytest.raises(GridOverlap):
        run_cross(small_sets["a"], [small_sets["a"]], SYSTEMS)


def test_run_grid(small_sets):
    ms = [small_sets[k] for k in "abc"]
    report = run_grid(ms, SYSTEMS)
    assert len(report.blocks()) == 6 and len(report) == 18
    assert all(r.train != r.test for r in report.rows)
    assert run_grid(ms, SYSTEMS).to_csv() == report.to_csv()


def test_cross_with_shift_is_no_better_than_intra(tmp_path):
    # same family, but the test set's morphs are far less blurred: a distribution shift
    base = parse_manifest(write_dataset(tmp_path / "base", "base", 40, 40, seed=5, family="a", size=48))
    shifted = parse_manifest(write_dataset(tmp_path / "shift", "shift", 40, 40, seed=6, family="b", size=48,
                                           smoothing_radius=0.6))
    systems = expand_systems("fourier,lbp-8-2-s-none")
    intra = {r.system: r.eer for r in run_intra(base, systems, seed=1).rows}
    cross = {r.system: r.eer for r in run_cross(base, [shifted], systems).rows}
    for name in intra:
        assert cross[name] >= intra[name]
    assert any(cross[name] > intra[name] for name in intra)


def _pair(rng, n=100, miss0=(), miss1=(), zero1=False):
    bona = rng.normal(0, 1, (n, 2))
    morph = rng.normal(4, 1, (n, 2))
    morph[list(miss0), 0] = rng.normal(0, 1, len(miss0))
    morph[list(miss1), 1] = rng.normal(0, 1, len(miss1))
    if zero1:
        bona[:, 1] = 0.0
        morph[:, 1] = 0.0
    ids = [f"b{i}" for i in range(n)] + [f"m{i}" for i in range(n)]
    labels = ["bonafide"] * n + ["morph"] * n
    x = np.vstack([bona, morph])
    return (ScoreSet(tuple(zip(ids, labels, x[:, 0])), "sys0"), ScoreSet(tuple(zip(ids, labels, x[:, 1])), "sys1"))


def test_fusion_uninformative_partner(rng):
    calib = _pair(rng, miss0=range(30), zero1=True)
    evaluation = _pair(rng, miss0=range(30), zero1=True)
    model, report = run_fusion(calib, evaluation)
    assert model.w1 == 0.0
    assert report.rows[0].fused_eer == eer(evaluation[0])


def test_fusion_complementary(rng):
    calib = _pair(rng, miss0=range(20), miss1=range(20, 40))
    evaluation = _pair(rng, miss0=range(20), miss1=range(20, 40))
    _, report = run_fusion(calib, evaluation, "A", "B", "All LDA")
    row = report.rows[0]
    assert row.fused_eer <= min(row.sys0_eer, row.sys1_eer)
    table = report.to_table()
    assert table.splitlines()[0].split(" | ")[3:] == ["Fused EER (%)", "Sys. 0 EER (%)", "Sys. 1 EER (%)"]


def test_fusion_id_mismatch(rng):
    s0, s1 = _pair(rng)
    s1_short = ScoreSet(s1.entries[:-1])
    with pytest.raises(IdMismatch):
        run_fusion((s0, s1_short), (s0, s1))
    relabel = ScoreSet(tuple((e.sample_id, "morph", e.score) for e in s1.entries))
    with pytest.raises(IdMismatch):
        run_fusion((s0, relabel), (s0, s1))


def test_feature_cache_parallel_matches_serial(small_sets):
    m = small_sets["c"]
    serial = FeatureCache(1).matrix(m, SYSTEMS[0])
    parallel = FeatureCache(2).matrix(m, SYSTEMS[0])
    assert np.array_equal(serial, parallel)
