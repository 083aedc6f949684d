import filecmp
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emovae.corpus import (EMOTIONS, MANIFEST_FIELDS, LabelMap, UtteranceRecord, bin_dimensional,
                           generate_synthetic_corpus, load_manifest, make_folds, map_categorical,
                           write_manifest)
from emovae.dsp import LogMelExtractor, Standardizer, read_wav
from emovae.errors import ManifestError, ParameterError

HEADER = ",".join(MANIFEST_FIELDS)


def manifest(tmp_path, *rows):
    path = tmp_path / "m.csv"
    path.write_text("\n".join((HEADER,) + rows) + "\n", encoding="utf-8")
    return path


def rec(i, session=1):
    return UtteranceRecord(f"u{i:03d}", "x.wav", session, f"s{session}", "improvised",
                           "neutral", 3.0, 3.0, 3.0)


class TestManifest:
    def test_three_rows(self, tmp_path):
        p = manifest(tmp_path, "a,w/a.wav,1,S1,improvised,neutral,3,3,3",
                     "b,w/b.wav,1,S1,scripted,Excited,2.5,4,1",
                     "c,/abs/c.wav,2,S2,improvised,fear,5,1,3.5")
        recs = load_manifest(p)
        assert [r.id for r in recs] == ["a", "b", "c"]
        assert recs[0].audio_path == str(tmp_path / "w/a.wav")
        assert recs[2].audio_path == "/abs/c.wav"
        assert recs[1].categorical_raw == "excited" and recs[1].arousal == 2.5

    def test_rating_out_of_range_reports_line(self, tmp_path):
        p = manifest(tmp_path, "a,a.wav,1,S1,improvised,neutral,3,3,3",
                     "b,b.wav,1,S1,improvised,neutral,7,3,3")
        with pytest.raises(ManifestError, match="arousal") as exc:
            load_manifest(p)
        assert exc.value.line == 3

    def test_duplicate_id(self, tmp_path):
        p = manifest(tmp_path, "a,a.wav,1,S1,improvised,neutral,3,3,3",
                     "a,b.wav,1,S1,improvised,neutral,3,3,3")
        with pytest.raises(ManifestError, match="'a'"):
            load_manifest(p)

    @pytest.mark.parametrize("row, what", [
        ("a,a.wav,1,S1,improvised,neutral,3,3", "fields"),
        ("a,a.wav,x,S1,improvised,neutral,3,3,3", "session"),
        ("a,a.wav,1,S1,acted,neutral,3,3,3", "dialogue_kind"),
        ("a,a.wav,1,S1,improvised,neutral,3,high,3", "power"),
    ])
    def test_malformed_rows(self, tmp_path, row, what):
        with pytest.raises(ManifestError, match=what) as exc:
            load_manifest(manifest(tmp_path, row))
        assert exc.value.line == 2

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,path\n", encoding="utf-8")
        with pytest.raises(ManifestError, match="header"):
            load_manifest(p)

    def test_write_then_load(self, tmp_path):
        row = dict(zip(MANIFEST_FIELDS, ["a", "a.wav", 2, "S", "scripted", "anger", "4.5", "1.0", "2.0"]))
        write_manifest(tmp_path / "m.csv", [row])
        (r,) = load_manifest(tmp_path / "m.csv")
        assert (r.session, r.arousal, r.categorical_raw) == (2, 4.5, "anger")


class TestLabels:
    @pytest.mark.parametrize("raw, idx", [("excited", 1), ("neutral", 0), ("Happiness", 1),
                                          ("SADNESS", 2), (" anger ", 3), ("frustration", None),
                                          ("surprise", None), ("other", None)])
    def test_map(self, raw, idx):
        assert map_categorical(raw) == idx

    @given(st.sampled_from(["neutral", "excited", "fear", "anger", "xyz"]))
    def test_idempotent_and_case_insensitive(self, raw):
        assert map_categorical(raw.upper()) == map_categorical(raw) == map_categorical(raw.title())

    def test_custom_map(self):
        lm = LabelMap(("a", "b"), aliases={})
        assert lm("excited") is None and lm.n_classes == 2


class TestBins:
    @pytest.mark.parametrize("v, b", [(2.5, 0), (3.0, 1), (3.5, 2), (1.0, 0), (5.0, 2), (2.9, 0), (3.1, 2)])
    def test_examples(self, v, b):
        assert bin_dimensional(v) == b

    @given(st.floats(1.0, 5.0))
    def test_partition(self, v):
        b = bin_dimensional(v)
        assert [v < 3, v == 3, v > 3].count(True) == 1
        assert (b == 0) == (v < 3) and (b == 1) == (v == 3) and (b == 2) == (v > 3)

    @pytest.mark.parametrize("v", [0.99, 5.01, -3.0])
    def test_out_of_range(self, v):
        with pytest.raises(ManifestError):
            bin_dimensional(v)


class TestFolds:
    def test_loso_five_sessions(self, small_records):
        plan = make_folds(small_records, "loso")
        assert len(plan) == 5
        spk = {r.id: r.speaker for r in small_records}
        for f in plan:
            assert not {spk[i] for i in f.train_ids} & {spk[i] for i in f.test_ids}
            assert len({r.session for r in small_records if r.id in set(f.test_ids)}) == 1

    def test_kfold_100_records(self):
        plan = make_folds([rec(i) for i in range(100)], "kfold", k=10, seed=3)
        assert [len(f.test_ids) for f in plan] == [10] * 10
        tests = [i for f in plan for i in f.test_ids]
        assert sorted(tests) == sorted(r.id for r in (rec(i) for i in range(100)))
        for f in plan:
            assert not set(f.train_ids) & set(f.test_ids)

    def test_kfold_seeded(self):
        recs = [rec(i) for i in range(30)]
        assert make_folds(recs, "kfold", k=3, seed=1).folds == make_folds(recs, "kfold", k=3, seed=1).folds
        assert make_folds(recs, "kfold", k=3, seed=1).folds != make_folds(recs, "kfold", k=3, seed=2).folds

    def test_holdout(self):
        (f,) = make_folds([rec(i) for i in range(20)], "holdout", train_fraction=0.9)
        assert (len(f.train_ids), len(f.test_ids)) == (18, 2)

    def test_insufficient(self):
        with pytest.raises(ParameterError):
            make_folds([rec(0), rec(1)], "loso")
        with pytest.raises(ParameterError):
            make_folds([rec(i) for i in range(5)], "kfold", k=10)
        with pytest.raises(ParameterError):
            make_folds([rec(0)], "bootstrap")


class TestSynthetic:
    def test_layout(self, small_records, small_corpus):
        assert len(small_records) == 40
        assert len({r.speaker for r in small_records}) == 10
        assert sorted({r.session for r in small_records}) == [1, 2, 3, 4, 5]
        meta = json.loads((small_corpus.parent / "corpus_meta.json").read_text())
        assert meta["config"]["seed"] == 3 and meta["n_utterances"] == 40

    def test_audio_properties(self, small_records):
        for r in small_records[:6]:
            w = read_wav(r.audio_path, r.id)
            assert w.sample_rate == 16000 and 1.0 <= w.duration <= 3.0
            assert np.abs(w.samples).max() < 1.0

    def test_deterministic(self, tmp_path):
        a = generate_synthetic_corpus(tmp_path / "a", seed=5, utterances_per_speaker=2)
        b = generate_synthetic_corpus(tmp_path / "b", seed=5, utterances_per_speaker=2)
        cmp = filecmp.dircmp(a.parent, b.parent)
        assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
        assert not filecmp.dircmp(a.parent / "wav", b.parent / "wav").diff_files
        for name in ("manifest.csv", "corpus_meta.json"):
            assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()
        wavs = sorted((a.parent / "wav").iterdir())
        assert all(w.read_bytes() == (b.parent / "wav" / w.name).read_bytes() for w in wavs)

    def test_default_labels(self, default_corpus):
        recs = load_manifest(default_corpus)
        assert len(recs) == 120
        counts = [sum(map_categorical(r.categorical_raw) == k for r in recs) for k in range(4)]
        assert counts == [30, 30, 30, 30]
        assert any(r.categorical_raw == "excited" for r in recs)
        for dim in ("arousal", "power", "valence"):
            assert {bin_dimensional(r.dimension(dim)) for r in recs} == {0, 1, 2}

    def test_class_templates_separated(self, default_corpus):
        recs = load_manifest(default_corpus)
        ex = LogMelExtractor()
        segs = {r.id: ex.segments(read_wav(r.audio_path, r.id)) for r in recs}
        std = Standardizer.fit(np.vstack(list(segs.values())))
        means = []
        for k in range(len(EMOTIONS)):
            rows = np.vstack([std.transform(segs[r.id]) for r in recs
                              if map_categorical(r.categorical_raw) == k])
            means.append(rows.mean(axis=0))
        for a, b in itertools.combinations(range(len(EMOTIONS)), 2):
            assert np.linalg.norm(means[a] - means[b]) >= 1.0
