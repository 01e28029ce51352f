import numpy as np
import pytest

from conftest import fd_max_rel_error
from spectf import textenc
from spectf.ctensor import Tape
from spectf.textenc import TextRecord


class TestEmbeddingFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        records = [TextRecord(10 * i, rng.standard_normal(8).astype(np.float32))
                   for i in range(3)]
        path = tmp_path / "emb.spte"
        textenc.save_embeddings(records, 8, path)
        loaded, d_lm = textenc.load_embeddings(path)
        assert d_lm == 8
        assert len(loaded) == 3
        for a, b in zip(records, loaded):
            assert a.timestamp == b.timestamp
            assert np.array_equal(a.embedding, b.embedding)
        textenc.save_embeddings(loaded, 8, tmp_path / "emb2.spte")
        assert (tmp_path / "emb.spte").read_bytes() == (tmp_path / "emb2.spte").read_bytes()

    def test_empty_payload_valid_header(self, tmp_path):
        path = tmp_path / "empty.spte"
        textenc.save_embeddings([], 16, path)
        records, d_lm = textenc.load_embeddings(path)
        assert records == [] and d_lm == 16

    def test_bad_magic_reports_offset(self, tmp_path):
        path = tmp_path / "bad.spte"
        path.write_bytes(b"XXXX" + b"\x00" * 12)
        with pytest.raises(ValueError, match="offset 0"):
            textenc.load_embeddings(path)

    def test_truncation_reports_offset(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "t.spte"
        textenc.save_embeddings(
            [TextRecord(5, rng.standard_normal(4).astype(np.float32))], 4, path)
        (tmp_path / "cut.spte").write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError, match="offset"):
            textenc.load_embeddings(tmp_path / "cut.spte")

    def test_dimension_mismatch_on_save(self, tmp_path):
        with pytest.raises(ValueError, match="dimension"):
            textenc.save_embeddings(
                [TextRecord(0, np.zeros(3, dtype=np.float32))], 4, tmp_path / "x.spte")


class TestToyEncoder:
    def test_empty_string_is_zero(self):
        assert not textenc.toy_encode("", 16).any()
        assert not textenc.toy_encode("!!! ???", 16).any()

    def test_deterministic(self):
        a = textenc.toy_encode("drought conditions worsen", 32, seed=3)
        b = textenc.toy_encode("drought conditions worsen", 32, seed=3)
        assert np.array_equal(a, b)

    def test_seed_changes_embedding(self):
        a = textenc.toy_encode("drought", 32, seed=0)
        b = textenc.toy_encode("drought", 32, seed=1)
        assert not np.array_equal(a, b)

    def test_unit_norm(self):
        v = textenc.toy_encode("calm baseline quiet", 64)
        assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-6)

    def test_disjoint_token_strings_nearly_orthogonal(self):
        rng = np.random.default_rng(7)
        words = [f"tok{i}" for i in range(400)]
        sims = []
        for _ in range(100):
            pick = rng.choice(400, size=8, replace=False)
            s1 = " ".join(words[i] for i in pick[:4])
            s2 = " ".join(words[i] for i in pick[4:])
            a = textenc.toy_encode(s1, 64)
            b = textenc.toy_encode(s2, 64)
            sims.append(abs(float(a @ b)))
        assert max(sims) <= 0.5

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            textenc.toy_encode("x", 0)


class TestTemporalAlign:
    def test_zero_embeddings_give_pure_table(self):
        ts = np.array([0, 1, 5, 9])
        out = textenc.temporal_align(np.zeros((4, 6)), ts)
        assert np.allclose(out, textenc.sinusoid_table(ts, 6))

    def test_timestamp_zero_closed_form(self):
        out = textenc.temporal_align(np.zeros((1, 8)), np.array([0]))
        assert np.allclose(out[0, 0::2], 0.0)
        assert np.allclose(out[0, 1::2], 1.0)

    def test_additivity(self):
        rng = np.random.default_rng(2)
        e = rng.standard_normal((5, 7))
        ts = np.arange(5) * 3
        out = textenc.temporal_align(e, ts)
        assert np.allclose(out - e, textenc.sinusoid_table(ts, 7), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            textenc.temporal_align(np.zeros((4, 6)), np.arange(5))

    def test_odd_dimension_truncated(self):
        table = textenc.sinusoid_table(np.array([1, 2]), 5)
        assert table.shape == (2, 5)


class TestCarryForward:
    def test_no_records_gives_zeros(self):
        out = textenc.align_texts_to_window([], np.arange(6), 4)
        assert out.shape == (6, 4)
        assert not out.any()

    def test_one_record_per_step_copied_verbatim(self):
        rng = np.random.default_rng(3)
        vecs = rng.standard_normal((5, 4)).astype(np.float32)
        records = [TextRecord(t, vecs[t]) for t in range(5)]
        out = textenc.align_texts_to_window(records, np.arange(5), 4)
        assert np.allclose(out, vecs.astype(np.float64))

    def test_single_record_carry_forward(self):
        vec = np.ones(3, dtype=np.float32)
        out = textenc.align_texts_to_window([TextRecord(5, vec)], np.arange(10), 3)
        assert not out[:5].any()
        assert np.allclose(out[5:], 1.0)

    def test_future_records_never_read(self):
        vec = np.ones(3, dtype=np.float32)
        base = textenc.align_texts_to_window([TextRecord(2, vec)], np.arange(6), 3)
        with_future = textenc.align_texts_to_window(
            [TextRecord(2, vec), TextRecord(100, 9 * vec)], np.arange(6), 3)
        assert np.array_equal(base, with_future)

    def test_duplicate_timestamps_averaged(self):
        records = [TextRecord(1, np.array([2.0, 0.0], dtype=np.float32)),
                   TextRecord(1, np.array([0.0, 4.0], dtype=np.float32))]
        out = textenc.align_texts_to_window(records, np.array([0, 1, 2]), 2)
        assert not out[0].any()
        assert np.allclose(out[1], [1.0, 2.0])
        assert np.allclose(out[2], [1.0, 2.0])

    def test_non_increasing_window_rejected(self):
        with pytest.raises(ValueError):
            textenc.align_texts_to_window([], np.array([3, 3, 4]), 2)


class TestComplexProjection:
    def test_zero_initialized_networks_give_zero(self):
        proj = textenc.TextProjection.create(6, 4, np.random.default_rng(0), np.float64)
        for p in proj.parameters():
            p.value.re[:] = 0
            p.value.im[:] = 0
        tape = Tape(record=False)
        out = proj.forward(tape, np.random.default_rng(1).standard_normal((5, 6)))
        assert out.shape == (5, 4)
        assert not out.re.any() and not out.im.any()

    def test_zero_im_branch_gives_real_output(self):
        proj = textenc.TextProjection.create(6, 4, np.random.default_rng(2), np.float64)
        for p in proj.parameters():
            p.value.im[:] = 0
        tape = Tape(record=False)
        out = proj.forward(tape, np.random.default_rng(3).standard_normal((5, 6)))
        assert out.re.any()
        assert not out.im.any()

    def test_gradients_through_both_branches(self):
        proj = textenc.TextProjection.create(3, 2, np.random.default_rng(4), np.float64)
        e = np.random.default_rng(5).standard_normal((4, 3))
        target = np.zeros((4, 2))

        def forward(tape):
            s = proj.forward(tape, e)
            return tape.mse(tape.cmagnitude(s), target)

        assert fd_max_rel_error(proj.parameters(), forward) <= 1e-4

    def test_dimension_mismatch(self):
        proj = textenc.TextProjection.create(6, 4, np.random.default_rng(6))
        with pytest.raises(ValueError):
            proj.forward(Tape(record=False), np.zeros((5, 7)))

    def test_jsonl_loader(self, tmp_path):
        path = tmp_path / "texts.jsonl"
        path.write_text('{"ts": 3, "text": "dry spell"}\n\n{"ts": 7, "text": "rain"}\n')
        assert textenc.load_text_jsonl(path) == [(3, "dry spell"), (7, "rain")]
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"ts": 1}\n')
        with pytest.raises(ValueError, match="line 1"):
            textenc.load_text_jsonl(bad)
