import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectf import data, spectral
from spectf.data import (ConfigError, DataError, SeriesTable, SynthSpec,
                         compute_global_stats, denormalize, load_csv,
                         make_windows, save_csv, split, synth_generate,
                         window_count)
from spectf.textenc import TextRecord


def table_of(n, n_channels=1, seed=0, frequency="none"):
    rng = np.random.default_rng(seed)
    return SeriesTable(
        np.arange(n, dtype=np.int64),
        {f"ch{i}": rng.standard_normal(n) for i in range(n_channels)},
        frequency,
    )


REGIME_SPEC = dict(
    length=600,
    window=24,
    channels=2,
    bands=[{"bin": 1, "base_amp": 1.0}, {"bin": 3, "base_amp": 1.0}],
    regime={"bin": 3, "factor": 2.0, "period": 48},
    noise_sigma=0.3,
    vocab={"low": "calm quiet baseline steady", "high": "surge spike turbulent active"},
)


class TestCsv:
    def test_two_channel_ten_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        lines = ["ts,a,b"] + [f"{i},{i * 0.5},{i * 2}" for i in range(10)]
        path.write_text("\n".join(lines) + "\n")
        table = load_csv(path)
        assert table.n_rows == 10
        assert list(table.channels) == ["a", "b"]
        assert np.allclose(table.channels["a"], np.arange(10) * 0.5)

    def test_missing_cell_forward_filled(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("ts,a\n0,1.5\n1,\n2,3.0\n")
        table = load_csv(path)
        assert np.allclose(table.channels["a"], [1.5, 1.5, 3.0])

    def test_leading_gap_back_filled(self, tmp_path):
        path = tmp_path / "lead.csv"
        path.write_text("ts,a\n0,\n1,2.0\n2,4.0\n")
        table = load_csv(path)
        assert np.allclose(table.channels["a"], [2.0, 2.0, 4.0])

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("ts,a\n0,1.0\n1,oops\n")
        with pytest.raises(DataError, match="row 3"):
            load_csv(path)

    def test_non_monotonic_timestamps(self, tmp_path):
        path = tmp_path / "mono.csv"
        path.write_text("ts,a\n0,1\n5,2\n3,3\n")
        with pytest.raises(DataError, match="non-monotonic"):
            load_csv(path)

    def test_round_trip(self, tmp_path):
        table = table_of(20, n_channels=2, seed=1)
        save_csv(table, tmp_path / "rt.csv")
        back = load_csv(tmp_path / "rt.csv")
        for name in table.channels:
            assert np.max(np.abs(back.channels[name] - table.channels[name])) <= 1e-6


class TestSplit:
    def test_default_ratio_counts(self):
        train, val, test = split(table_of(100))
        assert (train.n_rows, val.n_rows, test.n_rows) == (70, 10, 20)

    def test_partition_no_overlap(self):
        parts = split(table_of(97, seed=2))
        seen = np.concatenate([p.timestamps for p in parts])
        assert seen.size == 97
        assert np.unique(seen).size == 97

    def test_short_segment_named(self):
        with pytest.raises(ConfigError, match="val"):
            split(table_of(100), min_rows=36)

    def test_bad_ratios(self):
        with pytest.raises(ConfigError):
            split(table_of(50), ratios=(0.5, 0.5, 0.5))
        with pytest.raises(ConfigError):
            split(table_of(50), ratios=(0.7, -0.1, 0.4))

    def test_window_count_in_test_segment(self):
        # 40-row segment, L=24, H=12 -> 5 windows
        assert window_count(40, 24, 12) == 5


class TestWindows:
    def test_exact_length_gives_one_window(self):
        table = table_of(36)
        windows = make_windows(table, [], 24, 12, d_lm=4)
        assert len(windows) == 1

    def test_channel_count_multiplies(self):
        table = table_of(37, n_channels=3)
        windows = make_windows(table, [], 24, 12, d_lm=4)
        assert len(windows) == 6  # 2 positions x 3 channels

    def test_instance_norm_round_trip(self):
        table = table_of(36, seed=3)
        (w,) = make_windows(table, [], 24, 12, d_lm=4)
        raw = table.channels["ch0"][:24]
        assert np.max(np.abs(denormalize(w.lookback, w.stats) - raw)) <= 1e-9
        assert abs(w.lookback.mean()) <= 1e-6
        assert abs(w.lookback.std() - 1.0) <= 1e-6

    def test_constant_lookback_std_fallback(self):
        values = np.concatenate([np.full(24, 7.0), np.arange(12.0)])
        table = SeriesTable(np.arange(36, dtype=np.int64), {"c": values})
        (w,) = make_windows(table, [], 24, 12, d_lm=2)
        assert w.norm_std == 1.0
        assert not w.lookback.any()
        # fallback denormalization is a pure mean shift
        pred = np.arange(12.0)
        assert np.allclose(denormalize(pred, w.stats), pred + 7.0)

    def test_targets_never_enter_stats(self):
        values = np.concatenate([np.zeros(24), np.full(12, 1e9)])
        values[:24] = np.sin(np.arange(24))
        table = SeriesTable(np.arange(36, dtype=np.int64), {"c": values})
        (w,) = make_windows(table, [], 24, 12, d_lm=2)
        assert abs(w.norm_mean) < 1.0
        assert w.norm_std < 2.0
        assert np.allclose(w.target, 1e9)

    def test_text_rows_ignore_future_records(self):
        table = table_of(36, seed=4)
        vec = np.ones(3, dtype=np.float32)
        past_only = make_windows(table, [TextRecord(5, vec)], 24, 12, d_lm=3)
        with_future = make_windows(
            table, [TextRecord(5, vec), TextRecord(30, 9 * vec)], 24, 12, d_lm=3)
        # the single window's lookback covers t=0..23, so the t=30 record
        # (inside the target range) must be invisible
        assert np.array_equal(past_only[0].text, with_future[0].text)

    def test_global_mode(self):
        table = table_of(50, seed=5)
        stats = compute_global_stats(table.slice_rows(0, 35))
        windows = make_windows(table, [], 24, 12, d_lm=2,
                               norm_mode="global", global_stats=stats)
        mean, std = stats["ch0"]
        for w in windows:
            assert (w.norm_mean, w.norm_std) == (mean, std)

    def test_too_short_segment(self):
        with pytest.raises(DataError):
            make_windows(table_of(35), [], 24, 12, d_lm=2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(36, 300), st.integers(2, 30), st.integers(1, 20),
           st.integers(1, 5))
    def test_window_count_formula(self, n, lookback, horizon, stride):
        if n < lookback + horizon:
            return
        table = table_of(n, seed=6)
        windows = make_windows(table, [], lookback, horizon, d_lm=2, stride=stride)
        assert len(windows) == (n - lookback - horizon) // stride + 1

    def test_denormalize_zeros_gives_mean(self):
        assert np.allclose(denormalize(np.zeros(4), (3.5, 2.0)), 3.5)


class TestSynth:
    def test_pure_sinusoid_concentrates_spectrum(self):
        spec = SynthSpec(length=96, window=24, channels=1,
                         bands=[{"bin": 3, "base_amp": 1.0}], noise_sigma=0.0)
        table, texts = synth_generate(spec, seed=0)
        assert texts == []
        window = table.channels["ch0"][:24]
        amps = spectral.rfft(window).amplitudes
        assert amps[3] == pytest.approx(12.0, rel=1e-6)
        assert np.all(np.delete(amps, 3) <= 1e-9 * amps[3])

    def test_same_seed_identical(self):
        spec = SynthSpec.from_json(dict(REGIME_SPEC))
        t1, x1 = synth_generate(spec, seed=7)
        t2, x2 = synth_generate(spec, seed=7)
        assert x1 == x2
        for name in t1.channels:
            assert np.array_equal(t1.channels[name], t2.channels[name])

    def test_regime_toggles_band_amplitude(self):
        spec = SynthSpec.from_json({**REGIME_SPEC, "noise_sigma": 0.0})
        table, texts = synth_generate(spec, seed=8)
        y = table.channels["ch0"]
        low = spectral.rfft(y[0:24]).amplitudes       # state 0 region
        high = spectral.rfft(y[48:72]).amplitudes     # state 1 region
        assert high[3] / low[3] == pytest.approx(2.0, rel=1e-6)
        assert high[1] / low[1] == pytest.approx(1.0, rel=1e-6)

    def test_texts_emitted_at_regime_changes(self):
        spec = SynthSpec.from_json(dict(REGIME_SPEC))
        _, texts = synth_generate(spec, seed=9)
        stamps = [ts for ts, _ in texts]
        assert stamps[0] == 0
        assert stamps[1:] == list(range(48, 600, 48))
        assert texts[0][1] == REGIME_SPEC["vocab"]["low"]
        assert texts[1][1] == REGIME_SPEC["vocab"]["high"]

    def test_spec_validation_field_paths(self):
        with pytest.raises(ConfigError, match="bands"):
            SynthSpec.from_json({"length": 10, "bands": []})
        with pytest.raises(ConfigError, match="regime.bin"):
            SynthSpec.from_json({
                "length": 10,
                "bands": [{"bin": 1, "base_amp": 1.0}],
                "regime": {"bin": 2, "factor": 2.0, "period": 5},
                "vocab": {"low": "a", "high": "b"},
            })
        with pytest.raises(ConfigError, match="vocab.high"):
            SynthSpec.from_json({
                "length": 10,
                "bands": [{"bin": 1, "base_amp": 1.0}],
                "regime": {"bin": 1, "factor": 2.0, "period": 5},
                "vocab": {"low": "a"},
            })
        with pytest.raises(ConfigError):
            SynthSpec.from_json({"length": 10, "bands": [{"bin": 1}]})

    def test_generated_windows_count_for_acceptance_dataset(self):
        spec = SynthSpec.from_json(dict(REGIME_SPEC))
        table, _ = synth_generate(spec, seed=10)
        train, _, _ = split(table, min_rows=36)
        windows = make_windows(train, [], 24, 12, d_lm=8)
        assert len(windows) >= 500
