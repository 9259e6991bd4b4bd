import numpy as np
import pytest

from astgin.ingest import ingest_files, load_processed
from astgin.synth import SynthConfig, generate, weather_chain, write_dataset

SMALL = dict(n_stations=4, days=4)


def weather_corr(ds):
    severity = np.repeat((ds.hourly_weather - 1) / 4.0, 2)
    return float(np.corrcoef(1 - severity, ds.series.values.mean(axis=0))[0, 1])


def test_deterministic():
    a, b = generate(SynthConfig(seed=3, **SMALL)), generate(SynthConfig(seed=3, **SMALL))
    assert np.array_equal(a.series.values, b.series.values)
    assert np.array_equal(a.hourly_weather, b.hourly_weather)
    assert not np.array_equal(a.series.values, generate(SynthConfig(seed=4, **SMALL)).series.values)


def test_all_effects_off_is_constant():
    ds = generate(SynthConfig(weather_effect=0, noise_std=0, daily_amplitude=0, base=0.4, **SMALL))
    assert np.allclose(ds.series.values, 0.4, atol=1e-15)


def test_range():
    ds = generate(SynthConfig(base=0.8, noise_std=0.3, **SMALL))
    assert ds.series.values.min() >= 0 and ds.series.values.max() <= 1


def test_weather_correlation_positive_and_monotone():
    corrs = [weather_corr(generate(SynthConfig(seed=1, n_stations=5, days=30, weather_effect=e)))
             for e in (0.05, 0.15, 0.3)]
    assert generate(SynthConfig(seed=1, n_stations=5, days=30)).series.grid.count >= 1000
    assert corrs[0] > 0
    assert corrs == sorted(corrs)


def test_weather_chain_moves_by_one():
    labels = weather_chain(2000, np.random.default_rng(0), 0.8)
    assert set(np.unique(labels)) <= {1, 2, 3, 4, 5}
    assert np.max(np.abs(np.diff(labels))) <= 1
    stay = np.mean(np.diff(labels) == 0)
    assert 0.75 < stay < 0.9


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(spatial_smoothing=1.0)
    with pytest.raises(ValueError):
        SynthConfig(noise_std=-0.1)


def test_files_reingest(tmp_path):
    ds = generate(SynthConfig(seed=2, **SMALL))
    write_dataset(tmp_path, ds)
    raw = tmp_path / "raw"
    data, summary = ingest_files(raw / "sessions.csv", raw / "weather_raw.csv", raw / "poi_raw.csv",
                                 raw / "connectors.csv", start=ds.series.grid.origin, periods=ds.series.grid.count)
    assert summary["rows_skipped"] == 0 and summary["clamps"] == 0
    # sessions are whole minutes, so each window is reproduced to half a connector-minute
    tol = 0.5 / (30 * ds.series.connector_counts[:, None])
    assert np.all(np.abs(data.series.values - ds.series.values) <= tol + 1e-12)
    assert np.array_equal(data.static.alpha, ds.static.alpha)
    assert np.array_equal(data.dynamic.beta, ds.dynamic.beta)
    processed = load_processed(tmp_path)
    assert np.array_equal(processed.series.values, ds.series.values)
