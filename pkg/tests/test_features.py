from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gpnforecast.features import (DEFAULT_BINNED, FEATURE_NAMES, FeatureError, FeatureSchema,
                                  calculated_distance, derive_measures, destination, fit_schema,
                                  haversine_km, inverse_scale, inverse_target, is_weekend,
                                  raw_feature_matrix, scale_numeric, select_columns,
                                  target_values, transform)
from gpnforecast.genre_qoe import TYPE_VOCABULARY, TypeMap
from tests.conftest import make_fact


def test_feature_list():
    assert len(FEATURE_NAMES) == 15
    assert "CALCULATED_DISTANCE" in FEATURE_NAMES and "WTFAST_PING" not in FEATURE_NAMES


def test_distance_oracles():
    p = (10.0, 20.0)
    assert calculated_distance(p, p, p) == 0
    assert calculated_distance((0, 0), (0, 1), (0, 1)) == pytest.approx(0.111195, abs=1e-4)
    assert haversine_km((0, 0), (0, 180)) == pytest.approx(np.pi * 6371, rel=1e-12)
    with pytest.raises(FeatureError):
        calculated_distance((91, 0), p, p)
    with pytest.raises(FeatureError):
        calculated_distance(p, (0, 181), p)


@given(st.floats(-80, 80), st.floats(-179, 179), st.floats(0, 360), st.floats(0, 19000))
def test_destination_inverts_haversine(lat, lon, bearing, km):
    lat2, lon2 = destination(np.array([lat]), np.array([lon]), np.array([bearing]), np.array([km]))
    assert haversine_km((lat, lon), (lat2[0], lon2[0])) == pytest.approx(km, abs=1e-6)


def test_derive_measures():
    f = make_fact(duration=10.0, bytes_up_tcp=1.0, bytes_up_udp=2.0, bytes_down_tcp=3.0,
                  bytes_down_udp=4.0)
    assert f.bytes_total == 10
    assert f.bytes_per_second == 1.0
    z = make_fact(bytes_up_tcp=0.0, bytes_up_udp=0.0, bytes_down_tcp=0.0, bytes_down_udp=0.0)
    assert z.bytes_per_second == 0
    measured = make_fact(bytes_per_second=123.0)
    assert measured.bytes_per_second == 123.0
    with pytest.raises(FeatureError):
        derive_measures(replace(make_fact(), duration=0.0, bytes_per_second=None))


def test_fit_schema_sqrt_range():
    facts = [make_fact(internet_ping=v) for v in (4.0, 9.0, 16.0)]
    schema = fit_schema(facts)
    j = FEATURE_NAMES.index("INTERNET_PING")
    assert (schema.mins[j], schema.maxs[j]) == (2.0, 4.0)


def test_single_row_schema_is_degenerate():
    schema = fit_schema([make_fact()])
    assert set(schema.degenerate) == set(FEATURE_NAMES)
    m = transform([make_fact(), make_fact(internet_ping=500.0)], schema)
    numeric = m.X[:, :len(FEATURE_NAMES)]
    assert np.all(numeric == 0)


def test_empty_partition_rejected():
    with pytest.raises(FeatureError):
        fit_schema([])


def test_transform_layout_and_endpoints(small_facts, small_type_map):
    schema = fit_schema(small_facts)
    m = transform(small_facts, schema, small_type_map)
    assert m.columns == schema.columns
    assert m.X.shape == (len(small_facts), len(schema.columns))
    numeric = m.X[:, :len(FEATURE_NAMES)]
    assert numeric.min() == 0.0 and numeric.max() == 1.0
    onehot = m.X[:, -len(TYPE_VOCABULARY):]
    assert np.all(onehot.sum(axis=1) == 1)
    for name in DEFAULT_BINNED:
        cols = [i for i, c in enumerate(m.columns) if c.startswith(name + ".BIN")]
        assert len(cols) == 5
        assert np.all(m.X[:, cols].sum(axis=1) == 1)
    assert set(np.unique(m.column("WEEKEND"))) <= {0.0, 1.0}


def test_binning_off_drops_bins(small_facts):
    schema = fit_schema(small_facts, use_binning=False)
    assert not any(".BIN" in c for c in schema.columns)
    assert len(schema.columns) == len(FEATURE_NAMES) + 1 + len(TYPE_VOCABULARY)


def test_out_of_range_clamps(small_facts):
    schema = fit_schema(small_facts)
    m = transform([make_fact(internet_ping=1e6, internet_flux=0.0)], schema)
    assert m.column("INTERNET_PING")[0] == 1.0
    assert 0.0 <= m.column("INTERNET_FLUX")[0] <= 1.0


def test_missing_internet_ping_maps_to_zero(small_facts):
    schema = fit_schema(small_facts)
    m = transform([make_fact(internet_ping=None)], schema)
    assert m.column("INTERNET_PING")[0] == 0.0


def test_round_trip(small_facts):
    schema = fit_schema(small_facts)
    raw = raw_feature_matrix(small_facts)
    cells = scale_numeric(raw, schema)
    ok = ~np.isnan(raw)
    assert np.allclose(inverse_scale(cells, schema)[ok], raw[ok], atol=1e-9, rtol=1e-12)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_monotone(a, b):
    schema = fit_schema([make_fact(internet_ping=v) for v in (4.0, 400.0)])
    lo, hi = sorted((a, b))
    raw = np.zeros((2, len(FEATURE_NAMES)))
    raw[:, 0] = [lo, hi]
    cells = scale_numeric(raw, schema)
    assert cells[0, 0] <= cells[1, 0]


def test_weekend_all_days():
    monday = datetime(2020, 7, 6, 20, 0, tzinfo=timezone.utc)
    flags = [is_weekend(monday + timedelta(days=d)) for d in range(7)]
    assert flags == [0, 0, 0, 0, 1, 1, 1]


def test_target_transforms():
    assert target_values(np.array([1.0]), "log")[0] == 0.0
    p = np.array([0.5, 3.0, 700.0])
    assert np.allclose(inverse_target(target_values(p, "log"), "log"), p, rtol=1e-12)
    with pytest.raises(FeatureError):
        target_values(p, "sqrt")


def test_unknown_game_is_other(small_facts):
    schema = fit_schema(small_facts)
    m = transform([make_fact(game_name="Nobody Plays This")], schema, TypeMap())
    assert m.column("OTHER")[0] == 1.0
    assert m.game_types == ("OTHER",)


def test_select_columns(small_facts):
    schema = fit_schema(small_facts)
    m = transform(small_facts[:20], schema)
    assert np.array_equal(select_columns(m, m.columns).X, m.X)
    one = select_columns(m, ["DURATION"])
    assert one.X.shape == (20, 1)
    assert np.array_equal(one.X[:, 0], m.column("DURATION"))
    with pytest.raises(FeatureError):
        select_columns(m, ["NOPE"])


def test_schema_serialisation(tmp_path, small_facts):
    schema = fit_schema(small_facts, reference="2020-07")
    path = tmp_path / "schema.json"
    schema.save(path)
    back = FeatureSchema.load(path)
    assert back == schema and back.fingerprint == schema.fingerprint
    other = fit_schema(small_facts[:100])
    assert other.fingerprint != schema.fingerprint
    log = fit_schema(small_facts, target_transform="log", reference="2020-07")
    assert log.fingerprint == schema.fingerprint
