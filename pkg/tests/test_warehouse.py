import threading
from datetime import date, datetime, timezone

import pytest

from gpnforecast.records import RejectReason
from gpnforecast.warehouse import (IngestError, QueryError, SchemaError, Warehouse, clean,
                                   ingest_files, load, query, write_raw_file, write_rejects)
from tests.conftest import make_fact, make_raw


def test_raw_round_trip(tmp_path):
    recs = [make_raw(), make_raw(wtfast_ping=12.5, duration=100.0)]
    path = tmp_path / "raw.csv"
    write_raw_file(path, recs)
    back, rejects = ingest_files([path])
    assert not rejects
    assert [r.wtfast_ping for r in back] == [60.0, 12.5]
    assert back[0].client_geo == (49.28, -123.12)
    assert back[0].session_start == datetime(2020, 7, 6, 20, 0, tzinfo=timezone.utc)
    assert back[1].source == "raw.csv:3"


def test_ingest_semicolon_and_parse_errors(tmp_path):
    path = tmp_path / "raw.csv"
    write_raw_file(path, [make_raw(), make_raw()], delimiter="|", corrupt_rows=[1])
    recs, rejects = ingest_files([path], delimiter="|")
    assert len(recs) == 1
    assert [(r.source, r.reason) for r in rejects] == [("raw.csv:3", RejectReason.PARSE_ERROR)]


def test_ingest_errors(tmp_path):
    with pytest.raises(IngestError):
        ingest_files([tmp_path / "nope.csv"])
    bad = tmp_path / "bad.csv"
    bad.write_text("client_ip,mystery\n1,2\n")
    with pytest.raises(SchemaError, match="mystery"):
        ingest_files([bad])
    bad.write_text("client_ip\n1\n")
    with pytest.raises(SchemaError, match="missing"):
        ingest_files([bad])


@pytest.mark.parametrize("change,reason", [
    (dict(wtfast_ping=None), RejectReason.MISSING_PING),
    (dict(wtfast_ping=0.0), RejectReason.NONPOSITIVE_PING),
    (dict(wtfast_ping=-3.0), RejectReason.NONPOSITIVE_PING),
    (dict(session_end=None), RejectReason.MISSING_DURATION),
    (dict(session_start=None), RejectReason.MISSING_DURATION),
    (dict(node_geo=None), RejectReason.MISSING_GEO),
])
def test_clean_reasons(change, reason):
    facts, rejects = clean([make_raw(**change)])
    assert not facts
    assert rejects[0].reason is reason


def test_clean_keeps_valid_and_derives():
    facts, rejects = clean([make_raw()])
    assert not rejects
    f = facts[0]
    assert f.duration == 3600
    assert f.bytes_total == 10
    assert f.calculated_distance > 0
    assert clean([make_raw(wtfast_ping=None, node_geo=None)])[1][0].reason is RejectReason.MISSING_PING


def test_write_rejects(tmp_path):
    _, rejects = clean([make_raw(wtfast_ping=None)])
    write_rejects(tmp_path / "r.csv", rejects)
    assert "missing-ping" in (tmp_path / "r.csv").read_text()


def test_surrogate_keys_and_dedup():
    a, b = make_fact(), make_fact(client_ip="10.0.0.2")
    wh = load([a, a, b])
    assert len(wh) == 3
    assert list(wh.table("client_dim")["client_key"]) == [1, 2]
    assert len(wh.table("server_dim")) == 1
    dd = load([a, a, b], dedup=True)
    assert len(dd) == 2
    assert dd.load([a]) == 0


def test_query_rollups_and_filters():
    facts = [make_fact(wtfast_ping=p, game_name=g, reg_country=c,
                       session_start=datetime(2020, 7, d, h, tzinfo=timezone.utc),
                       session_end=datetime(2020, 7, d, h, 30, tzinfo=timezone.utc))
             for p, g, c, d, h in [(10, "A", "CA", 6, 1), (20, "A", "US", 10, 2),
                                   (30, "B", "CA", 11, 1), (40, "B", "US", 12, 2)]]
    wh = load(facts)
    assert query(wh, "wtfast_ping")["value"][0] == 25
    assert query(wh, "wtfast_ping", "count")["value"][0] == 4
    assert query(wh, "wtfast_ping", "percentile", 50)["value"][0] == 25
    assert query(wh, "wtfast_ping", game="A")["value"][0] == 15
    assert query(wh, "wtfast_ping", country="CA", hour=1)["value"][0] == 20
    assert query(wh, "wtfast_ping", weekend=True)["value"][0] == 30  # Jul 10-12 2020 are Fri-Sun
    assert query(wh, "weekend")["value"][0] == 0.75
    assert query(wh, "wtfast_ping", date_from=date(2020, 7, 11))["value"][0] == 35
    grouped = query(wh, "wtfast_ping", group_by=["game_name"])
    assert list(grouped["game_name"]) == ["A", "B"] and list(grouped["value"]) == [15, 35]
    for bad in (dict(measure="nope"), dict(measure="wtfast_ping", rollup="median"),
                dict(measure="wtfast_ping", group_by=["planet"]),
                dict(measure="wtfast_ping", rollup="percentile")):
        with pytest.raises(QueryError):
            query(wh, **bad)


def test_persistence_round_trip(tmp_path, small_facts):
    wh = load(small_facts[:200])
    wh.save(tmp_path / "wh")
    back = Warehouse.open(tmp_path / "wh")
    for name in ("client_dim", "server_dim", "calendar_dim", "session_fact"):
        assert back.table(name).equals(wh.table(name))
    back.save(tmp_path / "wh2")
    for name in ("client_dim.csv", "session_fact.csv", "manifest.json"):
        assert (tmp_path / "wh" / name).read_bytes() == (tmp_path / "wh2" / name).read_bytes()
    rebuilt = back.sessions()
    assert [f.wtfast_ping for f in rebuilt] == [f.wtfast_ping for f in small_facts[:200]]
    assert rebuilt[0].game_name == small_facts[0].game_name


def test_concurrent_loads_are_serialised(small_facts):
    wh = Warehouse()
    chunks = [small_facts[i::4] for i in range(4)]
    threads = [threading.Thread(target=wh.load, args=(c,)) for c in chunks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(wh) == len(small_facts)
    keys = wh.table("session_fact")["client_key"]
    assert keys.max() == len(wh.table("client_dim"))
