from datetime import datetime, timezone

import pytest

from gpnforecast.features import derive_measures
from gpnforecast.records import RawSessionRecord, SessionFact
from gpnforecast.synth import SynthConfig, catalog_type_map, generate
from gpnforecast.warehouse import clean

BASE = dict(
    client_ip="10.0.0.1", client_isp="Shaw", reg_country="CA", client_geo=(49.28, -123.12),
    server_id="srv-1", game_ip="52.1.1.1", game_isp="Amazon", game_name="Lost Ark",
    game_geo=(37.77, -122.42), node_geo=(47.61, -122.33),
    session_start=datetime(2020, 7, 6, 20, 0, tzinfo=timezone.utc),
    session_end=datetime(2020, 7, 6, 21, 0, tzinfo=timezone.utc),
    internet_ping=80.0, internet_flux=3.0, internet_loss=2.0, internet_spke=5.0,
    wtfast_ping=60.0, wtfast_flux=2.0, wtfast_loss=1.0, wtfast_spke=3.0,
    bytes_up_tcp=1.0, bytes_up_udp=2.0, bytes_down_tcp=3.0, bytes_down_udp=4.0,
    socket_count_tcp=10.0, socket_count_udp=4.0, client_ip_count=1.0, game_ip_count=3.0,
)


def make_raw(**kw) -> RawSessionRecord:
    return RawSessionRecord(**{**BASE, **kw})


def make_fact(**kw) -> SessionFact:
    fields = {**BASE, "duration": 3600.0, "calculated_distance": 1.5, **kw}
    return derive_measures(SessionFact(**fields))


@pytest.fixture(scope="session")
def small_config():
    return SynthConfig(n=1200, seed=11)


@pytest.fixture(scope="session")
def small_facts(small_config):
    facts, rejects = clean(generate(small_config))
    assert not rejects
    return facts


@pytest.fixture(scope="session")
def small_type_map(small_config):
    return catalog_type_map(small_config)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[num])
