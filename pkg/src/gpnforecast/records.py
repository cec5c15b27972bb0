"""Session record types shared by the warehouse, feature and synthetic-data code."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Tuple

Geo = Tuple[float, float]


@dataclass(slots=True)
class RawSessionRecord:
    client_ip: str
    client_isp: str
    reg_country: str
    client_geo: Optional[Geo]
    server_id: str
    game_ip: str
    game_isp: str
    game_name: str
    game_geo: Optional[Geo]
    node_geo: Optional[Geo]
    session_start: Optional[datetime]
    session_end: Optional[datetime]
    internet_ping: Optional[float]
    internet_flux: float
    internet_loss: float
    internet_spke: float
    wtfast_ping: Optional[float]
    wtfast_flux: float
    wtfast_loss: float
    wtfast_spke: float
    bytes_up_tcp: float
    bytes_up_udp: float
    bytes_down_tcp: float
    bytes_down_udp: float
    socket_count_tcp: float
    socket_count_udp: float
    client_ip_count: float
    game_ip_count: float
    # Optional measured columns; derived from the others when absent.
    duration: Optional[float] = None
    bytes_per_second: Optional[float] = None
    source: str = ""  # "<file>:<line>" for audit trails


class RejectReason(str, enum.Enum):
    MISSING_PING = "missing-ping"
    NONPOSITIVE_PING = "nonpositive-ping"
    MISSING_DURATION = "missing-duration"
    MISSING_GEO = "missing-geo"
    PARSE_ERROR = "parse-error"


@dataclass(slots=True)
class RejectRecord:
    source: str
    reason: RejectReason
    detail: str = ""


@dataclass(slots=True)
class SessionFact:
    """A cleaned session: dimension attributes plus measures.

    The warehouse replaces the dimension attributes with surrogate keys when
    it loads facts; in memory they stay inline so features can be built
    without a warehouse round trip.
    """

    client_ip: str
    client_isp: str
    reg_country: str
    client_geo: Geo
    server_id: str
    game_ip: str
    game_isp: str
    game_name: str
    game_geo: Geo
    node_geo: Geo
    session_start: datetime
    session_end: datetime
    internet_ping: Optional[float]
    internet_flux: float
    internet_loss: float
    internet_spke: float
    wtfast_ping: float
    wtfast_flux: float
    wtfast_loss: float
    wtfast_spke: float
    bytes_up_tcp: float
    bytes_up_udp: float
    bytes_down_tcp: float
    bytes_down_udp: float
    socket_count_tcp: float
    socket_count_udp: float
    client_ip_count: float
    game_ip_count: float
    duration: float
    calculated_distance: float
    bytes_total: float = 0.0
    bytes_per_second: Optional[float] = None
    source: str = field(default="", compare=False)


MEASURES = (
    "internet_ping", "internet_flux", "internet_loss", "internet_spke",
    "wtfast_ping", "wtfast_flux", "wtfast_loss", "wtfast_spke",
    "bytes_up_tcp", "bytes_up_udp", "bytes_down_tcp", "bytes_down_udp",
    "socket_count_tcp", "socket_count_udp", "client_ip_count", "game_ip_count",
    "bytes_total", "bytes_per_second", "duration", "calculated_distance",
)
