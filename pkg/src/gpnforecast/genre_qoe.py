"""Game genres, genre-set types, the type lattice and quality-of-experience scoring."""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class Genre(enum.Enum):
    # Declaration order is the canonical spelling order for type names.
    ACTION = "ACT"
    RPG = "RPG"
    STRATEGY = "STRATEGY"
    MMP = "MMP"
    SHOOTER = "SHOOTER"
    SIMULATION = "SIM"
    ADVENTURE = "ADV"
    SPORTS = "SPORTS"
    CASUAL = "CASUAL"


PRIMARY_GENRES = (Genre.ACTION, Genre.RPG, Genre.STRATEGY, Genre.MMP,
                  Genre.SHOOTER, Genre.SIMULATION)

_ORDER = {g: i for i, g in enumerate(Genre)}
_BY_TOKEN = {g.value: g for g in Genre}
_BY_TOKEN.update({g.name: g for g in Genre})

OTHER_NAME = "OTHER"


class GenreError(ValueError):
    pass


@dataclass(frozen=True)
class GameType:
    """A set of genres. The empty set stands for the catch-all OTHER type."""

    genres: frozenset

    @classmethod
    def parse(cls, name: str) -> "GameType":
        name = name.strip().upper()
        if name == OTHER_NAME:
            return OTHER
        if not name:
            raise GenreError("empty game type")
        genres = []
        for token in name.split("."):
            try:
                genres.append(_BY_TOKEN[token])
            except KeyError:
                raise GenreError(f"unknown genre {token!r} in type {name!r}") from None
        return cls(frozenset(genres))

    @property
    def is_other(self) -> bool:
        return not self.genres

    @property
    def name(self) -> str:
        if self.is_other:
            return OTHER_NAME
        return ".".join(g.value for g in sorted(self.genres, key=_ORDER.__getitem__))

    def __str__(self) -> str:
        return self.name

    def __le__(self, other: "GameType") -> bool:
        return self.genres <= other.genres

    def __lt__(self, other: "GameType") -> bool:
        return self.genres < other.genres


OTHER = GameType(frozenset())

# Share of records per type, in percent, as observed on the GPN session data.
# Shares are rounded to one decimal, so they sum to 100.1.
TYPE_SHARES: dict[str, float] = {
    "RPG.MMP": 27.1,
    "RPG.CASUAL": 20.1,
    "OTHER": 11.9,
    "ACT.SHOOTER": 11.6,
    "ACT.RPG.STRATEGY": 10.6,
    "ACT.MMP.SHOOTER": 5.1,
    "ACT.RPG.MMP.ADV": 1.7,
    "ACT.STRATEGY": 1.6,
    "ACT": 1.5,
    "RPG.SHOOTER": 1.3,
    "STRATEGY": 0.8,
    "ACT.RPG.MMP": 0.8,
    "ACT.RPG.STRATEGY.MMP.SIM.ADV": 0.8,
    "ACT.STRATEGY.MMP.SHOOTER": 0.7,
    "SPORTS": 0.7,
    "ACT.MMP.SHOOTER.SIM": 0.7,
    "ACT.MMP": 0.7,
    "ACT.SPORTS": 0.6,
    "ACT.RPG.MMP.ADV.SPORTS": 0.5,
    "ACT.RPG": 0.5,
    "SHOOTER": 0.4,
    "RPG": 0.2,
    "ACT.STRATEGY.MMP": 0.2,
}

# The one-up game-type vocabulary, in canonical order.
TYPE_VOCABULARY: tuple[str, ...] = tuple(TYPE_SHARES)


# --------------------------------------------------------------------------
# game name -> type map


class TypeMapError(ValueError):
    pass


def _norm_name(name: str) -> str:
    return " ".join(name.strip().split()).casefold()


class TypeMap:
    """Case-insensitive lookup from game name to GameType; misses map to OTHER."""

    def __init__(self, entries: Mapping[str, GameType | str] | None = None):
        self._entries: dict[str, GameType] = {}
        self._display: dict[str, str] = {}
        for name, gtype in (entries or {}).items():
            self.add(name, gtype)

    def add(self, name: str, gtype: GameType | str) -> None:
        if isinstance(gtype, str):
            gtype = GameType.parse(gtype)
        key = _norm_name(name)
        self._entries[key] = gtype
        self._display[key] = name.strip()

    def classify(self, game_name: str | None) -> GameType:
        if game_name is None:
            return OTHER
        return self._entries.get(_norm_name(game_name), OTHER)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        for key in sorted(self._entries):
            yield self._display[key], self._entries[key]

    @classmethod
    def load(cls, path: str | Path) -> "TypeMap":
        tm = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if lineno == 1 and [c.strip().lower() for c in row] == ["game_name", "game_type"]:
                    continue
                if len(row) != 2 or not row[0].strip():
                    raise TypeMapError(f"{path}:{lineno}: expected 'game_name,game_type', got {row!r}")
                try:
                    tm.add(row[0], row[1])
                except GenreError as exc:
                    raise TypeMapError(f"{path}:{lineno}: {exc}") from None
        return tm

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["game_name", "game_type"])
            for name, gtype in self.items():
                writer.writerow([name, gtype.name])


def classify_game(game_name: str, type_map: TypeMap) -> GameType:
    return type_map.classify(game_name)


# --------------------------------------------------------------------------
# lattice


def build_lattice(types: Iterable[GameType]) -> list[tuple[GameType, GameType]]:
    """Covering edges (A, B) of the subset order: A < B with nothing strictly between."""
    nodes = sorted({t for t in types if not t.is_other}, key=lambda t: (len(t.genres), t.name))
    edges = []
    for a in nodes:
        uppers = [b for b in nodes if a < b]
        for b in uppers:
            if not any(a < c < b for c in uppers):
                edges.append((a, b))
    return edges


def reachable(edges: Sequence[tuple[GameType, GameType]]) -> set[tuple[GameType, GameType]]:
    """Strict order recovered from covering edges by graph search."""
    succ: dict[GameType, list[GameType]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    closure = set()
    for start in succ:
        stack = list(succ[start])
        seen = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            closure.add((start, node))
            stack.extend(succ.get(node, ()))
    return closure


# --------------------------------------------------------------------------
# distribution


def type_distribution(game_names: Iterable[str], type_map: TypeMap) -> list[tuple[GameType, float]]:
    """Percentage of records per game type, largest first.

    Accepts game names directly or anything with a ``game_name`` attribute.
    """
    counts: Counter = Counter()
    for item in game_names:
        name = item if isinstance(item, str) else item.game_name
        counts[type_map.classify(name)] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("type_distribution needs at least one record")
    rows = [(t, 100.0 * n / total) for t, n in counts.items()]
    rows.sort(key=lambda r: (-r[1], r[0].name))
    return rows


# --------------------------------------------------------------------------
# quality of service / experience

DEFAULT_QOS_K = 100.0
DEFAULT_QOS_W = 1.0
SI_MIN, SI_MAX = 1.0, 5.0


def qos(pings: Sequence[float], k: float = DEFAULT_QOS_K, w: float = DEFAULT_QOS_W,
        ddof: int = 0) -> float:
    """Quality of service for a scope of sessions: k / (mean + w * std).

    ``std`` is the population standard deviation unless ``ddof`` says otherwise;
    a single session always has std 0.
    """
    values = [float(p) for p in pings]
    if not values:
        raise ValueError("qos needs at least one session")
    if any(not p > 0 for p in values):
        raise ValueError("qos needs strictly positive pings")
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((p - mean) ** 2 for p in values) / (n - ddof)) if n > ddof else 0.0
    return k / (mean + w * std)


@dataclass(frozen=True)
class QoEScore:
    qos: float
    si: float

    @property
    def qoe(self) -> float:
        return self.qos * self.si


def qoe(qos_value: float, si: float) -> QoEScore:
    if not qos_value > 0:
        raise ValueError(f"qos must be positive, got {qos_value}")
    if not SI_MIN <= si <= SI_MAX:
        raise ValueError(f"sensitivity index must lie in [1, 5], got {si}")
    return QoEScore(float(qos_value), float(si))


def default_sensitivity(gtype: GameType) -> float:
    """Default sensitivity index: 1 for latency-critical types, up to 5 for tolerant ones.

    First matching rule wins.
    """
    if gtype.is_other:
        return 3.0
    g = gtype.genres
    if Genre.SHOOTER in g or {Genre.ACTION, Genre.MMP} <= g:
        return 1.0
    if Genre.ACTION in g or Genre.SPORTS in g:
        return 2.0
    if Genre.STRATEGY in g:
        return 3.0
    if Genre.RPG in g or Genre.MMP in g:
        return 4.0
    if Genre.CASUAL in g or Genre.SIMULATION in g:
        return 5.0
    return 3.0


class SensitivityTable:
    """Per-type sensitivity index with a rule-based fallback for unlisted types."""

    def __init__(self, values: Mapping[str, float] | None = None):
        self._values: dict[GameType, float] = {}
        for name, si in (values or {}).items():
            self.set(GameType.parse(name), si)

    def set(self, gtype: GameType, si: float) -> None:
        si = float(si)
        if not SI_MIN <= si <= SI_MAX:
            raise ValueError(f"sensitivity index for {gtype.name} must lie in [1, 5], got {si}")
        self._values[gtype] = si

    def __getitem__(self, gtype: GameType) -> float:
        return self._values.get(gtype, default_sensitivity(gtype))

    @classmethod
    def default(cls) -> "SensitivityTable":
        return cls({name: default_sensitivity(GameType.parse(name)) for name in TYPE_VOCABULARY})

    @classmethod
    def load(cls, path: str | Path) -> "SensitivityTable":
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if lineno == 1 and row[0].strip().lower() == "game_type":
                    continue
                try:
                    table.set(GameType.parse(row[0]), float(row[1]))
                except (IndexError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return table

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["game_type", "si"])
            for gtype in sorted(self._values, key=lambda t: t.name):
                writer.writerow([gtype.name, f"{self._values[gtype]:g}"])


@dataclass(frozen=True)
class QoERow:
    scope: str
    game_type: str
    sessions: int
    mean_ping: float
    std_ping: float
    score: QoEScore


def qoe_table(sessions: Iterable, type_map: TypeMap, si_table: SensitivityTable,
              scope: str = "game_type", k: float = DEFAULT_QOS_K,
              w: float = DEFAULT_QOS_W) -> list[QoERow]:
    """QoE league table; ``scope`` is ``game_type`` or ``game_name``.

    ``sessions`` yields objects with ``game_name`` and ``wtfast_ping``.
    """
    if scope not in ("game_type", "game_name"):
        raise ValueError(f"unknown QoE scope {scope!r}")
    groups: dict[str, list[float]] = {}
    types: dict[str, GameType] = {}
    for s in sessions:
        gtype = type_map.classify(s.game_name)
        key = gtype.name if scope == "game_type" else s.game_name
        groups.setdefault(key, []).append(float(s.wtfast_ping))
        types[key] = gtype
    rows = []
    for key, pings in groups.items():
        n = len(pings)
        mean = math.fsum(pings) / n
        std = math.sqrt(math.fsum((p - mean) ** 2 for p in pings) / n)
        score = qoe(qos(pings, k, w), si_table[types[key]])
        rows.append(QoERow(key, types[key].name, n, mean, std, score))
    rows.sort(key=lambda r: (-r.score.qoe, r.scope))
    return rows
